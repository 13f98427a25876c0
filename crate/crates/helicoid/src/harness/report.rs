//! Trial reports: per-trial rows, per-series summaries, hard assertions and stability verdicts.

use super::config::{exp_one, ExperimentConfig, Suite};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest relative growth of a recorded constant, step to step and first to last grid.
pub const STABILITY_TOLERANCE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    /// `<trial>` for the primary series, `<series>-<trial>` otherwise.
    pub trial_id: String,
    pub series: String,
    #[serde(with = "exp_one")]
    pub lhs: f64,
    #[serde(with = "exp_one")]
    pub rhs: f64,
    #[serde(with = "exp_one")]
    pub ratio: f64,
    pub witness_refs: Vec<String>,
}

/// `lhs / rhs`, with `0/0 = 0` and `x/0 = ∞` for `x > 0`.
pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub name: String,
    pub count: usize,
    #[serde(with = "exp_one")]
    pub max: f64,
    #[serde(with = "exp_one")]
    pub median: f64,
    pub argmax: Option<String>,
    /// Pinned constant the maximum must respect, when the suite asserts one.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub suite: Suite,
    pub config: ExperimentConfig,
    pub rows: Vec<TrialRow>,
    pub series: Vec<SeriesSummary>,
    pub checks: Vec<HardCheck>,
    pub passed: bool,
}

/// Accumulates rows and checks; summaries are computed in row order.
#[derive(Debug, Default)]
pub struct ReportBuilder {
    rows: Vec<TrialRow>,
    checks: Vec<HardCheck>,
    bounds: Vec<(String, f64)>,
    order: Vec<String>,
}

impl ReportBuilder {
    pub fn new(primary: &str) -> Self {
        Self { order: vec![primary.to_string()], ..Self::default() }
    }

    pub fn row(&mut self, series: &str, trial: usize, lhs: f64, rhs: f64, witness_refs: Vec<String>) -> f64 {
        if !self.order.iter().any(|s| s == series) {
            self.order.push(series.to_string());
        }
        let trial_id = if series == self.order[0] { trial.to_string() } else { format!("{series}-{trial}") };
        let r = ratio(lhs, rhs);
        self.rows.push(TrialRow { trial_id, series: series.to_string(), lhs, rhs, ratio: r, witness_refs });
        r
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(HardCheck { name: name.to_string(), passed, detail: detail.into() });
    }

    /// Asserts that every ratio of `series` is at most `bound`.
    pub fn bound(&mut self, series: &str, bound: f64) {
        self.bounds.push((series.to_string(), bound));
    }

    pub fn finish(mut self, suite: Suite, config: ExperimentConfig) -> TrialReport {
        let mut series = Vec::new();
        for name in &self.order {
            let rows: Vec<&TrialRow> = self.rows.iter().filter(|r| &r.series == name).collect();
            let bound = self.bounds.iter().find(|(s, _)| s == name).map(|b| b.1);
            let s = summarize(name, &rows, bound);
            let finite = rows.iter().all(|r| r.ratio.is_finite() && r.lhs.is_finite() && r.rhs.is_finite());
            self.checks.push(HardCheck {
                name: format!("{name}: finite ratios"),
                passed: finite,
                detail: match rows.iter().find(|r| !r.ratio.is_finite()) {
                    Some(r) => format!("trial {} has ratio {}", r.trial_id, r.ratio),
                    None => format!("{} rows", rows.len()),
                },
            });
            if let Some(b) = bound {
                self.checks.push(HardCheck {
                    name: format!("{name}: max ratio ≤ {b}"),
                    passed: s.max <= b,
                    detail: format!("max {} at {}", s.max, s.argmax.clone().unwrap_or_default()),
                });
            }
            series.push(s);
        }
        let passed = self.checks.iter().all(|c| c.passed);
        TrialReport { suite, config, rows: self.rows, series, checks: self.checks, passed }
    }
}

fn summarize(name: &str, rows: &[&TrialRow], bound: Option<f64>) -> SeriesSummary {
    let mut vals: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let mut argmax = None;
    let mut max = 0.0f64;
    for r in rows {
        // NaN never wins; ∞ does.
        if argmax.is_none() || r.ratio > max {
            max = r.ratio.max(max);
            argmax = Some(r.trial_id.clone());
        }
    }
    vals.sort_by(f64::total_cmp);
    let median = match vals.len() {
        0 => 0.0,
        n if n % 2 == 1 => vals[n / 2],
        n => (vals[n / 2 - 1] + vals[n / 2]) / 2.0,
    };
    SeriesSummary { name: name.to_string(), count: rows.len(), max, median, argmax, bound }
}

impl TrialReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("report JSON: {e}")))
    }

    /// Columns `trial_id, lhs, rhs, ratio, witness_refs`; references are `;`-separated.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial_id", "lhs", "rhs", "ratio", "witness_refs"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.trial_id.clone(), fmt_num(r.lhs), fmt_num(r.rhs), fmt_num(r.ratio), r.witness_refs.join(";")])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn series(&self, name: &str) -> Option<&SeriesSummary> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn primary(&self) -> &SeriesSummary {
        &self.series[0]
    }

    pub fn failed_checks(&self) -> Vec<&HardCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

/// Per-series maxima at consecutive grids and the verdict: the maxima are finite and positive,
/// and neither a consecutive step nor the whole range grows by more than [`STABILITY_TOLERANCE`].
/// Decreases are reported in `max_step_change` but do not fail the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub suite: Suite,
    pub js: Vec<u32>,
    pub series: Vec<SeriesStability>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStability {
    pub name: String,
    pub maxima: Vec<f64>,
    /// Largest `|m_{J+1} - m_J| / m_J`.
    #[serde(with = "exp_one")]
    pub max_step_change: f64,
    /// Largest `m_{J+1} / m_J`.
    #[serde(with = "exp_one")]
    pub max_step_growth: f64,
    /// `m_last / m_first`.
    #[serde(with = "exp_one")]
    pub growth: f64,
    pub passed: bool,
}

pub fn stability_of(suite: Suite, js: &[u32], reports: &[TrialReport]) -> StabilityReport {
    let names: Vec<String> = reports.first().map(|r| r.series.iter().map(|s| s.name.clone()).collect()).unwrap_or_default();
    let series: Vec<SeriesStability> = names
        .into_iter()
        .map(|name| {
            let maxima: Vec<f64> = reports.iter().map(|r| r.series(&name).map_or(f64::NAN, |s| s.max)).collect();
            let max_step_change = maxima.windows(2).map(|w| (w[1] - w[0]).abs() / w[0]).fold(0.0, f64::max);
            let max_step_growth = maxima.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            let growth = maxima.last().copied().unwrap_or(f64::NAN) / maxima.first().copied().unwrap_or(f64::NAN);
            let ok = maxima.iter().all(|m| m.is_finite() && *m > 0.0)
                && max_step_growth <= 1.0 + STABILITY_TOLERANCE
                && growth <= 1.0 + STABILITY_TOLERANCE;
            SeriesStability { name, maxima, max_step_change, max_step_growth, growth, passed: ok }
        })
        .collect();
    let passed = !series.is_empty() && series.iter().all(|s| s.passed);
    StabilityReport { suite, js: js.to_vec(), series, passed }
}

impl StabilityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stability report serializes")
    }

    pub fn series(&self, name: &str) -> Option<&SeriesStability> {
        self.series.iter().find(|s| s.name == name)
    }
}
