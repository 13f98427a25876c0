//! Experiment configuration: JSON keys `{j, backend, cutoff_m, seed, trials, theta, s, q, p,
//! r_tuples, suite}`. Exponents accept a number or the string `"inf"`.

use crate::error::{Error, Result};
use crate::grid::{CutoffSpec, GridSpec};
use crate::packets::PacketBackend;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Suite {
    GenSizeEnergy,
    LocalP0,
    LocalP1,
    QuasiLocal,
    Sparse,
    SparseLq,
    Nonsubadd,
    Fs,
    MockInterp,
    Varc,
    Outer,
    VvstPacking,
}

impl Suite {
    pub const ALL: [Suite; 12] = [
        Suite::GenSizeEnergy,
        Suite::LocalP0,
        Suite::LocalP1,
        Suite::QuasiLocal,
        Suite::Sparse,
        Suite::SparseLq,
        Suite::Nonsubadd,
        Suite::Fs,
        Suite::MockInterp,
        Suite::Varc,
        Suite::Outer,
        Suite::VvstPacking,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::GenSizeEnergy => "GEN_SIZE_ENERGY",
            Suite::LocalP0 => "LOCAL_P0",
            Suite::LocalP1 => "LOCAL_P1",
            Suite::QuasiLocal => "QUASI_LOCAL",
            Suite::Sparse => "SPARSE",
            Suite::SparseLq => "SPARSE_LQ",
            Suite::Nonsubadd => "NONSUBADD",
            Suite::Fs => "FS",
            Suite::MockInterp => "MOCK_INTERP",
            Suite::Varc => "VARC",
            Suite::Outer => "OUTER",
            Suite::VvstPacking => "VVST_PACKING",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}; expected one of {}", Suite::ALL.map(|x| x.name()).join(", "))))
    }
}

// ----------------------------------------------------------------------------------------------
// Exponent (de)serialization

#[derive(Deserialize)]
#[serde(untagged)]
enum ExpRepr {
    Num(f64),
    Text(String),
}

impl ExpRepr {
    fn value(self) -> std::result::Result<f64, String> {
        match self {
            ExpRepr::Num(v) => Ok(v),
            ExpRepr::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => other.parse::<f64>().map_err(|_| format!("exponent {t:?} is neither a number nor \"inf\"")),
            },
        }
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum ExpOut {
    Num(f64),
    Text(&'static str),
}

fn out(v: f64) -> ExpOut {
    if v == f64::INFINITY {
        ExpOut::Text("inf")
    } else if v == f64::NEG_INFINITY {
        ExpOut::Text("-inf")
    } else if v.is_nan() {
        ExpOut::Text("nan")
    } else {
        ExpOut::Num(v)
    }
}

/// Floats that may be infinite, written as numbers or `"inf"`.
pub(crate) mod exp_one {
    use super::*;
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        out(*v).serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        ExpRepr::deserialize(d)?.value().map_err(D::Error::custom)
    }
}

mod exp_three {
    use super::*;
    pub fn serialize<S: Serializer>(v: &[f64; 3], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.map(out).serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<[f64; 3], D::Error> {
        let [a, b, c] = <[ExpRepr; 3]>::deserialize(d)?;
        Ok([a.value().map_err(D::Error::custom)?, b.value().map_err(D::Error::custom)?, c.value().map_err(D::Error::custom)?])
    }
}

mod exp_rows {
    use super::*;
    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter().map(|row| row.iter().map(|&x| out(x)).collect::<Vec<_>>()).collect::<Vec<_>>().serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
        Vec::<Vec<ExpRepr>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(|e| e.value().map_err(D::Error::custom)).collect())
            .collect()
    }
}

/// `"WALSH"`, `"FOURIER"` or a full tagged backend object.
#[derive(Deserialize)]
#[serde(untagged)]
enum BackendRepr {
    Name(String),
    Full(PacketBackend),
}

mod backend_serde {
    use super::*;
    pub fn serialize<S: Serializer>(b: &PacketBackend, s: S) -> std::result::Result<S::Ok, S::Error> {
        b.serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PacketBackend, D::Error> {
        match BackendRepr::deserialize(d)? {
            BackendRepr::Full(b) => Ok(b),
            BackendRepr::Name(n) => match n.to_ascii_uppercase().as_str() {
                "WALSH" => Ok(PacketBackend::Walsh),
                "FOURIER" => Ok(PacketBackend::fourier_default()),
                _ => Err(D::Error::custom(format!("unknown backend {n:?}"))),
            },
        }
    }
}

// ----------------------------------------------------------------------------------------------

pub const MIN_J: u32 = 3;
pub const MAX_J: u32 = 10;
pub const MAX_TRIALS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub j: u32,
    #[serde(with = "backend_serde")]
    pub backend: PacketBackend,
    pub cutoff_m: f64,
    pub seed: u64,
    pub trials: usize,
    pub theta: [f64; 3],
    #[serde(with = "exp_three")]
    pub s: [f64; 3],
    #[serde(with = "exp_one")]
    pub q: f64,
    /// `(p_1, p_2, p_3)`; the quasi-local suite reads it as `(p, q, s)` with `s` the output exponent.
    #[serde(with = "exp_three")]
    pub p: [f64; 3],
    /// Rows `R_1, R_2, R'` of equal depth at most 2; empty for scalar suites.
    #[serde(with = "exp_rows")]
    pub r_tuples: Vec<Vec<f64>>,
    pub suite: Option<Suite>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            j: 6,
            backend: PacketBackend::Walsh,
            cutoff_m: CutoffSpec::default().decay,
            seed: 0,
            trials: 20,
            theta: [1.0 / 3.0; 3],
            s: [2.0, 2.0, 2.0],
            q: 1.0,
            p: [4.0, 4.0, 2.0],
            r_tuples: vec![vec![2.0], vec![2.0], vec![2.0]],
            suite: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_suite(mut self, suite: Suite) -> Self {
        self.suite = Some(suite);
        self
    }

    pub fn with_j(mut self, j: u32) -> Self {
        self.j = j;
        self
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.j)
    }

    pub fn cutoff(&self) -> Result<CutoffSpec> {
        CutoffSpec::new(self.cutoff_m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(MIN_J..=MAX_J).contains(&self.j) {
            return bad(format!("j must lie in [{MIN_J}, {MAX_J}], got {}", self.j));
        }
        self.backend.check().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.cutoff_m.is_finite() && self.cutoff_m > 0.0) {
            return bad(format!("cutoff_m must be positive, got {}", self.cutoff_m));
        }
        if self.trials > MAX_TRIALS {
            return bad(format!("trials must not exceed {MAX_TRIALS}, got {}", self.trials));
        }
        if self.theta.iter().any(|t| !(0.0..1.0).contains(t)) || (self.theta.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("theta must lie in [0,1)^3 and sum to 1, got {:?}", self.theta));
        }
        for (v, name) in self.s.iter().map(|v| (*v, "s")).chain(self.p.iter().map(|v| (*v, "p"))).chain([(self.q, "q")]) {
            if v.is_nan() || v <= 0.0 {
                return bad(format!("exponent {name} = {v} must lie in (0, ∞]"));
            }
        }
        if !self.r_tuples.is_empty() {
            let depth = self.r_tuples[0].len();
            if self.r_tuples.len() != 3 || !(1..=2).contains(&depth) || self.r_tuples.iter().any(|r| r.len() != depth) {
                return bad(format!("r_tuples must be three rows of equal depth 1 or 2, got {:?}", self.r_tuples));
            }
            if self.r_tuples.iter().flatten().any(|v| v.is_nan() || *v <= 0.0) {
                return bad(format!("r_tuples entries must lie in (0, ∞], got {:?}", self.r_tuples));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_infinite_exponents() {
        let mut cfg = ExperimentConfig::default().with_suite(Suite::SparseLq);
        cfg.p = [2.0, f64::INFINITY, 2.0];
        let text = cfg.to_json();
        assert!(text.contains("\"inf\""));
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_configs_fill_defaults_and_accept_backend_names() {
        let cfg = ExperimentConfig::from_json(r#"{"j": 5, "backend": "FOURIER", "suite": "MOCK_INTERP", "s": [2, "inf", 3]}"#).unwrap();
        assert_eq!(cfg.j, 5);
        assert_eq!(cfg.backend, PacketBackend::fourier_default());
        assert_eq!(cfg.suite, Some(Suite::MockInterp));
        assert_eq!(cfg.s, [2.0, f64::INFINITY, 3.0]);
        assert_eq!(cfg.trials, ExperimentConfig::default().trials);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            "{",
            r#"{"unknown": 1}"#,
            r#"{"j": 40}"#,
            r#"{"theta": [0.5, 0.5, 0.5]}"#,
            r#"{"s": [0, 2, 2]}"#,
            r#"{"suite": "NOPE"}"#,
            r#"{"r_tuples": [[2], [2]]}"#,
            r#"{"backend": "HAAR"}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn suite_names_parse_both_ways() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
