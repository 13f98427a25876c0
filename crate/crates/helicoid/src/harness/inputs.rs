//! Seeded input generators. Every trial draws from its own ChaCha stream, so trials can run in
//! any order and on any number of threads.
//!
//! Structured inputs take their random values on the `2^BASE_LEVEL` cells of a fixed base grid
//! (or on all samples of a coarser grid) and repeat them over finer samples, so a trial describes
//! one function sampled at increasing resolution. Gaussian inputs are white noise at the sample
//! rate and reach every tile. Per-sample values come from a generator seeded by a single draw, so
//! the remaining draws of a trial do not depend on the grid.

use crate::grid::{DyadicInterval, GridSpec, Signal};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Resolution of the random values.
pub const BASE_LEVEL: u32 = 4;

/// Number of base cells on grid `g`.
pub fn base_cells(g: &GridSpec) -> usize {
    1usize << g.j().min(BASE_LEVEL)
}

/// Generator for per-cell values, seeded from one draw of `rng`.
pub fn value_rng(rng: &mut ChaCha8Rng) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(rng.random())
}

/// Repeats each base cell value over its samples.
pub fn upsample(g: &GridSpec, cells: &[Complex64]) -> Vec<Complex64> {
    let per = g.n_samples() / cells.len();
    cells.iter().flat_map(|&c| std::iter::repeat_n(c, per)).collect()
}

/// Finest scale of random dyadic sets; the tri-tiles of the coarsest base grid resolve it.
pub const MASK_MAX_SCALE: u32 = 3;

fn cell_of(g: &GridSpec, x: usize) -> usize {
    x / (g.n_samples() / base_cells(g))
}

/// Independent generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InputKind {
    /// Independent complex Gaussian samples at every grid point.
    Gaussian,
    /// Random unimodular phase on a random union of dyadic intervals.
    DyadicUnion,
    /// A few unit spikes, one base cell wide, at the left ends of coarse dyadic intervals.
    Spike,
    /// Smooth bumps at random positions and scales, modulated by integer frequencies.
    ModulatedBump,
}

impl InputKind {
    pub const ALL: [InputKind; 4] = [InputKind::Gaussian, InputKind::DyadicUnion, InputKind::Spike, InputKind::ModulatedBump];

    /// The kinds cycle with the trial index.
    pub fn for_trial(trial: usize) -> Self {
        Self::ALL[trial % Self::ALL.len()]
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputKind::Gaussian => "gaussian",
            InputKind::DyadicUnion => "dyadic_union",
            InputKind::Spike => "spike",
            InputKind::ModulatedBump => "modulated_bump",
        }
    }
}

fn phase(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.random_range(0.0..TAU))
}

/// Dyadic interval with scale `k ∈ [0, max_k]` (clamped to the grid).
pub fn random_interval(g: &GridSpec, rng: &mut ChaCha8Rng, max_k: u32) -> DyadicInterval {
    let k = rng.random_range(0..=max_k.min(g.j()));
    DyadicInterval { k, n: rng.random_range(0..1u64 << k) }
}

/// Union of one to four dyadic intervals with scales in `[1, MASK_MAX_SCALE]`; never empty.
pub fn dyadic_union_mask(g: &GridSpec, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut mask = vec![false; g.n_samples()];
    let count = rng.random_range(1..=4);
    for _ in 0..count {
        let k = rng.random_range(1..=MASK_MAX_SCALE.min(g.j()));
        let i = DyadicInterval { k, n: rng.random_range(0..1u64 << k) };
        for x in i.start(g)..i.end(g) {
            mask[x] = true;
        }
    }
    mask
}

/// Union of dyadic intervals inside `i0`, at most three scales finer than `i0` and no finer than
/// `MASK_MAX_SCALE`.
pub fn dyadic_union_mask_in(g: &GridSpec, rng: &mut ChaCha8Rng, i0: &DyadicInterval) -> Vec<bool> {
    let mut mask = vec![false; g.n_samples()];
    let count = rng.random_range(1..=3);
    let finest = (i0.k + 3).min(g.j().min(MASK_MAX_SCALE)).max(i0.k);
    for _ in 0..count {
        let k = rng.random_range(i0.k..=finest);
        let sub = i0.descendants_at(k).collect::<Vec<_>>();
        let i = sub[rng.random_range(0..sub.len())];
        for x in i.start(g)..i.end(g) {
            mask[x] = true;
        }
    }
    mask
}

fn bump(g: &GridSpec, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let n = g.n_samples();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..rng.random_range(1..=3) {
        let centre = rng.random_range(0.0..1.0f64);
        let width = 2f64.powi(-rng.random_range(1..=4));
        let freq = rng.random_range(-8i64..=8) as f64;
        let amp = phase(rng) * rng.random_range(0.5..1.0);
        for (x, v) in out.iter_mut().enumerate() {
            let t = x as f64 / n as f64;
            // Periodic distance to the centre.
            let d = (t - centre + 0.5).rem_euclid(1.0) - 0.5;
            let env = (-(d / width).powi(2) * 4.0).exp();
            *v += amp * env * Complex64::from_polar(1.0, TAU * freq * t);
        }
    }
    out
}

/// One random signal of the given kind.
pub fn random_signal(g: &GridSpec, kind: InputKind, rng: &mut ChaCha8Rng) -> Signal {
    let samples = match kind {
        InputKind::Gaussian => {
            let rng = &mut value_rng(rng);
            (0..g.n_samples())
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) / std::f64::consts::SQRT_2
                })
                .collect()
        }
        InputKind::DyadicUnion => {
            let mask = dyadic_union_mask(g, rng);
            let z = phase(rng);
            mask.iter().map(|&m| if m { z } else { Complex64::new(0.0, 0.0) }).collect()
        }
        InputKind::Spike => {
            let mut cells = vec![Complex64::new(0.0, 0.0); base_cells(g)];
            for _ in 0..rng.random_range(1..=3) {
                let i = random_interval(g, rng, 3);
                cells[cell_of(g, i.start(g))] = phase(rng);
            }
            upsample(g, &cells)
        }
        InputKind::ModulatedBump => bump(g, rng),
    };
    Signal { samples }
}

fn mask_grid(mask: &[bool]) -> GridSpec {
    GridSpec::from_len(mask.len()).expect("masks live on a dyadic grid")
}

/// `|f| ≤ 𝟙_E`: a random phase times a modulus in `[1/2, 1]` per base cell, restricted to `E`.
pub fn restricted(mask: &[bool], rng: &mut ChaCha8Rng) -> Signal {
    let g = mask_grid(mask);
    let rng = &mut value_rng(rng);
    let cells: Vec<Complex64> = (0..base_cells(&g)).map(|_| phase(rng) * rng.random_range(0.5..=1.0)).collect();
    let samples = upsample(&g, &cells).into_iter().zip(mask).map(|(z, &m)| if m { z } else { Complex64::new(0.0, 0.0) }).collect();
    Signal { samples }
}

/// `count` signals whose pointwise `ℓ^r` norm equals `1_E` (`r = ∞` allowed).
pub fn restricted_vector(mask: &[bool], count: usize, r: f64, rng: &mut ChaCha8Rng) -> Vec<Signal> {
    let g = mask_grid(mask);
    let rng = &mut value_rng(rng);
    let cells: Vec<Vec<Complex64>> = (0..base_cells(&g))
        .map(|_| {
            let v: Vec<Complex64> = (0..count).map(|_| phase(rng) * rng.random_range(0.1..=1.0)).collect();
            let norm = if r.is_infinite() { v.iter().map(|z| z.norm()).fold(0.0, f64::max) } else { v.iter().map(|z| z.norm().powf(r)).sum::<f64>().powf(1.0 / r) };
            v.into_iter().map(|z| z / norm).collect()
        })
        .collect();
    (0..count)
        .map(|w| {
            let comp: Vec<Complex64> = cells.iter().map(|c| c[w]).collect();
            let samples = upsample(&g, &comp).into_iter().zip(mask).map(|(z, &m)| if m { z } else { Complex64::new(0.0, 0.0) }).collect();
            Signal { samples }
        })
        .collect()
}

/// Random strictly increasing frequencies `ξ_0 < … < ξ_K` and coefficients with
/// `Σ_κ |a_κ|^{r'} = 1`, independently at each sample.
/// Linearization with `k ≤ max_k` coefficients and `Σ_κ |a_κ|^{r′} = 1`, constant on base
/// cells. The frequencies `ξ_0 < … < ξ_k` lie in distinct aligned cells of length `cell`, so no
/// dyadic frequency interval of length at most `cell` holds two of them. On about half of the
/// cells one of `ξ_0, …, ξ_{k-1}` equals `anchor`.
pub fn random_linearization(
    g: &GridSpec,
    r: f64,
    max_k: usize,
    cell: u64,
    anchor: u64,
    rng: &mut ChaCha8Rng,
) -> (usize, Vec<Vec<u64>>, Vec<Vec<Complex64>>) {
    let n = g.n_samples();
    let cell = cell.clamp(1, n as u64);
    let cells = n as u64 / cell;
    let anchor = anchor % n as u64;
    let k = rng.random_range(1..=max_k.min(cells as usize - 1));
    let rp = r / (r - 1.0);
    let mut xi = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let per = n / base_cells(g);
    for _ in 0..base_cells(g) {
        let home = anchor / cell;
        // ξ_k carries no coefficient, so an anchored cell needs a larger frequency after it.
        let anchored = home + 1 < cells && rng.random_bool(0.5);
        let mut order: Vec<u64> = (0..cells).filter(|&c| !anchored || c != home).collect();
        order.shuffle(rng);
        if anchored {
            let above = order.iter().position(|&c| c > home).expect("a cell above the anchor");
            order.swap(0, above);
        }
        let mut pick: Vec<u64> = order.iter().map(|&c| c * cell + (rng.random_range(0.0..1.0) * cell as f64) as u64).take(k + 1).collect();
        if anchored {
            pick[k] = anchor;
        }
        pick.sort_unstable();
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = w.iter().map(|v| v.powf(rp)).sum::<f64>().powf(1.0 / rp);
        let coeffs: Vec<Complex64> = w.iter().map(|v| phase(rng) * (v / total)).collect();
        for _ in 0..per {
            xi.push(pick.clone());
            a.push(coeffs.clone());
        }
    }
    (k, xi, a)
}
