//! Periodic dyadic grid on the unit circle, signals, adapted cutoffs and maximal functions.
//!
//! All interval arithmetic is in integer grid units. A signal on a grid with `J` levels has
//! `2^J` samples; integrals are Riemann sums with weight `2^{-J}` and are always accumulated in
//! index order so that results do not depend on how callers schedule work.

use crate::error::{invalid, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const MAX_LEVELS: u32 = 24;
const CONTAIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    j_levels: u32,
}

impl GridSpec {
    pub fn new(j_levels: u32) -> Result<Self> {
        if !(2..=MAX_LEVELS).contains(&j_levels) {
            return invalid(format!("grid levels must lie in [2, {MAX_LEVELS}], got {j_levels}"));
        }
        Ok(Self { j_levels })
    }

    pub fn from_len(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return invalid(format!("signal length {n} is not a power of two"));
        }
        Self::new(n.trailing_zeros())
    }

    pub fn j(&self) -> u32 {
        self.j_levels
    }

    pub fn n_samples(&self) -> usize {
        1usize << self.j_levels
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_samples() as f64
    }

    /// Every dyadic interval of the grid, coarse scales first, positions ascending.
    pub fn intervals(&self) -> Vec<DyadicInterval> {
        (0..=self.j_levels)
            .flat_map(|k| (0..1u64 << k).map(move |n| DyadicInterval { k, n }))
            .collect()
    }

    pub fn unit(&self) -> DyadicInterval {
        DyadicInterval { k: 0, n: 0 }
    }
}

/// `[n 2^{-k}, (n+1) 2^{-k})`. The derived order is lexicographic in (scale, position).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub k: u32,
    pub n: u64,
}

impl DyadicInterval {
    pub fn new(k: u32, n: u64) -> Result<Self> {
        if k > MAX_LEVELS || n >= 1u64 << k {
            return invalid(format!("dyadic interval (k={k}, n={n}) out of range"));
        }
        Ok(Self { k, n })
    }

    pub fn check(&self, g: &GridSpec) -> Result<()> {
        if self.k > g.j() || self.n >= 1u64 << self.k {
            return invalid(format!("interval (k={}, n={}) not valid on J={}", self.k, self.n, g.j()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        (-(self.k as f64)).exp2()
    }

    pub fn len_samples(&self, g: &GridSpec) -> usize {
        1usize << (g.j() - self.k)
    }

    pub fn start(&self, g: &GridSpec) -> usize {
        (self.n as usize) << (g.j() - self.k)
    }

    pub fn end(&self, g: &GridSpec) -> usize {
        self.start(g) + self.len_samples(g)
    }

    pub fn contains_sample(&self, g: &GridSpec, i: usize) -> bool {
        (i >> (g.j() - self.k)) as u64 == self.n
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &DyadicInterval) -> bool {
        self.k <= other.k && other.n >> (other.k - self.k) == self.n
    }

    pub fn strictly_contains(&self, other: &DyadicInterval) -> bool {
        self.k < other.k && self.contains(other)
    }

    pub fn intersects(&self, other: &DyadicInterval) -> bool {
        self.contains(other) || other.contains(self)
    }

    pub fn parent(&self) -> Option<DyadicInterval> {
        (self.k > 0).then(|| DyadicInterval { k: self.k - 1, n: self.n >> 1 })
    }

    pub fn children(&self) -> [DyadicInterval; 2] {
        let k = self.k + 1;
        [DyadicInterval { k, n: 2 * self.n }, DyadicInterval { k, n: 2 * self.n + 1 }]
    }

    /// The ancestor at scale `k` (`k ≤ self.k`).
    pub fn ancestor(&self, k: u32) -> DyadicInterval {
        debug_assert!(k <= self.k);
        DyadicInterval { k, n: self.n >> (self.k - k) }
    }

    /// `self` and its ancestors, finest first.
    pub fn ancestors(&self) -> impl Iterator<Item = DyadicInterval> + '_ {
        (0..=self.k).rev().map(move |k| self.ancestor(k))
    }

    /// Dyadic sub-intervals at scale `k ≥ self.k`, ascending.
    pub fn descendants_at(&self, k: u32) -> impl Iterator<Item = DyadicInterval> {
        let shift = k - self.k;
        let base = self.n << shift;
        (0..1u64 << shift).map(move |m| DyadicInterval { k, n: base + m })
    }

    pub fn containing(g: &GridSpec, i: usize, k: u32) -> DyadicInterval {
        DyadicInterval { k, n: (i >> (g.j() - k)) as u64 }
    }

    /// Periodic distance, in grid units, from sample `i` to the closure of the interval.
    pub fn dist_samples(&self, g: &GridSpec, i: usize) -> usize {
        if self.contains_sample(g, i) {
            return 0;
        }
        let n = g.n_samples();
        let lo = self.start(g);
        let hi = self.end(g);
        let forward = (lo + n - i) % n;
        let backward = (i + n - hi % n) % n;
        forward.min(backward)
    }

    /// `other ⊆ c·self`, dilation about the center on the circle.
    pub fn dilate_contains(&self, g: &GridSpec, c: f64, other: &DyadicInterval) -> bool {
        periodic_dilate_contains(
            self.start(g) as f64,
            self.len_samples(g) as f64,
            c,
            other.start(g) as f64,
            other.len_samples(g) as f64,
            g.n_samples() as f64,
        )
    }
}

/// Does `[b, b+lb)` lie inside the `c`-fold dilate of `[a, a+la)` about its center, modulo `period`?
pub fn periodic_dilate_contains(a: f64, la: f64, c: f64, b: f64, lb: f64, period: f64) -> bool {
    let width = c * la;
    if width + CONTAIN_EPS >= period {
        return true;
    }
    if lb > width + CONTAIN_EPS {
        return false;
    }
    let lo = a + 0.5 * la - 0.5 * width;
    let offset = (b - lo).rem_euclid(period);
    offset + lb <= width + CONTAIN_EPS || (offset - period).abs() < CONTAIN_EPS && lb <= width + CONTAIN_EPS
}

/// Do `[a, a+la)` and `[b, b+lb)` meet modulo `period`?
pub fn periodic_intersects(a: f64, la: f64, b: f64, lb: f64, period: f64) -> bool {
    if la <= 0.0 || lb <= 0.0 {
        return false;
    }
    if la >= period || lb >= period {
        return true;
    }
    (b - a).rem_euclid(period) < la - CONTAIN_EPS || (a - b).rem_euclid(period) < lb - CONTAIN_EPS
}

/// `x ∈ [a, a+la)` modulo `period`.
pub fn periodic_point_in(x: f64, a: f64, la: f64, period: f64) -> bool {
    la >= period || (x - a).rem_euclid(period) < la
}

/// Samples of a function on the grid, stored as complex numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signal {
    pub samples: Vec<Complex64>,
}

impl Signal {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        GridSpec::from_len(samples.len())?;
        Ok(Self { samples })
    }

    pub fn zeros(g: &GridSpec) -> Self {
        Self { samples: vec![Complex64::new(0.0, 0.0); g.n_samples()] }
    }

    pub fn constant(g: &GridSpec, c: Complex64) -> Self {
        Self { samples: vec![c; g.n_samples()] }
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn indicator(g: &GridSpec, i: &DyadicInterval) -> Self {
        let mut s = Self::zeros(g);
        for x in i.start(g)..i.end(g) {
            s.samples[x] = Complex64::new(1.0, 0.0);
        }
        s
    }

    pub fn from_mask(mask: &[bool]) -> Result<Self> {
        Self::new(mask.iter().map(|&b| Complex64::new(if b { 1.0 } else { 0.0 }, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::from_len(self.samples.len())
    }

    pub fn check_len(&self, g: &GridSpec) -> Result<()> {
        if self.len() != g.n_samples() {
            return Err(Error::LengthMismatch { expected: g.n_samples(), got: self.len() });
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.samples.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.norm()).collect()
    }

    pub fn abs(&self) -> Signal {
        Signal { samples: self.samples.iter().map(|z| Complex64::new(z.norm(), 0.0)).collect() }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Signal {
        Signal { samples: self.samples.iter().map(|&z| f(z)).collect() }
    }

    pub fn scale(&self, c: Complex64) -> Signal {
        self.map(|z| z * c)
    }

    pub fn mul(&self, other: &Signal) -> Result<Signal> {
        self.zip(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.zip(other, |a, b| a + b)
    }

    fn zip(&self, other: &Signal, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Signal> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: other.len() });
        }
        Ok(Signal { samples: self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect() })
    }

    /// True when every sample is exactly 0 or 1.
    pub fn is_indicator(&self) -> bool {
        self.samples.iter().all(|z| z.im == 0.0 && (z.re == 0.0 || z.re == 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub decay: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self { decay: 10.0 }
    }
}

impl CutoffSpec {
    pub fn new(decay: f64) -> Result<Self> {
        if !(decay.is_finite() && decay > 0.0) {
            return invalid(format!("cutoff decay exponent must be positive, got {decay}"));
        }
        Ok(Self { decay })
    }

    /// `(1 + d/|I|)^{-M}` for a distance `d` measured in grid units against an interval of `len` samples.
    pub fn profile(&self, dist: usize, len: usize) -> f64 {
        if dist == 0 {
            1.0
        } else {
            (1.0 + dist as f64 / len as f64).powf(-self.decay)
        }
    }
}

pub fn chi_tilde_values(i: &DyadicInterval, c: &CutoffSpec, g: &GridSpec) -> Vec<f64> {
    let len = i.len_samples(g);
    (0..g.n_samples()).map(|x| c.profile(i.dist_samples(g, x), len)).collect()
}

pub fn chi_tilde(i: &DyadicInterval, c: &CutoffSpec, g: &GridSpec) -> Result<Signal> {
    i.check(g)?;
    Signal::from_real(&chi_tilde_values(i, c, g))
}

fn check_exponent_at_least_one(s: f64) -> Result<()> {
    if !(s >= 1.0) || s.is_nan() {
        return invalid(format!("average exponent must be >= 1, got {s}"));
    }
    Ok(())
}

/// `((1/|I|) Σ |f|^s χ̃_I 2^{-J})^{1/s}`.
pub fn weighted_average(f: &Signal, i: &DyadicInterval, s: f64, c: &CutoffSpec) -> Result<f64> {
    check_exponent_at_least_one(s)?;
    f.check_finite()?;
    let g = f.grid()?;
    i.check(&g)?;
    Ok(weighted_average_unchecked(&g, &f.moduli(), i, s, c))
}

/// Same quantity on precomputed moduli; callers guarantee validity.
pub fn weighted_average_unchecked(g: &GridSpec, moduli: &[f64], i: &DyadicInterval, s: f64, c: &CutoffSpec) -> f64 {
    let len = i.len_samples(g);
    let mut acc = 0.0;
    for (x, &v) in moduli.iter().enumerate() {
        if v != 0.0 {
            acc += v.powf(s) * c.profile(i.dist_samples(g, x), len);
        }
    }
    (acc / len as f64).powf(1.0 / s)
}

/// Plain averages of `|f|^s` on every dyadic interval, stored per scale.
#[derive(Debug, Clone)]
pub struct AveragePyramid {
    levels: Vec<Vec<f64>>,
    s: f64,
}

impl AveragePyramid {
    pub fn new(f: &Signal, s: f64) -> Result<Self> {
        check_exponent_at_least_one(s)?;
        f.check_finite()?;
        let g = f.grid()?;
        let finest: Vec<f64> = f.samples.iter().map(|z| z.norm().powf(s)).collect();
        let mut levels = vec![finest];
        for _ in 0..g.j() {
            let prev = levels.last().expect("non-empty");
            let next: Vec<f64> = prev.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
            levels.push(next);
        }
        levels.reverse();
        Ok(Self { levels, s })
    }

    /// `(⨍_I |f|^s)^{1/s}`.
    pub fn average(&self, i: &DyadicInterval) -> f64 {
        self.power_average(i).powf(1.0 / self.s)
    }

    /// `⨍_I |f|^s`.
    pub fn power_average(&self, i: &DyadicInterval) -> f64 {
        self.levels[i.k as usize][i.n as usize]
    }

    pub fn j(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }
}

/// Dyadic `𝓜_s f = (𝓜 |f|^s)^{1/s}`.
pub fn maximal_fn(f: &Signal, s: f64) -> Result<Signal> {
    let pyr = AveragePyramid::new(f, s)?;
    let g = f.grid()?;
    let values: Vec<f64> = (0..g.n_samples())
        .map(|x| {
            (0..=g.j())
                .map(|k| pyr.power_average(&DyadicInterval::containing(&g, x, k)))
                .fold(0.0, f64::max)
                .powf(1.0 / s)
        })
        .collect();
    Signal::from_real(&values)
}

/// `sup_{Q ∋ x} (⨍_Q |f|^{s1})^{1/s1} (⨍_Q |g|^{s2})^{1/s2}` over dyadic `Q`.
pub fn bilinear_maximal(f: &Signal, h: &Signal, s1: f64, s2: f64) -> Result<Signal> {
    if f.len() != h.len() {
        return Err(Error::LengthMismatch { expected: f.len(), got: h.len() });
    }
    let pf = AveragePyramid::new(f, s1)?;
    let ph = AveragePyramid::new(h, s2)?;
    let g = f.grid()?;
    let values: Vec<f64> = (0..g.n_samples())
        .map(|x| {
            (0..=g.j())
                .map(|k| {
                    let q = DyadicInterval::containing(&g, x, k);
                    pf.average(&q) * ph.average(&q)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Signal::from_real(&values)
}

/// Riemann-sum `L^p` quasi-norm; `p = f64::INFINITY` gives the maximal modulus.
pub fn lp_norm(f: &Signal, p: f64) -> Result<f64> {
    if p.is_nan() || p <= 0.0 {
        return invalid(format!("lp exponent must be positive, got {p}"));
    }
    f.check_finite()?;
    Ok(lp_norm_of_moduli(&f.moduli(), p))
}

pub fn lp_norm_of_moduli(moduli: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return moduli.iter().copied().fold(0.0, f64::max);
    }
    let h = 1.0 / moduli.len() as f64;
    let acc: f64 = moduli.iter().map(|v| v.powf(p)).sum();
    (acc * h).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_signal(g: &GridSpec, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..g.n_samples()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
            .unwrap()
    }

    #[test]
    fn chi_tilde_closed_form() {
        let g = GridSpec::new(4).unwrap();
        let i = DyadicInterval::new(2, 0).unwrap();
        let c = CutoffSpec::new(2.0).unwrap();
        let v = chi_tilde_values(&i, &c, &g);
        assert_eq!(v[8], 0.25);
        for x in 0..4 {
            assert_eq!(v[x], 1.0);
        }
        let whole = chi_tilde_values(&g.unit(), &c, &g);
        assert!(whole.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn chi_tilde_is_radially_non_increasing_and_monotone_in_decay() {
        let g = GridSpec::new(5).unwrap();
        let c1 = CutoffSpec::new(2.0).unwrap();
        let c2 = CutoffSpec::new(7.5).unwrap();
        for i in g.intervals() {
            let a = chi_tilde_values(&i, &c1, &g);
            let b = chi_tilde_values(&i, &c2, &g);
            for x in 0..g.n_samples() {
                assert!(b[x] <= a[x] && a[x] <= 1.0 && b[x] > 0.0);
                for y in 0..g.n_samples() {
                    if i.dist_samples(&g, x) <= i.dist_samples(&g, y) {
                        assert!(a[x] >= a[y]);
                    }
                }
            }
        }
    }

    #[test]
    fn nesting_law_is_exhaustive_at_j6() {
        let g = GridSpec::new(6).unwrap();
        let all = g.intervals();
        for a in &all {
            for b in &all {
                let sa: std::collections::BTreeSet<usize> = (a.start(&g)..a.end(&g)).collect();
                let sb: std::collections::BTreeSet<usize> = (b.start(&g)..b.end(&g)).collect();
                let inter: Vec<_> = sa.intersection(&sb).copied().collect();
                if inter.is_empty() {
                    assert!(!a.intersects(b));
                } else {
                    let smaller = if sa.len() <= sb.len() { &sa } else { &sb };
                    assert_eq!(inter.len(), smaller.len());
                    assert!(a.intersects(b));
                }
                assert_eq!(a.contains(b), sb.is_subset(&sa));
            }
        }
    }

    #[test]
    fn weighted_average_examples() {
        let g = GridSpec::new(5).unwrap();
        let c = CutoffSpec::default();
        let i = DyadicInterval::new(2, 1).unwrap();
        assert_eq!(weighted_average(&Signal::zeros(&g), &i, 1.0, &c).unwrap(), 0.0);
        assert_eq!(weighted_average(&Signal::indicator(&g, &i), &i, 1.0, &c).unwrap(), 1.0);
        assert!(weighted_average(&Signal::zeros(&g), &i, 0.5, &c).is_err());
        let mut bad = Signal::zeros(&g);
        bad.samples[3] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(weighted_average(&bad, &i, 1.0, &c), Err(Error::NonFinite(3)));
    }

    #[test]
    fn weighted_average_matches_straight_line_oracle() {
        let g = GridSpec::new(6).unwrap();
        let c = CutoffSpec::new(4.0).unwrap();
        for seed in 0..10 {
            let f = rand_signal(&g, seed);
            for i in g.intervals().iter().step_by(7) {
                for s in [1.0, 1.5, 2.0, 3.0] {
                    let lo = i.start(&g) as f64 / 64.0;
                    let hi = i.end(&g) as f64 / 64.0;
                    let mut acc = 0.0;
                    for x in 0..64 {
                        let t = x as f64 / 64.0;
                        let mut d = 0.0f64;
                        if !(t >= lo && t < hi) {
                            let d1 = (lo - t).rem_euclid(1.0);
                            let d2 = (t - hi).rem_euclid(1.0);
                            d = d1.min(d2);
                        }
                        let w = (1.0 + d / i.length()).powf(-4.0);
                        acc += f.samples[x].norm().powf(s) * w / 64.0;
                    }
                    let oracle = (acc / i.length()).powf(1.0 / s);
                    let got = weighted_average(&f, i, s, &c).unwrap();
                    assert!((oracle - got).abs() <= 1e-12 * oracle.max(1.0), "{oracle} vs {got}");
                }
            }
        }
    }

    #[test]
    fn weighted_average_is_additive_for_nonnegative_inputs_at_s1() {
        let g = GridSpec::new(5).unwrap();
        let c = CutoffSpec::default();
        let a = rand_signal(&g, 1).abs();
        let b = rand_signal(&g, 2).abs();
        let sum = a.add(&b).unwrap();
        for i in g.intervals() {
            let lhs = weighted_average(&sum, &i, 1.0, &c).unwrap();
            let rhs = weighted_average(&a, &i, 1.0, &c).unwrap() + weighted_average(&b, &i, 1.0, &c).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn maximal_function_examples() {
        let g = GridSpec::new(4).unwrap();
        let c = Signal::constant(&g, Complex64::new(0.0, -2.0));
        assert!(maximal_fn(&c, 1.0).unwrap().samples.iter().all(|z| (z.re - 2.0).abs() < 1e-15));
        let half = Signal::indicator(&g, &DyadicInterval::new(1, 0).unwrap());
        let m = maximal_fn(&half, 1.0).unwrap();
        for x in 0..16 {
            assert_eq!(m.samples[x].re, if x < 8 { 1.0 } else { 0.5 });
        }
    }

    #[test]
    fn maximal_function_definitional_checks() {
        let g = GridSpec::new(6).unwrap();
        for seed in 0..5 {
            let f = rand_signal(&g, seed);
            let m2 = maximal_fn(&f, 2.0).unwrap();
            let sq = f.map(|z| Complex64::new(z.norm_sqr(), 0.0));
            let m1 = maximal_fn(&sq, 1.0).unwrap();
            for x in 0..64 {
                assert!((m2.samples[x].re - m1.samples[x].re.sqrt()).abs() < 1e-12);
                assert!(m2.samples[x].re + 1e-12 >= f.samples[x].norm());
            }
        }
    }

    #[test]
    fn maximal_of_indicator_dominates_densities_exhaustively() {
        let g = GridSpec::new(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..4 {
            let mask: Vec<bool> = (0..64).map(|_| rng.random_bool(0.3)).collect();
            let e = Signal::from_mask(&mask).unwrap();
            let m = maximal_fn(&e, 1.0).unwrap();
            for q in g.intervals() {
                let density = (q.start(&g)..q.end(&g)).filter(|&x| mask[x]).count() as f64 / q.len_samples(&g) as f64;
                for x in q.start(&g)..q.end(&g) {
                    assert!(m.samples[x].re + 1e-15 >= density);
                }
            }
        }
    }

    #[test]
    fn bilinear_maximal_is_dominated_by_product() {
        let g = GridSpec::new(6).unwrap();
        let z = Signal::zeros(&g);
        let one = Signal::constant(&g, Complex64::new(1.0, 0.0));
        assert!(bilinear_maximal(&z, &one, 1.0, 2.0).unwrap().samples.iter().all(|v| v.re == 0.0));
        assert!(bilinear_maximal(&one, &one, 2.0, 3.0).unwrap().samples.iter().all(|v| (v.re - 1.0).abs() < 1e-15));
        for seed in 0..5 {
            let f = rand_signal(&g, seed);
            let h = rand_signal(&g, seed + 100);
            let b = bilinear_maximal(&f, &h, 2.0, 1.5).unwrap();
            let mf = maximal_fn(&f, 2.0).unwrap();
            let mh = maximal_fn(&h, 1.5).unwrap();
            for x in 0..64 {
                assert!(b.samples[x].re <= mf.samples[x].re * mh.samples[x].re + 1e-12);
            }
        }
    }

    #[test]
    fn lp_norm_examples() {
        let g = GridSpec::new(5).unwrap();
        let one = Signal::constant(&g, Complex64::new(1.0, 0.0));
        for p in [0.3, 1.0, 2.0, 7.0, f64::INFINITY] {
            assert!((lp_norm(&one, p).unwrap() - 1.0).abs() < 1e-14);
            assert_eq!(lp_norm(&Signal::zeros(&g), p).unwrap(), 0.0);
        }
        assert!(lp_norm(&one, 0.0).is_err());
        assert!(lp_norm(&one, -1.0).is_err());
        let f = rand_signal(&g, 3);
        let mut direct = 0.0;
        for z in &f.samples {
            direct += (z.re * z.re + z.im * z.im) / 32.0;
        }
        assert!((lp_norm(&f, 2.0).unwrap().powi(2) - direct).abs() < 1e-13);
    }

    #[test]
    fn periodic_dilation_wraps() {
        let g = GridSpec::new(4).unwrap();
        let first = DyadicInterval::new(2, 0).unwrap();
        let last = DyadicInterval::new(2, 3).unwrap();
        assert!(first.dilate_contains(&g, 3.0, &last));
        assert!(!first.dilate_contains(&g, 3.0, &DyadicInterval::new(2, 2).unwrap()));
        assert!(first.dilate_contains(&g, 1.0, &DyadicInterval::new(3, 1).unwrap()));
        assert_eq!(first.dist_samples(&g, 15), 1);
        assert_eq!(first.dist_samples(&g, 4), 0);
        assert_eq!(first.dist_samples(&g, 5), 1);
    }

    #[test]
    fn signal_json_round_trip() {
        let s = Signal::new(vec![Complex64::new(1.0, -2.0); 4]).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, "[[1.0,-2.0],[1.0,-2.0],[1.0,-2.0],[1.0,-2.0]]");
        let back: Signal = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let i: DyadicInterval = serde_json::from_str(r#"{"k":2,"n":3}"#).unwrap();
        assert_eq!(i, DyadicInterval { k: 2, n: 3 });
    }
}
