//! Model operators and their multilinear forms.
//!
//! Pairings are `⟨f, φ⟩ = Σ_x f(x) conj(φ(x)) 2^{-J}` in every slot of `Λ`. The model operator
//! carries `conj(φ_{P_3})`, so that `⟨BHT(f, g), conj(h)⟩ = Λ(f, g, h)` for both backends.

use crate::error::{invalid, Error, Result};
use crate::grid::{DyadicInterval, GridSpec, Signal};
use crate::packets::{PacketBackend, PacketCache};
use crate::tiles::{localize, MultiFamily, RankOneFamily};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Linearization `ξ_0(x) < … < ξ_K(x)` and coefficients `a_1(x), …, a_K(x)` of an `r`-variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationData {
    #[serde(rename = "K")]
    pub k: usize,
    pub xi: Vec<Vec<u64>>,
    pub a: Vec<Vec<Complex64>>,
    pub r: f64,
}

impl LinearizationData {
    pub fn new(k: usize, xi: Vec<Vec<u64>>, a: Vec<Vec<Complex64>>, r: f64, g: &GridSpec) -> Result<Self> {
        let lin = Self { k, xi, a, r };
        lin.validate(g)?;
        Ok(lin)
    }

    /// `K = 1`, `a_1 ≡ 1` and a constant `ξ_0`; `ξ_1` is the next grid frequency.
    pub fn constant(g: &GridSpec, xi0: u64, r: f64) -> Result<Self> {
        let n = g.n_samples();
        Self::new(1, vec![vec![xi0, xi0 + 1]; n], vec![vec![Complex64::new(1.0, 0.0)]; n], r, g)
    }

    pub fn r_prime(&self) -> f64 {
        self.r / (self.r - 1.0)
    }

    pub fn validate(&self, g: &GridSpec) -> Result<()> {
        let n = g.n_samples();
        if !(self.r > 2.0) || !self.r.is_finite() {
            return invalid(format!("variation exponent must be a finite r > 2, got {}", self.r));
        }
        if self.k == 0 {
            return invalid("linearization needs K >= 1");
        }
        if self.xi.len() != n || self.a.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: self.xi.len().min(self.a.len()) });
        }
        let rp = self.r_prime();
        for x in 0..n {
            let (xi, a) = (&self.xi[x], &self.a[x]);
            if xi.len() != self.k + 1 || a.len() != self.k {
                return invalid(format!("sample {x}: expected {} frequencies and {} coefficients", self.k + 1, self.k));
            }
            if xi.windows(2).any(|p| p[0] >= p[1]) || xi.iter().any(|&v| v as usize >= n) {
                return invalid(format!("sample {x}: frequencies must increase strictly inside the grid"));
            }
            if a.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::NonFinite(x));
            }
            let total: f64 = a.iter().map(|c| c.norm().powf(rp)).sum();
            if (total - 1.0).abs() > 1e-9 {
                return invalid(format!("sample {x}: Σ|a_κ|^(r') = {total}, expected 1"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("linearization serializes")
    }

    pub fn from_json(text: &str, g: &GridSpec) -> Result<Self> {
        let lin: Self = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("linearization JSON: {e}")))?;
        lin.validate(g)?;
        Ok(lin)
    }
}

/// Packets of all three components of a family.
pub fn tri_cache(fam: &RankOneFamily, backend: PacketBackend) -> Result<PacketCache> {
    PacketCache::build(fam.grid, backend, fam.tiles.iter().flat_map(|t| [t.component(1), t.component(2), t.component(3)]))
}

fn check_signals(g: &GridSpec, signals: &[&Signal]) -> Result<()> {
    for s in signals {
        s.check_len(g)?;
        s.check_finite()?;
    }
    Ok(())
}

/// Per-tile terms computed in parallel, summed sequentially in tile order.
fn ordered_sum(terms: Vec<Complex64>) -> Complex64 {
    terms.into_iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b)
}

/// `Λ(f, g, h) = Σ_P |I_P|^{-1/2} ⟨f, φ_{P_1}⟩ ⟨g, φ_{P_2}⟩ ⟨h, φ_{P_3}⟩`.
pub fn lambda_bht(fam: &RankOneFamily, f: &Signal, g: &Signal, h: &Signal, backend: PacketBackend) -> Result<Complex64> {
    let cache = tri_cache(fam, backend)?;
    lambda_bht_cached(fam, &cache, f, g, h)
}

pub fn lambda_bht_cached(fam: &RankOneFamily, cache: &PacketCache, f: &Signal, g: &Signal, h: &Signal) -> Result<Complex64> {
    check_signals(&fam.grid, &[f, g, h])?;
    let terms = fam
        .tiles
        .par_iter()
        .map(|t| {
            let c1 = cache.get(&t.component(1))?.coefficient(&f.samples);
            let c2 = cache.get(&t.component(2))?.coefficient(&g.samples);
            let c3 = cache.get(&t.component(3))?.coefficient(&h.samples);
            Ok(c1 * c2 * c3 / t.space().length().sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ordered_sum(terms))
}

/// Indicator masks `(F, G, H')` of the restricted operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    pub f: Signal,
    pub g: Signal,
    pub h: Signal,
}

impl Masks {
    pub fn new(f: Signal, g: Signal, h: Signal) -> Result<Self> {
        for (m, name) in [(&f, "F"), (&g, "G"), (&h, "H'")] {
            if !m.is_indicator() {
                return invalid(format!("mask {name} is not an indicator"));
            }
        }
        Ok(Self { f, g, h })
    }

    pub fn ones(g: &GridSpec) -> Self {
        let one = Signal::constant(g, Complex64::new(1.0, 0.0));
        Self { f: one.clone(), g: one.clone(), h: one }
    }
}

/// `BHT^{F,G,H'}_{I0}(f, g) = BHT_{ℙ(I0)}(f 𝟙_F, g 𝟙_G) 𝟙_{H'}` with
/// `BHT(f, g) = Σ_P |I_P|^{-1/2} ⟨f, φ_{P_1}⟩ ⟨g, φ_{P_2}⟩ conj(φ_{P_3})`.
pub fn bht_model(
    fam: &RankOneFamily,
    f: &Signal,
    g: &Signal,
    backend: PacketBackend,
    masks: Option<&Masks>,
    localized_to: Option<DyadicInterval>,
) -> Result<Signal> {
    let cache = tri_cache(fam, backend)?;
    bht_model_cached(fam, &cache, f, g, masks, localized_to)
}

pub fn bht_model_cached(
    fam: &RankOneFamily,
    cache: &PacketCache,
    f: &Signal,
    g: &Signal,
    masks: Option<&Masks>,
    localized_to: Option<DyadicInterval>,
) -> Result<Signal> {
    let grid = fam.grid;
    check_signals(&grid, &[f, g])?;
    let local;
    let fam = match localized_to {
        Some(i0) => {
            i0.check(&grid)?;
            local = localize(fam, &i0);
            &local
        }
        None => fam,
    };
    let (f, g) = match masks {
        Some(m) => {
            for s in [&m.f, &m.g, &m.h] {
                s.check_len(&grid)?;
                if !s.is_indicator() {
                    return invalid("restriction masks must be indicators");
                }
            }
            (f.mul(&m.f)?, g.mul(&m.g)?)
        }
        None => (f.clone(), g.clone()),
    };
    let coeffs = fam
        .tiles
        .par_iter()
        .map(|t| {
            let c1 = cache.get(&t.component(1))?.coefficient(&f.samples);
            let c2 = cache.get(&t.component(2))?.coefficient(&g.samples);
            Ok(c1 * c2 / t.space().length().sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n_samples()];
    for (t, c) in fam.tiles.iter().zip(coeffs) {
        cache.get(&t.component(3))?.accumulate_conj(c, &mut out);
    }
    let mut out = Signal { samples: out };
    if let Some(m) = masks {
        out = out.mul(&m.h)?;
    }
    Ok(out)
}

/// The index `κ` with `ξ_{κ-1}(x) ∈ ω_l`, if any; more than one is a contract violation.
fn matching_kappa(lin: &LinearizationData, x: usize, lo: u64, len: u64) -> Result<Option<usize>> {
    let mut found = None;
    for kappa in 1..=lin.k {
        let v = lin.xi[x][kappa - 1];
        if v >= lo && v < lo + len {
            if found.is_some() {
                return Err(Error::Postcondition(format!("sample {x}: two linearizing frequencies fall in one ω_l")));
            }
            found = Some(kappa);
        }
    }
    Ok(found)
}

/// `a_P(x)`: the coefficient `a_κ(x)` of the unique `κ` with `ξ_{κ-1}(x) ∈ ω_l(P)`, else 0.
pub fn a_p(fam: &MultiFamily, p: usize, lin: &LinearizationData, x: usize) -> Result<Complex64> {
    let l = fam.tiles[p].omega_l();
    Ok(match matching_kappa(lin, x, l.start as u64, l.len as u64)? {
        Some(kappa) => lin.a[x][kappa - 1],
        None => Complex64::new(0.0, 0.0),
    })
}

/// Per-tile terms `⟨f, φ_P⟩ Σ_x φ_P(x) a_P(x) g(x) 2^{-J}` of the variational Carleson form.
pub fn var_carleson_terms(
    fam: &MultiFamily,
    cache: &PacketCache,
    f: &Signal,
    g: &Signal,
    lin: &LinearizationData,
) -> Result<Vec<Complex64>> {
    let grid = fam.grid;
    check_signals(&grid, &[f, g])?;
    lin.validate(&grid)?;
    let n = grid.n_samples();
    (0..fam.len())
        .into_par_iter()
        .map(|p| {
            let packet = cache.get(&fam.tiles[p].packet_tile())?;
            let cf = packet.coefficient(&f.samples);
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, v) in packet.values.iter().enumerate() {
                let x = (packet.start + t) % n;
                acc += v * a_p(fam, p, lin, x)? * g.samples[x];
            }
            Ok(cf * acc / n as f64)
        })
        .collect()
}

pub fn multi_cache(fam: &MultiFamily, backend: PacketBackend) -> Result<PacketCache> {
    PacketCache::build(fam.grid, backend, fam.tiles.iter().map(|t| t.packet_tile()))
}

/// `∫ Σ_P ⟨f, φ_P⟩ φ_P(x) a_P(x) g(x) dx`.
pub fn var_carleson_form(fam: &MultiFamily, f: &Signal, g: &Signal, lin: &LinearizationData, backend: PacketBackend) -> Result<Complex64> {
    let cache = multi_cache(fam, backend)?;
    Ok(ordered_sum(var_carleson_terms(fam, &cache, f, g, lin)?))
}

/// Half-open integer frequency interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqRange {
    pub start: u64,
    pub end: u64,
}

/// Unnormalized-phase DFT `f̂(ξ) = Σ_x f(x) e^{-2πi x ξ / N} / N`.
pub fn dft(f: &Signal) -> Vec<Complex64> {
    let n = f.len();
    let mut buf = f.samples.clone();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.into_iter().map(|c| c / n as f64).collect()
}

/// `T_r(f, g)(x) = (Σ_k |Σ_{ξ1 < ξ2 in ω_k} f̂(ξ1) ĝ(ξ2) e^{2πi x (ξ1+ξ2)}|^r)^{1/r}`; `r = ∞` takes the maximum.
pub fn rdf_iterated(f: &Signal, g: &Signal, intervals: &[FreqRange], r: f64) -> Result<Signal> {
    let grid = f.grid()?;
    check_signals(&grid, &[f, g])?;
    if !(r >= 1.0) {
        return invalid(format!("Rubio de Francia exponent must be >= 1, got {r}"));
    }
    let n = grid.n_samples();
    let mut sorted = intervals.to_vec();
    sorted.sort_by_key(|w| w.start);
    for w in &sorted {
        if w.start >= w.end || w.end as usize > n {
            return invalid(format!("frequency interval {w:?} is empty or leaves the grid"));
        }
    }
    if sorted.windows(2).any(|p| p[1].start < p[0].end) {
        return invalid("frequency intervals overlap");
    }
    let fh = dft(f);
    let gh = dft(g);
    let phase = |x: usize, xi: u64| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * ((x as u64 * xi) % n as u64) as f64 / n as f64);
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut acc = 0.0f64;
            for w in intervals {
                let mut prefix = Complex64::new(0.0, 0.0);
                let mut term = Complex64::new(0.0, 0.0);
                for xi in w.start..w.end {
                    term += gh[xi as usize] * phase(x, xi) * prefix;
                    prefix += fh[xi as usize] * phase(x, xi);
                }
                let m = term.norm();
                acc = if r.is_infinite() { acc.max(m) } else { acc + m.powf(r) };
            }
            if r.is_infinite() {
                acc
            } else {
                acc.powf(1.0 / r)
            }
        })
        .collect();
    Signal::from_real(&values)
}

/// Signals indexed by a finite set (depth 1) or a product of two finite sets (depth 2), stored
/// row-major, with the exponents of the nested `ℓ^R` norm (outer first).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFamily {
    pub shape: Vec<usize>,
    pub signals: Vec<Signal>,
    pub exponents: Vec<f64>,
}

impl VectorFamily {
    pub fn new(shape: Vec<usize>, signals: Vec<Signal>, exponents: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&shape.len()) || exponents.len() != shape.len() {
            return invalid(format!("vector family depth must be 1 or 2 with one exponent per level, got {shape:?}/{exponents:?}"));
        }
        if shape.iter().any(|&s| s == 0) || shape.iter().product::<usize>() != signals.len() {
            return invalid(format!("shape {shape:?} does not match {} signals", signals.len()));
        }
        if exponents.iter().any(|&r| !(r > 0.0)) {
            return invalid(format!("exponents must lie in (0, ∞], got {exponents:?}"));
        }
        let g = signals[0].grid()?;
        for s in &signals {
            s.check_len(&g)?;
        }
        Ok(Self { shape, signals, exponents })
    }

    pub fn depth(&self) -> usize {
        self.shape.len()
    }

    pub fn grid(&self) -> GridSpec {
        self.signals[0].grid().expect("validated at construction")
    }
}

fn lr(values: impl Iterator<Item = f64>, r: f64) -> f64 {
    if r.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

/// `‖(f_w(x))_w‖_{ℓ^R}`, nesting the inner exponent at depth 2.
pub fn vv_lr_norm(v: &VectorFamily, x: usize) -> Result<f64> {
    let n = v.grid().n_samples();
    if x >= n {
        return invalid(format!("sample {x} outside the grid of {n} points"));
    }
    Ok(match v.depth() {
        1 => lr(v.signals.iter().map(|s| s.samples[x].norm()), v.exponents[0]),
        _ => {
            let inner = v.shape[1];
            let rows = (0..v.shape[0]).map(|a| lr((0..inner).map(|b| v.signals[a * inner + b].samples[x].norm()), v.exponents[1]));
            lr(rows, v.exponents[0])
        }
    })
}

/// Pointwise `ℓ^R` norms as a real signal.
pub fn vv_lr_signal(v: &VectorFamily) -> Result<Signal> {
    let n = v.grid().n_samples();
    let vals = (0..n).map(|x| vv_lr_norm(v, x)).collect::<Result<Vec<_>>>()?;
    Signal::from_real(&vals)
}

/// `Σ_{1/R_i}` ≥ 1 at every depth level, the counting-measure Hölder condition for three families.
pub fn holder_admissible(fs: &[&VectorFamily; 3]) -> Result<()> {
    for level in 0..fs[0].depth() {
        let s: f64 = fs.iter().map(|f| 1.0 / f.exponents[level]).sum();
        if s < 1.0 - 1e-12 {
            return invalid(format!("exponents at depth {} give Σ 1/r = {s} < 1", level + 1));
        }
    }
    Ok(())
}

/// `Σ_w Λ(f_w, g_w, h_w)`.
pub fn vv_lambda(
    fam: &RankOneFamily,
    f: &VectorFamily,
    g: &VectorFamily,
    h: &VectorFamily,
    backend: PacketBackend,
    validate: bool,
) -> Result<Complex64> {
    if f.shape != g.shape || f.shape != h.shape {
        return invalid("vector families must share one index set");
    }
    if validate {
        holder_admissible(&[f, g, h])?;
    }
    let cache = tri_cache(fam, backend)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for w in 0..f.signals.len() {
        acc += lambda_bht_cached(fam, &cache, &f.signals[w], &g.signals[w], &h.signals[w])?;
    }
    Ok(acc)
}

/// The packet of one component as a signal.
pub fn component_packet(t: &crate::tiles::TriTile, j: usize, backend: &PacketBackend, g: &GridSpec) -> Result<Signal> {
    crate::packets::wave_packet(&t.component(j), backend, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiles::{gen_multi_family, gen_rank1_family, MultiTileConstants, TriTile};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_signal(g: &GridSpec, rng: &mut ChaCha8Rng) -> Signal {
        Signal::new((0..g.n_samples()).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()).unwrap()
    }

    #[test]
    fn single_tile_lambda_collapses() {
        let g = GridSpec::new(5).unwrap();
        let p = TriTile { k: 1, n: 1, block: 2 };
        let fam = RankOneFamily::new(g, vec![p]).unwrap();
        let b = PacketBackend::Walsh;
        let (f, gg, h) = (component_packet(&p, 1, &b, &g).unwrap(), component_packet(&p, 2, &b, &g).unwrap(), component_packet(&p, 3, &b, &g).unwrap());
        let v = lambda_bht(&fam, &f, &gg, &h, b).unwrap();
        assert!((v - Complex64::new(2f64.sqrt(), 0.0)).norm() < 1e-12);
        let z = Signal::zeros(&g);
        assert_eq!(lambda_bht(&fam, &z, &gg, &h, b).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn lambda_is_order_independent_and_trilinear() {
        let g = GridSpec::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fam = gen_rank1_family(&g, 0..=3).unwrap();
        for backend in [PacketBackend::Walsh, PacketBackend::fourier_default()] {
            let (f, gg, h, f2) = (rand_signal(&g, &mut rng), rand_signal(&g, &mut rng), rand_signal(&g, &mut rng), rand_signal(&g, &mut rng));
            let v = lambda_bht(&fam, &f, &gg, &h, backend).unwrap();
            let mut shuffled = fam.tiles.clone();
            shuffled.shuffle(&mut rng);
            let fam2 = RankOneFamily::new(g, shuffled).unwrap();
            let v2 = lambda_bht(&fam2, &f, &gg, &h, backend).unwrap();
            assert!((v - v2).norm() < 1e-12 * v.norm().max(1.0));
            let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
            let comb = f.scale(a).add(&f2.scale(b)).unwrap();
            let lhs = lambda_bht(&fam, &comb, &gg, &h, backend).unwrap();
            let rhs = a * v + b * lambda_bht(&fam, &f2, &gg, &h, backend).unwrap();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn model_operator_duality_and_masks() {
        let g = GridSpec::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fam = gen_rank1_family(&g, 0..=3).unwrap();
        for backend in [PacketBackend::Walsh, PacketBackend::fourier_default()] {
            let (f, gg, h) = (rand_signal(&g, &mut rng), rand_signal(&g, &mut rng), rand_signal(&g, &mut rng));
            let out = bht_model(&fam, &f, &gg, backend, None, None).unwrap();
            let pair: Complex64 = out.samples.iter().zip(&h.samples).map(|(a, b)| a * b).sum::<Complex64>() / g.n_samples() as f64;
            let lam = lambda_bht(&fam, &f, &gg, &h, backend).unwrap();
            assert!((pair - lam).norm() < 1e-10, "{pair} vs {lam}");
            let ones = Masks::ones(&g);
            let masked = bht_model(&fam, &f, &gg, backend, Some(&ones), None).unwrap();
            assert!(masked.samples.iter().zip(&out.samples).all(|(a, b)| (a - b).norm() < 1e-14));
        }
        let bad = Signal::constant(&g, Complex64::new(0.5, 0.0));
        assert!(Masks::new(bad.clone(), bad.clone(), bad).is_err());
        let zero = bht_model(&fam, &Signal::zeros(&g), &Signal::zeros(&g), PacketBackend::Walsh, None, None).unwrap();
        assert!(zero.samples.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn localization_filters_tiles() {
        let g = GridSpec::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fam = gen_rank1_family(&g, 0..=3).unwrap();
        let i0 = DyadicInterval { k: 1, n: 1 };
        let (f, gg) = (rand_signal(&g, &mut rng), rand_signal(&g, &mut rng));
        let a = bht_model(&fam, &f, &gg, PacketBackend::Walsh, None, Some(i0)).unwrap();
        let b = bht_model(&localize(&fam, &i0), &f, &gg, PacketBackend::Walsh, None, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linearization_validation_and_json() {
        let g = GridSpec::new(4).unwrap();
        let lin = LinearizationData::constant(&g, 3, 4.0).unwrap();
        let back = LinearizationData::from_json(&lin.to_json(), &g).unwrap();
        assert_eq!(back, lin);
        let mut bad = lin.clone();
        bad.a[0][0] = Complex64::new(0.5, 0.0);
        assert!(bad.validate(&g).is_err());
        let mut bad = lin;
        bad.xi[2] = vec![5, 5];
        assert!(bad.validate(&g).is_err());
    }

    #[test]
    fn var_carleson_single_tile_matches_direct_sum() {
        let g = GridSpec::new(6).unwrap();
        let c = MultiTileConstants::default();
        let fam = gen_multi_family(&g, 1..=1, c).unwrap();
        let fam = fam.subset(&[1]);
        let p = fam.tiles[0];
        let lin = LinearizationData::constant(&g, p.omega_l().start as u64, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (f, gg) = (rand_signal(&g, &mut rng), rand_signal(&g, &mut rng));
        let v = var_carleson_form(&fam, &f, &gg, &lin, PacketBackend::Walsh).unwrap();
        let phi = crate::packets::wave_packet(&p.packet_tile(), &PacketBackend::Walsh, &g).unwrap();
        let cf = crate::packets::inner_product(&f, &phi).unwrap();
        let direct: Complex64 = phi.samples.iter().zip(&gg.samples).map(|(a, b)| a * b).sum::<Complex64>() / g.n_samples() as f64;
        assert!((v - cf * direct).norm() < 1e-12);
        let off = LinearizationData::constant(&g, p.omega_h().start as u64, 3.0).unwrap();
        assert_eq!(var_carleson_form(&fam, &f, &gg, &off, PacketBackend::Walsh).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn rdf_matches_double_sum() {
        let g = GridSpec::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (f, gg) = (rand_signal(&g, &mut rng), rand_signal(&g, &mut rng));
        let ws = [FreqRange { start: 1, end: 5 }, FreqRange { start: 7, end: 12 }];
        let (fh, gh) = (dft(&f), dft(&gg));
        let n = g.n_samples();
        for r in [1.0, 2.5, f64::INFINITY] {
            let t = rdf_iterated(&f, &gg, &ws, r).unwrap();
            for x in 0..n {
                let parts: Vec<f64> = ws
                    .iter()
                    .map(|w| {
                        let mut s = Complex64::new(0.0, 0.0);
                        for a in w.start..w.end {
                            for b in a + 1..w.end {
                                let ph = 2.0 * std::f64::consts::PI * x as f64 * (a + b) as f64 / n as f64;
                                s += fh[a as usize] * gh[b as usize] * Complex64::from_polar(1.0, ph);
                            }
                        }
                        s.norm()
                    })
                    .collect();
                let want = if r.is_infinite() { parts.iter().cloned().fold(0.0, f64::max) } else { parts.iter().map(|v| v.powf(r)).sum::<f64>().powf(1.0 / r) };
                assert!((t.samples[x].re - want).abs() < 1e-12);
            }
        }
        assert!(rdf_iterated(&f, &gg, &[FreqRange { start: 1, end: 5 }, FreqRange { start: 4, end: 6 }], 2.0).is_err());
    }

    #[test]
    fn rdf_single_pair_is_constant_modulus() {
        let g = GridSpec::new(4).unwrap();
        let n = g.n_samples();
        let spike = |xi: u64, amp: f64| {
            let v = (0..n).map(|x| Complex64::from_polar(amp, 2.0 * std::f64::consts::PI * (x as u64 * xi) as f64 / n as f64)).collect();
            Signal::new(v).unwrap()
        };
        let t = rdf_iterated(&spike(2, 1.5), &spike(3, 0.5), &[FreqRange { start: 2, end: 4 }], 2.0).unwrap();
        assert!(t.samples.iter().all(|z| (z.re - 0.75).abs() < 1e-12));
    }

    #[test]
    fn vector_family_norms_and_singleton_reduction() {
        let g = GridSpec::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fam = gen_rank1_family(&g, 0..=2).unwrap();
        let sigs: Vec<Signal> = (0..3).map(|_| rand_signal(&g, &mut rng)).collect();
        let one = |s: &Signal| VectorFamily::new(vec![1], vec![s.clone()], vec![2.0]).unwrap();
        let v = vv_lambda(&fam, &one(&sigs[0]), &one(&sigs[1]), &one(&sigs[2]), PacketBackend::Walsh, true).unwrap();
        assert_eq!(v, lambda_bht(&fam, &sigs[0], &sigs[1], &sigs[2], PacketBackend::Walsh).unwrap());

        let four: Vec<Signal> = (0..4).map(|_| rand_signal(&g, &mut rng)).collect();
        let d2 = VectorFamily::new(vec![2, 2], four.clone(), vec![1.0, 3.0]).unwrap();
        let x = 5;
        let row = |a: usize| (four[2 * a].samples[x].norm().powi(3) + four[2 * a + 1].samples[x].norm().powi(3)).powf(1.0 / 3.0);
        assert!((vv_lr_norm(&d2, x).unwrap() - (row(0) + row(1))).abs() < 1e-12);
        let d1 = VectorFamily::new(vec![4], four, vec![f64::INFINITY]).unwrap();
        assert!(vv_lr_norm(&d1, x).unwrap() <= vv_lr_norm(&VectorFamily { exponents: vec![2.0], ..d1.clone() }, x).unwrap());
        let bad = VectorFamily::new(vec![4], d1.signals.clone(), vec![4.0]).unwrap();
        assert!(holder_admissible(&[&bad, &bad, &bad]).is_err());
    }
}
