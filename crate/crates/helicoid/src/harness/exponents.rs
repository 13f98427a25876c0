//! Exponent bookkeeping: admissibility of Lebesgue tuples, the vector weight condition and the
//! exact exponent transfer used when the target quasi-norm is not subadditive.

use crate::error::{invalid, Error, Result};
use crate::grid::{GridSpec, Signal};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AdmissibilityMode {
    /// `(p_1, p_2, p_3)` are the exponents of `f`, `g` and `h`; the rows of `R` are `R_1, R_2, R'`.
    Bht,
    /// `p_tuple = (p, r, ·)`: input exponent and variation exponent; `R` is the vector tuple.
    Varc,
    /// `p_tuple = (s_1, s_2, q)`; `R` is ignored.
    Fs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub mode: AdmissibilityMode,
    pub feasible: bool,
    /// Lower bounds `m_i` on `θ_i`.
    pub m: [f64; 3],
    pub theta: Option<[f64; 3]>,
    pub diagnosis: String,
}

fn check_exponent(v: f64, what: &str) -> Result<()> {
    if v.is_nan() || v <= 0.0 {
        return invalid(format!("{what} must lie in (0, ∞], got {v}"));
    }
    Ok(())
}

/// `θ_i = m_i + (1 - Σ m)/3`, strictly inside the region whenever `Σ m < 1`.
fn witness(m: [f64; 3]) -> [f64; 3] {
    let slack = (1.0 - m.iter().sum::<f64>()) / 3.0;
    m.map(|v| v + slack)
}

/// Existence of `θ ∈ [0,1)^3` with `Σ θ = 1` and `1/x < (1+θ_i)/2` for every exponent `x` of
/// slot `i`. With `m_i = max(0, 2 max_x 1/x - 1)` this holds iff every `m_i < 1` and `Σ m_i < 1`.
pub fn check_admissible(p_tuple: &[f64], r_tuples: &[Vec<f64>], mode: AdmissibilityMode) -> Result<Admissibility> {
    if p_tuple.len() != 3 {
        return invalid(format!("exponent tuple must have three entries, got {}", p_tuple.len()));
    }
    for (i, &p) in p_tuple.iter().enumerate() {
        check_exponent(p, &format!("exponent {}", i + 1))?;
    }
    match mode {
        AdmissibilityMode::Bht => bht_mode(p_tuple, r_tuples),
        AdmissibilityMode::Varc => varc_mode(p_tuple, r_tuples),
        AdmissibilityMode::Fs => fs_mode(p_tuple),
    }
}

fn bht_mode(p: &[f64], r: &[Vec<f64>]) -> Result<Admissibility> {
    if !r.is_empty() {
        if r.len() != 3 {
            return invalid(format!("R must have one row per slot, got {} rows", r.len()));
        }
        let depth = r[0].len();
        if depth > 2 || r.iter().any(|row| row.len() != depth) {
            return invalid(format!("R rows must share a depth of at most 2, got {r:?}"));
        }
        for row in r {
            for &v in row {
                check_exponent(v, "vector exponent")?;
            }
        }
    }
    let m: [f64; 3] = std::array::from_fn(|i| {
        let inv = r.get(i).into_iter().flatten().map(|v| 1.0 / v).fold(1.0 / p[i], f64::max);
        (2.0 * inv - 1.0).max(0.0)
    });
    Ok(verdict(AdmissibilityMode::Bht, m))
}

fn verdict(mode: AdmissibilityMode, m: [f64; 3]) -> Admissibility {
    let sum: f64 = m.iter().sum();
    let feasible = m.iter().all(|&v| v < 1.0) && sum < 1.0;
    let diagnosis = if feasible {
        format!("feasible: m = {m:?}, Σm = {sum}")
    } else if let Some(i) = m.iter().position(|&v| v >= 1.0) {
        format!("infeasible: m_{} = {} ≥ 1", i + 1, m[i])
    } else {
        format!("infeasible: Σm = {sum} ≥ 1 for m = {m:?}")
    };
    Admissibility { mode, feasible, m, theta: feasible.then(|| witness(m)), diagnosis }
}

/// Local form of the variational Carleson operator: `2 < r ≤ ∞`, and every vector exponent
/// lies in `(r', ∞)`. The exponent `p` only needs to be positive.
fn varc_mode(p: &[f64], r: &[Vec<f64>]) -> Result<Admissibility> {
    let rv = p[1];
    let mut problems = Vec::new();
    if !(rv > 2.0) {
        problems.push(format!("variation exponent r = {rv} must exceed 2"));
    }
    let rp = if rv.is_infinite() { 1.0 } else { rv / (rv - 1.0) };
    for &v in r.iter().flatten() {
        check_exponent(v, "vector exponent")?;
        if !(v > rp && v.is_finite()) {
            problems.push(format!("vector exponent {v} outside (r', ∞) = ({rp}, ∞)"));
        }
    }
    let feasible = problems.is_empty();
    let diagnosis = if feasible { format!("feasible: r = {rv}, r' = {rp}") } else { format!("infeasible: {}", problems.join("; ")) };
    Ok(Admissibility { mode: AdmissibilityMode::Varc, feasible, m: [0.0; 3], theta: feasible.then_some([1.0 / 3.0; 3]), diagnosis })
}

/// `1 < s_1, s_2 < ∞` and `1/s_1 + 1/s_2 < min(3/2, 1 + 1/q)`, together with a witness `θ`:
/// `1/s_i < (1+θ_i)/2` and `θ_1 + θ_2 < min(1, 2/q)`, so that a positive `1/s_3` fits below
/// `1/q - (θ_1+θ_2)/2`. The two agree for `q ≤ 1`.
fn fs_mode(p: &[f64]) -> Result<Admissibility> {
    let (s1, s2, q) = (p[0], p[1], p[2]);
    let sum = 1.0 / s1 + 1.0 / s2;
    let cap = 1.5f64.min(1.0 + 1.0 / q);
    let m1 = (2.0 / s1 - 1.0).max(0.0);
    let m2 = (2.0 / s2 - 1.0).max(0.0);
    let upper = 1.0f64.min(2.0 / q);
    let mut problems = Vec::new();
    if !(s1 > 1.0 && s1.is_finite() && s2 > 1.0 && s2.is_finite()) {
        problems.push(format!("s_1 = {s1}, s_2 = {s2} must lie in (1, ∞)"));
    }
    if !(sum < cap) {
        problems.push(format!("1/s_1 + 1/s_2 = {sum} is not below min(3/2, 1 + 1/q) = {cap}"));
    } else if !(m1 + m2 < upper) {
        problems.push(format!("no θ: m_1 + m_2 = {} is not below min(1, 2/q) = {upper}", m1 + m2));
    }
    let feasible = problems.is_empty();
    let theta = feasible.then(|| {
        let t = (m1 + m2 + upper) / 2.0;
        let share = (t - m1 - m2) / 2.0;
        [m1 + share, m2 + share, 1.0 - t]
    });
    let diagnosis = if feasible { format!("feasible: 1/s_1 + 1/s_2 = {sum} < {cap}") } else { format!("infeasible: {}", problems.join("; ")) };
    Ok(Admissibility { mode: AdmissibilityMode::Fs, feasible, m: [m1, m2, 0.0], theta, diagnosis })
}

/// Grid search over `θ_1, θ_2` with the given step for the BHT constraints; used as an oracle.
pub fn admissible_by_grid(p: &[f64], r: &[Vec<f64>], step: f64) -> bool {
    let inv: [f64; 3] = std::array::from_fn(|i| r.get(i).into_iter().flatten().map(|v| 1.0 / v).fold(1.0 / p[i], f64::max));
    let n = (1.0 / step).round() as usize;
    for a in 0..n {
        let t1 = a as f64 * step;
        for b in 0..n - a {
            let t2 = b as f64 * step;
            let t3 = 1.0 - t1 - t2;
            if !(0.0..1.0).contains(&t3) {
                continue;
            }
            if inv[0] < (1.0 + t1) / 2.0 && inv[1] < (1.0 + t2) / 2.0 && inv[2] < (1.0 + t3) / 2.0 {
                return true;
            }
        }
    }
    false
}

// ----------------------------------------------------------------------------------------------
// Vector weight condition

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightExponents {
    pub q1: f64,
    pub q2: f64,
    pub q: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub value: f64,
    /// Dyadic interval `(k, n)` attaining the supremum.
    pub argmax: (u32, u64),
    /// A simplex `θ` certifying the exponent constraints.
    pub theta: [f64; 3],
}

impl WeightExponents {
    /// `1/q = 1/q_1 + 1/q_2`, `1/q_i < 1/s_i`, and a simplex `θ` with `1/s_i < (1+θ_i)/2`
    /// and `1/s_3 < 1/q* - (θ_1+θ_2)/2`.
    pub fn validate(&self) -> Result<[f64; 3]> {
        let WeightExponents { q1, q2, q, s1, s2, s3 } = *self;
        for (v, name) in [(q1, "q1"), (q2, "q2"), (q, "q"), (s1, "s1"), (s2, "s2"), (s3, "s3")] {
            check_exponent(v, name)?;
        }
        if ((1.0 / q1 + 1.0 / q2) - 1.0 / q).abs() > 1e-12 {
            return Err(Error::Config(format!("1/q1 + 1/q2 = {} differs from 1/q = {}", 1.0 / q1 + 1.0 / q2, 1.0 / q)));
        }
        if !(q1 > 1.0 && q2 > 1.0 && q > 2.0 / 3.0 && q.is_finite()) {
            return Err(Error::Config(format!("(q1, q2, q) = ({q1}, {q2}, {q}) outside the range 1 < q1, q2 ≤ ∞, 2/3 < q < ∞")));
        }
        if !(1.0 / q1 < 1.0 / s1 && 1.0 / q2 < 1.0 / s2) {
            return Err(Error::Config(format!("need 1/q_i < 1/s_i, got q = ({q1}, {q2}), s = ({s1}, {s2})")));
        }
        let q_star = q.min(1.0);
        let upper = 2.0 * (1.0 / q_star - 1.0 / s3);
        let m1 = (2.0 / s1 - 1.0).max(0.0);
        let m2 = (2.0 / s2 - 1.0).max(0.0);
        let top = upper.min(1.0);
        if !(m1 < 1.0 && m2 < 1.0 && m1 + m2 < top) {
            return Err(Error::Config(format!(
                "no θ satisfies 1/s1 < (1+θ1)/2, 1/s2 < (1+θ2)/2, 1/s3 < 1/q* - (θ1+θ2)/2 for s = ({s1}, {s2}, {s3}), q = {q}"
            )));
        }
        let t = (m1 + m2 + top) / 2.0;
        let share = (t - m1 - m2) / 2.0;
        let (t1, t2) = (m1 + share, m2 + share);
        Ok([t1, t2, 1.0 - t1 - t2])
    }
}

/// `(⨍_Q w^a)^{1/a}` for `a ≠ 0`, over the sample range `[lo, hi)`.
fn power_mean(w: &[f64], lo: usize, hi: usize, a: f64) -> f64 {
    let n = (hi - lo) as f64;
    if a.is_infinite() {
        let pick = if a > 0.0 { f64::max } else { f64::min };
        return w[lo..hi].iter().copied().reduce(pick).expect("non-empty");
    }
    (w[lo..hi].iter().map(|v| v.powf(a)).sum::<f64>() / n).powf(1.0 / a)
}

/// `sup_Q (⨍ w1^{1/(1/q1-1/s1)})^{1/s1-1/q1} (⨍ w2^{1/(1/q2-1/s2)})^{1/s2-1/q2}
/// (⨍ w^{1/(1/s3-1/(q**)')})^{1/s3-1/(q**)'}` over dyadic `Q`, with `w = w1 w2`.
pub fn weight_condition(w1: &Signal, w2: &Signal, e: &WeightExponents) -> Result<WeightReport> {
    let theta = e.validate()?;
    if w1.len() != w2.len() {
        return Err(Error::LengthMismatch { expected: w1.len(), got: w2.len() });
    }
    w1.check_finite()?;
    w2.check_finite()?;
    let g = GridSpec::from_len(w1.len())?;
    let (a, b) = (w1.moduli(), w2.moduli());
    if a.iter().chain(&b).any(|&v| !(v > 0.0)) {
        return invalid("weights must be positive at every sample");
    }
    let w: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    // Each factor is a power mean with exponent `1/(1/q_i - 1/s_i) < 0`.
    let e1 = 1.0 / (1.0 / e.q1 - 1.0 / e.s1);
    let e2 = 1.0 / (1.0 / e.q2 - 1.0 / e.s2);
    let e3 = if e.q <= 1.0 {
        e.s3
    } else {
        let d = 1.0 / e.s3 - (1.0 - 1.0 / e.q);
        if d == 0.0 {
            return Err(Error::Config("1/s3 equals 1/(q**)', the weight factor degenerates".into()));
        }
        1.0 / d
    };
    let mut best = (f64::NEG_INFINITY, (0, 0));
    for i in g.intervals() {
        let (lo, hi) = (i.start(&g), i.end(&g));
        let v = power_mean(&a, lo, hi, e1) * power_mean(&b, lo, hi, e2) * power_mean(&w, lo, hi, e3);
        if v > best.0 {
            best = (v, (i.k, i.n));
        }
    }
    Ok(WeightReport { value: best.0, argmax: best.1, theta })
}

// ----------------------------------------------------------------------------------------------
// Exponent transfer without subadditivity

/// Exact rational exponent arithmetic; every field is a reciprocal exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferPlan {
    /// `q ≤ min_j r^j`: `|·|^q` of the `ℓ^R` norm is subadditive and no transfer is needed.
    pub subadditive: bool,
    pub inv_tau: BigRational,
    pub inv_q: BigRational,
    /// `1/s_1 = 1/s̃_1`, `1/s_2 = 1/s̃_2`.
    pub inv_s12: [BigRational; 2],
    /// `1/s_3(τ) = 1/τ - (θ_1+θ_2)/2 - ε`.
    pub inv_s3_tau: BigRational,
    /// `1/s̃_3 = 1/q - (θ_1+θ_2)/2 - 2ε`.
    pub inv_s3_tilde: BigRational,
}

impl TransferPlan {
    /// `1/s̃_3 < 1/s_3(τ) - 1/τ + 1/q`, evaluated exactly.
    pub fn transfer_holds(&self) -> bool {
        self.inv_s3_tilde < &self.inv_s3_tau - &self.inv_tau + &self.inv_q
    }

    pub fn to_f64(r: &BigRational) -> f64 {
        num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    pub fn exponents_f64(&self) -> ([f64; 3], [f64; 3]) {
        let f = |r: &BigRational| 1.0 / Self::to_f64(r);
        ([f(&self.inv_s12[0]), f(&self.inv_s12[1]), f(&self.inv_s3_tau)], [f(&self.inv_s12[0]), f(&self.inv_s12[1]), f(&self.inv_s3_tilde)])
    }
}

/// Exact binary value of a finite float as a rational.
pub fn exact_rational(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::InvalidArgument(format!("{v} has no exact rational value")))
}

fn recip(v: f64) -> Result<BigRational> {
    if v.is_infinite() && v > 0.0 {
        return Ok(BigRational::zero());
    }
    let r = exact_rational(v)?;
    if !r.is_positive() {
        return invalid(format!("exponent {v} must be positive"));
    }
    Ok(r.recip())
}

/// `τ = min_j r^j` when `q > min_j r^j` (else `τ = q`), `s_i` from `1/s_i = (1+θ_i)/2 - ε`,
/// `1/s_3(τ) = 1/τ - (θ_1+θ_2)/2 - ε` and `1/s̃_3 = 1/q - (θ_1+θ_2)/2 - 2ε`.
pub fn transfer_exponents(theta: [f64; 3], q: f64, r: &[f64], eps: f64) -> Result<TransferPlan> {
    if r.is_empty() {
        return invalid("the output tuple R must have at least one exponent");
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return invalid(format!("ε must be positive, got {eps}"));
    }
    let th: Vec<BigRational> = theta.iter().map(|&t| exact_rational(t)).collect::<Result<_>>()?;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let one = BigRational::one();
    let e = exact_rational(eps)?;
    let inv_q = recip(q)?;
    let inv_r: Vec<BigRational> = r.iter().map(|&v| recip(v)).collect::<Result<_>>()?;
    // The smallest r^j has the largest reciprocal.
    let inv_rmin = inv_r.iter().max().expect("non-empty").clone();
    let subadditive = inv_q >= inv_rmin;
    let inv_tau = if subadditive { inv_q.clone() } else { inv_rmin };
    let t12 = (&th[0] + &th[1]) * &half;
    let inv_s12 = [(&one + &th[0]) * &half - &e, (&one + &th[1]) * &half - &e];
    let inv_s3_tau = &inv_tau - &t12 - &e;
    let inv_s3_tilde = &inv_q - &t12 - &e - &e;
    for (v, name) in [(&inv_s12[0], "1/s1"), (&inv_s12[1], "1/s2"), (&inv_s3_tau, "1/s3(τ)"), (&inv_s3_tilde, "1/s̃3")] {
        if !v.is_positive() {
            return Err(Error::Config(format!("{name} = {} is not positive; reduce ε or adjust θ", TransferPlan::to_f64(v))));
        }
    }
    Ok(TransferPlan { subadditive, inv_tau, inv_q, inv_s12, inv_s3_tau, inv_s3_tilde })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn local_l2_tuples_get_the_uniform_witness() {
        let a = check_admissible(&[2.0, 4.0, f64::INFINITY], &[vec![2.0], vec![3.0], vec![8.0]], AdmissibilityMode::Bht).unwrap();
        assert!(a.feasible);
        assert_eq!(a.theta, Some([1.0 / 3.0; 3]));
    }

    #[test]
    fn p_equal_one_is_infeasible() {
        let a = check_admissible(&[1.0, 2.0, 2.0], &[], AdmissibilityMode::Bht).unwrap();
        assert!(!a.feasible);
        assert_eq!(a.m[0], 1.0);
        assert!(a.theta.is_none());
    }

    #[test]
    fn malformed_tuples_are_errors() {
        assert!(check_admissible(&[2.0, 2.0], &[], AdmissibilityMode::Bht).is_err());
        assert!(check_admissible(&[2.0, 0.0, 2.0], &[], AdmissibilityMode::Bht).is_err());
        assert!(check_admissible(&[2.0, 2.0, 2.0], &[vec![2.0], vec![2.0]], AdmissibilityMode::Bht).is_err());
        assert!(check_admissible(&[2.0, 2.0, 2.0], &[vec![2.0; 3], vec![2.0; 3], vec![2.0; 3]], AdmissibilityMode::Bht).is_err());
    }

    #[test]
    fn closed_form_agrees_with_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut checked, mut skipped) = (0, 0);
        for _ in 0..1000 {
            let draw = |rng: &mut ChaCha8Rng| 1.0 / rng.random_range(0.0..1.0f64).max(1e-9);
            let p: Vec<f64> = (0..3).map(|_| draw(&mut rng)).collect();
            let depth = rng.random_range(0..=2);
            let r: Vec<Vec<f64>> = if depth == 0 { Vec::new() } else { (0..3).map(|_| (0..depth).map(|_| draw(&mut rng)).collect()).collect() };
            let a = check_admissible(&p, &r, AdmissibilityMode::Bht).unwrap();
            // The grid cannot resolve tuples whose slack is below its step.
            let slack = 1.0 - a.m.iter().sum::<f64>();
            if slack.abs() < 4e-3 {
                skipped += 1;
                continue;
            }
            checked += 1;
            assert_eq!(a.feasible, admissible_by_grid(&p, &r, 1e-3), "p = {p:?}, r = {r:?}, m = {:?}", a.m);
            if let Some(t) = a.theta {
                assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let inv: Vec<f64> = (0..3).map(|i| r.get(i).into_iter().flatten().map(|v| 1.0 / v).fold(1.0 / p[i], f64::max)).collect();
                for i in 0..3 {
                    assert!((0.0..1.0).contains(&t[i]) && inv[i] < (1.0 + t[i]) / 2.0);
                }
            }
        }
        assert!(checked >= 980, "only {checked} tuples away from the boundary ({skipped} skipped)");
    }

    #[test]
    fn fs_precheck_rejects_the_three_halves_line() {
        assert!(check_admissible(&[2.0, 2.0, 1.0], &[], AdmissibilityMode::Fs).unwrap().feasible);
        assert!(!check_admissible(&[4.0 / 3.0, 4.0 / 3.0, 1.0], &[], AdmissibilityMode::Fs).unwrap().feasible);
        assert!(!check_admissible(&[1.2, 1.5, 0.5], &[], AdmissibilityMode::Fs).unwrap().feasible);
        // For q > 1 the cap is 1 + 1/q.
        assert!(!check_admissible(&[1.5, 1.6, 4.0], &[], AdmissibilityMode::Fs).unwrap().feasible);
        assert!(check_admissible(&[2.5, 2.5, 4.0], &[], AdmissibilityMode::Fs).unwrap().feasible);
        // The sum condition holds but no θ exists once s_1 > 2 is clipped.
        assert!(!check_admissible(&[4.0, 1.2, 4.0], &[], AdmissibilityMode::Fs).unwrap().feasible);
        let t = check_admissible(&[1.5, 1.5, 1.0], &[], AdmissibilityMode::Fs).unwrap().theta.unwrap();
        assert!(2.0 / 3.0 < (1.0 + t[0]) / 2.0 && 2.0 / 3.0 < (1.0 + t[1]) / 2.0);
        assert!(0.0 < 1.0 - (t[0] + t[1]) / 2.0 && t[2] > 0.0 && (t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn varc_mode_needs_r_above_two() {
        assert!(check_admissible(&[1.0, 4.0, 1.0], &[vec![2.0]], AdmissibilityMode::Varc).unwrap().feasible);
        assert!(!check_admissible(&[1.0, 2.0, 1.0], &[], AdmissibilityMode::Varc).unwrap().feasible);
        assert!(!check_admissible(&[1.0, 4.0, 1.0], &[vec![1.2]], AdmissibilityMode::Varc).unwrap().feasible);
    }

    fn exps(q: f64) -> WeightExponents {
        // 1/q1 = 1/q2 = 1/(2q); s chosen inside the constraints for θ = (1/3,1/3,1/3).
        WeightExponents { q1: 2.0 * q, q2: 2.0 * q, q, s1: 1.4, s2: 1.4, s3: 3.0 }
    }

    #[test]
    fn trivial_weights_give_one() {
        let g = GridSpec::new(4).unwrap();
        let one = Signal::constant(&g, num_complex::Complex64::new(1.0, 0.0));
        for q in [1.0, 2.0] {
            let r = weight_condition(&one, &one, &exps(q)).unwrap();
            assert!((r.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_loop_oracle_at_one_level() {
        let (v1, v2) = ([1.0, 4.0, 0.5, 2.0], [2.0, 0.5, 3.0, 1.0]);
        let w1 = Signal::from_real(&v1).unwrap();
        let w2 = Signal::from_real(&v2).unwrap();
        let e = exps(1.0);
        let a1 = 1.0 / (1.0 / e.q1 - 1.0 / e.s1);
        let a2 = 1.0 / (1.0 / e.q2 - 1.0 / e.s2);
        let mean = |v: &[f64], a: f64| (v.iter().map(|x| x.powf(a)).sum::<f64>() / v.len() as f64).powf(1.0 / a);
        let w: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| x * y).collect();
        let mut expected = f64::NEG_INFINITY;
        for (lo, hi) in [(0, 4), (0, 2), (2, 4), (0, 1), (1, 2), (2, 3), (3, 4)] {
            let v = mean(&v1[lo..hi], a1) * mean(&v2[lo..hi], a2) * mean(&w[lo..hi], e.s3);
            expected = expected.max(v);
        }
        let got = weight_condition(&w1, &w2, &e).unwrap().value;
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn scaling_w1_scales_by_the_square() {
        let g = GridSpec::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w1 = Signal::from_real(&(0..g.n_samples()).map(|_| rng.random_range(0.2..3.0)).collect::<Vec<_>>()).unwrap();
        let w2 = Signal::from_real(&(0..g.n_samples()).map(|_| rng.random_range(0.2..3.0)).collect::<Vec<_>>()).unwrap();
        for q in [1.0, 1.5] {
            let e = WeightExponents { q1: 2.0 * q, q2: 2.0 * q, q, s1: 1.4, s2: 1.4, s3: if q > 1.0 { 2.0 } else { 3.0 } };
            let base = weight_condition(&w1, &w2, &e).unwrap().value;
            for c in [1.5, 3.0] {
                let scaled = weight_condition(&w1.scale(num_complex::Complex64::new(c, 0.0)), &w2, &e).unwrap().value;
                assert!(scaled > base);
                assert!((scaled / base - c * c).abs() < 1e-10 * c * c);
            }
        }
    }

    #[test]
    fn weight_constraints_are_flagged() {
        let g = GridSpec::new(2).unwrap();
        let one = Signal::constant(&g, num_complex::Complex64::new(1.0, 0.0));
        let bad_holder = WeightExponents { q1: 2.0, q2: 2.0, q: 2.0, s1: 1.4, s2: 1.4, s3: 3.0 };
        assert!(weight_condition(&one, &one, &bad_holder).is_err());
        let bad_s = WeightExponents { q1: 2.0, q2: 2.0, q: 1.0, s1: 2.5, s2: 1.4, s3: 3.0 };
        assert!(weight_condition(&one, &one, &bad_s).is_err());
        let bad_s3 = WeightExponents { q1: 2.0, q2: 2.0, q: 1.0, s1: 1.4, s2: 1.4, s3: 1.0 };
        assert!(weight_condition(&one, &one, &bad_s3).is_err());
        let zero = Signal::zeros(&g);
        assert!(weight_condition(&zero, &one, &exps(1.0)).is_err());
    }

    #[test]
    fn transfer_arithmetic_is_exact() {
        let plan = transfer_exponents([0.25, 0.25, 0.5], 3.0, &[2.0, 4.0], 0.015625).unwrap();
        assert!(!plan.subadditive);
        assert_eq!(plan.inv_tau, BigRational::new(1.into(), 2.into()));
        assert!(plan.transfer_holds());
        let gap = &plan.inv_s3_tau - &plan.inv_tau + &plan.inv_q - &plan.inv_s3_tilde;
        assert_eq!(gap, BigRational::new(1.into(), 64.into()));
        // With ε = 1/16, 1/s̃3 = 1/3 - 1/4 - 1/8 is negative and rejected.
        assert!(transfer_exponents([0.25, 0.25, 0.5], 3.0, &[2.0], 0.0625).is_err());
        let sub = transfer_exponents([1.0 / 3.0; 3], 1.0, &[2.0], 0.01).unwrap();
        assert!(sub.subadditive && sub.inv_tau == sub.inv_q && sub.transfer_holds());
        assert!(transfer_exponents([0.45, 0.45, 0.1], 4.0, &[2.0], 0.01).is_err());
    }
}
