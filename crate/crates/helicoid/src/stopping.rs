//! Stopping-time constructions: top-down generations (VVST), bottom-up sparse families (SST),
//! sparse certification and the tree decompositions of the variational Carleson model.

use crate::error::{invalid, Error, Result};
use crate::grid::{chi_tilde_values, weighted_average_unchecked, CutoffSpec, DyadicInterval, GridSpec, Signal};
use crate::operators::LinearizationData;
use crate::packets::PacketBackend;
use crate::sizes::{multi_weights, DensitySearch};
use crate::tiles::{MultiFamily, RankOneFamily, Tree};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Largest threshold constant the adaptive SST build may reach.
pub const MAX_SST_CONSTANT: f64 = (1u64 << 20) as f64;

/// Exponent window the SST average exponents must respect when range checking is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeCheck {
    pub theta: [f64; 3],
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    /// Threshold constant of the SST child condition.
    pub c: f64,
    /// Double `c` and rebuild whenever a node's children cover more than half of it.
    pub adaptive: bool,
    /// Generations run up to `J + k_max_extra`.
    pub k_max_extra: u32,
    /// Average exponents `(s1, s2, s3)` of the SST.
    pub s: [f64; 3],
    pub cutoff: CutoffSpec,
    /// Children must strictly contain a tile interval.
    pub strict: bool,
    pub range_check: Option<RangeCheck>,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self { c: 10.0, adaptive: true, k_max_extra: 60, s: [2.0, 2.0, 2.0], cutoff: CutoffSpec::default(), strict: true, range_check: None }
    }
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 1.0 && self.c.is_finite()) {
            return invalid(format!("threshold constant must be finite and > 1, got {}", self.c));
        }
        if self.s.iter().any(|&s| !(s >= 1.0)) {
            return invalid(format!("average exponents must be >= 1, got {:?}", self.s));
        }
        if let Some(rc) = self.range_check {
            check_condition_on_s(&self.s, &rc.theta, rc.q)?;
        }
        Ok(())
    }

    pub fn k_max(&self, g: &GridSpec) -> i32 {
        (g.j() + self.k_max_extra) as i32
    }
}

/// `1/s1 < (1+θ1)/2`, `1/s2 < (1+θ2)/2`, `1/s3 < 1/q - (θ1+θ2)/2` for a simplex `θ`.
pub fn check_condition_on_s(s: &[f64; 3], theta: &[f64; 3], q: f64) -> Result<()> {
    if theta.iter().any(|&t| !(0.0..1.0).contains(&t)) || (theta.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return invalid(format!("θ must lie in [0,1)^3 and sum to 1, got {theta:?}"));
    }
    if !(q > 0.0) {
        return invalid(format!("q must be positive, got {q}"));
    }
    let ok = 1.0 / s[0] < (1.0 + theta[0]) / 2.0
        && 1.0 / s[1] < (1.0 + theta[1]) / 2.0
        && 1.0 / s[2] < 1.0 / q - (theta[0] + theta[1]) / 2.0;
    if !ok {
        return invalid(format!("exponents s = {s:?} violate the range condition for θ = {theta:?}, q = {q}"));
    }
    Ok(())
}

/// Weighted averages on every dyadic interval of the grid, indexed by scale then position.
struct AverageTable {
    levels: Vec<Vec<f64>>,
}

impl AverageTable {
    fn new(f: &Signal, s: f64, c: &CutoffSpec) -> Result<Self> {
        f.check_finite()?;
        let g = f.grid()?;
        let moduli = f.moduli();
        let levels = (0..=g.j())
            .map(|k| {
                (0..1u64 << k)
                    .into_par_iter()
                    .map(|n| weighted_average_unchecked(&g, &moduli, &DyadicInterval { k, n }, s, c))
                    .collect()
            })
            .collect();
        Ok(Self { levels })
    }

    fn get(&self, i: &DyadicInterval) -> f64 {
        self.levels[i.k as usize][i.n as usize]
    }
}

// ----------------------------------------------------------------------------------------------
// VVST

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub k: i32,
    pub threshold: f64,
    pub intervals: Vec<DyadicInterval>,
}

/// Tiles assigned to one selected interval, with their widetilde size and the asserted bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub interval: DyadicInterval,
    pub k: i32,
    pub tiles: Vec<usize>,
    pub ssize: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generations {
    pub base: f64,
    pub generations: Vec<Generation>,
    pub buckets: Vec<Bucket>,
    pub residual: Vec<usize>,
    /// `Σ_{S ⊆ S0} |S| / |S0|` for every selected `S0`.
    pub packing: Vec<(DyadicInterval, f64)>,
    pub carleson: f64,
}

impl Generations {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn selected(&self) -> Vec<DyadicInterval> {
        self.generations.iter().flat_map(|g| g.intervals.iter().copied()).collect()
    }
}

/// `max_{S0} Σ_{S ⊆ S0} |S| / |S0|` over a collection of distinct dyadic intervals.
pub fn carleson_constant(intervals: &[DyadicInterval]) -> (Vec<(DyadicInterval, f64)>, f64) {
    let set: BTreeSet<DyadicInterval> = intervals.iter().copied().collect();
    let per: Vec<(DyadicInterval, f64)> =
        set.iter().map(|s0| (*s0, set.iter().filter(|s| s0.contains(s)).map(|s| s.length()).sum::<f64>() / s0.length())).collect();
    let max = per.iter().map(|p| p.1).fold(0.0, f64::max);
    (per, max)
}

/// Generation `k` collects the maximal dyadic intervals containing a live tile whose average
/// of `|f|` exceeds `2^{-k} base`; their tiles leave the stock. Generations start at the first
/// `k` whose predecessor threshold dominates every average, and stop at an empty stock or past
/// `k_max`; leftovers form the residual bucket.
pub fn vvst(fam: &RankOneFamily, f: &Signal, base: f64, cfg: &StoppingConfig) -> Result<Generations> {
    if !(base > 0.0 && base.is_finite()) {
        return invalid(format!("base level must be positive and finite, got {base}"));
    }
    f.check_len(&fam.grid)?;
    let table = AverageTable::new(f, 1.0, &cfg.cutoff)?;
    let k_max = cfg.k_max(&fam.grid);
    let chains: Vec<Vec<DyadicInterval>> = fam
        .tiles
        .iter()
        .map(|t| {
            let mut c: Vec<DyadicInterval> = t.space().ancestors().collect();
            c.reverse();
            c
        })
        .collect();
    let threshold = |k: i32| base * 2f64.powi(-k);
    let mut live = vec![true; fam.len()];
    let live_max = |live: &[bool]| -> f64 {
        chains.iter().zip(live).filter(|(_, l)| **l).flat_map(|(c, _)| c.iter().map(|i| table.get(i))).fold(0.0, f64::max)
    };

    let mut k = 1;
    let top = live_max(&live);
    while threshold(k - 1) < top {
        k -= 1;
    }
    let mut out = Generations { base, generations: Vec::new(), buckets: Vec::new(), residual: Vec::new(), packing: Vec::new(), carleson: 0.0 };
    while k <= k_max && live.iter().any(|&l| l) {
        let m = live_max(&live);
        if m == 0.0 {
            break;
        }
        while threshold(k) >= m && k <= k_max {
            k += 1;
        }
        if k > k_max {
            break;
        }
        let thr = threshold(k);
        let chosen: BTreeSet<DyadicInterval> = chains
            .iter()
            .zip(&live)
            .filter(|(_, l)| **l)
            .filter_map(|(c, _)| c.iter().find(|i| table.get(i) > thr).copied())
            .collect();
        let mut removed: BTreeMap<DyadicInterval, Vec<usize>> = chosen.iter().map(|i| (*i, Vec::new())).collect();
        for (p, t) in fam.tiles.iter().enumerate() {
            if !live[p] {
                continue;
            }
            if let Some(s) = chosen.iter().find(|s| s.contains(&t.space())) {
                live[p] = false;
                removed.get_mut(s).expect("selected").push(p);
            }
        }
        let bound = threshold(k - 1);
        for (s, tiles) in removed {
            let ssize = tiles.iter().map(|&p| table.get(&fam.tiles[p].space())).fold(0.0, f64::max);
            if ssize > bound {
                return Err(Error::Postcondition(format!("bucket {s:?} of generation {k} has size {ssize} above {bound}")));
            }
            out.buckets.push(Bucket { interval: s, k, tiles, ssize, bound });
        }
        out.generations.push(Generation { k, threshold: thr, intervals: chosen.into_iter().collect() });
        k += 1;
    }
    out.residual = (0..fam.len()).filter(|&p| live[p]).collect();
    let (packing, carleson) = carleson_constant(&out.selected());
    out.packing = packing;
    out.carleson = carleson;
    Ok(out)
}

/// Splits the family into shells `1 + dist(I_P, Ω^c)/|I_P| ∈ [2^d, 2^{d+1})` for the exceptional
/// set `Ω` given as a sample mask.
pub fn d_shells(fam: &RankOneFamily, omega: &[bool]) -> Result<BTreeMap<u32, Vec<usize>>> {
    let g = fam.grid;
    if omega.len() != g.n_samples() {
        return Err(Error::LengthMismatch { expected: g.n_samples(), got: omega.len() });
    }
    let outside: Vec<usize> = (0..omega.len()).filter(|&x| !omega[x]).collect();
    if outside.is_empty() {
        return invalid("the exceptional set covers the whole grid");
    }
    let mut shells: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (p, t) in fam.tiles.iter().enumerate() {
        let i = t.space();
        let dist = outside.iter().map(|&x| i.dist_samples(&g, x)).min().expect("non-empty");
        let ratio = 1.0 + dist as f64 / i.len_samples(&g) as f64;
        shells.entry(ratio.log2().floor() as u32).or_default().push(p);
    }
    Ok(shells)
}

/// VVST on every `d`-shell separately; tile indices refer to the full family.
pub fn vvst_shells(fam: &RankOneFamily, f: &Signal, base: f64, cfg: &StoppingConfig, omega: &[bool]) -> Result<Vec<(u32, Generations)>> {
    let mut out = Vec::new();
    for (d, idx) in d_shells(fam, omega)? {
        let mut gens = vvst(&fam.subset(&idx), f, base, cfg)?;
        for b in &mut gens.buckets {
            b.tiles.iter_mut().for_each(|p| *p = idx[*p]);
        }
        gens.residual.iter_mut().for_each(|p| *p = idx[*p]);
        out.push((d, gens));
    }
    Ok(out)
}

// ----------------------------------------------------------------------------------------------
// SST

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseNode {
    pub interval: DyadicInterval,
    pub depth: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Sample indices of `E_Q`.
    pub witness: Vec<usize>,
    /// `((1/|Q|) ∫ |f_i|^{s_i} χ̃_Q)^{1/s_i}` for the three functions.
    pub averages: [f64; 3],
    pub tiles: Vec<usize>,
    /// `max_i ssize^{s_i}_{ℙ_Q}(f_i) / average_i(Q)`.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFamily {
    pub grid: GridSpec,
    pub nodes: Vec<SparseNode>,
    pub eta: f64,
    pub final_c: f64,
    pub restarts: u32,
    pub n_tiles: usize,
    pub strict: bool,
}

impl SparseFamily {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn intervals(&self) -> Vec<DyadicInterval> {
        self.nodes.iter().map(|n| n.interval).collect()
    }

    /// `Σ_Q Π_i average_i(Q) |Q|`.
    pub fn sparse_form(&self) -> f64 {
        self.nodes.iter().map(|n| n.averages.iter().product::<f64>() * n.interval.length()).sum()
    }
}

/// Maximal intervals among the tile intervals.
pub fn maximal_supports(fam: &RankOneFamily) -> Vec<DyadicInterval> {
    let set: BTreeSet<DyadicInterval> = fam.tiles.iter().map(|t| t.space()).collect();
    set.iter().copied().filter(|i| !set.iter().any(|o| o.strictly_contains(i))).collect()
}

enum Build {
    Done(Vec<SparseNode>),
    TooDense(DyadicInterval),
}

fn build_sparse(fam: &RankOneFamily, tables: &[AverageTable; 3], cfg: &StoppingConfig, c: f64) -> Build {
    let g = fam.grid;
    let mut nodes: Vec<SparseNode> = Vec::new();
    let mut queue: std::collections::VecDeque<(DyadicInterval, usize, Option<usize>, Vec<usize>)> = maximal_supports(fam)
        .into_iter()
        .map(|q| {
            let inside = (0..fam.len()).filter(|&p| q.contains(&fam.tiles[p].space())).collect();
            (q, 0, None, inside)
        })
        .collect();
    while let Some((q0, depth, parent, inside)) = queue.pop_front() {
        let parent_avg = [0, 1, 2].map(|i| tables[i].get(&q0));
        let exceeds = |q: &DyadicInterval| (0..3).any(|i| tables[i].get(q) > c * parent_avg[i]);
        let children: BTreeSet<DyadicInterval> = inside
            .iter()
            .filter_map(|&p| {
                let ip = fam.tiles[p].space();
                let mut chain: Vec<DyadicInterval> =
                    ip.ancestors().filter(|a| q0.strictly_contains(a) && (!cfg.strict || *a != ip)).collect();
                chain.reverse();
                chain.into_iter().find(|q| exceeds(q))
            })
            .collect();
        let covered: usize = children.iter().map(|q| q.len_samples(&g)).sum();
        if 2 * covered > q0.len_samples(&g) {
            return Build::TooDense(q0);
        }
        let own: Vec<usize> = inside.iter().copied().filter(|&p| !children.iter().any(|q| q.contains(&fam.tiles[p].space()))).collect();
        let witness: Vec<usize> = (q0.start(&g)..q0.end(&g)).filter(|&x| !children.iter().any(|q| q.contains_sample(&g, x))).collect();
        let kappa = (0..3)
            .map(|i| {
                let s = own.iter().map(|&p| tables[i].get(&fam.tiles[p].space())).fold(0.0, f64::max);
                if s == 0.0 {
                    0.0
                } else {
                    s / parent_avg[i]
                }
            })
            .fold(0.0, f64::max);
        let id = nodes.len();
        if let Some(pid) = parent {
            nodes[pid].children.push(id);
        }
        nodes.push(SparseNode { interval: q0, depth, parent, children: Vec::new(), witness, averages: parent_avg, tiles: own, kappa });
        for q in children {
            let sub = inside.iter().copied().filter(|&p| q.contains(&fam.tiles[p].space())).collect();
            queue.push_back((q, depth + 1, Some(id), sub));
        }
    }
    Build::Done(nodes)
}

/// Bottom-up sparse family: roots are the maximal tile intervals; the children of `Q0` are the
/// maximal `Q ⊊ Q0` containing a tile interval (strictly, by default) on which one of the three
/// averages exceeds `C` times its value on `Q0`. The threshold doubles until every node keeps
/// at least half of its measure outside its children.
pub fn sst(fam: &RankOneFamily, f: &Signal, g: &Signal, h: &Signal, cfg: &StoppingConfig) -> Result<SparseFamily> {
    cfg.validate()?;
    for s in [f, g, h] {
        s.check_len(&fam.grid)?;
    }
    let tables = [
        AverageTable::new(f, cfg.s[0], &cfg.cutoff)?,
        AverageTable::new(g, cfg.s[1], &cfg.cutoff)?,
        AverageTable::new(h, cfg.s[2], &cfg.cutoff)?,
    ];
    let mut c = cfg.c;
    let mut restarts = 0;
    loop {
        match build_sparse(fam, &tables, cfg, c) {
            Build::Done(nodes) => {
                let eta = nodes
                    .iter()
                    .map(|n| n.witness.len() as f64 / n.interval.len_samples(&fam.grid) as f64)
                    .fold(1.0, f64::min);
                return Ok(SparseFamily { grid: fam.grid, nodes, eta, final_c: c, restarts, n_tiles: fam.len(), strict: cfg.strict });
            }
            Build::TooDense(q) => {
                if !cfg.adaptive {
                    return Err(Error::Postcondition(format!("children of {q:?} cover more than half of it at C = {c}")));
                }
                c *= 2.0;
                restarts += 1;
                if c > MAX_SST_CONSTANT {
                    return Err(Error::CapExceeded { what: format!("adaptive SST constant (last dense node {q:?})"), got: c as usize, cap: MAX_SST_CONSTANT as usize });
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseCertificate {
    pub eta: f64,
    pub carleson: f64,
    pub nodes: usize,
}

/// Checks the witness sets (inside their interval, pairwise disjoint, of measure at least
/// `η|Q|`), the tile partition and the Carleson packing constant `C̃ ≤ 1/η`.
pub fn verify_sparse(s: &SparseFamily) -> Result<SparseCertificate> {
    let g = s.grid;
    if !(s.eta > 0.0 && s.eta <= 1.0) {
        return Err(Error::Postcondition(format!("η = {} outside (0, 1]", s.eta)));
    }
    let mut owner = vec![usize::MAX; g.n_samples()];
    for (id, node) in s.nodes.iter().enumerate() {
        node.interval.check(&g)?;
        for &x in &node.witness {
            if !node.interval.contains_sample(&g, x) {
                return Err(Error::Postcondition(format!("witness sample {x} lies outside {:?}", node.interval)));
            }
            if owner[x] != usize::MAX {
                return Err(Error::Postcondition(format!("witness sets of nodes {} and {id} share sample {x}", owner[x])));
            }
            owner[x] = id;
        }
        if (node.witness.len() as f64) < s.eta * node.interval.len_samples(&g) as f64 {
            return Err(Error::Postcondition(format!("witness of {:?} has {} samples, below η|Q|", node.interval, node.witness.len())));
        }
    }
    let mut seen = vec![false; s.n_tiles];
    for node in &s.nodes {
        for &p in &node.tiles {
            if p >= s.n_tiles || seen[p] {
                return Err(Error::Postcondition(format!("tile {p} is missing from or repeated in the partition")));
            }
            seen[p] = true;
        }
    }
    if let Some(p) = seen.iter().position(|&v| !v) {
        return Err(Error::Postcondition(format!("tile {p} is not assigned to any node")));
    }
    let (_, carleson) = carleson_constant(&s.intervals());
    if carleson > 1.0 / s.eta + 1e-12 {
        return Err(Error::Postcondition(format!("Carleson constant {carleson} exceeds 1/η = {}", 1.0 / s.eta)));
    }
    Ok(SparseCertificate { eta: s.eta, carleson, nodes: s.nodes.len() })
}

// ----------------------------------------------------------------------------------------------
// Tree decompositions of multi-tile families

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Indices of the tiles kept in `ℙ'`.
    pub remaining: Vec<usize>,
    pub trees: Vec<Tree>,
    pub size_before: f64,
    pub size_after: f64,
    /// `Σ_T |I_T|`.
    pub top_sum: f64,
    /// `ℰ^{-2} ‖f χ̃_{I0}‖₂²` or `λ^{-r'} ‖g χ̃_{I0}‖_{r'}^{r'}`.
    pub bound: f64,
    pub ratio: f64,
}

fn localized_power(sig: &Signal, i0: Option<DyadicInterval>, c: &CutoffSpec, p: f64) -> Result<f64> {
    let g = sig.grid()?;
    let i0 = i0.unwrap_or(g.unit());
    i0.check(&g)?;
    let chi = chi_tilde_values(&i0, c, &g);
    Ok(sig.moduli().iter().zip(&chi).map(|(v, w)| (v * w).powf(p)).sum::<f64>() * g.spacing())
}

fn restricted_l2(w: &[f64], t: &Tree, active: &[bool]) -> f64 {
    let sum: f64 = t.members.iter().filter(|&&p| active[p]).map(|&p| w[p]).sum();
    (sum / t.top_length()).sqrt()
}

fn finish(active: Vec<bool>, trees: Vec<Tree>, size_before: f64, size_after: f64, bound: f64) -> Decomposition {
    let top_sum: f64 = trees.iter().map(|t| t.top_length()).sum();
    let ratio = if top_sum == 0.0 { 0.0 } else { top_sum / bound };
    let remaining = (0..active.len()).filter(|&p| active[p]).collect();
    Decomposition { remaining, trees, size_before, size_after, top_sum, bound, ratio }
}

/// Removes maximal `l`-overlapping trees whose `L²` quantity exceeds `ℰ/2`, largest first,
/// until `size_e ≤ ℰ/2` on what remains.
pub fn tree_decompose_energy(
    fam: &MultiFamily,
    f: &Signal,
    energy: f64,
    backend: PacketBackend,
    i0: Option<DyadicInterval>,
    c: &CutoffSpec,
) -> Result<Decomposition> {
    f.check_len(&fam.grid)?;
    f.check_finite()?;
    let w = multi_weights(fam, f, backend)?;
    let maximal = fam.enumerate_varc_trees(true);
    let mut active = vec![true; fam.len()];
    let size_of = |active: &[bool]| maximal.iter().map(|t| restricted_l2(&w, t, active)).fold(0.0, f64::max);
    let before = size_of(&active);
    if !(energy >= before * (1.0 - 1e-12)) || !energy.is_finite() {
        return invalid(format!("energy level {energy} is below size_e = {before}"));
    }
    let mut trees = Vec::new();
    loop {
        let mut best: Option<(f64, &Tree)> = None;
        for t in &maximal {
            let v = restricted_l2(&w, t, &active);
            if v > energy / 2.0 && best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, t));
            }
        }
        let Some((_, t)) = best else { break };
        let members: Vec<usize> = t.members.iter().copied().filter(|&p| active[p]).collect();
        members.iter().for_each(|&p| active[p] = false);
        trees.push(Tree { members, ..t.clone() });
    }
    let after = size_of(&active);
    if after > energy / 2.0 {
        return Err(Error::Postcondition(format!("energy decomposition left size {after} above {}", energy / 2.0)));
    }
    let bound = if energy == 0.0 { 0.0 } else { localized_power(f, i0, c, 2.0)? / (energy * energy) };
    Ok(finish(active, trees, before, after, bound))
}

/// Removes density trees under the largest remaining density witness above `λ/2` until
/// `size_m ≤ λ/2` on what remains.
pub fn tree_decompose_density(
    fam: &MultiFamily,
    g: &Signal,
    lambda: f64,
    lin: &LinearizationData,
    c: &CutoffSpec,
    i0: Option<DyadicInterval>,
) -> Result<Decomposition> {
    let mut search = DensitySearch::new(fam, g, lin, *c)?;
    let mut active = vec![true; fam.len()];
    let before = search.best(&active).map_or(0.0, |w| w.value);
    if !(lambda >= before * (1.0 - 1e-12)) || !lambda.is_finite() {
        return invalid(format!("density level {lambda} is below size_m = {before}"));
    }
    let mut trees = Vec::new();
    while let Some(w) = search.best(&active).filter(|w| w.value > lambda / 2.0) {
        let t = search.tree_of(&w, &active);
        t.members.iter().for_each(|&p| active[p] = false);
        trees.push(t);
    }
    let after = search.best(&active).map_or(0.0, |w| w.value);
    if after > lambda / 2.0 {
        return Err(Error::Postcondition(format!("density decomposition left size {after} above {}", lambda / 2.0)));
    }
    let rp = lin.r_prime();
    let bound = if lambda == 0.0 { 0.0 } else { localized_power(g, i0, c, rp)? / lambda.powf(rp) };
    Ok(finish(active, trees, before, after, bound))
}

/// One stage of an exhausting decomposition: trees removed at level `2^{-n} ℰ_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub n: u32,
    pub level: f64,
    pub trees: Vec<Tree>,
    pub ratio: f64,
}

/// Iterates the energy decomposition from `ℰ_0 = size_e(ℙ)` with halving levels until every
/// tile is placed in a tree or the size vanishes; tree members index the input family.
pub fn exhaust_energy(fam: &MultiFamily, f: &Signal, backend: PacketBackend, c: &CutoffSpec) -> Result<(Vec<Stage>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..fam.len()).collect();
    let mut level = crate::sizes::size_e(fam, f, backend)?;
    let mut stages = Vec::new();
    let mut n = 0;
    while !idx.is_empty() && level > 0.0 && level.is_finite() && n <= 2 * fam.grid.j() + 60 {
        let sub = fam.subset(&idx);
        let d = tree_decompose_energy(&sub, f, level, backend, None, c)?;
        let trees = d
            .trees
            .into_iter()
            .map(|t| Tree { members: t.members.iter().map(|&p| idx[p]).collect(), ..t })
            .collect();
        stages.push(Stage { n, level, trees, ratio: d.ratio });
        idx = d.remaining.iter().map(|&p| idx[p]).collect();
        level /= 2.0;
        n += 1;
    }
    Ok((stages, idx))
}
