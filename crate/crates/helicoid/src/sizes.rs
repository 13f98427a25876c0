//! Size and energy functionals on tile families.
//!
//! Coefficients enter only through their squared moduli `w[P] = |⟨f, φ_{P_j}⟩|²`, so every
//! combinatorial routine here works on a weight vector indexed like the family.

use crate::error::{invalid, Error, Result};
use crate::grid::{chi_tilde_values, weighted_average_unchecked, CutoffSpec, DyadicInterval, GridSpec, Signal};
use crate::operators::LinearizationData;
use crate::packets::{PacketBackend, PacketCache};
use crate::tiles::{bht_member, candidate_tops, lacunary_trees, MultiFamily, RankOneFamily, Tile, TopPolicy, Tree, TreeKind};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Largest family accepted by the exhaustive energy oracle.
pub const EXHAUSTIVE_ENERGY_CAP: usize = 10;

/// Smallest dyadic level considered by the energy search.
const LEVEL_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Full,
    Fast,
    Greedy,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub value: f64,
    /// Tree attaining the supremum; for energy, the first tree of the forest.
    pub witness_tree: Option<Tree>,
    /// Strongly disjoint trees realizing an energy value; empty for sizes.
    pub forest: Vec<Tree>,
    /// Dyadic level `n` of an energy witness.
    pub level: Option<i32>,
    pub method: Method,
}

impl SizeReport {
    fn empty(method: Method) -> Self {
        Self { value: 0.0, witness_tree: None, forest: Vec::new(), level: None, method }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("size report serializes")
    }
}

/// Exponents `θ_j ∈ [0, 1)` summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeEnergyExponents {
    pub theta: [f64; 3],
}

impl SizeEnergyExponents {
    pub fn new(theta: [f64; 3]) -> Result<Self> {
        if theta.iter().any(|t| !(0.0..1.0).contains(t)) {
            return invalid(format!("size-energy exponents must lie in [0, 1), got {theta:?}"));
        }
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return invalid(format!("size-energy exponents must sum to 1, got {sum}"));
        }
        Ok(Self { theta })
    }

    pub fn uniform() -> Self {
        Self { theta: [1.0 / 3.0; 3] }
    }
}

fn check_slot(j: usize) -> Result<()> {
    if !(1..=3).contains(&j) {
        return invalid(format!("slot index must be 1, 2 or 3, got {j}"));
    }
    Ok(())
}

fn check_weights(fam: &RankOneFamily, w: &[f64]) -> Result<()> {
    if w.len() != fam.len() {
        return Err(Error::LengthMismatch { expected: fam.len(), got: w.len() });
    }
    Ok(())
}

/// Packet cache holding the `j`-components of a family.
pub fn slot_cache(fam: &RankOneFamily, j: usize, backend: PacketBackend) -> Result<PacketCache> {
    check_slot(j)?;
    PacketCache::build(fam.grid, backend, fam.tiles.iter().map(|t| t.component(j)))
}

/// `|⟨f, φ_{P_j}⟩|²` for every tri-tile of the family.
pub fn slot_weights(fam: &RankOneFamily, f: &Signal, j: usize, cache: &PacketCache) -> Result<Vec<f64>> {
    check_slot(j)?;
    f.check_finite()?;
    let comps: Vec<Tile> = fam.tiles.iter().map(|t| t.component(j)).collect();
    Ok(cache.coefficients(f, &comps)?.into_iter().map(|c| c.norm_sqr()).collect())
}

/// Sum of weights over an index list, always in ascending index order.
fn sum_sorted(w: &[f64], idx: &[usize]) -> f64 {
    debug_assert!(idx.windows(2).all(|p| p[0] < p[1]));
    idx.iter().map(|&i| w[i]).sum()
}

/// Sum over the set bits in ascending order, matching `sum_sorted`.
fn sum_mask(w: &[f64], mut m: u128) -> f64 {
    let mut acc = 0.0;
    while m != 0 {
        acc += w[m.trailing_zeros() as usize];
        m &= m - 1;
    }
    acc
}

fn sum_indices(w: &[f64], idx: &[usize]) -> f64 {
    let mut v = idx.to_vec();
    v.sort_unstable();
    sum_sorted(w, &v)
}

/// `((1/|I_T|) Σ_{P∈T} w[P])^{1/2}`.
pub fn tree_l2(w: &[f64], tree: &Tree) -> f64 {
    (sum_indices(w, &tree.members) / tree.top_length()).sqrt()
}

fn tie_key(t: &Tree) -> (u32, u64, u64, TreeKind) {
    (t.top.k, t.top.n, t.top_freq, t.kind)
}

/// Supremum of the tree quantity over trees; ties go to the smallest (scale, position, ξ).
fn best_tree(w: &[f64], trees: Vec<Tree>) -> Option<(f64, Tree)> {
    let mut best: Option<(f64, Tree)> = None;
    for t in trees {
        let v = tree_l2(w, &t);
        let better = match &best {
            None => true,
            Some((bv, bt)) => v > *bv || (v == *bv && tie_key(&t) < tie_key(bt)),
        };
        if better {
            best = Some((v, t));
        }
    }
    best
}

/// `size_j` from precomputed weights.
pub fn size_from_weights(fam: &RankOneFamily, w: &[f64], j: usize, policy: TopPolicy) -> Result<SizeReport> {
    check_slot(j)?;
    check_weights(fam, w)?;
    let method = match policy {
        TopPolicy::Full => Method::Full,
        TopPolicy::Fast => Method::Fast,
    };
    if fam.is_empty() {
        return Ok(SizeReport::empty(method));
    }
    let trees = lacunary_trees(fam, j, policy)?;
    Ok(match best_tree(w, trees) {
        Some((value, t)) => SizeReport { value, witness_tree: Some(t), forest: Vec::new(), level: None, method },
        None => SizeReport::empty(method),
    })
}

pub fn size_j_with_policy(fam: &RankOneFamily, f: &Signal, j: usize, backend: PacketBackend, policy: TopPolicy) -> Result<SizeReport> {
    let cache = slot_cache(fam, j, backend)?;
    let w = slot_weights(fam, f, j, &cache)?;
    size_from_weights(fam, &w, j, policy)
}

/// Supremum over `j`-lacunary trees of the `L²` tree quantity, with fast top enumeration.
pub fn size_j(fam: &RankOneFamily, f: &Signal, j: usize, backend: PacketBackend) -> Result<SizeReport> {
    size_j_with_policy(fam, f, j, backend, TopPolicy::Fast)
}

// ----------------------------------------------------------------------------------------------
// Energy

fn pow4(n: i32) -> f64 {
    2f64.powi(2 * n)
}

/// Strict lower bound `S2(T)² > 4^{n-1}` in multiplied-out form.
fn above_level(sum: f64, top_len: f64, n: i32) -> bool {
    sum > pow4(n - 1) * top_len
}

fn within_level(sum: f64, top_len: f64, n: i32) -> bool {
    sum <= pow4(n) * top_len
}

/// `ω_{p} ⊊ ω_{q}`.
fn freq_strictly_inside(p: &Tile, q: &Tile) -> bool {
    p.k < q.k && p.m >> (q.k - p.k) == q.m
}

/// Pairwise conditions between tiles of two distinct trees of a `j`-strongly disjoint collection.
fn cross_compatible(fam: &RankOneFamily, j: usize, p: usize, top_p: &DyadicInterval, q: usize, top_q: &DyadicInterval) -> bool {
    p != q && components_compatible(&fam.tiles[p].component(j), top_p, &fam.tiles[q].component(j), top_q)
}

fn components_compatible(a: &Tile, top_p: &DyadicInterval, b: &Tile, top_q: &DyadicInterval) -> bool {
    if a.overlaps(b) {
        return false;
    }
    if freq_strictly_inside(a, b) && b.space().intersects(top_p) {
        return false;
    }
    if freq_strictly_inside(b, a) && a.space().intersects(top_q) {
        return false;
    }
    true
}

fn internally_disjoint(fam: &RankOneFamily, j: usize, members: &[usize]) -> bool {
    members.iter().enumerate().all(|(x, &p)| {
        members[x + 1..].iter().all(|&q| !fam.tiles[p].component(j).overlaps(&fam.tiles[q].component(j)))
    })
}

/// Is `trees` a `j`-strongly disjoint collection? The trees are disjoint, the `j`-components of
/// all their tiles are pairwise disjoint tiles, and whenever `ω_{P_j} ⊊ ω_{P'_j}` for `P ∈ T`,
/// `P' ∈ T' ≠ T`, the interval `I_{P'}` misses `I_T`.
pub fn strongly_disjoint(fam: &RankOneFamily, j: usize, trees: &[Tree]) -> bool {
    for (x, t) in trees.iter().enumerate() {
        if !internally_disjoint(fam, j, &t.members) {
            return false;
        }
        for u in &trees[x + 1..] {
            for &p in &t.members {
                for &q in &u.members {
                    if !cross_compatible(fam, j, p, &t.top, q, &u.top) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Maximal `j`-lacunary trees of the full family. Every tree of a subfamily with a given top is
/// the intersection of one of these with the subfamily.
struct TopTable {
    trees: Vec<Tree>,
    by_tile: Vec<Vec<usize>>,
    /// `j`-components of the family tiles.
    comps: Vec<Tile>,
    /// Whether the family is small enough for minimal-subset candidates and lookahead.
    small: bool,
    /// Member bit masks and top lengths of the trees, for families of at most 128 tiles.
    masks: Option<(Vec<u128>, Vec<f64>)>,
}

impl TopTable {
    fn new(fam: &RankOneFamily, j: usize) -> Result<Self> {
        let trees = lacunary_trees(fam, j, TopPolicy::Fast)?;
        let mut by_tile = vec![Vec::new(); fam.len()];
        for (t, tree) in trees.iter().enumerate() {
            for &p in &tree.members {
                by_tile[p].push(t);
            }
        }
        let comps = fam.tiles.iter().map(|t| t.component(j)).collect();
        let masks = (fam.len() <= 128).then(|| {
            let bits = trees.iter().map(|t| t.members.iter().fold(0u128, |m, &p| m | 1 << p)).collect();
            (bits, trees.iter().map(Tree::top_length).collect())
        });
        Ok(Self { trees, by_tile, comps, small: fam.len() <= SMALL_FAMILY, masks })
    }

    /// Every subtree of `set` (sorted) stays at most `4^n |I_T|` in squared weight.
    fn subtrees_within(&self, w: &[f64], set: &[usize], n: i32) -> bool {
        if let Some((bits, lens)) = &self.masks {
            let m = set.iter().fold(0u128, |m, &p| m | 1 << p);
            return bits.iter().zip(lens).all(|(&b, &len)| b & m == 0 || within_level(sum_mask(w, b & m), len, n));
        }
        let mut touched: Vec<usize> = set.iter().flat_map(|&p| self.by_tile[p].iter().copied()).collect();
        touched.sort_unstable();
        touched.dedup();
        touched.into_iter().all(|t| {
            let tree = &self.trees[t];
            let sub: Vec<usize> = tree.members.iter().copied().filter(|p| set.binary_search(p).is_ok()).collect();
            within_level(sum_sorted(w, &sub), tree.top_length(), n)
        })
    }
}

/// Re-evaluates an energy witness, checking every constraint at level `n`.
pub fn evaluate_forest(fam: &RankOneFamily, w: &[f64], j: usize, n: i32, forest: &[Tree]) -> Result<f64> {
    check_slot(j)?;
    check_weights(fam, w)?;
    let table = TopTable::new(fam, j)?;
    for t in forest {
        t.validate_bht(fam)?;
        if !t.kind.is_lacunary_in(j) {
            return Err(Error::Postcondition(format!("tree {t:?} is not {j}-lacunary")));
        }
        let mut m = t.members.clone();
        m.sort_unstable();
        if !above_level(sum_sorted(w, &m), t.top_length(), n) {
            return Err(Error::Postcondition(format!("tree {t:?} falls below level {n}")));
        }
        if !table.subtrees_within(w, &m, n) {
            return Err(Error::Postcondition(format!("a subtree of {t:?} exceeds level {n}")));
        }
    }
    if !strongly_disjoint(fam, j, forest) {
        return Err(Error::Postcondition("forest is not strongly disjoint".into()));
    }
    let total: f64 = forest.iter().map(|t| t.top_length()).sum();
    Ok(2f64.powi(n) * total.sqrt())
}

/// Level range `n_hi ≥ … ≥ n_lo` that can carry a non-empty collection.
fn level_range(size: f64) -> Option<(i32, i32)> {
    if !(size > 0.0) {
        return None;
    }
    let hi = size.log2().floor() as i32 + 1;
    let lo = LEVEL_FLOOR.log2().floor() as i32;
    Some((hi, lo.min(hi)))
}

type LevelSearch<'a> = dyn Fn(i32) -> Result<(f64, Vec<Tree>)> + 'a;

/// Scans levels downward and keeps the largest `2^n (Σ|I_T|)^{1/2}`; stops once no lower level can win.
fn scan_levels(fam: &RankOneFamily, size: f64, method: Method, search: &LevelSearch<'_>) -> Result<SizeReport> {
    let Some((hi, lo)) = level_range(size) else {
        return Ok(SizeReport::empty(method));
    };
    let max_total = fam.len() as f64;
    let mut best = SizeReport::empty(method);
    for n in (lo..=hi).rev() {
        if best.value > 0.0 && 2f64.powi(n) * max_total.sqrt() <= best.value {
            break;
        }
        let (total, forest) = search(n)?;
        if forest.is_empty() {
            continue;
        }
        let value = 2f64.powi(n) * total.sqrt();
        if value > best.value {
            best = SizeReport { value, witness_tree: forest.first().cloned(), forest, level: Some(n), method };
        }
    }
    Ok(best)
}

/// Tiles still free at one level, and the trees already chosen there.
#[derive(Clone)]
struct LevelState {
    remaining: Vec<bool>,
    chosen: Vec<Tree>,
}

impl LevelState {
    fn new(fam: &RankOneFamily, w: &[f64], n: i32) -> Self {
        let remaining = (0..fam.len()).map(|p| within_level(w[p], fam.tiles[p].space().length(), n)).collect();
        Self { remaining, chosen: Vec::new() }
    }

    fn commit(&mut self, t: Tree) {
        for &p in &t.members {
            self.remaining[p] = false;
        }
        self.chosen.push(t);
    }

    fn total(&self) -> f64 {
        self.chosen.iter().map(|t| t.top_length()).sum()
    }
}

/// Preference among candidates: larger top, then fewer tiles, then smallest (scale, position, ξ).
fn rank_key(t: &Tree) -> (u32, usize, (u32, u64, u64, TreeKind)) {
    (t.top.k, t.members.len(), tie_key(t))
}

/// One candidate per maximal tree: its free tiles compatible with the chosen trees, thinned to
/// pairwise disjoint `j`-components, cut to the fewest heaviest tiles clearing the lower bound.
fn level_candidates(fam: &RankOneFamily, w: &[f64], j: usize, n: i32, table: &TopTable, st: &LevelState) -> Vec<Tree> {
    let comps = &table.comps;
    let mut out: BTreeMap<(DyadicInterval, Vec<usize>), Tree> = BTreeMap::new();
    for tree in &table.trees {
        let top = tree.top;
        let weight: f64 = tree.members.iter().filter(|&&p| st.remaining[p]).map(|&p| w[p]).sum();
        if !above_level(weight * (1.0 + 1e-9), top.length(), n) {
            continue;
        }
        let mut pool: Vec<usize> = tree
            .members
            .iter()
            .copied()
            .filter(|&p| st.remaining[p])
            .filter(|&p| {
                st.chosen.iter().all(|c| c.members.iter().all(|&q| components_compatible(&comps[p], &top, &comps[q], &c.top)))
            })
            .collect();
        if pool.is_empty() {
            continue;
        }
        let subsets = if table.small && pool.len() <= MINIMAL_SUBSET_POOL {
            minimal_subsets(fam, w, j, &pool, top.length(), n)
        } else {
            pool.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
            let mut kept: Vec<usize> = Vec::new();
            for p in pool {
                if kept.iter().all(|&q| !comps[p].overlaps(&comps[q])) {
                    kept.push(p);
                }
            }
            let lightest_first: Vec<usize> = kept.iter().rev().copied().collect();
            [kept, lightest_first].iter().filter_map(|o| shortest_prefix_above(w, o, top.length(), n)).collect()
        };
        for picked in subsets {
            if !table.subtrees_within(w, &picked, n) {
                continue;
            }
            let cand = Tree { kind: tree.kind, top, top_freq: tree.top_freq, members: picked };
            match out.entry((top, cand.members.clone())) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(cand);
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    if rank_key(&cand) < rank_key(o.get()) {
                        o.insert(cand);
                    }
                }
            }
        }
    }
    out.into_values().collect()
}

/// Pools up to this size contribute every inclusion-minimal member set clearing the lower bound.
const MINIMAL_SUBSET_POOL: usize = 8;

/// Families up to this size get minimal-subset candidates and lookahead; larger ones use the
/// plain ranking.
const SMALL_FAMILY: usize = 16;

/// Inclusion-minimal subsets of `pool` with pairwise disjoint `j`-components whose weight clears
/// the lower bound. Shrinking a tree of a feasible collection to such a subset keeps it feasible.
fn minimal_subsets(fam: &RankOneFamily, w: &[f64], j: usize, pool: &[usize], top_len: f64, n: i32) -> Vec<Vec<usize>> {
    let mut sorted = pool.to_vec();
    sorted.sort_unstable();
    let comps: Vec<Tile> = sorted.iter().map(|&p| fam.tiles[p].component(j)).collect();
    let conflict: Vec<u32> = (0..sorted.len())
        .map(|a| (0..sorted.len()).filter(|&b| b != a && comps[a].overlaps(&comps[b])).fold(0, |m, b| m | 1 << b))
        .collect();
    // Sums run over ascending indices, matching `sum_sorted`.
    let sum_of = |mask: u32| -> f64 { (0..sorted.len()).filter(|b| mask >> b & 1 == 1).map(|b| w[sorted[b]]).sum() };
    let mut out = Vec::new();
    for mask in 1u32..1 << sorted.len() {
        let disjoint = (0..sorted.len()).all(|b| mask >> b & 1 == 0 || conflict[b] & mask == 0);
        if !disjoint || !above_level(sum_of(mask), top_len, n) {
            continue;
        }
        let minimal = (0..sorted.len()).filter(|b| mask >> b & 1 == 1).all(|b| !above_level(sum_of(mask & !(1 << b)), top_len, n));
        if minimal {
            out.push((0..sorted.len()).filter(|b| mask >> b & 1 == 1).map(|b| sorted[b]).collect());
        }
    }
    out
}

/// Shortest prefix of `order` whose weight clears the lower bound, returned sorted.
fn shortest_prefix_above(w: &[f64], order: &[usize], top_len: f64, n: i32) -> Option<Vec<usize>> {
    let mut picked = Vec::new();
    for &p in order {
        picked.push(p);
        picked.sort_unstable();
        if above_level(sum_sorted(w, &picked), top_len, n) {
            return Some(picked);
        }
    }
    None
}

fn state_key(st: &LevelState) -> Vec<Tree> {
    let mut key = st.chosen.clone();
    key.sort_unstable();
    key
}

/// Total reached by committing the best-ranked candidate until none is left, memoized at every
/// state passed through.
fn completion_total(fam: &RankOneFamily, w: &[f64], j: usize, n: i32, table: &TopTable, mut st: LevelState, memo: &Memo) -> f64 {
    let mut visited = Vec::new();
    let total = loop {
        let key = state_key(&st);
        if let Some(&hit) = memo.completion.borrow().get(&key) {
            break hit;
        }
        visited.push(key);
        let cands = level_candidates(fam, w, j, n, table, &st);
        match cands.into_iter().min_by_key(rank_key) {
            Some(t) => st.commit(t),
            None => break st.total(),
        }
    };
    let mut done = memo.completion.borrow_mut();
    for key in visited {
        done.insert(key, total);
    }
    total
}

/// Lookahead and completion scores of one level, keyed by the chosen trees in canonical order.
/// Scores depend only on the set of chosen trees.
#[derive(Default)]
struct Memo {
    completion: RefCell<HashMap<Vec<Tree>, f64>>,
    lookahead: RefCell<HashMap<(usize, Vec<Tree>), f64>>,
}

/// Candidate counts up to which the greedy looks two and one steps ahead.
const LOOKAHEAD_TWO: usize = 48;
const LOOKAHEAD_ONE: usize = 2048;

/// Best total reachable from `st` when the next `depth` commitments are searched and the rest
/// follow the plain ranking.
#[allow(clippy::too_many_arguments)]
fn lookahead_score(fam: &RankOneFamily, w: &[f64], j: usize, n: i32, table: &TopTable, st: &LevelState, depth: usize, memo: &Memo) -> f64 {
    if depth == 0 {
        return completion_total(fam, w, j, n, table, st.clone(), memo);
    }
    let key = (depth, state_key(st));
    if let Some(&hit) = memo.lookahead.borrow().get(&key) {
        return hit;
    }
    let cands = level_candidates(fam, w, j, n, table, st);
    let score = if cands.is_empty() {
        st.total()
    } else {
        cands
            .into_iter()
            .map(|c| {
                let mut next = st.clone();
                next.commit(c);
                lookahead_score(fam, w, j, n, table, &next, depth - 1, memo)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    memo.lookahead.borrow_mut().insert(key, score);
    score
}

/// Greedy strongly disjoint selection at level `n`. Each step commits one candidate tree and
/// never revisits it. A candidate is scored by the total reached after it when the following
/// commitments are searched to a depth that shrinks as the candidate count grows; ties fall back
/// to `rank_key`.
fn greedy_level(fam: &RankOneFamily, w: &[f64], j: usize, n: i32, table: &TopTable) -> (f64, Vec<Tree>) {
    let mut st = LevelState::new(fam, w, n);
    let memo = Memo::default();
    loop {
        let cands = level_candidates(fam, w, j, n, table, &st);
        let depth = match cands.len() {
            0 => break,
            _ if !table.small => 0,
            c if c <= LOOKAHEAD_TWO => 2,
            c if c <= LOOKAHEAD_ONE => 1,
            _ => 0,
        };
        if depth == 0 {
            let t = cands.into_iter().min_by_key(rank_key).expect("non-empty");
            st.commit(t);
            continue;
        }
        let mut best: Option<(f64, Tree)> = None;
        for c in cands {
            let mut next = st.clone();
            next.commit(c.clone());
            let score = lookahead_score(fam, w, j, n, table, &next, depth - 1, &memo);
            let better = match &best {
                None => true,
                Some((bs, bt)) => score > *bs || (score == *bs && rank_key(&c) < rank_key(bt)),
            };
            if better {
                best = Some((score, c));
            }
        }
        match best {
            Some((_, t)) => st.commit(t),
            None => break,
        }
    }
    (st.total(), st.chosen)
}

pub fn energy_from_weights(fam: &RankOneFamily, w: &[f64], j: usize, method: Method) -> Result<SizeReport> {
    check_slot(j)?;
    check_weights(fam, w)?;
    if fam.is_empty() {
        return Ok(SizeReport::empty(method));
    }
    let size = size_from_weights(fam, w, j, TopPolicy::Fast)?.value;
    match method {
        Method::Greedy => {
            let table = TopTable::new(fam, j)?;
            scan_levels(fam, size, method, &|n| Ok(greedy_level(fam, w, j, n, &table)))
        }
        Method::Exhaustive => {
            let oracle = ExhaustiveEnergy::new(fam, j)?;
            scan_levels(fam, size, method, &|n| Ok(oracle.level(w, n)))
        }
        other => invalid(format!("energy supports GREEDY or EXHAUSTIVE, got {other:?}")),
    }
}

/// `sup_n 2^n (Σ_{T∈𝐓} |I_T|)^{1/2}` over `j`-strongly disjoint collections of lacunary trees
/// with `2^{n-1} < S2(T)` and every subtree at most `2^n`, using the greedy selection.
pub fn energy_j(fam: &RankOneFamily, f: &Signal, j: usize, backend: PacketBackend) -> Result<SizeReport> {
    energy_j_with_method(fam, f, j, backend, Method::Greedy)
}

pub fn energy_j_with_method(fam: &RankOneFamily, f: &Signal, j: usize, backend: PacketBackend, method: Method) -> Result<SizeReport> {
    let cache = slot_cache(fam, j, backend)?;
    let w = slot_weights(fam, f, j, &cache)?;
    energy_from_weights(fam, &w, j, method)
}

/// Brute-force energy over every tree (subset, top) of a small family.
struct ExhaustiveEnergy<'a> {
    fam: &'a RankOneFamily,
    j: usize,
    /// Distinct `(member mask, top)` pairs that are internally disjoint lacunary trees, with a
    /// representative `(kind, ξ)`.
    trees: Vec<(u64, DyadicInterval, TreeKind, u64)>,
    /// Member masks of every maximal tree: subtrees are their intersections with a set.
    maximal: Vec<(u64, DyadicInterval)>,
}

fn mask_members(mask: u64) -> Vec<usize> {
    (0..64).filter(|b| mask >> b & 1 == 1).collect()
}

impl<'a> ExhaustiveEnergy<'a> {
    fn new(fam: &'a RankOneFamily, j: usize) -> Result<Self> {
        if fam.len() > EXHAUSTIVE_ENERGY_CAP {
            return Err(Error::CapExceeded { what: "exhaustive energy".into(), got: fam.len(), cap: EXHAUSTIVE_ENERGY_CAP });
        }
        let g = fam.grid;
        let mut maximal_set: BTreeMap<(u64, DyadicInterval), (TreeKind, u64)> = BTreeMap::new();
        for i in (1..=3).filter(|&i| i != j) {
            for (top, xi) in candidate_tops(fam, i, TopPolicy::Full) {
                let mut mask = 0u64;
                for (b, p) in fam.tiles.iter().enumerate() {
                    if bht_member(&g, p, i, &top, xi) {
                        mask |= 1 << b;
                    }
                }
                if mask != 0 {
                    maximal_set.entry((mask, top)).or_insert((TreeKind::Bht { i: i as u8 }, xi));
                }
            }
        }
        let mut subsets: BTreeMap<(u64, DyadicInterval), (TreeKind, u64)> = BTreeMap::new();
        for (&(mask, top), &rep) in &maximal_set {
            let mut sub = mask;
            while sub != 0 {
                if internally_disjoint(fam, j, &mask_members(sub)) {
                    subsets.entry((sub, top)).or_insert(rep);
                }
                sub = (sub - 1) & mask;
            }
        }
        let trees = subsets.into_iter().map(|((m, t), (k, xi))| (m, t, k, xi)).collect();
        let maximal = maximal_set.into_keys().collect();
        Ok(Self { fam, j, trees, maximal })
    }

    fn subtrees_within(&self, w: &[f64], mask: u64, n: i32) -> bool {
        self.maximal.iter().all(|&(m, top)| {
            let sub = m & mask;
            sub == 0 || within_level(sum_sorted(w, &mask_members(sub)), top.length(), n)
        })
    }

    fn compatible(&self, a: &(u64, DyadicInterval), b: &(u64, DyadicInterval)) -> bool {
        if a.0 & b.0 != 0 {
            return false;
        }
        mask_members(a.0)
            .iter()
            .all(|&p| mask_members(b.0).iter().all(|&q| cross_compatible(self.fam, self.j, p, &a.1, q, &b.1)))
    }

    fn level(&self, w: &[f64], n: i32) -> (f64, Vec<Tree>) {
        let valid: Vec<&(u64, DyadicInterval, TreeKind, u64)> = self
            .trees
            .iter()
            .filter(|(m, top, _, _)| above_level(sum_sorted(w, &mask_members(*m)), top.length(), n) && self.subtrees_within(w, *m, n))
            .collect();
        let mut by_min: Vec<Vec<usize>> = vec![Vec::new(); self.fam.len()];
        for (c, t) in valid.iter().enumerate() {
            by_min[t.0.trailing_zeros() as usize].push(c);
        }
        let mut best = (0.0, Vec::new());
        let mut chosen = Vec::new();
        self.search(&valid, &by_min, 0, 0, 0.0, &mut chosen, &mut best);
        let forest = best
            .1
            .iter()
            .map(|&c| {
                let (m, top, kind, xi) = *valid[c];
                Tree { kind, top, top_freq: xi, members: mask_members(m) }
            })
            .collect();
        (best.0, forest)
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        valid: &[&(u64, DyadicInterval, TreeKind, u64)],
        by_min: &[Vec<usize>],
        tile: usize,
        used: u64,
        total: f64,
        chosen: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if total > best.0 {
            *best = (total, chosen.clone());
        }
        if tile == self.fam.len() {
            return;
        }
        if used >> tile & 1 == 0 {
            for &c in &by_min[tile] {
                let cand = (valid[c].0, valid[c].1);
                if cand.0 & used != 0 {
                    continue;
                }
                if chosen.iter().all(|&o| self.compatible(&cand, &(valid[o].0, valid[o].1))) {
                    chosen.push(c);
                    self.search(valid, by_min, tile + 1, used | cand.0, total + cand.1.length(), chosen, best);
                    chosen.pop();
                }
            }
        }
        self.search(valid, by_min, tile + 1, used, total, chosen, best);
    }
}

// ----------------------------------------------------------------------------------------------
// Weighted-average sizes

/// Distinct spatial intervals of a family, coarse first.
pub fn spatial_intervals(fam: &RankOneFamily) -> Vec<DyadicInterval> {
    let set: BTreeSet<DyadicInterval> = fam.tiles.iter().map(|t| t.space()).collect();
    set.into_iter().collect()
}

/// Supremum of `weighted_average(f, I, s)` over the given intervals.
pub fn ssize_over(intervals: &[DyadicInterval], f: &Signal, s: f64, c: &CutoffSpec) -> Result<f64> {
    if !(s >= 1.0) {
        return invalid(format!("average exponent must be >= 1, got {s}"));
    }
    f.check_finite()?;
    let g = f.grid()?;
    let moduli = f.moduli();
    let mut best = 0.0f64;
    for i in intervals {
        i.check(&g)?;
        best = best.max(weighted_average_unchecked(&g, &moduli, i, s, c));
    }
    Ok(best)
}

/// `sup_{P} ((1/|I_P|) ∫ |f|^s χ̃_{I_P})^{1/s}`; the localized variant also includes `I0`.
pub fn ssize(fam: &RankOneFamily, f: &Signal, s: f64, c: &CutoffSpec, localized_to: Option<DyadicInterval>) -> Result<f64> {
    f.check_len(&fam.grid)?;
    let mut intervals = spatial_intervals(fam);
    if let Some(i0) = localized_to {
        i0.check(&fam.grid)?;
        if let Some(t) = fam.tiles.iter().find(|t| !i0.contains(&t.space())) {
            return invalid(format!("tile {t:?} lies outside the localization interval {i0:?}"));
        }
        intervals.push(i0);
    }
    ssize_over(&intervals, f, s, c)
}

/// `L^q` widetilde size: `ssize(|f|^q, 1)^{1/q}`.
pub fn ssize_q(fam: &RankOneFamily, f: &Signal, q: f64, c: &CutoffSpec, localized_to: Option<DyadicInterval>) -> Result<f64> {
    if !(q >= 1.0) || q.is_infinite() {
        return invalid(format!("L^q size needs finite q >= 1, got {q}"));
    }
    let powered = f.map(|z| num_complex::Complex64::new(z.norm().powf(q), 0.0));
    Ok(ssize(fam, &powered, 1.0, c, localized_to)?.powf(1.0 / q))
}

// ----------------------------------------------------------------------------------------------
// Variational Carleson sizes

/// Supremum over `l`-overlapping trees of the `L²` tree quantity of `⟨f, φ_P⟩`.
pub fn size_e(fam: &MultiFamily, f: &Signal, backend: PacketBackend) -> Result<f64> {
    Ok(size_e_report(fam, f, backend)?.value)
}

pub fn size_e_report(fam: &MultiFamily, f: &Signal, backend: PacketBackend) -> Result<SizeReport> {
    f.check_len(&fam.grid)?;
    f.check_finite()?;
    let w = multi_weights(fam, f, backend)?;
    let trees = fam.enumerate_varc_trees(true);
    Ok(match best_tree(&w, trees) {
        Some((value, t)) => SizeReport { value, witness_tree: Some(t), forest: Vec::new(), level: None, method: Method::Full },
        None => SizeReport::empty(Method::Full),
    })
}

/// `|⟨f, φ_P⟩|²` for the packet tiles of a multi-tile family.
pub fn multi_weights(fam: &MultiFamily, f: &Signal, backend: PacketBackend) -> Result<Vec<f64>> {
    let tiles: Vec<Tile> = fam.tiles.iter().map(|t| t.packet_tile()).collect();
    let cache = PacketCache::build(fam.grid, backend, tiles.iter().copied())?;
    Ok(cache.coefficients(f, &tiles)?.into_iter().map(|c| c.norm_sqr()).collect())
}

/// Spatial intervals `I'` with `I_P ⊆ I' ⊆ 9 I_P` (periodic dilation) for some tile.
pub fn enlarged_intervals(fam: &MultiFamily) -> Vec<DyadicInterval> {
    let g = fam.grid;
    let set: BTreeSet<DyadicInterval> = fam
        .tiles
        .iter()
        .flat_map(|t| {
            let i = t.space();
            i.ancestors().filter(move |a| i.dilate_contains(&g, 9.0, a)).collect::<Vec<_>>()
        })
        .collect();
    set.into_iter().collect()
}

/// Grid frequencies `first..=last` in the window `[ξ - half, ξ + half)`.
fn window_frequencies(xi: u64, half: f64) -> (i64, i64) {
    let lo = xi as f64 - half;
    (lo.ceil() as i64, (lo + 2.0 * half).ceil() as i64 - 1)
}

/// Frequency windows are compared with blocks through the grid frequencies they hold.
fn integer_window(first: i64, last: i64) -> crate::tiles::FreqInterval {
    crate::tiles::FreqInterval { start: first as f64, len: (last - first + 1) as f64 }
}

/// Per-frequency mass `Σ_x |g|^{r'} χ̃_{I'} Σ_κ |a_κ|^{r'} [ξ_{κ-1}(x) = ν]`.
fn density_histogram(g: &GridSpec, gp: &[f64], lin: &LinearizationData, i: &DyadicInterval, c: &CutoffSpec, rp: f64) -> Vec<f64> {
    let chi = chi_tilde_values(i, c, g);
    let mut hist = vec![0.0; g.n_samples()];
    for x in 0..g.n_samples() {
        let base = gp[x] * chi[x];
        if base == 0.0 {
            continue;
        }
        for kappa in 0..lin.k {
            hist[lin.xi[x][kappa] as usize] += base * lin.a[x][kappa].norm().powf(rp);
        }
    }
    hist
}

/// Supremum over tiles `P` and admissible `P'` (with `I_P ⊆ I_{P'} ⊆ 9 I_P`, frequency window
/// `ω_{P'} ⊆ ω_P` centred at a grid frequency) of the `r'`-average of `g` weighted by the
/// linearizing coefficients whose preceding frequency falls in `ω_{P'}`.
pub fn size_m(fam: &MultiFamily, g: &Signal, lin: &LinearizationData, c: &CutoffSpec) -> Result<f64> {
    let mut search = DensitySearch::new(fam, g, lin, *c)?;
    let active = vec![true; fam.len()];
    Ok(search.best(&active).map_or(0.0, |w| w.value))
}

/// Maximizer of the density supremum: the tile, the enlarged interval and the window centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityWitness {
    pub value: f64,
    pub tile: usize,
    pub interval: DyadicInterval,
    pub xi: u64,
}

/// Density evaluation with per-interval frequency histograms cached across calls.
pub struct DensitySearch<'a> {
    fam: &'a MultiFamily,
    gp: Vec<f64>,
    lin: &'a LinearizationData,
    c: CutoffSpec,
    rp: f64,
    hists: BTreeMap<DyadicInterval, Vec<f64>>,
}

impl<'a> DensitySearch<'a> {
    pub fn new(fam: &'a MultiFamily, g: &Signal, lin: &'a LinearizationData, c: CutoffSpec) -> Result<Self> {
        g.check_len(&fam.grid)?;
        g.check_finite()?;
        lin.validate(&fam.grid)?;
        let rp = lin.r_prime();
        let gp = g.moduli().iter().map(|v| v.powf(rp)).collect();
        Ok(Self { fam, gp, lin, c, rp, hists: BTreeMap::new() })
    }

    /// Largest density over the active tiles; ties keep the first in (tile, interval, ξ) order.
    pub fn best(&mut self, active: &[bool]) -> Option<DensityWitness> {
        let grid = self.fam.grid;
        let n = grid.n_samples();
        let mut best: Option<DensityWitness> = None;
        for (p, t) in self.fam.tiles.iter().enumerate().filter(|&(p, _)| active[p]) {
            let block = t.block_interval();
            let i = t.space();
            for ip in i.ancestors().filter(|a| i.dilate_contains(&grid, 9.0, a)) {
                let (gp, lin, c, rp) = (&self.gp, self.lin, &self.c, self.rp);
                let hist = self.hists.entry(ip).or_insert_with(|| density_histogram(&grid, gp, lin, &ip, c, rp));
                let half = (self.fam.consts.c2 - 1.0) / 4.0 * (1u64 << ip.k) as f64;
                for xi in 0..n as u64 {
                    let (first, last) = window_frequencies(xi, half);
                    if !block.contains(&integer_window(first, last), n as f64) {
                        continue;
                    }
                    let mass: f64 = (first..=last).map(|nu| hist[nu.rem_euclid(n as i64) as usize]).sum();
                    let value = (mass / ip.len_samples(&grid) as f64).powf(1.0 / self.rp);
                    if best.is_none_or(|b| value > b.value) {
                        best = Some(DensityWitness { value, tile: p, interval: ip, xi });
                    }
                }
            }
        }
        best
    }

    /// Tiles `P` with `I_P ⊆ I'` whose frequency block contains the window of `w`.
    pub fn tree_of(&self, w: &DensityWitness, active: &[bool]) -> Tree {
        let n = self.fam.grid.n_samples() as f64;
        let half = (self.fam.consts.c2 - 1.0) / 4.0 * (1u64 << w.interval.k) as f64;
        let (first, last) = window_frequencies(w.xi, half);
        let window = integer_window(first, last);
        let members = self
            .fam
            .tiles
            .iter()
            .enumerate()
            .filter(|&(p, t)| active[p] && w.interval.contains(&t.space()) && t.block_interval().contains(&window, n))
            .map(|(p, _)| p)
            .collect();
        Tree { kind: TreeKind::Density, top: w.interval, top_freq: w.xi, members }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packets::wave_packet;
    use crate::tiles::{gen_rank1_family, TriTile};
    use num_complex::Complex64;
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_signal(g: &GridSpec, rng: &mut ChaCha8Rng) -> Signal {
        let v = (0..g.n_samples()).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        Signal::new(v).unwrap()
    }

    fn random_family(g: &GridSpec, size: usize, rng: &mut ChaCha8Rng) -> RankOneFamily {
        let all = gen_rank1_family(g, 0..=g.j() - 2).unwrap();
        let idx = sample(rng, all.len(), size.min(all.len())).into_vec();
        all.subset(&idx)
    }

    #[test]
    fn zero_signal_has_zero_size_and_energy() {
        let g = GridSpec::new(4).unwrap();
        let fam = gen_rank1_family(&g, 0..=2).unwrap();
        let f = Signal::zeros(&g);
        for j in 1..=3 {
            assert_eq!(size_j(&fam, &f, j, PacketBackend::Walsh).unwrap().value, 0.0);
            assert_eq!(energy_j(&fam, &f, j, PacketBackend::Walsh).unwrap().value, 0.0);
        }
        let empty = RankOneFamily::empty(g);
        let r = size_j(&empty, &f, 1, PacketBackend::Walsh).unwrap();
        assert!(r.witness_tree.is_none());
    }

    #[test]
    fn single_tile_size_is_inverse_root_length() {
        let g = GridSpec::new(5).unwrap();
        let p = TriTile { k: 2, n: 1, block: 1 };
        let fam = RankOneFamily::new(g, vec![p]).unwrap();
        let f = wave_packet(&p.component(1), &PacketBackend::Walsh, &g).unwrap();
        // The packet pairs with itself through every 2- and 3-tree whose top sits at I_P.
        let r = size_j(&fam, &f, 1, PacketBackend::Walsh).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12, "{}", r.value);
        assert!((tree_l2(&[1.0], r.witness_tree.as_ref().unwrap()) - r.value).abs() < 1e-12);
    }

    #[test]
    fn unit_tile_energy_selects_level_zero() {
        let g = GridSpec::new(4).unwrap();
        let p = TriTile { k: 0, n: 0, block: 0 };
        let fam = RankOneFamily::new(g, vec![p]).unwrap();
        for method in [Method::Greedy, Method::Exhaustive] {
            let r = energy_from_weights(&fam, &[1.0], 2, method).unwrap();
            assert!((r.value - 1.0).abs() < 1e-15, "{method:?}: {}", r.value);
            assert_eq!(r.level, Some(0));
        }
    }

    #[test]
    fn witness_reproduces_value() {
        let g = GridSpec::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let fam = random_family(&g, 12, &mut rng);
            let f = gaussian_signal(&g, &mut rng);
            for j in 1..=3 {
                let cache = slot_cache(&fam, j, PacketBackend::Walsh).unwrap();
                let w = slot_weights(&fam, &f, j, &cache).unwrap();
                let s = size_from_weights(&fam, &w, j, TopPolicy::Fast).unwrap();
                let t = s.witness_tree.as_ref().unwrap();
                t.validate_bht(&fam).unwrap();
                assert!((tree_l2(&w, t) - s.value).abs() <= 1e-12 * s.value.max(1.0));
                let e = energy_from_weights(&fam, &w, j, Method::Greedy).unwrap();
                let again = evaluate_forest(&fam, &w, j, e.level.unwrap(), &e.forest).unwrap();
                assert!((again - e.value).abs() <= 1e-12 * e.value.max(1.0));
                let json: SizeReport = serde_json::from_str(&e.to_json()).unwrap();
                assert_eq!(json.forest, e.forest);
            }
        }
    }

    #[test]
    fn energy_obeys_bessel_bound_for_walsh() {
        let g = GridSpec::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fam = gen_rank1_family(&g, 0..=3).unwrap();
        for _ in 0..5 {
            let f = gaussian_signal(&g, &mut rng);
            let norm = crate::grid::lp_norm(&f, 2.0).unwrap();
            for j in 1..=3 {
                let e = energy_j(&fam, &f, j, PacketBackend::Walsh).unwrap();
                assert!(e.value <= 2.0 * norm, "{} vs {}", e.value, norm);
            }
        }
    }

    #[test]
    fn greedy_energy_never_exceeds_exhaustive() {
        let g = GridSpec::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let fam = random_family(&g, 5, &mut rng);
            let w: Vec<f64> = (0..fam.len()).map(|_| rng.random::<f64>()).collect();
            for j in 1..=3 {
                let a = energy_from_weights(&fam, &w, j, Method::Greedy).unwrap().value;
                let b = energy_from_weights(&fam, &w, j, Method::Exhaustive).unwrap().value;
                assert!(a <= b * (1.0 + 1e-12), "{a} > {b}");
            }
        }
    }

    #[test]
    fn ssize_matches_brute_force_and_localizes() {
        let g = GridSpec::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fam = random_family(&g, 15, &mut rng);
        let f = gaussian_signal(&g, &mut rng);
        let c = CutoffSpec::default();
        let brute = fam.tiles.iter().map(|t| crate::grid::weighted_average(&f, &t.space(), 2.0, &c).unwrap()).fold(0.0, f64::max);
        assert!((ssize(&fam, &f, 2.0, &c, None).unwrap() - brute).abs() < 1e-12);
        let i0 = DyadicInterval { k: 1, n: 0 };
        let local = crate::tiles::localize(&fam, &i0);
        let with_i0 = ssize(&local, &f, 1.0, &c, Some(i0)).unwrap();
        assert!(with_i0 >= crate::grid::weighted_average(&f, &i0, 1.0, &c).unwrap());
        assert!(ssize(&fam, &f, 1.0, &c, Some(i0)).is_err() || local.len() == fam.len());
        let q = ssize_q(&fam, &f, 2.0, &c, None).unwrap();
        assert!((q - ssize(&fam, &f, 2.0, &c, None).unwrap()).abs() < 1e-12);

        let single = RankOneFamily::new(g, vec![TriTile { k: 2, n: 3, block: 0 }]).unwrap();
        let ind = Signal::indicator(&g, &DyadicInterval { k: 2, n: 3 });
        assert!((ssize(&single, &ind, 1.0, &c, None).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exponents_validate_simplex() {
        assert!(SizeEnergyExponents::new([0.5, 0.5, 0.0]).is_ok());
        assert!(SizeEnergyExponents::new([1.0, 0.0, 0.0]).is_err());
        assert!(SizeEnergyExponents::new([0.3, 0.3, 0.3]).is_err());
    }
}
