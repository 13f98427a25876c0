//! Tiles, tri-tiles, multi-tiles, rank-1 families, order relations and trees.
//!
//! Frequencies are integer grid frequencies modulo `N = 2^J`. A tile at scale `k` has spatial
//! length `2^{-k}` and a dyadic frequency interval of `2^k` grid frequencies, so the area is 1.

use crate::error::{invalid, Error, Result};
use crate::grid::{periodic_dilate_contains, periodic_intersects, periodic_point_in, DyadicInterval, GridSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Default cap on family size for full top enumeration.
pub const FULL_ENUMERATION_CAP: usize = 64;

/// Half-open frequency interval `[start, start + len)` on the frequency circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqInterval {
    pub start: f64,
    pub len: f64,
}

impl FreqInterval {
    pub fn dyadic(k: u32, m: u64) -> Self {
        let len = (1u64 << k) as f64;
        Self { start: m as f64 * len, len }
    }

    pub fn center(&self) -> f64 {
        self.start + 0.5 * self.len
    }

    pub fn dilate(&self, c: f64) -> Self {
        Self { start: self.center() - 0.5 * c * self.len, len: c * self.len }
    }

    /// `other ⊆ c·self` on a circle of `period` frequencies.
    pub fn dilate_contains(&self, c: f64, other: &FreqInterval, period: f64) -> bool {
        periodic_dilate_contains(self.start, self.len, c, other.start, other.len, period)
    }

    pub fn contains(&self, other: &FreqInterval, period: f64) -> bool {
        self.dilate_contains(1.0, other, period)
    }

    pub fn intersects(&self, other: &FreqInterval, period: f64) -> bool {
        periodic_intersects(self.start, self.len, other.start, other.len, period)
    }

    pub fn contains_point(&self, xi: f64, period: f64) -> bool {
        periodic_point_in(xi, self.start, self.len, period)
    }

    pub fn hull(&self, other: &FreqInterval) -> FreqInterval {
        let lo = self.start.min(other.start);
        let hi = (self.start + self.len).max(other.start + other.len);
        FreqInterval { start: lo, len: hi - lo }
    }
}

/// `I × ω` with `I = (k, n)` and `ω = [m 2^k, (m+1) 2^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tile {
    pub k: u32,
    pub n: u64,
    pub m: u64,
}

impl Tile {
    pub fn new(g: &GridSpec, k: u32, n: u64, m: u64) -> Result<Self> {
        let t = Self { k, n, m };
        t.check(g)?;
        Ok(t)
    }

    pub fn check(&self, g: &GridSpec) -> Result<()> {
        self.space().check(g)?;
        if self.m >= 1u64 << (g.j() - self.k) {
            return invalid(format!("frequency index {} out of range at scale {}", self.m, self.k));
        }
        Ok(())
    }

    pub fn space(&self) -> DyadicInterval {
        DyadicInterval { k: self.k, n: self.n }
    }

    pub fn freq(&self) -> FreqInterval {
        FreqInterval::dyadic(self.k, self.m)
    }

    /// Rectangles of area one intersect iff both sides intersect.
    pub fn overlaps(&self, other: &Tile) -> bool {
        if !self.space().intersects(&other.space()) {
            return false;
        }
        let (fine, coarse) = if self.k >= other.k { (self, other) } else { (other, self) };
        // the finer tile has the longer frequency interval; dyadic nesting decides
        coarse.m >> (fine.k - coarse.k) == fine.m
    }

    /// Tile of scale `k` whose frequency interval contains `xi`.
    pub fn top(space: DyadicInterval, xi: u64) -> Tile {
        Tile { k: space.k, n: space.n, m: xi >> space.k }
    }
}

/// `P1 ≤ P2` iff `I1 ⊆ I2` and `ω2 ⊆ 3ω1`.
pub fn tile_leq(g: &GridSpec, p1: &Tile, p2: &Tile) -> bool {
    p2.space().contains(&p1.space()) && p1.freq().dilate_contains(3.0, &p2.freq(), g.n_samples() as f64)
}

/// `P1 ≲ P2` iff `I1 ⊆ I2` and `ω2 ⊆ 100 C0 ω1`.
pub fn tile_lesssim(g: &GridSpec, p1: &Tile, p2: &Tile, c0: f64) -> bool {
    p2.space().contains(&p1.space()) && p1.freq().dilate_contains(100.0 * c0, &p2.freq(), g.n_samples() as f64)
}

pub fn tile_lesssim_prime(g: &GridSpec, p1: &Tile, p2: &Tile, c0: f64) -> bool {
    tile_lesssim(g, p1, p2, c0) && !tile_leq(g, p1, p2)
}

/// A spatial interval with a frequency block of `4 · 2^k` frequencies; components are its first three quarters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TriTile {
    pub k: u32,
    pub n: u64,
    #[serde(rename = "freq_block_n")]
    pub block: u64,
}

impl TriTile {
    pub fn check(&self, g: &GridSpec) -> Result<()> {
        if self.k + 2 > g.j() {
            return invalid(format!("tri-tile scale {} exceeds J-2 = {}", self.k, g.j() as i64 - 2));
        }
        self.space().check(g)?;
        if self.block >= 1u64 << (g.j() - self.k - 2) {
            return invalid(format!("frequency block {} out of range at scale {}", self.block, self.k));
        }
        Ok(())
    }

    pub fn space(&self) -> DyadicInterval {
        DyadicInterval { k: self.k, n: self.n }
    }

    /// `P_j` for `j ∈ {1, 2, 3}`.
    pub fn component(&self, j: usize) -> Tile {
        assert!((1..=3).contains(&j), "tri-tile component index must be 1, 2 or 3");
        Tile { k: self.k, n: self.n, m: 4 * self.block + (j as u64 - 1) }
    }

    pub fn block_interval(&self) -> FreqInterval {
        FreqInterval::dyadic(self.k + 2, self.block)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneFamily {
    pub grid: GridSpec,
    pub tiles: Vec<TriTile>,
}

impl RankOneFamily {
    pub fn new(grid: GridSpec, tiles: Vec<TriTile>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for t in &tiles {
            t.check(&grid)?;
            if !seen.insert(*t) {
                return invalid(format!("duplicate tri-tile {t:?}"));
            }
        }
        Ok(Self { grid, tiles })
    }

    pub fn empty(grid: GridSpec) -> Self {
        Self { grid, tiles: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> RankOneFamily {
        RankOneFamily { grid: self.grid, tiles: idx.iter().map(|&i| self.tiles[i]).collect() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.tiles).expect("tri-tiles serialize")
    }

    pub fn from_json(grid: GridSpec, text: &str) -> Result<Self> {
        let tiles: Vec<TriTile> = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::new(grid, tiles)
    }
}

/// All spatial positions and frequency blocks for each scale, scale-major then position-minor.
pub fn gen_rank1_family(g: &GridSpec, scales: std::ops::RangeInclusive<u32>) -> Result<RankOneFamily> {
    if scales.is_empty() {
        return invalid("empty scale range");
    }
    if *scales.end() + 2 > g.j() {
        return invalid(format!("scales must lie within [0, J-2], got up to {}", scales.end()));
    }
    let mut tiles = Vec::new();
    for k in scales {
        for n in 0..1u64 << k {
            for block in 0..1u64 << (g.j() - k - 2) {
                tiles.push(TriTile { k, n, block });
            }
        }
    }
    RankOneFamily::new(*g, tiles)
}

pub fn localize(fam: &RankOneFamily, i0: &DyadicInterval) -> RankOneFamily {
    RankOneFamily { grid: fam.grid, tiles: fam.tiles.iter().copied().filter(|t| i0.contains(&t.space())).collect() }
}

/// Candidate top policy for tree enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopPolicy {
    /// Every dyadic interval paired with every grid frequency.
    Full,
    /// Tops built from the spatial ancestors and the tripled frequency intervals of member tiles.
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TreeKind {
    /// An `i`-tree of tri-tiles; it is `j`-lacunary for every `j ≠ i`.
    Bht { i: u8 },
    /// A variational-Carleson tree, `l`-overlapping or `l`-lacunary.
    VarC { overlapping: bool },
    /// Multi-tiles whose spatial interval lies in the top and whose frequency block contains the
    /// top window, as removed by the density decomposition.
    Density,
}

impl TreeKind {
    pub fn is_lacunary_in(&self, j: usize) -> bool {
        match self {
            TreeKind::Bht { i } => *i as usize != j,
            TreeKind::VarC { overlapping } => !overlapping,
            TreeKind::Density => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tree {
    pub kind: TreeKind,
    pub top: DyadicInterval,
    pub top_freq: u64,
    pub members: Vec<usize>,
}

impl Tree {
    pub fn top_length(&self) -> f64 {
        self.top.length()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn validate_bht(&self, fam: &RankOneFamily) -> Result<()> {
        let TreeKind::Bht { i } = self.kind else {
            return invalid("expected a tri-tile tree");
        };
        for &idx in &self.members {
            let p = fam.tiles.get(idx).ok_or_else(|| Error::InvalidArgument(format!("member {idx} out of range")))?;
            if !bht_member(&fam.grid, p, i as usize, &self.top, self.top_freq) {
                return Err(Error::Postcondition(format!("tile {p:?} violates the {i}-tree relation for top {:?}", self.top)));
            }
        }
        Ok(())
    }
}

/// `P_i ≤ P_{T,i}`, where the top tile is `I_T` times the dyadic interval of length `|I_T|^{-1}` holding `ξ_T`.
pub fn bht_member(g: &GridSpec, p: &TriTile, i: usize, top: &DyadicInterval, xi: u64) -> bool {
    tile_leq(g, &p.component(i), &Tile::top(*top, xi))
}

/// Candidate tops `(I_T, ξ_T)` for `i`-trees; `ξ_T` is normalized to the left end of its dyadic cell.
pub fn candidate_tops(fam: &RankOneFamily, i: usize, policy: TopPolicy) -> Vec<(DyadicInterval, u64)> {
    let g = fam.grid;
    let n = g.n_samples() as u64;
    let mut tops = Vec::new();
    match policy {
        TopPolicy::Full => {
            for top in g.intervals() {
                let mut last_cell = None;
                for xi in 0..n {
                    let cell = xi >> top.k;
                    if last_cell != Some(cell) {
                        tops.push((top, xi));
                        last_cell = Some(cell);
                    }
                }
            }
        }
        TopPolicy::Fast => {
            for p in &fam.tiles {
                let comp = p.component(i);
                for top in p.space().ancestors() {
                    let span = 1u64 << (comp.k - top.k);
                    let cells = n >> top.k;
                    let lo = (comp.m * span + cells - span) % cells;
                    for c in 0..3 * span {
                        let cell = (lo + c) % cells;
                        tops.push((top, cell << top.k));
                    }
                }
            }
            tops.sort();
            tops.dedup();
        }
    }
    tops
}

fn maximal_bht_tree(fam: &RankOneFamily, i: usize, top: DyadicInterval, xi: u64) -> Tree {
    let members = fam
        .tiles
        .iter()
        .enumerate()
        .filter(|(_, p)| bht_member(&fam.grid, p, i, &top, xi))
        .map(|(idx, _)| idx)
        .collect();
    Tree { kind: TreeKind::Bht { i: i as u8 }, top, top_freq: xi, members }
}

/// Maximal non-empty `i`-trees over the candidate tops, one per distinct (top interval, member set).
pub fn enumerate_trees(fam: &RankOneFamily, i: usize, policy: TopPolicy) -> Result<Vec<Tree>> {
    enumerate_trees_capped(fam, i, policy, FULL_ENUMERATION_CAP)
}

pub fn enumerate_trees_capped(fam: &RankOneFamily, i: usize, policy: TopPolicy, cap: usize) -> Result<Vec<Tree>> {
    if !(1..=3).contains(&i) {
        return invalid(format!("tree kind must be 1, 2 or 3, got {i}"));
    }
    if policy == TopPolicy::Full && fam.len() > cap {
        return Err(Error::CapExceeded { what: "full tree enumeration".into(), got: fam.len(), cap });
    }
    let tops = candidate_tops(fam, i, policy);
    let trees: Vec<Tree> = tops.par_iter().map(|&(top, xi)| maximal_bht_tree(fam, i, top, xi)).collect();
    let mut seen: BTreeMap<(DyadicInterval, Vec<usize>), Tree> = BTreeMap::new();
    for t in trees.into_iter().filter(|t| !t.is_empty()) {
        seen.entry((t.top, t.members.clone())).or_insert(t);
    }
    Ok(seen.into_values().collect())
}

/// Maximal trees of every kind lacunary in slot `j`, in deterministic order.
pub fn lacunary_trees(fam: &RankOneFamily, j: usize, policy: TopPolicy) -> Result<Vec<Tree>> {
    let mut all = Vec::new();
    for i in (1..=3).filter(|&i| i != j) {
        all.extend(enumerate_trees(fam, i, policy)?);
    }
    Ok(all)
}

/// Constants `C1 > C2 > C3 ≥ 1` of the multi-tile geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiTileConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for MultiTileConstants {
    fn default() -> Self {
        Self { c1: 8.0, c2: 2.0, c3: 1.0 }
    }
}

/// Spatial interval with a frequency block of `8 · 2^k` frequencies split into eighths `e_0..e_7`:
/// `ω_l = e_0`, `ω_u = e_2`, `ω_h = e_6 ∪ e_7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiTile {
    pub k: u32,
    pub n: u64,
    #[serde(rename = "freq_block_n")]
    pub block: u64,
}

impl MultiTile {
    pub fn new(g: &GridSpec, k: u32, n: u64, block: u64, c: &MultiTileConstants) -> Result<Self> {
        let t = Self { k, n, block };
        t.check(g)?;
        t.check_geometry(g, c)?;
        Ok(t)
    }

    pub fn check(&self, g: &GridSpec) -> Result<()> {
        if self.k + 3 > g.j() {
            return invalid(format!("multi-tile scale {} exceeds J-3", self.k));
        }
        self.space().check(g)?;
        if self.block >= 1u64 << (g.j() - self.k - 3) {
            return invalid(format!("multi-tile block {} out of range", self.block));
        }
        Ok(())
    }

    pub fn space(&self) -> DyadicInterval {
        DyadicInterval { k: self.k, n: self.n }
    }

    fn eighth(&self) -> f64 {
        (1u64 << self.k) as f64
    }

    fn base(&self) -> f64 {
        self.block as f64 * 8.0 * self.eighth()
    }

    pub fn omega_l(&self) -> FreqInterval {
        FreqInterval { start: self.base(), len: self.eighth() }
    }

    pub fn omega_u(&self) -> FreqInterval {
        FreqInterval { start: self.base() + 2.0 * self.eighth(), len: self.eighth() }
    }

    pub fn omega_h(&self) -> FreqInterval {
        FreqInterval { start: self.base() + 6.0 * self.eighth(), len: 2.0 * self.eighth() }
    }

    pub fn block_interval(&self) -> FreqInterval {
        FreqInterval { start: self.base(), len: 8.0 * self.eighth() }
    }

    /// Heisenberg box carrying the wave packet.
    pub fn packet_tile(&self) -> Tile {
        Tile { k: self.k, n: self.n, m: 8 * self.block + 2 }
    }

    /// `conv(C2 ω_l ∪ C2 ω_u)`.
    pub fn omega_m(&self, c: &MultiTileConstants) -> FreqInterval {
        self.omega_l().dilate(c.c2).hull(&self.omega_u().dilate(c.c2))
    }

    /// The five containment and disjointness relations between the components.
    pub fn check_geometry(&self, g: &GridSpec, c: &MultiTileConstants) -> Result<()> {
        let period = g.n_samples() as f64;
        if !(c.c1 > c.c2 && c.c2 > c.c3 && c.c3 >= 1.0) {
            return invalid(format!("multi-tile constants must satisfy C1 > C2 > C3 >= 1, got {c:?}"));
        }
        let (l, u, h) = (self.omega_l(), self.omega_u(), self.omega_h());
        let checks = [
            (u.dilate_contains(c.c3, &u, period), "supp of the packet inside C3 ω_u"),
            (!u.dilate(c.c2).intersects(&l.dilate(c.c2), period), "C2 ω_u disjoint from C2 ω_l"),
            (!u.dilate(c.c2).intersects(&h.dilate(c.c2), period), "C2 ω_u disjoint from C2 ω_h"),
            (u.dilate_contains(c.c1, &l.dilate(c.c2), period), "C2 ω_l inside C1 ω_u"),
            (l.dilate_contains(c.c1, &u.dilate(c.c2), period), "C2 ω_u inside C1 ω_l"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::Postcondition(format!("multi-tile geometry: {what} fails for {self:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiFamily {
    pub grid: GridSpec,
    pub consts: MultiTileConstants,
    pub tiles: Vec<MultiTile>,
}

impl MultiFamily {
    pub fn new(grid: GridSpec, consts: MultiTileConstants, tiles: Vec<MultiTile>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for t in &tiles {
            t.check(&grid)?;
            t.check_geometry(&grid, &consts)?;
            if !seen.insert(*t) {
                return invalid(format!("duplicate multi-tile {t:?}"));
            }
        }
        Ok(Self { grid, consts, tiles })
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> MultiFamily {
        MultiFamily { grid: self.grid, consts: self.consts, tiles: idx.iter().map(|&i| self.tiles[i]).collect() }
    }

    pub fn localize(&self, i0: &DyadicInterval) -> MultiFamily {
        MultiFamily {
            grid: self.grid,
            consts: self.consts,
            tiles: self.tiles.iter().copied().filter(|t| i0.contains(&t.space())).collect(),
        }
    }

    /// `ω_T = [ξ_T - (C2-1)/(4|I_T|), ξ_T + (C2-1)/(4|I_T|))`.
    pub fn top_window(&self, top: &DyadicInterval, xi: u64) -> FreqInterval {
        let half = (self.consts.c2 - 1.0) / 4.0 * (1u64 << top.k) as f64;
        FreqInterval { start: xi as f64 - half, len: 2.0 * half }
    }

    pub fn varc_member(&self, p: &MultiTile, top: &DyadicInterval, xi: u64) -> bool {
        top.contains(&p.space())
            && p.omega_m(&self.consts).contains(&self.top_window(top, xi), self.grid.n_samples() as f64)
    }

    pub fn xi_in_c2_omega_l(&self, p: &MultiTile, xi: u64) -> bool {
        p.omega_l().dilate(self.consts.c2).contains_point(xi as f64, self.grid.n_samples() as f64)
    }

    /// Maximal tree with top `(I_T, ξ_T)` of the requested overlap type.
    pub fn maximal_varc_tree(&self, top: DyadicInterval, xi: u64, overlapping: bool) -> Tree {
        let members = self
            .tiles
            .iter()
            .enumerate()
            .filter(|(_, p)| self.varc_member(p, &top, xi) && self.xi_in_c2_omega_l(p, xi) == overlapping)
            .map(|(i, _)| i)
            .collect();
        Tree { kind: TreeKind::VarC { overlapping }, top, top_freq: xi, members }
    }

    /// Non-empty maximal trees over every dyadic top and grid frequency, deduplicated.
    pub fn enumerate_varc_trees(&self, overlapping: bool) -> Vec<Tree> {
        let g = self.grid;
        let n = g.n_samples() as u64;
        let tops: Vec<(DyadicInterval, u64)> = g.intervals().into_iter().flat_map(|t| (0..n).map(move |xi| (t, xi))).collect();
        let trees: Vec<Tree> = tops.par_iter().map(|&(t, xi)| self.maximal_varc_tree(t, xi, overlapping)).collect();
        let mut seen: BTreeMap<(DyadicInterval, Vec<usize>), Tree> = BTreeMap::new();
        for t in trees.into_iter().filter(|t| !t.is_empty()) {
            seen.entry((t.top, t.members.clone())).or_insert(t);
        }
        seen.into_values().collect()
    }

    pub fn validate_varc(&self, t: &Tree) -> Result<()> {
        let TreeKind::VarC { overlapping } = t.kind else {
            return invalid("expected a variational-Carleson tree");
        };
        for &idx in &t.members {
            let p = &self.tiles[idx];
            if !self.varc_member(p, &t.top, t.top_freq) || self.xi_in_c2_omega_l(p, t.top_freq) != overlapping {
                return Err(Error::Postcondition(format!("multi-tile {p:?} violates its tree relation")));
            }
        }
        Ok(())
    }
}

/// All multi-tiles at the given scales (within `[0, J-3]`), scale-major then position-minor.
pub fn gen_multi_family(g: &GridSpec, scales: std::ops::RangeInclusive<u32>, consts: MultiTileConstants) -> Result<MultiFamily> {
    if scales.is_empty() {
        return invalid("empty scale range");
    }
    if *scales.end() + 3 > g.j() {
        return invalid(format!("multi-tile scales must lie within [0, J-3], got up to {}", scales.end()));
    }
    let mut tiles = Vec::new();
    for k in scales {
        for n in 0..1u64 << k {
            for block in 0..1u64 << (g.j() - k - 3) {
                tiles.push(MultiTile { k, n, block });
            }
        }
    }
    MultiFamily::new(*g, consts, tiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::index::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn family_generation_counts_and_order() {
        let g = GridSpec::new(3).unwrap();
        let fam = gen_rank1_family(&g, 0..=0).unwrap();
        assert_eq!(fam.tiles, vec![TriTile { k: 0, n: 0, block: 0 }, TriTile { k: 0, n: 0, block: 1 }]);
        assert!(gen_rank1_family(&g, 0..=2).is_err());
        assert_eq!(gen_rank1_family(&g, 1..=1).unwrap().len(), 2);
        #[allow(clippy::reversed_empty_ranges)]
        let empty = gen_rank1_family(&g, 1..=0);
        assert!(empty.is_err());
        let g6 = GridSpec::new(6).unwrap();
        let fam = gen_rank1_family(&g6, 0..=4).unwrap();
        assert_eq!(fam.len(), 5 * 16);
        let keys: Vec<_> = fam.tiles.iter().map(|t| (t.k, t.n, t.block)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn components_of_distinct_blocks_are_disjoint_and_rank_one_holds() {
        let g = GridSpec::new(6).unwrap();
        let fam = gen_rank1_family(&g, 0..=4).unwrap();
        let period = 64.0;
        for a in &fam.tiles {
            for b in &fam.tiles {
                for j in 1..=3 {
                    if a.k == b.k && a.block != b.block {
                        assert!(!a.component(j).freq().intersects(&b.component(j).freq(), period));
                    }
                    if a.component(j).freq() == b.component(j).freq() {
                        for jj in 1..=3 {
                            assert_eq!(a.component(jj).freq(), b.component(jj).freq());
                        }
                    }
                }
                for (x, y) in [(1, 2), (1, 3), (2, 3)] {
                    assert!(!a.component(x).freq().intersects(&a.component(y).freq(), period));
                }
            }
        }
    }

    #[test]
    fn order_relation_hand_table() {
        let g = GridSpec::new(3).unwrap();
        // A: [0,1) × {5};  B: [0,1/2) × [4,6);  C: [1/2,1) × [4,6);  D: [0,1/2) × [0,2)
        let a = Tile::new(&g, 0, 0, 5).unwrap();
        let b = Tile::new(&g, 1, 0, 2).unwrap();
        let c = Tile::new(&g, 1, 1, 2).unwrap();
        let d = Tile::new(&g, 1, 0, 0).unwrap();
        let tiles = [a, b, c, d];
        // 3ω_B = [3,7) ∋ 5, 3ω_D = [-2,4) mod 8 = {6,7,0,1,2,3}
        let expected = [
            [true, false, false, false],
            [true, true, false, false],
            [true, false, true, false],
            [false, false, false, true],
        ];
        for (x, row) in tiles.iter().zip(expected) {
            for (y, want) in tiles.iter().zip(row) {
                assert_eq!(tile_leq(&g, x, y), want, "{x:?} <= {y:?}");
            }
        }
        // with 100·ω everything with nested space is ≲
        assert!(tile_lesssim(&g, &d, &a, 1.0));
        assert!(tile_lesssim_prime(&g, &d, &a, 1.0));
        assert!(!tile_lesssim_prime(&g, &b, &a, 1.0));
        assert!(!tile_lesssim(&g, &b, &c, 1.0));
    }

    #[test]
    fn tile_overlap_matches_geometry() {
        let g = GridSpec::new(4).unwrap();
        let mut all = Vec::new();
        for k in 0..=4 {
            for n in 0..1u64 << k {
                for m in 0..1u64 << (4 - k) {
                    all.push(Tile::new(&g, k, n, m).unwrap());
                }
            }
        }
        for a in &all {
            for b in &all {
                let sa = a.space();
                let sb = b.space();
                let space = sa.intersects(&sb);
                let freq = a.freq().intersects(&b.freq(), 16.0);
                assert_eq!(a.overlaps(b), space && freq);
            }
        }
    }

    fn random_family(seed: u64, size: usize) -> RankOneFamily {
        let g = GridSpec::new(5).unwrap();
        let full = gen_rank1_family(&g, 0..=3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, full.len(), size).into_vec();
        idx.sort();
        full.subset(&idx)
    }

    #[test]
    fn full_and_fast_enumerations_agree_on_maximal_trees() {
        for seed in 0..20 {
            let fam = random_family(seed, 8);
            for i in 1..=3 {
                let full = enumerate_trees(&fam, i, TopPolicy::Full).unwrap();
                let fast = enumerate_trees(&fam, i, TopPolicy::Fast).unwrap();
                let key = |v: &Vec<Tree>| v.iter().map(|t| (t.top, t.members.clone())).collect::<Vec<_>>();
                assert_eq!(key(&full), key(&fast));
                for t in &full {
                    t.validate_bht(&fam).unwrap();
                }
            }
        }
    }

    #[test]
    fn single_tile_is_a_tree_of_every_kind_and_empty_family_has_none() {
        let g = GridSpec::new(5).unwrap();
        let fam = RankOneFamily::new(g, vec![TriTile { k: 2, n: 1, block: 1 }]).unwrap();
        for i in 1..=3 {
            let trees = enumerate_trees(&fam, i, TopPolicy::Fast).unwrap();
            assert!(trees.iter().any(|t| t.top == fam.tiles[0].space() && t.members == vec![0]));
        }
        assert!(enumerate_trees(&RankOneFamily::empty(g), 1, TopPolicy::Full).unwrap().is_empty());
        assert!(enumerate_trees(&RankOneFamily::empty(g), 4, TopPolicy::Full).is_err());
    }

    #[test]
    fn full_enumeration_respects_cap() {
        let g = GridSpec::new(8).unwrap();
        let fam = gen_rank1_family(&g, 0..=2).unwrap();
        assert!(fam.len() > FULL_ENUMERATION_CAP);
        assert!(matches!(enumerate_trees(&fam, 1, TopPolicy::Full), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn tree_membership_is_closed_under_the_order() {
        for seed in 0..5 {
            let fam = random_family(seed, 12);
            for i in 1..=3 {
                for t in enumerate_trees(&fam, i, TopPolicy::Fast).unwrap() {
                    let top = Tile::top(t.top, t.top_freq);
                    for (idx, p) in fam.tiles.iter().enumerate() {
                        if tile_leq(&fam.grid, &p.component(i), &top) {
                            assert!(t.members.contains(&idx));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn localization_properties() {
        let g = GridSpec::new(6).unwrap();
        let fam = gen_rank1_family(&g, 0..=4).unwrap();
        assert_eq!(localize(&fam, &g.unit()), fam);
        let i0 = DyadicInterval::new(1, 1).unwrap();
        let i1 = DyadicInterval::new(3, 5).unwrap();
        let once = localize(&fam, &i0);
        assert_eq!(once.len(), fam.tiles.iter().filter(|t| i0.contains(&t.space())).count());
        assert_eq!(localize(&once, &i1), localize(&fam, &i1));
        let small = RankOneFamily::new(g, vec![TriTile { k: 2, n: 0, block: 0 }]).unwrap();
        assert!(localize(&small, &DyadicInterval::new(2, 3).unwrap()).is_empty());
    }

    #[test]
    fn family_json_round_trip() {
        let g = GridSpec::new(4).unwrap();
        let fam = gen_rank1_family(&g, 0..=1).unwrap();
        let text = fam.to_json();
        assert!(text.starts_with(r#"[{"k":0,"n":0,"freq_block_n":0}"#));
        assert_eq!(RankOneFamily::from_json(g, &text).unwrap(), fam);
        assert!(RankOneFamily::from_json(g, r#"[{"k":0,"n":0,"freq_block_n":0},{"k":0,"n":0,"freq_block_n":0}]"#).is_err());
    }

    #[test]
    fn multi_tile_geometry_holds_for_default_constants() {
        let g = GridSpec::new(6).unwrap();
        let fam = gen_multi_family(&g, 0..=3, MultiTileConstants::default()).unwrap();
        assert_eq!(fam.len(), 4 * 8);
        let bad = MultiTileConstants { c1: 8.0, c2: 5.0, c3: 1.0 };
        assert!(MultiTile::new(&g, 1, 0, 0, &bad).is_err());
    }

    #[test]
    fn varc_trees_are_valid() {
        let g = GridSpec::new(6).unwrap();
        let fam = gen_multi_family(&g, 0..=2, MultiTileConstants::default()).unwrap();
        for overlapping in [true, false] {
            let trees = fam.enumerate_varc_trees(overlapping);
            assert!(!trees.is_empty());
            for t in &trees {
                fam.validate_varc(t).unwrap();
            }
        }
    }
}
