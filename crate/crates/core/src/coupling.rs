//! Edwards-Sokal coupling: edge measure, wired shell, cluster decomposition
//! with a point at infinity, GCRCM weights, and single-edge conditionals.

use rand::Rng;
use serde::Serialize;
use std::io::{Read, Write};

use crate::model::{Color, ModelParams, PairPotential, PointConfig, Proportions, SimBox};
use crate::unionfind::UnionFind;

#[derive(Debug, thiserror::Error)]
pub enum CouplingError {
    #[error("respect_colors requires a colouring")]
    MissingColors,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

/// Undirected edges among point indices plus the shell flag of every point.
/// Pairs are stored sorted as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSet {
    pairs: Vec<(u32, u32)>,
    shell: Vec<bool>,
}

/// `dist(x, Λ^c) ≤ r_4` for every point.
pub fn shell_flags(points: &PointConfig, r4: f64) -> Vec<bool> {
    let bx = points.sim_box();
    points.points().map(|x| bx.dist_to_complement(x) <= r4).collect()
}

impl EdgeSet {
    pub fn empty(shell: Vec<bool>) -> Self {
        Self {
            pairs: Vec::new(),
            shell,
        }
    }

    /// Normalizes orientation, sorts and removes duplicates. Panics on a
    /// self-loop or an index out of range.
    pub fn from_pairs(shell: Vec<bool>, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let n = shell.len();
        let mut v: Vec<(u32, u32)> = pairs
            .into_iter()
            .map(|(a, b)| {
                assert!(a != b, "self-loop at {a}");
                assert!(a < n && b < n, "edge ({a},{b}) out of range");
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                (a as u32, b as u32)
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        Self { pairs: v, shell }
    }

    pub fn n_points(&self) -> usize {
        self.shell.len()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn shell(&self) -> &[bool] {
        &self.shell
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(a, b)| (a as usize, b as usize))
    }

    fn key(i: usize, j: usize) -> (u32, u32) {
        if i < j {
            (i as u32, j as u32)
        } else {
            (j as u32, i as u32)
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.binary_search(&Self::key(i, j)).is_ok()
    }

    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        assert!(i != j);
        let k = Self::key(i, j);
        match self.pairs.binary_search(&k) {
            Ok(_) => false,
            Err(pos) => {
                self.pairs.insert(pos, k);
                true
            }
        }
    }

    pub fn remove(&mut self, i: usize, j: usize) -> bool {
        match self.pairs.binary_search(&Self::key(i, j)) {
            Ok(pos) => {
                self.pairs.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    /// Event A: every edge joins points of equal colour.
    pub fn respects_colors(&self, colors: &[Color]) -> bool {
        self.pairs().all(|(i, j)| colors[i] == colors[j])
    }

    /// Rows `point,i,,shell` for every point then `edge,i,j,` for every edge.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CouplingError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["kind", "i", "j", "shell"])?;
        for (i, &s) in self.shell.iter().enumerate() {
            wr.write_record(["point", &i.to_string(), "", if s { "1" } else { "0" }])?;
        }
        for (i, j) in self.pairs() {
            wr.write_record(["edge", &i.to_string(), &j.to_string(), ""])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, CouplingError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut shell = Vec::new();
        let mut pairs = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let bad = |msg: &str| CouplingError::Row {
                row: row + 1,
                msg: msg.to_string(),
            };
            let idx = |k: usize| -> Result<usize, CouplingError> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| bad("bad index"))
            };
            match rec.get(0) {
                Some("point") => {
                    if idx(1)? != shell.len() {
                        return Err(bad("point rows out of order"));
                    }
                    shell.push(rec.get(3).map(str::trim) == Some("1"));
                }
                Some("edge") => {
                    let (i, j) = (idx(1)?, idx(2)?);
                    if i == j {
                        return Err(bad("self-loop"));
                    }
                    pairs.push((i, j));
                }
                _ => return Err(bad("unknown row kind")),
            }
        }
        if pairs.iter().any(|&(i, j)| i.max(j) >= shell.len()) {
            return Err(CouplingError::Row {
                row: 0,
                msg: "edge index beyond point rows".into(),
            });
        }
        Ok(Self::from_pairs(shell, pairs))
    }
}

/// `1 - e^{-φ}` with `φ = ∞ ↦ 1`.
pub fn edge_probability(phi_value: f64) -> f64 {
    -(-phi_value).exp_m1()
}

/// Pairs with positive edge probability, `(i, j, φ(x_i - x_j))`, sorted.
pub fn candidate_pairs(points: &PointConfig, phi: &PairPotential) -> Vec<(usize, usize, f64)> {
    points
        .pairs_within(phi.cutoff())
        .into_iter()
        .map(|(i, j, d2)| (i, j, phi.value_sq(d2)))
        .filter(|&(_, _, v)| v > 0.0)
        .collect()
}

/// Draws `E ~ μ^φ_ω`, or its restriction to event A when `respect_colors`.
pub fn sample_edges<R: Rng + ?Sized>(
    points: &PointConfig,
    colors: Option<&[Color]>,
    params: &ModelParams,
    respect_colors: bool,
    rng: &mut R,
) -> Result<EdgeSet, CouplingError> {
    if respect_colors && colors.is_none() {
        return Err(CouplingError::MissingColors);
    }
    let mut pairs = Vec::new();
    for (i, j, v) in candidate_pairs(points, &params.phi) {
        if respect_colors {
            let c = colors.expect("checked");
            if c[i] != c[j] {
                continue;
            }
        }
        let p = edge_probability(v);
        if p >= 1.0 || rng.random::<f64>() < p {
            pairs.push((i as u32, j as u32));
        }
    }
    Ok(EdgeSet {
        pairs,
        shell: shell_flags(points, params.radii.r4),
    })
}

/// Clusters of `(ω, E)`; shell points are joined to an imaginary point at
/// infinity, and the cluster holding it is `C_∞`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDecomposition {
    cluster_of: Vec<u32>,
    sizes: Vec<usize>,
    infinite: Option<u32>,
}

pub fn decompose_clusters(edges: &EdgeSet) -> ClusterDecomposition {
    let n = edges.n_points();
    let mut uf = UnionFind::new(n + 1);
    for (i, &s) in edges.shell.iter().enumerate() {
        if s {
            uf.union(i, n);
        }
    }
    for (i, j) in edges.pairs() {
        uf.union(i, j);
    }
    let mut id_of_root = vec![u32::MAX; n + 1];
    let mut cluster_of = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    for i in 0..n {
        let r = uf.find(i);
        if id_of_root[r] == u32::MAX {
            id_of_root[r] = sizes.len() as u32;
            sizes.push(0);
        }
        let id = id_of_root[r];
        sizes[id as usize] += 1;
        cluster_of.push(id);
    }
    let inf_root = uf.find(n);
    let infinite = (id_of_root[inf_root] != u32::MAX).then_some(id_of_root[inf_root]);
    ClusterDecomposition {
        cluster_of,
        sizes,
        infinite,
    }
}

impl ClusterDecomposition {
    pub fn n_points(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.cluster_of[i] as usize
    }

    pub fn size(&self, cluster: usize) -> usize {
        self.sizes[cluster]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn infinite(&self) -> Option<usize> {
        self.infinite.map(|c| c as usize)
    }

    /// `|C_∞|`, zero when absent.
    pub fn infinite_size(&self) -> usize {
        self.infinite().map_or(0, |c| self.sizes[c])
    }

    pub fn finite_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        let inf = self.infinite();
        self.sizes
            .iter()
            .enumerate()
            .filter(move |(c, _)| Some(*c) != inf)
            .map(|(_, &s)| s)
    }

    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.cluster_of[i] == self.cluster_of[j]
    }

    pub fn to_infinity(&self, i: usize) -> bool {
        Some(self.cluster_of[i]) == self.infinite
    }

    /// `N_{Δ↔∞}` for every cell of the box.
    pub fn infinite_per_cell(&self, points: &PointConfig) -> Vec<usize> {
        let bx = points.sim_box();
        let mut out = vec![0; bx.n_cells()];
        for (i, x) in points.points().enumerate() {
            if self.to_infinity(i) {
                out[bx.cell_of(x)] += 1;
            }
        }
        out
    }
}

/// `ln(α_b^{|C_∞|} Π_C Σ_i α_i^{|C|})` with wired colour `b`.
pub fn ln_gcrcm_weight(decomp: &ClusterDecomposition, alpha: &Proportions, wired: Color) -> f64 {
    let inf = decomp.infinite_size() as f64 * alpha.get(wired).ln();
    inf + decomp.finite_sizes().map(|k| alpha.ln_power_sum(k)).sum::<f64>()
}

/// `α_1^{|C_∞|} Π_C Σ_i α_i^{|C|}`.
pub fn gcrcm_weight(decomp: &ClusterDecomposition, alpha: &Proportions) -> f64 {
    ln_gcrcm_weight(decomp, alpha, Color::FIRST).exp()
}

/// `p̄ = (1 - e^{-u}) / (q² e^{-u} + 1 - e^{-u})`.
pub fn bernoulli_edge_probability(params: &ModelParams) -> f64 {
    let e = (-params.u).exp();
    let one_minus = -(-params.u).exp_m1();
    let q = params.q() as f64;
    one_minus / (q * q * e + one_minus)
}

/// `P(e ∈ E | E_{e^c})` under the wired GCRCM for an edge `{x, y}` with
/// `φ(x - y) = phi_value`, given the decomposition of the other edges.
pub fn conditional_from_decomposition(
    decomp: &ClusterDecomposition,
    (x, y): (usize, usize),
    phi_value: f64,
    alpha: &Proportions,
    wired: Color,
) -> f64 {
    let p = edge_probability(phi_value);
    let e = (-phi_value).exp();
    if p == 0.0 {
        return 0.0;
    }
    // Multiplier on the absent-edge weight relative to the present one.
    let ratio = if decomp.connected(x, y) {
        1.0
    } else if decomp.to_infinity(x) || decomp.to_infinity(y) {
        let other = if decomp.to_infinity(x) { y } else { x };
        let k = decomp.size(decomp.cluster_of(other));
        (alpha.ln_power_sum(k) - k as f64 * alpha.get(wired).ln()).exp()
    } else {
        let kx = decomp.size(decomp.cluster_of(x));
        let ky = decomp.size(decomp.cluster_of(y));
        alpha.scaled_power_sum(kx) * alpha.scaled_power_sum(ky) / alpha.scaled_power_sum(kx + ky)
    };
    p / (p + e * ratio)
}

/// The three-case conditional edge probability for `e = {x, y}` given
/// `edges_minus_e` (wired colour 1).
pub fn conditional_edge_probability(
    points: &PointConfig,
    edges_minus_e: &EdgeSet,
    e: (usize, usize),
    params: &ModelParams,
) -> f64 {
    debug_assert!(!edges_minus_e.contains(e.0, e.1));
    let decomp = decompose_clusters(edges_minus_e);
    let d2 = points.dist2(e.0, points.point(e.1));
    conditional_from_decomposition(&decomp, e, params.phi.value_sq(d2), &params.alpha, Color::FIRST)
}

/// Absolute slack tolerated when comparing a conditional with `p̄`.
pub const HOLLEY_TOLERANCE: f64 = 1e-12;

/// `P(e ∈ E | E_{e^c}) ≥ p̄` for `|x - y| ≤ r_3`; vacuously true beyond.
pub fn holley_pointwise_check(
    points: &PointConfig,
    edges_minus_e: &EdgeSet,
    e: (usize, usize),
    params: &ModelParams,
) -> bool {
    let d2 = points.dist2(e.0, points.point(e.1));
    if d2 > params.radii.r3 * params.radii.r3 {
        return true;
    }
    conditional_edge_probability(points, edges_minus_e, e, params)
        >= bernoulli_edge_probability(params) - HOLLEY_TOLERANCE
}

/// Colours given `(ω, E)`: `C_∞` takes `wired`; a finite cluster of size `k`
/// takes colour `i` with probability `α_i^k / Σ_j α_j^k`.
pub fn recolor_clusters<R: Rng + ?Sized>(
    decomp: &ClusterDecomposition,
    alpha: &Proportions,
    wired: Color,
    rng: &mut R,
) -> Vec<Color> {
    let m = alpha.max();
    let mut weights = vec![0.0; alpha.q()];
    let cluster_color: Vec<Color> = (0..decomp.n_clusters())
        .map(|c| {
            if Some(c) == decomp.infinite() {
                return wired;
            }
            let k = decomp.size(c) as i32;
            let mut total = 0.0;
            for (w, a) in weights.iter_mut().zip(alpha.as_slice()) {
                *w = (a / m).powi(k);
                total += *w;
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    return Color(i as u8);
                }
            }
            Color((alpha.q() - 1) as u8)
        })
        .collect();
    (0..decomp.n_points())
        .map(|i| cluster_color[decomp.cluster_of(i)])
        .collect()
}

/// One JSONL record of cluster statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterStats {
    pub n_points: usize,
    pub n_edges: usize,
    pub n_clusters: usize,
    pub infinite_size: usize,
    /// `(size, count)` over finite clusters, ascending by size.
    pub size_histogram: Vec<(usize, usize)>,
    pub infinite_per_cell: Vec<usize>,
}

pub fn cluster_stats(points: &PointConfig, edges: &EdgeSet, decomp: &ClusterDecomposition) -> ClusterStats {
    let mut hist = std::collections::BTreeMap::new();
    for k in decomp.finite_sizes() {
        *hist.entry(k).or_insert(0) += 1;
    }
    ClusterStats {
        n_points: decomp.n_points(),
        n_edges: edges.len(),
        n_clusters: decomp.n_clusters(),
        infinite_size: decomp.infinite_size(),
        size_histogram: hist.into_iter().collect(),
        infinite_per_cell: decomp.infinite_per_cell(points),
    }
}

/// True when every shell point carries `wired`.
pub fn shell_is_wired(bx: &SimBox, points: &PointConfig, colors: &[Color], r4: f64, wired: Color) -> bool {
    points
        .points()
        .zip(colors)
        .all(|(x, &c)| c == wired || bx.dist_to_complement(x) > r4)
}
