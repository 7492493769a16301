//! Exact enumeration of the joint colour-edge measure on small fixed point
//! sets, and the identities checked against it.
//!
//! For a fixed `ω` with `n ≤ 8` points the table holds every pair `(σ, E)` of
//! positive weight
//!
//! `w(σ, E) = Π_x α_{σ_x} · 1{shell wired} · Π_{e∈E} (1 - e^{-φ_e}) Π_{e∉E} e^{-φ_e} · 1_A(σ, E)`
//!
//! stored as `ln w`. The factor `e^{-H^ψ(ω)}` is constant for fixed `ω` and is
//! kept apart in [`EnumerationTable::ln_psi`].

use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

use crate::coupling::{
    bernoulli_edge_probability, candidate_pairs, conditional_from_decomposition, decompose_clusters,
    edge_probability, ln_gcrcm_weight, shell_flags, EdgeSet, HOLLEY_TOLERANCE,
};
use crate::lattice::{er_bound, er_recursive};
use crate::model::{
    hamiltonian_phi, hamiltonian_psi, Color, ColoredConfig, ModelParams, PairPotential, PointConfig,
    Proportions, Radii, SimBox,
};

pub const MAX_POINTS: usize = 8;
pub const MAX_CANDIDATES: usize = 24;
pub const MAX_ENTRIES: usize = 1 << 22;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("{0} points exceed the enumeration limit of {MAX_POINTS}")]
    TooManyPoints(usize),
    #[error("{0} candidate edges exceed the limit of {MAX_CANDIDATES}")]
    TooManyEdges(usize),
    #[error("more than {MAX_ENTRIES} weighted configurations")]
    TooManyEntries,
    #[error("colour {i} and wired colour {b} have different proportions")]
    NotApplicable { i: usize, b: usize },
    #[error("corpus fixture: {0}")]
    Fixture(String),
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(self) -> f64 {
        self.s + self.c
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

/// For expectations that may vanish: error relative to `max(|a|, |b|, 1)`.
fn scaled_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    /// Colouring in base `q`, point 0 least significant.
    pub coloring: u32,
    /// Bit `k` set when candidate pair `k` is an edge.
    pub mask: u32,
    pub ln_w: f64,
}

#[derive(Debug, Clone)]
pub struct EnumerationTable {
    pub points: PointConfig,
    pub params: ModelParams,
    pub wired: Color,
    /// Pairs with `φ > 0`, as `(i, j, φ)`.
    pub candidates: Vec<(usize, usize, f64)>,
    pub shell: Vec<bool>,
    /// `-H^ψ(ω)`.
    pub ln_psi: f64,
    pub entries: Vec<Entry>,
    ln_max: f64,
}

fn decode(code: u32, n: usize, q: usize) -> Vec<Color> {
    let mut c = code as usize;
    (0..n)
        .map(|_| {
            let v = c % q;
            c /= q;
            Color(v as u8)
        })
        .collect()
}

fn encode(colors: &[Color], q: usize) -> u32 {
    colors.iter().rev().fold(0u32, |acc, c| acc * q as u32 + c.0 as u32)
}

fn ln_edge_probability(phi: f64) -> f64 {
    edge_probability(phi).ln()
}

/// Enumerates every `(σ, E)` of positive weight. Pairs with `φ = 0` are never
/// edges; pairs with `φ = ∞` are forced edges between equal colours and
/// forbid different colours.
pub fn enumerate_joint(points: &PointConfig, params: &ModelParams, wired: Color) -> Result<EnumerationTable, OracleError> {
    let n = points.len();
    if n > MAX_POINTS {
        return Err(OracleError::TooManyPoints(n));
    }
    let candidates = candidate_pairs(points, &params.phi);
    if candidates.len() > MAX_CANDIDATES {
        return Err(OracleError::TooManyEdges(candidates.len()));
    }
    let q = params.q();
    let shell = shell_flags(points, params.radii.r4);
    let ln_alpha: Vec<f64> = params.alpha.as_slice().iter().map(|a| a.ln()).collect();
    let mut entries = Vec::new();
    let mut free = Vec::new();
    for code in 0..(q as u32).pow(n as u32) {
        let sigma = decode(code, n, q);
        if sigma.iter().zip(&shell).any(|(&c, &s)| s && c != wired) {
            continue;
        }
        let mut base: f64 = sigma.iter().map(|c| ln_alpha[c.index()]).sum();
        let mut forced = 0u32;
        free.clear();
        let mut allowed = true;
        for (k, &(i, j, v)) in candidates.iter().enumerate() {
            if sigma[i] != sigma[j] {
                if v == f64::INFINITY {
                    allowed = false;
                    break;
                }
                base -= v;
            } else if v == f64::INFINITY {
                forced |= 1 << k;
            } else {
                free.push((k, ln_edge_probability(v), -v));
            }
        }
        if !allowed {
            continue;
        }
        if entries.len() + (1usize << free.len()) > MAX_ENTRIES {
            return Err(OracleError::TooManyEntries);
        }
        for sub in 0u32..(1u32 << free.len()) {
            let mut mask = forced;
            let mut lw = base;
            for (b, &(k, lp, lq)) in free.iter().enumerate() {
                if sub >> b & 1 == 1 {
                    mask |= 1 << k;
                    lw += lp;
                } else {
                    lw += lq;
                }
            }
            entries.push(Entry {
                coloring: code,
                mask,
                ln_w: lw,
            });
        }
    }
    let ln_max = entries.iter().map(|e| e.ln_w).fold(f64::NEG_INFINITY, f64::max);
    let ln_psi = -hamiltonian_psi(points, &params.psi, &points.sim_box().window());
    Ok(EnumerationTable {
        points: points.clone(),
        params: params.clone(),
        wired,
        candidates,
        shell,
        ln_psi,
        entries,
        ln_max,
    })
}

impl EnumerationTable {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn q(&self) -> usize {
        self.params.q()
    }

    pub fn n_colorings(&self) -> usize {
        self.q().pow(self.n() as u32)
    }

    pub fn colors_of(&self, code: u32) -> Vec<Color> {
        decode(code, self.n(), self.q())
    }

    pub fn edges_of(&self, mask: u32) -> EdgeSet {
        let pairs = self
            .candidates
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &(i, j, _))| (i, j));
        EdgeSet::from_pairs(self.shell.clone(), pairs)
    }

    /// Key of a sampled `(σ, E)`; `None` if `E` uses a non-candidate pair.
    pub fn key_of(&self, colors: &[Color], edges: &EdgeSet) -> Option<(u32, u32)> {
        let mut mask = 0;
        for (i, j) in edges.pairs() {
            let k = self.candidates.iter().position(|&(a, b, _)| (a, b) == (i, j))?;
            mask |= 1 << k;
        }
        Some((encode(colors, self.q()), mask))
    }

    fn scaled(&self, e: &Entry) -> f64 {
        (e.ln_w - self.ln_max).exp()
    }

    /// Sum of weights divided by `e^{ln_max}`.
    pub fn total_scaled(&self) -> f64 {
        let mut s = Sum::default();
        for e in &self.entries {
            s.add(self.scaled(e));
        }
        s.value()
    }

    /// `ln` of the total weight.
    pub fn ln_total(&self) -> f64 {
        if self.entries.is_empty() {
            f64::NEG_INFINITY
        } else {
            self.ln_max + self.total_scaled().ln()
        }
    }

    /// Normalized joint law over `(coloring, mask)`.
    pub fn joint_probs(&self) -> HashMap<(u32, u32), f64> {
        let z = self.total_scaled();
        self.entries
            .iter()
            .map(|e| ((e.coloring, e.mask), self.scaled(e) / z))
            .collect()
    }

    /// Unnormalized colour marginal, scaled by `e^{-ln_max}`, indexed by code.
    pub fn color_marginal_scaled(&self) -> Vec<f64> {
        let mut m = vec![Sum::default(); self.n_colorings()];
        for e in &self.entries {
            m[e.coloring as usize].add(self.scaled(e));
        }
        m.into_iter().map(Sum::value).collect()
    }

    pub fn color_marginal(&self) -> Vec<f64> {
        let m = self.color_marginal_scaled();
        let z = self.total_scaled();
        m.into_iter().map(|v| v / z).collect()
    }

    /// Unnormalized edge marginal, scaled by `e^{-ln_max}`.
    pub fn edge_marginal_scaled(&self) -> HashMap<u32, f64> {
        let mut m: HashMap<u32, Sum> = HashMap::new();
        for e in &self.entries {
            m.entry(e.mask).or_default().add(self.scaled(e));
        }
        m.into_iter().map(|(k, v)| (k, v.value())).collect()
    }

    pub fn edge_marginal(&self) -> HashMap<u32, f64> {
        let z = self.total_scaled();
        self.edge_marginal_scaled().into_iter().map(|(k, v)| (k, v / z)).collect()
    }

    /// `ln μ^φ_ω(E)` over the candidate pairs.
    pub fn ln_mu(&self, mask: u32) -> f64 {
        self.candidates
            .iter()
            .enumerate()
            .map(|(k, &(_, _, v))| if mask >> k & 1 == 1 { ln_edge_probability(v) } else { -v })
            .sum()
    }

    /// `ln(gcrcm weight · μ^φ_ω(E))`.
    pub fn ln_gcrcm_formula(&self, mask: u32) -> f64 {
        let mu = self.ln_mu(mask);
        if mu == f64::NEG_INFINITY {
            return mu;
        }
        let d = decompose_clusters(&self.edges_of(mask));
        ln_gcrcm_weight(&d, &self.params.alpha, self.wired) + mu
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PottsReport {
    /// Largest relative error of the normalized colour marginal.
    pub max_rel_error: f64,
    /// Largest relative error of `Σ_{E compatible} μ(E) = e^{-H^φ}` over colourings.
    pub max_identity_error: f64,
    pub colorings_checked: usize,
}

/// Colour marginal against `1{shell wired} e^{-H^φ(ω̃)} Π α_σ`, with `H^φ`
/// evaluated directly from pair distances.
pub fn verify_potts_projection(t: &EnumerationTable) -> PottsReport {
    let window = t.points.sim_box().window();
    let ln_alpha: Vec<f64> = t.params.alpha.as_slice().iter().map(|a| a.ln()).collect();
    let marg = t.color_marginal_scaled();
    // Σ_E μ(E) per colouring, from the entries with the α-product removed
    let mut mu_sum = vec![Sum::default(); t.n_colorings()];
    for e in &t.entries {
        let la: f64 = t.colors_of(e.coloring).iter().map(|c| ln_alpha[c.index()]).sum();
        mu_sum[e.coloring as usize].add((e.ln_w - la).exp());
    }
    let mut expected_ln = Vec::with_capacity(t.n_colorings());
    let mut max_identity_error: f64 = 0.0;
    for code in 0..t.n_colorings() as u32 {
        let sigma = t.colors_of(code);
        let wired_ok = sigma.iter().zip(&t.shell).all(|(&c, &s)| !s || c == t.wired);
        let cfg = ColoredConfig::new(t.points.clone(), sigma.clone());
        let h = hamiltonian_phi(&cfg, &t.params.phi, &window);
        if wired_ok {
            max_identity_error = max_identity_error.max(rel_err(mu_sum[code as usize].value(), (-h).exp()));
        }
        let la: f64 = sigma.iter().map(|c| ln_alpha[c.index()]).sum();
        expected_ln.push(if wired_ok { la - h } else { f64::NEG_INFINITY });
    }
    let emax = expected_ln.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ez = Sum::default();
    for &l in &expected_ln {
        ez.add((l - emax).exp());
    }
    let ez = ez.value();
    let z = t.total_scaled();
    let mut max_rel_error: f64 = 0.0;
    for code in 0..t.n_colorings() {
        let exp_p = (expected_ln[code] - emax).exp() / ez;
        let got = marg[code] / z;
        max_rel_error = max_rel_error.max(rel_err(got, exp_p));
    }
    PottsReport {
        max_rel_error,
        max_identity_error,
        colorings_checked: t.n_colorings(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GcrcmReport {
    /// Largest relative error of the unnormalized edge marginal against
    /// `gcrcm_weight · μ^φ_ω(E)` over masks with positive weight.
    pub max_rel_error: f64,
    /// Relative error of the total over all `2^m` masks (`None` when `m > 20`).
    pub total_rel_error: Option<f64>,
    pub masks_checked: usize,
}

/// `(ω, E)` marginal against the wired GCRCM weight times `μ^φ_ω`.
pub fn verify_gcrcm_projection(t: &EnumerationTable) -> GcrcmReport {
    let marg = t.edge_marginal_scaled();
    let mut max_rel_error: f64 = 0.0;
    let mut keys: Vec<u32> = marg.keys().copied().collect();
    keys.sort_unstable();
    for &mask in &keys {
        let expected = (t.ln_gcrcm_formula(mask) - t.ln_max).exp();
        max_rel_error = max_rel_error.max(rel_err(marg[&mask], expected));
    }
    let m = t.candidates.len();
    let total_rel_error = (m <= 20).then(|| {
        let mut s = Sum::default();
        for mask in 0u32..(1u32 << m) {
            let l = t.ln_gcrcm_formula(mask);
            if l > f64::NEG_INFINITY {
                s.add((l - t.ln_max).exp());
            }
        }
        rel_err(s.value(), t.total_scaled())
    });
    GcrcmReport {
        max_rel_error,
        total_rel_error,
        masks_checked: keys.len(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellIdentity {
    pub cell: usize,
    /// `E[N_{Δ,b} - N_{Δ,i}]` from the colour marginal.
    pub imbalance: f64,
    /// `E[N_{Δ↔∞}]` from the edge marginal.
    pub connectivity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ColorConnectivityReport {
    pub color: usize,
    pub cells: Vec<CellIdentity>,
    pub max_error: f64,
}

/// `E[N_{Δ,b} - N_{Δ,i}] = E[N_{Δ↔∞}]` for every occupied cell, with `α_i = α_b`.
pub fn verify_color_connectivity_identity(t: &EnumerationTable, i: Color) -> Result<ColorConnectivityReport, OracleError> {
    let b = t.wired;
    if t.params.alpha.get(i) != t.params.alpha.get(b) {
        return Err(OracleError::NotApplicable {
            i: i.label(),
            b: b.label(),
        });
    }
    let bx = t.points.sim_box();
    let cell_of: Vec<usize> = t.points.points().map(|x| bx.cell_of(x)).collect();
    let mut cells: Vec<usize> = cell_of.clone();
    cells.sort_unstable();
    cells.dedup();
    let slot = |c: usize| cells.binary_search(&c).expect("occupied cell");
    let mut lhs = vec![Sum::default(); cells.len()];
    for (code, p) in t.color_marginal().into_iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let sigma = t.colors_of(code as u32);
        let mut diff = vec![0i32; cells.len()];
        for (k, c) in sigma.iter().enumerate() {
            if *c == b {
                diff[slot(cell_of[k])] += 1;
            }
            if *c == i {
                diff[slot(cell_of[k])] -= 1;
            }
        }
        for (s, d) in lhs.iter_mut().zip(&diff) {
            s.add(p * *d as f64);
        }
    }
    let mut rhs = vec![Sum::default(); cells.len()];
    let mut marg: Vec<(u32, f64)> = t.edge_marginal().into_iter().collect();
    marg.sort_unstable_by_key(|e| e.0);
    for (mask, p) in marg {
        let d = decompose_clusters(&t.edges_of(mask));
        let mut cnt = vec![0usize; cells.len()];
        for k in 0..t.n() {
            if d.to_infinity(k) {
                cnt[slot(cell_of[k])] += 1;
            }
        }
        for (s, c) in rhs.iter_mut().zip(&cnt) {
            s.add(p * *c as f64);
        }
    }
    let out: Vec<CellIdentity> = cells
        .iter()
        .zip(lhs.iter().zip(&rhs))
        .map(|(&cell, (l, r))| CellIdentity {
            cell,
            imbalance: l.value(),
            connectivity: r.value(),
        })
        .collect();
    let max_error = out
        .iter()
        .map(|c| scaled_err(c.imbalance, c.connectivity))
        .fold(0.0, f64::max);
    Ok(ColorConnectivityReport {
        color: i.label(),
        cells: out,
        max_error,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalReport {
    /// `(E, e)` pairs with a positive-probability conditioning event.
    pub tuples: usize,
    pub max_abs_error: f64,
    /// Tuples with `|x - y| ≤ r_3`.
    pub holley_tuples: usize,
    pub holley_violations: usize,
    pub p_bar: f64,
}

/// For every edge subset `E` of the candidates and every candidate `e ∉ E`,
/// compares the three-case formula with `M(E+e) / (M(E+e) + M(E))` from the
/// enumerated edge marginal, and checks the Holley bound where it applies.
pub fn verify_conditionals(t: &EnumerationTable) -> ConditionalReport {
    let marg = t.edge_marginal_scaled();
    let m = t.candidates.len();
    assert!(m <= 20, "exhaustive conditional check needs at most 20 candidates");
    let p_bar = bernoulli_edge_probability(&t.params);
    let r3sq = t.params.radii.r3 * t.params.radii.r3;
    let mut rep = ConditionalReport {
        tuples: 0,
        max_abs_error: 0.0,
        holley_tuples: 0,
        holley_violations: 0,
        p_bar,
    };
    for mask in 0u32..(1u32 << m) {
        let d = decompose_clusters(&t.edges_of(mask));
        let w_out = marg.get(&mask).copied().unwrap_or(0.0);
        for (k, &(i, j, v)) in t.candidates.iter().enumerate() {
            if mask >> k & 1 == 1 {
                continue;
            }
            let w_in = marg.get(&(mask | 1 << k)).copied().unwrap_or(0.0);
            if w_in + w_out == 0.0 {
                continue;
            }
            let enumerated = w_in / (w_in + w_out);
            let formula = conditional_from_decomposition(&d, (i, j), v, &t.params.alpha, t.wired);
            rep.tuples += 1;
            rep.max_abs_error = rep.max_abs_error.max((enumerated - formula).abs());
            if t.points.dist2(i, t.points.point(j)) <= r3sq {
                rep.holley_tuples += 1;
                if formula < p_bar - HOLLEY_TOLERANCE || enumerated < p_bar - HOLLEY_TOLERANCE {
                    rep.holley_violations += 1;
                }
            }
        }
    }
    rep
}

/// `ln h_Λ(ω) = ln Σ_E gcrcm_weight · μ^φ_ω(E)` by enumeration over the
/// non-forced candidate pairs.
pub fn ln_h(points: &PointConfig, params: &ModelParams, wired: Color) -> Result<f64, OracleError> {
    let cand = candidate_pairs(points, &params.phi);
    let forced: Vec<(usize, usize)> = cand
        .iter()
        .filter(|c| c.2 == f64::INFINITY)
        .map(|c| (c.0, c.1))
        .collect();
    let free: Vec<(usize, usize, f64)> = cand.iter().copied().filter(|c| c.2 < f64::INFINITY).collect();
    if free.len() > MAX_CANDIDATES {
        return Err(OracleError::TooManyEdges(free.len()));
    }
    let shell = shell_flags(points, params.radii.r4);
    let mut terms = Vec::with_capacity(1 << free.len());
    for sub in 0u32..(1u32 << free.len()) {
        let mut pairs = forced.clone();
        let mut lmu = 0.0;
        for (b, &(i, j, v)) in free.iter().enumerate() {
            if sub >> b & 1 == 1 {
                pairs.push((i, j));
                lmu += ln_edge_probability(v);
            } else {
                lmu -= v;
            }
        }
        let d = decompose_clusters(&EdgeSet::from_pairs(shell.clone(), pairs));
        terms.push(ln_gcrcm_weight(&d, &params.alpha, wired) + lmu);
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = Sum::default();
    for l in terms {
        s.add((l - m).exp());
    }
    Ok(m + s.value().ln())
}

/// `h_Λ(ω) / h_Λ(ω)` is 1; with `added`, returns `h_Λ(ω ∪ x) / h_Λ(ω)`.
pub fn compute_h(points: &PointConfig, params: &ModelParams, wired: Color, added: Option<&[f64]>) -> Result<f64, OracleError> {
    let base = ln_h(points, params, wired)?;
    match added {
        None => Ok(base.exp()),
        Some(x) => {
            let mut more = points.clone();
            more.push(x);
            Ok((ln_h(&more, params, wired)? - base).exp())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PapangelouCheck {
    pub ratio: f64,
    /// Number of non-empty pieces of the partition of `B(x, r_4)`.
    pub k: usize,
    pub piece_sizes: Vec<usize>,
    /// `α_b / q^k · Π_j γ(n_j, p̄)` with exact `γ`.
    pub bound: f64,
    /// Same with the analytic lower bound for `γ`.
    pub analytic_bound: f64,
    pub holds: bool,
}

/// Sizes of the non-empty pieces when the cube around `x` of half-side `r_4`
/// is cut into congruent sub-cubes of diameter `< r_3`; only points within
/// `r_4` of `x` are counted.
pub fn ball_piece_sizes(points: &PointConfig, x: &[f64], radii: &Radii) -> Vec<usize> {
    let d = x.len();
    let per_axis = (2.0 * radii.r4 * (d as f64).sqrt() / radii.r3).floor() as usize + 1;
    let s = 2.0 * radii.r4 / per_axis as f64;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    points.for_each_within(x, radii.r4, |j, _| {
        let p = points.point(j);
        let key: Vec<usize> = (0..d)
            .map(|k| (((p[k] - (x[k] - radii.r4)) / s).floor().max(0.0) as usize).min(per_axis - 1))
            .collect();
        *counts.entry(key).or_insert(0) += 1;
    });
    let mut v: Vec<usize> = counts.into_values().collect();
    v.sort_unstable();
    v
}

/// `h(ω ∪ x) / h(ω) ≥ α_b / q^k · Π_j γ(n_j, p̄)`.
pub fn papangelou_check(points: &PointConfig, x: &[f64], params: &ModelParams, wired: Color) -> Result<PapangelouCheck, OracleError> {
    let ratio = compute_h(points, params, wired, Some(x))?;
    let sizes = ball_piece_sizes(points, x, &params.radii);
    let k = sizes.len();
    let p_bar = bernoulli_edge_probability(params);
    let head = params.alpha.get(wired) / (params.q() as f64).powi(k as i32);
    let bound = head * sizes.iter().map(|&n| er_recursive(n, p_bar)).product::<f64>();
    let analytic_bound = head * sizes.iter().map(|&n| er_bound(n, p_bar)).product::<f64>();
    Ok(PapangelouCheck {
        ratio,
        k,
        piece_sizes: sizes,
        bound,
        analytic_bound,
        holds: ratio > 0.0 && ratio >= bound * (1.0 - 1e-12),
    })
}

/// One fixture instance.
#[derive(Debug, Clone)]
pub struct CorpusInstance {
    pub id: usize,
    pub note: String,
    pub params: ModelParams,
    pub wired: Color,
    pub points: PointConfig,
}

const INSTANCES_CSV: &str = include_str!("../fixtures/corpus/instances.csv");
const POINTS_CSV: &str = include_str!("../fixtures/corpus/points.csv");

fn fixture_params(rec: &csv::StringRecord) -> Result<ModelParams, String> {
    let f = |k: usize| -> Result<f64, String> {
        let s = rec.get(k).ok_or("missing field")?.trim();
        if s == "inf" {
            Ok(f64::INFINITY)
        } else {
            s.parse().map_err(|e| format!("{s}: {e}"))
        }
    };
    let alpha: Vec<f64> = rec[2]
        .split(';')
        .map(|s| s.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let sum: f64 = alpha.iter().sum();
    // thirds do not add to 1 within rounding of the text form
    let alpha: Vec<f64> = alpha.iter().map(|a| a / sum).collect();
    let alpha = Proportions::new(alpha).map_err(|e| e.to_string())?;
    let (u, u_outer, r3, r4) = (f(3)?, f(4)?, f(5)?, f(6)?);
    let phi = match &rec[1] {
        "wr" => PairPotential::HardCore { radius: r3 },
        "soft" => PairPotential::SoftShoulder { radius: r3, height: u },
        "step" => PairPotential::Step {
            radii: vec![r3, r4],
            values: vec![u, u_outer],
        },
        other => return Err(format!("unknown family {other}")),
    };
    let (psi, r2) = match &rec[9] {
        "zero" => (PairPotential::Zero, 0.0),
        "step" => (
            PairPotential::Step {
                radii: vec![0.05, 0.4],
                values: vec![0.5, -0.2],
            },
            0.05,
        ),
        other => return Err(format!("unknown psi {other}")),
    };
    let params = ModelParams {
        dim: 2,
        z: 1.0,
        alpha,
        u,
        radii: Radii { r1: 0.0, r2, r3, r4 },
        p_star: 0.9,
        n_star: 1,
        phi,
        psi_superstable: !matches!(psi, PairPotential::Zero),
        psi,
    };
    params.check().map_err(|e| e.to_string())?;
    Ok(params)
}

/// The 50 fixture instances.
pub fn load_corpus() -> Result<Vec<CorpusInstance>, OracleError> {
    let bad = |e: String| OracleError::Fixture(e);
    let mut pts: HashMap<usize, Vec<Vec<f64>>> = HashMap::new();
    for rec in csv::Reader::from_reader(POINTS_CSV.as_bytes()).records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let id: usize = rec[0].parse().map_err(|_| bad("point id".into()))?;
        let x: Vec<f64> = (1..rec.len())
            .map(|k| rec[k].parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?;
        pts.entry(id).or_default().push(x);
    }
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(INSTANCES_CSV.as_bytes()).records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let id: usize = rec[0].parse().map_err(|_| bad("instance id".into()))?;
        let params = fixture_params(&rec).map_err(|e| bad(format!("instance {id}: {e}")))?;
        let cells: usize = rec[7].parse().map_err(|_| bad("cells".into()))?;
        let label: usize = rec[8].parse().map_err(|_| bad("wired".into()))?;
        let wired = Color::from_label(label).ok_or_else(|| bad("wired colour".into()))?;
        let bx = SimBox::cubic(2, cells, params.delta());
        let list = pts.remove(&id).unwrap_or_default();
        if list.iter().any(|p| !bx.contains(p)) {
            return Err(bad(format!("instance {id}: point outside the box")));
        }
        out.push(CorpusInstance {
            id,
            note: rec[10].to_string(),
            params,
            wired,
            points: PointConfig::from_points(bx, &list),
        });
    }
    Ok(out)
}

/// Identity checks for one instance.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceReport {
    pub id: usize,
    pub note: String,
    pub n: usize,
    pub q: usize,
    pub candidates: usize,
    pub entries: usize,
    pub potts: PottsReport,
    pub gcrcm: GcrcmReport,
    /// `None` when no other colour has the wired colour's proportion.
    pub color_connectivity: Option<ColorConnectivityReport>,
    pub max_error: f64,
    pub passed: bool,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-12;

pub fn verify_instance(inst: &CorpusInstance) -> Result<InstanceReport, OracleError> {
    let t = enumerate_joint(&inst.points, &inst.params, inst.wired)?;
    let potts = verify_potts_projection(&t);
    let gcrcm = verify_gcrcm_projection(&t);
    let other = inst
        .params
        .alpha
        .colors()
        .find(|&c| c != inst.wired && inst.params.alpha.get(c) == inst.params.alpha.get(inst.wired));
    let cc = other.map(|i| verify_color_connectivity_identity(&t, i)).transpose()?;
    let max_error = [
        potts.max_rel_error,
        potts.max_identity_error,
        gcrcm.max_rel_error,
        gcrcm.total_rel_error.unwrap_or(0.0),
        cc.as_ref().map_or(0.0, |c| c.max_error),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(InstanceReport {
        id: inst.id,
        note: inst.note.clone(),
        n: t.n(),
        q: t.q(),
        candidates: t.candidates.len(),
        entries: t.entries.len(),
        potts,
        gcrcm,
        color_connectivity: cc,
        max_error,
        passed: max_error < IDENTITY_TOLERANCE && !t.entries.is_empty(),
    })
}

/// Verifies every corpus instance in parallel; results in corpus order.
pub fn verify_corpus(corpus: &[CorpusInstance]) -> Result<Vec<InstanceReport>, OracleError> {
    corpus.par_iter().map(verify_instance).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RngStream;
    use rand::Rng;

    fn wr() -> ModelParams {
        ModelParams::widom_rowlinson(1.0)
    }

    fn cfg(cells: usize, pts: &[Vec<f64>], p: &ModelParams) -> PointConfig {
        PointConfig::from_points(p.cubic_box(cells), pts)
    }

    #[test]
    fn trivial_tables() {
        let p = wr();
        let t = enumerate_joint(&cfg(10, &[], &p), &p, Color::FIRST).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.ln_total(), 0.0);
        let t = enumerate_joint(&cfg(10, &[vec![2.2, 2.2]], &p), &p, Color::FIRST).unwrap();
        let m = t.color_marginal();
        assert!((m[0] - 0.5).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15);
        let t = enumerate_joint(&cfg(10, &[vec![0.3, 2.2]], &p), &p, Color::FIRST).unwrap();
        assert_eq!(t.color_marginal(), vec![1.0, 0.0]);
    }

    #[test]
    fn size_limits() {
        let p = wr();
        let pts: Vec<Vec<f64>> = (0..9).map(|k| vec![0.3 + 0.4 * k as f64, 2.0]).collect();
        assert!(matches!(enumerate_joint(&cfg(10, &pts, &p), &p, Color::FIRST), Err(OracleError::TooManyPoints(9))));
        let dense: Vec<Vec<f64>> = (0..8).map(|k| vec![2.0 + 0.01 * k as f64, 2.0]).collect();
        let soft = ModelParams {
            phi: PairPotential::SoftShoulder { radius: 1.0, height: 1.0 },
            u: 1.0,
            ..wr()
        };
        // 28 candidate pairs
        assert!(matches!(
            enumerate_joint(&cfg(10, &dense, &soft), &soft, Color::FIRST),
            Err(OracleError::TooManyEdges(28))
        ));
    }

    #[test]
    fn hard_core_triangle_is_monochromatic() {
        let p = ModelParams {
            alpha: Proportions::new(vec![0.4, 0.4, 0.2]).unwrap(),
            ..wr()
        };
        let pts = vec![vec![2.0, 2.0], vec![2.5, 2.0], vec![2.25, 2.4]];
        let t = enumerate_joint(&cfg(10, &pts, &p), &p, Color::FIRST).unwrap();
        let m = t.color_marginal();
        let z = 2.0 * 0.4f64.powi(3) + 0.2f64.powi(3);
        for (code, &v) in m.iter().enumerate() {
            let s = t.colors_of(code as u32);
            if s.iter().all(|&c| c == s[0]) {
                assert!((v - p.alpha.get(s[0]).powi(3) / z).abs() < 1e-15);
            } else {
                assert_eq!(v, 0.0);
            }
        }
        let r = verify_potts_projection(&t);
        assert!(r.max_rel_error < 1e-12 && r.max_identity_error < 1e-12);
    }

    #[test]
    fn zero_phi_gives_product_law() {
        let p = ModelParams {
            phi: PairPotential::Zero,
            alpha: Proportions::new(vec![0.7, 0.3]).unwrap(),
            ..wr()
        };
        let pts = vec![vec![2.0, 2.0], vec![2.5, 2.0]];
        let t = enumerate_joint(&cfg(10, &pts, &p), &p, Color::FIRST).unwrap();
        assert!(t.candidates.is_empty());
        let m = t.color_marginal();
        assert!((m[0] - 0.49).abs() < 1e-15 && (m[3] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn identity_examples() {
        let p = wr();
        let t = enumerate_joint(&cfg(10, &[vec![2.2, 2.2]], &p), &p, Color::FIRST).unwrap();
        let r = verify_color_connectivity_identity(&t, Color(1)).unwrap();
        assert_eq!((r.cells[0].imbalance, r.cells[0].connectivity), (0.0, 0.0));
        let t = enumerate_joint(&cfg(10, &[vec![0.3, 2.2]], &p), &p, Color::FIRST).unwrap();
        let r = verify_color_connectivity_identity(&t, Color(1)).unwrap();
        assert_eq!((r.cells[0].imbalance, r.cells[0].connectivity), (1.0, 1.0));
        let chain: Vec<Vec<f64>> = (0..4).map(|k| vec![0.5 + 0.8 * k as f64, 2.2]).collect();
        let t = enumerate_joint(&cfg(10, &chain, &p), &p, Color::FIRST).unwrap();
        assert!(verify_color_connectivity_identity(&t, Color(1)).unwrap().max_error < 1e-12);
        let asym = ModelParams {
            alpha: Proportions::new(vec![0.6, 0.4]).unwrap(),
            ..wr()
        };
        let t = enumerate_joint(&cfg(10, &chain, &asym), &asym, Color::FIRST).unwrap();
        assert!(verify_color_connectivity_identity(&t, Color(1)).is_err());
    }

    #[test]
    fn corpus_loads_with_fifty_instances() {
        let c = load_corpus().unwrap();
        assert_eq!(c.len(), 50);
        assert!(c.iter().all(|i| i.points.len() <= MAX_POINTS));
        assert!(c.iter().any(|i| i.params.q() == 3) && c.iter().any(|i| i.params.q() == 2));
        assert!(c.iter().any(|i| i.params.u.is_finite()) && c.iter().any(|i| i.params.u.is_infinite()));
        assert!(c.iter().any(|i| i.params.alpha.count_max_colors() == 1));
        let shell = |i: &CorpusInstance| shell_flags(&i.points, i.params.radii.r4).iter().any(|&s| s);
        assert!(c.iter().any(shell) && c.iter().any(|i| !i.points.is_empty() && !shell(i)));
    }

    #[test]
    fn empty_configuration_h_ratio() {
        let p = wr();
        let empty = cfg(10, &[], &p);
        assert!((compute_h(&empty, &p, Color::FIRST, None).unwrap() - 1.0).abs() < 1e-15);
        let r = compute_h(&empty, &p, Color::FIRST, Some(&[2.2, 2.2])).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        let r = compute_h(&empty, &p, Color::FIRST, Some(&[0.2, 2.2])).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn papangelou_on_random_instances() {
        let p = ModelParams {
            phi: PairPotential::Step { radii: vec![1.0, 1.2], values: vec![0.8, 0.3] },
            u: 0.8,
            radii: Radii { r1: 0.0, r2: 0.0, r3: 1.0, r4: 1.2 },
            alpha: Proportions::new(vec![0.4, 0.4, 0.2]).unwrap(),
            ..wr()
        };
        let bx = p.cubic_box(10);
        let mut rng = RngStream::new(21, 0).rng();
        let side = bx.side(0);
        for _ in 0..100 {
            let n = rng.random_range(0..6);
            let c = [rng.random::<f64>() * side, rng.random::<f64>() * side];
            let mut pts = Vec::new();
            while pts.len() < n {
                let x = vec![c[0] + rng.random_range(-1.0..1.0), c[1] + rng.random_range(-1.0..1.0)];
                if bx.contains(&x) {
                    pts.push(x);
                }
            }
            let omega = PointConfig::from_points(bx.clone(), &pts);
            let x = vec![(c[0] + 0.3).clamp(0.0, side), c[1]];
            let chk = papangelou_check(&omega, &x, &p, Color::FIRST).unwrap();
            assert!(chk.ratio > 0.0);
            assert!(chk.holds, "{chk:?}");
            assert!(chk.analytic_bound <= chk.bound + 1e-15);
        }
    }
}
