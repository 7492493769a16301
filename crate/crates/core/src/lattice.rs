//! Site-bond Bernoulli percolation on boxes of `Z^d`, Erdős-Rényi
//! connectivity and coarse-graining of continuum samples into cells.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::EdgeSet;
use crate::estimators::Estimate;
use crate::model::{PointConfig, SimBox};
use crate::sampling::RngStream;
use crate::unionfind::UnionFind;

/// Open/closed sites of `{0..L-1}^d` and the bond from each site in each
/// positive axis direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeState {
    dim: usize,
    side: usize,
    sites: Vec<bool>,
    /// `bonds[s * dim + k]` joins `s` and `s + e_k`.
    bonds: Vec<bool>,
}

impl LatticeState {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn site_open(&self, s: usize) -> bool {
        self.sites[s]
    }

    pub fn n_open_sites(&self) -> usize {
        self.sites.iter().filter(|&&b| b).count()
    }

    fn stride(&self, k: usize) -> usize {
        self.side.pow((self.dim - 1 - k) as u32)
    }

    fn coord(&self, s: usize, k: usize) -> usize {
        (s / self.stride(k)) % self.side
    }

    /// Centre site `(⌊L/2⌋, …)`.
    pub fn origin(&self) -> usize {
        (0..self.dim).map(|k| (self.side / 2) * self.stride(k)).sum()
    }

    pub fn on_boundary(&self, s: usize) -> bool {
        (0..self.dim).any(|k| {
            let c = self.coord(s, k);
            c == 0 || c == self.side - 1
        })
    }

    /// Open neighbours of `s` through open bonds.
    fn for_each_open_neighbor(&self, s: usize, mut f: impl FnMut(usize)) {
        for k in 0..self.dim {
            let st = self.stride(k);
            let c = self.coord(s, k);
            if c + 1 < self.side && self.bonds[s * self.dim + k] && self.sites[s + st] {
                f(s + st);
            }
            if c > 0 && self.bonds[(s - st) * self.dim + k] && self.sites[s - st] {
                f(s - st);
            }
        }
    }

    /// The open cluster of the origin meets the boundary of the box.
    pub fn origin_reaches_boundary(&self) -> bool {
        let o = self.origin();
        if !self.sites[o] {
            return false;
        }
        let mut seen = vec![false; self.n_sites()];
        seen[o] = true;
        let mut stack = vec![o];
        while let Some(s) = stack.pop() {
            if self.on_boundary(s) {
                return true;
            }
            self.for_each_open_neighbor(s, |t| {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            });
        }
        false
    }
}

/// A state whose site `s` is open iff `u_s < p_site` and bond `b` is open iff
/// `v_b < p_bond`, for uniforms drawn from `rng` in a fixed order. Reusing
/// the stream across `p` couples the states monotonically.
pub fn simulate_site_bond<R: Rng + ?Sized>(
    dim: usize,
    side: usize,
    p_site: f64,
    p_bond: f64,
    rng: &mut R,
) -> LatticeState {
    assert!(side >= 2 && dim >= 1);
    let n = side.pow(dim as u32);
    let sites = (0..n).map(|_| rng.random::<f64>() < p_site).collect();
    let bonds = (0..n * dim).map(|_| rng.random::<f64>() < p_bond).collect();
    LatticeState {
        dim,
        side,
        sites,
        bonds,
    }
}

fn crossing_count(dim: usize, side: usize, p_site: f64, p_bond: f64, runs: usize, stream: RngStream) -> usize {
    (0..runs)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = stream.derive(r as u64).rng();
            simulate_site_bond(dim, side, p_site, p_bond, &mut rng).origin_reaches_boundary()
        })
        .count()
}

/// Finite-box proxy of `θ(p)`: frequency of origin-to-boundary connection with
/// `p_site = p_bond = p`. Run `r` uses `stream.derive(r)`, so estimates at
/// different `p` share random numbers and are monotone in `p`.
pub fn theta_estimate(dim: usize, side: usize, p: f64, runs: usize, stream: RngStream) -> Estimate {
    Estimate::from_bernoulli(crossing_count(dim, side, p, p, runs, stream), runs)
}

/// Site-only variant: all bonds open.
pub fn theta_estimate_site_only(dim: usize, side: usize, p: f64, runs: usize, stream: RngStream) -> Estimate {
    Estimate::from_bernoulli(crossing_count(dim, side, p, 1.0, runs, stream), runs)
}

/// Bracket `[lo, hi]` of the `p` where the finite-box crossing frequency passes
/// `threshold`, after `iters` bisection steps.
pub fn pc_bracket(dim: usize, side: usize, runs: usize, iters: usize, threshold: f64, stream: RngStream) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if theta_estimate(dim, side, mid, runs, stream).mean >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErMode {
    Exact,
    Mc,
    Bound,
    Recursive,
}

impl std::str::FromStr for ErMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Self::Exact),
            "mc" => Ok(Self::Mc),
            "bound" => Ok(Self::Bound),
            "recursive" => Ok(Self::Recursive),
            _ => Err(format!("unknown mode {s}")),
        }
    }
}

pub const ER_EXACT_MAX_N: usize = 7;

/// Number of connected labelled graphs on `n ≤ 7` vertices by edge count.
pub fn connected_graph_counts(n: usize) -> Vec<u64> {
    assert!((1..=ER_EXACT_MAX_N).contains(&n), "exact enumeration needs 1 ≤ n ≤ 7");
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let m = pairs.len();
    let mut counts = vec![0u64; m + 1];
    let full = (1u32 << n) - 1;
    for mask in 0u32..(1u32 << m) {
        let mut adj = [0u32; ER_EXACT_MAX_N];
        for (b, &(i, j)) in pairs.iter().enumerate() {
            if mask >> b & 1 == 1 {
                adj[i] |= 1 << j;
                adj[j] |= 1 << i;
            }
        }
        let mut reach = 1u32;
        loop {
            let mut next = reach;
            for v in 0..n {
                if reach >> v & 1 == 1 {
                    next |= adj[v];
                }
            }
            if next == reach {
                break;
            }
            reach = next;
        }
        if reach == full {
            counts[mask.count_ones() as usize] += 1;
        }
    }
    counts
}

/// `γ(n, p)` by summing over connected graphs.
pub fn er_exact(n: usize, p: f64) -> f64 {
    let counts = connected_graph_counts(n);
    let m = counts.len() - 1;
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * p.powi(k as i32) * (1.0 - p).powi((m - k) as i32))
        .sum()
}

/// `γ(n, p)` from `1 - γ(n) = Σ_{k<n} C(n-1, k-1) γ(k) (1-p)^{k(n-k)}`.
pub fn er_recursive(n: usize, p: f64) -> f64 {
    assert!(n >= 1);
    let mut g = vec![0.0; n + 1];
    g[1] = 1.0;
    for m in 2..=n {
        let mut binom = 1.0; // C(m-1, k-1)
        let mut s = 0.0;
        for k in 1..m {
            s += binom * g[k] * (1.0 - p).powi((k * (m - k)) as i32);
            binom = binom * (m - k) as f64 / k as f64;
        }
        g[m] = 1.0 - s;
    }
    g[n]
}

/// `max(0, 1 - (n-1)(1-p²)^{n-2})`, with the exact values at `n ≤ 2`.
pub fn er_bound(n: usize, p: f64) -> f64 {
    match n {
        0 | 1 => 1.0,
        2 => p,
        _ => {
            let a = 1.0 - p * p;
            if a == 0.0 {
                return 1.0;
            }
            let t = (((n - 1) as f64).ln() + (n - 2) as f64 * a.ln()).exp();
            (1.0 - t).max(0.0)
        }
    }
}

/// Monte Carlo `γ(n, p)` with union-find.
pub fn er_monte_carlo(n: usize, p: f64, samples: usize, stream: RngStream) -> Estimate {
    const BLOCK: usize = 1 << 12;
    let blocks = samples.div_ceil(BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.derive(b as u64).rng();
            let todo = BLOCK.min(samples - b * BLOCK);
            let mut hits = 0;
            for _ in 0..todo {
                let mut uf = UnionFind::new(n);
                let mut comps = n;
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < p && uf.union(i, j) {
                            comps -= 1;
                        }
                    }
                }
                hits += (comps <= 1) as usize;
            }
            hits
        })
        .sum();
    Estimate::from_bernoulli(hits, samples)
}

/// `γ(n, p)` in the requested mode; `samples`/`stream` are used by `Mc` only.
pub fn er_connectivity(n: usize, p: f64, mode: ErMode, samples: usize, stream: RngStream) -> Estimate {
    match mode {
        ErMode::Exact => Estimate::exact(er_exact(n, p)),
        ErMode::Recursive => Estimate::exact(er_recursive(n, p)),
        ErMode::Bound => Estimate::exact(er_bound(n, p)),
        ErMode::Mc => er_monte_carlo(n, p, samples, stream),
    }
}

/// `λ(n, p) = 1 - (1-p)^{n²}`.
pub fn lambda_bound(n: usize, p: f64) -> f64 {
    let nn = (n as f64) * (n as f64);
    -(nn * (-p).ln_1p()).exp_m1()
}

fn nstar_ok(n: usize, p: f64, p_star: f64) -> bool {
    er_bound(n, p) >= p_star.sqrt() && lambda_bound(n, p) >= p_star
}

/// Smallest `n*` such that every `n ≥ n*` has `γ_bound(n, p̄) ≥ √p*` and
/// `λ(n, p̄) ≥ p*`. The analytic `γ` bound makes this conservative.
pub fn compute_nstar(p_bar: f64, p_star: f64) -> usize {
    assert!(p_bar > 0.0 && p_bar <= 1.0, "p_bar must lie in (0, 1]");
    assert!(p_star > 0.0 && p_star < 1.0, "p_star must lie in (0, 1)");
    // both bounds are nondecreasing in n from here on
    let m = ((1.0 / (p_bar * p_bar)).ceil() as usize).max(3);
    let mut hi = m;
    while !nstar_ok(hi, p_bar, p_star) {
        hi = hi.checked_mul(2).expect("n* overflow");
    }
    let mut lo = hi / 2;
    if lo < m {
        lo = m - 1;
    }
    // invariant: !ok(lo) or lo < m, ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if nstar_ok(mid, p_bar, p_star) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut n = hi;
    while n > 1 && nstar_ok(n - 1, p_bar, p_star) {
        n -= 1;
    }
    n
}

/// Good cells and linked face-adjacent cell pairs of `(ω, E)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoarseGrain {
    pub good: Vec<bool>,
    /// Sorted `(a, b)` with `a < b` face-adjacent and joined by an edge.
    pub linked: Vec<(usize, usize)>,
}

impl CoarseGrain {
    pub fn is_linked(&self, a: usize, b: usize) -> bool {
        let k = if a < b { (a, b) } else { (b, a) };
        self.linked.binary_search(&k).is_ok()
    }
}

/// A cell is good when the edges restricted to it have a connected component
/// of at least `n_star` points; two face-adjacent cells are linked when an
/// edge joins them.
pub fn coarse_grain(points: &PointConfig, edges: &EdgeSet, n_star: usize) -> CoarseGrain {
    let bx = points.sim_box();
    let cells: Vec<usize> = points.points().map(|x| bx.cell_of(x)).collect();
    let mut uf = UnionFind::new(points.len());
    let mut linked = Vec::new();
    for (i, j) in edges.pairs() {
        let (a, b) = (cells[i], cells[j]);
        if a == b {
            uf.union(i, j);
        } else {
            let k = (a.min(b), a.max(b));
            if bx.forward_neighbors(k.0).contains(&k.1) {
                linked.push(k);
            }
        }
    }
    linked.sort_unstable();
    linked.dedup();
    let mut good = vec![false; bx.n_cells()];
    for i in 0..points.len() {
        if uf.set_size(i) >= n_star {
            good[cells[i]] = true;
        }
    }
    CoarseGrain { good, linked }
}

/// Draws `samples` pairs of uniform points in random face-adjacent cells (or
/// diagonal ones when `diagonal`) and returns the largest distance seen.
pub fn adjacent_cell_max_distance<R: Rng + ?Sized>(bx: &SimBox, samples: usize, diagonal: bool, rng: &mut R) -> f64 {
    let d = bx.dim();
    let delta = bx.delta();
    let mut worst: f64 = 0.0;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for _ in 0..samples {
        let axis = rng.random_range(0..d);
        for k in 0..d {
            x[k] = rng.random::<f64>() * delta;
            let shift = if diagonal || k == axis { delta } else { 0.0 };
            y[k] = shift + rng.random::<f64>() * delta;
        }
        let dist: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(dist);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn extreme_probabilities() {
        let mut rng = RngStream::new(1, 0).rng();
        let s = simulate_site_bond(2, 8, 1.0, 1.0, &mut rng);
        assert_eq!(s.n_open_sites(), 64);
        assert!(s.origin_reaches_boundary());
        let s = simulate_site_bond(2, 8, 0.0, 1.0, &mut rng);
        assert_eq!(s.n_open_sites(), 0);
        assert!(!s.origin_reaches_boundary());
        assert_eq!(theta_estimate(2, 16, 1.0, 50, RngStream::new(2, 0)).mean, 1.0);
    }

    #[test]
    fn supercritical_and_subcritical() {
        let hi = theta_estimate(2, 64, 0.95, 2000, RngStream::new(3, 0));
        assert!(hi.mean > 0.5);
        let lo = theta_estimate(2, 64, 0.1, 2000, RngStream::new(3, 0));
        assert!(lo.mean < 0.01);
    }

    #[test]
    fn monotone_in_p_and_l() {
        let st = RngStream::new(4, 0);
        let grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let th: Vec<f64> = grid.iter().map(|&p| theta_estimate(2, 16, p, 500, st).mean).collect();
        assert!(th.windows(2).all(|w| w[0] <= w[1]), "{th:?}");
        let a = theta_estimate(2, 16, 0.8, 2000, RngStream::new(5, 0));
        let b = theta_estimate(2, 32, 0.8, 2000, RngStream::new(6, 0));
        assert!(a.mean >= b.mean - 3.0 * (a.stderr.hypot(b.stderr)));
    }

    #[test]
    fn site_only_dominates_mixed() {
        let st = RngStream::new(7, 0);
        let mixed = theta_estimate(2, 24, 0.8, 1000, st);
        let site = theta_estimate_site_only(2, 24, 0.8, 1000, st);
        assert!(site.mean >= mixed.mean);
    }

    #[test]
    fn bracket_is_ordered() {
        let (lo, hi) = pc_bracket(2, 12, 200, 6, 0.5, RngStream::new(8, 0));
        assert!(lo < hi && hi - lo <= 1.0 / 64.0 + 1e-15);
        assert!(lo > 0.3 && hi < 1.0);
    }

    #[test]
    fn er_small_values() {
        assert_eq!(er_exact(1, 0.3), 1.0);
        assert!((er_exact(2, 0.3) - 0.3).abs() < 1e-15);
        assert_eq!(er_exact(3, 0.5), 0.5);
        assert!((er_exact(3, 0.9) - 0.972).abs() < 1e-12);
        assert!((er_bound(3, 0.9) - 0.62).abs() < 1e-12);
        assert_eq!(connected_graph_counts(4).iter().sum::<u64>(), 38);
        for n in 1..=7 {
            for &p in &[0.1, 0.3, 0.5, 0.9] {
                let e = er_exact(n, p);
                assert!((e - er_recursive(n, p)).abs() < 1e-12);
                assert!(er_bound(n, p) <= e + 1e-15);
            }
        }
        assert_eq!(er_bound(5, 1.0), 1.0);
    }

    #[test]
    fn er_mc_agrees() {
        for &p in &[0.3, 0.5, 0.9] {
            let mc = er_monte_carlo(5, p, 200_000, RngStream::new(9, 0));
            let ex = er_exact(5, p);
            assert!((mc.mean - ex).abs() < 4.0 * mc.stderr.max(1e-9), "p={p} mc={mc:?} exact={ex}");
        }
    }

    #[test]
    fn nstar_examples() {
        assert_eq!(compute_nstar(1.0, 0.95), 1);
        assert_eq!(compute_nstar(0.2, 0.9), 206);
        let n = compute_nstar(0.2, 0.9);
        for m in n..n + 200 {
            assert!(nstar_ok(m, 0.2, 0.9));
        }
        assert!(!nstar_ok(n - 1, 0.2, 0.9));
        let mut prev = usize::MAX;
        for k in 1..=20 {
            let n = compute_nstar(k as f64 / 20.0, 0.9);
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn coarse_graining() {
        let p = ModelParams::widom_rowlinson(1.0);
        let bx = p.cubic_box(5);
        let d = p.delta();
        let c = |i: f64, j: f64| vec![(i + 0.5) * d, (j + 0.5) * d];
        let mut pts = vec![c(2.0, 2.0), c(2.0, 2.0), c(2.0, 3.0)];
        pts[1][0] += 0.1 * d;
        let points = PointConfig::from_points(bx.clone(), &pts);
        let none = EdgeSet::empty(vec![false; 3]);
        let cg = coarse_grain(&points, &none, 2);
        assert!(cg.good.iter().all(|g| !g));
        let e = EdgeSet::from_pairs(vec![false; 3], [(0, 1), (1, 2)]);
        let cg = coarse_grain(&points, &e, 2);
        let (a, b) = (bx.cell_of(&pts[0]), bx.cell_of(&pts[2]));
        assert!(cg.good[a] && !cg.good[b]);
        assert!(cg.is_linked(a, b) && cg.is_linked(b, a));
        assert_eq!(cg.linked.len(), 1);
    }

    #[test]
    fn adjacent_cells_within_r3_but_diagonals_not() {
        let p = ModelParams::widom_rowlinson(1.0);
        let bx = p.cubic_box(4);
        let mut rng = RngStream::new(10, 0).rng();
        assert!(adjacent_cell_max_distance(&bx, 100_000, false, &mut rng) <= p.radii.r3);
        // δ√8 > r_3 = δ√5, so corner neighbours can exceed r_3
        assert!(adjacent_cell_max_distance(&bx, 100_000, true, &mut rng) > p.radii.r3);
    }
}
