//! Streaming means with batch-means error bars, per-cell observables, the
//! colour-imbalance identity test and the phase-transition experiment.

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{decompose_clusters, EdgeSet};
use crate::lattice::coarse_grain;
use crate::mcmc::{run_chain, McmcError, ProposalMix, Schedule};
use crate::model::{Color, ColoredConfig, ModelParams, Proportions, SimBox};
use crate::sampling::RngStream;

/// One-sided 99% normal quantile.
pub const Z99_ONE_SIDED: f64 = 2.326_347_874_040_841;
/// Two-sided 99% normal quantile.
pub const Z99_TWO_SIDED: f64 = 2.575_829_303_548_901;

const MAX_BATCHES: usize = 64;

/// Welford running moments plus streaming batch means: at most 64 batches,
/// pairs are merged and the batch size doubled when full.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    n: u64,
    mean: f64,
    m2: f64,
    batch_size: u64,
    batches: Vec<f64>,
    cur_sum: f64,
    cur_len: u64,
}

impl Default for Series {
    fn default() -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            batch_size: 1,
            batches: Vec::with_capacity(MAX_BATCHES),
            cur_sum: 0.0,
            cur_len: 0,
        }
    }
}

impl Series {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        self.cur_sum += x;
        self.cur_len += 1;
        if self.cur_len == self.batch_size {
            self.batches.push(self.cur_sum / self.batch_size as f64);
            self.cur_sum = 0.0;
            self.cur_len = 0;
            if self.batches.len() == MAX_BATCHES {
                let merged: Vec<f64> = self.batches.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
                self.batches = merged;
                self.batch_size *= 2;
            }
        }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn estimate(&self) -> Estimate {
        let n = self.n as f64;
        let var = self.variance();
        let naive = (var / n.max(1.0)).sqrt();
        let b = self.batches.len();
        let se = if b >= 2 {
            let bm = self.batches.iter().sum::<f64>() / b as f64;
            let bv = self.batches.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (b - 1) as f64;
            (bv / b as f64).sqrt().max(if self.batch_size == 1 { naive } else { 0.0 })
        } else {
            naive
        };
        Estimate::from_parts(self.mean, se, var, self.n)
    }
}

/// Mean with standard error and integrated autocorrelation time
/// `τ = n·se² / (2σ²)` (`τ = 1/2` for independent samples).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub tau_int: f64,
    pub n: u64,
    #[serde(skip)]
    variance: f64,
}

impl Estimate {
    fn from_parts(mean: f64, stderr: f64, variance: f64, n: u64) -> Self {
        let tau_int = if variance > 0.0 {
            n as f64 * stderr * stderr / (2.0 * variance)
        } else {
            0.5
        };
        Self {
            mean,
            stderr,
            tau_int,
            n,
            variance,
        }
    }

    pub fn exact(v: f64) -> Self {
        Self {
            mean: v,
            stderr: 0.0,
            tau_int: 0.0,
            n: 0,
            variance: 0.0,
        }
    }

    /// Frequency of `hits` among `n` independent trials.
    pub fn from_bernoulli(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n.max(1) as f64;
        let var = p * (1.0 - p);
        Self::from_parts(p, (var / n.max(1) as f64).sqrt(), var, n as u64)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `n / (2τ)`.
    pub fn effective_samples(&self) -> f64 {
        if self.stderr > 0.0 {
            self.variance / (self.stderr * self.stderr)
        } else {
            self.n as f64
        }
    }

    pub fn lcb99(&self) -> f64 {
        self.mean - Z99_ONE_SIDED * self.stderr
    }

    pub fn ci99(&self) -> (f64, f64) {
        (self.mean - Z99_TWO_SIDED * self.stderr, self.mean + Z99_TWO_SIDED * self.stderr)
    }

    /// Pools independent chains in the given order.
    pub fn combine(parts: &[Estimate]) -> Estimate {
        let total: u64 = parts.iter().map(|e| e.n).sum();
        if total == 0 {
            return Estimate::from_parts(0.0, 0.0, 0.0, 0);
        }
        let nt = total as f64;
        let mut mean = 0.0;
        for e in parts {
            mean += e.n as f64 * e.mean;
        }
        mean /= nt;
        let mut se2 = 0.0;
        let mut var = 0.0;
        for e in parts {
            let w = e.n as f64 / nt;
            se2 += w * w * e.stderr * e.stderr;
            var += w * (e.variance + (e.mean - mean).powi(2));
        }
        Estimate::from_parts(mean, se2.sqrt(), var, total)
    }
}

/// Difference of two estimates from independent runs.
pub fn difference(a: &Estimate, b: &Estimate) -> (f64, f64) {
    (a.mean - b.mean, a.stderr.hypot(b.stderr))
}

/// Per-cell series for one chain with wired colour `b`.
///
/// For each cell `Δ` and colour `i`: `N_{Δ,i}`, `N_{Δ,b} - N_{Δ,i}` and `D_i = (N_{Δ,b} - N_{Δ,i})
/// - N_{Δ↔∞}`. Also `N_{Δ↔∞}` and the good-cell indicator. Aggregates over
/// interior cells (farther than `r_4` from the boundary) are averages per
/// interior cell.
#[derive(Debug, Clone)]
pub struct ObservableAccumulator {
    bx: SimBox,
    q: usize,
    wired: Color,
    n_star: usize,
    interior: Vec<bool>,
    pub count: Vec<Vec<Series>>,
    pub excess: Vec<Vec<Series>>,
    pub defect: Vec<Vec<Series>>,
    pub wired_conn: Vec<Series>,
    pub good: Vec<Series>,
    /// Interior average of `N_{Δ,b} - N_{Δ,i}` per colour `i`.
    pub interior_excess: Vec<Series>,
    pub interior_conn: Series,
    pub interior_defect: Vec<Series>,
    pub readouts: u64,
}

impl ObservableAccumulator {
    pub fn new(params: &ModelParams, bx: &SimBox, wired: Color) -> Self {
        let q = params.q();
        let nc = bx.n_cells();
        let interior = (0..nc).map(|c| bx.cell_is_interior(c, params.radii.r4)).collect();
        let grid = |k: usize| (0..nc).map(|_| vec![Series::new(); k]).collect::<Vec<_>>();
        Self {
            bx: bx.clone(),
            q,
            wired,
            n_star: params.n_star,
            interior,
            count: grid(q),
            excess: grid(q),
            defect: grid(q),
            wired_conn: vec![Series::new(); nc],
            good: vec![Series::new(); nc],
            interior_excess: vec![Series::new(); q],
            interior_conn: Series::new(),
            interior_defect: vec![Series::new(); q],
            readouts: 0,
        }
    }

    pub fn sim_box(&self) -> &SimBox {
        &self.bx
    }

    pub fn wired(&self) -> Color {
        self.wired
    }

    pub fn is_interior(&self, cell: usize) -> bool {
        self.interior[cell]
    }

    pub fn interior_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.interior.len()).filter(|&c| self.interior[c])
    }
}

/// Per-cell tallies of one readout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellTallies {
    /// `counts[cell][colour]`
    pub counts: Vec<Vec<usize>>,
    pub to_infinity: Vec<usize>,
    pub good: Vec<bool>,
}

pub fn tally(cfg: &ColoredConfig, edges: &EdgeSet, q: usize, n_star: usize) -> CellTallies {
    let bx = cfg.points.sim_box();
    let mut counts = vec![vec![0usize; q]; bx.n_cells()];
    for (x, c) in cfg.points.points().zip(&cfg.colors) {
        counts[bx.cell_of(x)][c.index()] += 1;
    }
    let decomp = decompose_clusters(edges);
    let to_infinity = decomp.infinite_per_cell(&cfg.points);
    let good = coarse_grain(&cfg.points, edges, n_star).good;
    CellTallies {
        counts,
        to_infinity,
        good,
    }
}

/// Adds one readout to the accumulator.
pub fn record(acc: &mut ObservableAccumulator, cfg: &ColoredConfig, edges: &EdgeSet) {
    let t = tally(cfg, edges, acc.q, acc.n_star);
    let b = acc.wired.index();
    let n_int = acc.interior.iter().filter(|&&x| x).count().max(1) as f64;
    let mut ex = vec![0.0; acc.q];
    let mut conn = 0.0;
    for cell in 0..acc.bx.n_cells() {
        let nb = t.counts[cell][b] as f64;
        let ninf = t.to_infinity[cell] as f64;
        for i in 0..acc.q {
            let ni = t.counts[cell][i] as f64;
            acc.count[cell][i].push(ni);
            acc.excess[cell][i].push(nb - ni);
            acc.defect[cell][i].push(nb - ni - ninf);
            if acc.interior[cell] {
                ex[i] += nb - ni;
            }
        }
        acc.wired_conn[cell].push(ninf);
        acc.good[cell].push(t.good[cell] as u8 as f64);
        if acc.interior[cell] {
            conn += ninf;
        }
    }
    for i in 0..acc.q {
        acc.interior_excess[i].push(ex[i] / n_int);
        acc.interior_defect[i].push((ex[i] - conn) / n_int);
    }
    acc.interior_conn.push(conn / n_int);
    acc.readouts += 1;
}

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error("colour {i} has proportion {ai} but the wired colour has {ab}; the identity needs equal proportions")]
    NotApplicable { i: usize, ai: f64, ab: f64 },
    #[error(transparent)]
    Mcmc(#[from] McmcError),
}

#[derive(Debug, Clone, Serialize)]
pub struct CellZ {
    pub cell: usize,
    pub interior: bool,
    pub imbalance: Estimate,
    pub connectivity: Estimate,
    pub defect: Estimate,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub color: usize,
    pub cells: Vec<CellZ>,
    pub max_abs_z: f64,
    pub min_effective_samples: f64,
    pub passed: bool,
}

/// Threshold on `|z|` for the per-cell identity test.
pub const IDENTITY_Z_LIMIT: f64 = 4.0;

fn z_score(e: &Estimate) -> f64 {
    if e.stderr > 0.0 {
        e.mean / e.stderr
    } else if e.mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Per-cell z-score of `mean(N_{Δ,b} - N_{Δ,i}) - mean(N_{Δ↔∞})`, pooled over
/// chains in order. Requires `α_i = α_b`.
pub fn identity_test(accs: &[ObservableAccumulator], alpha: &Proportions, i: Color) -> Result<IdentityReport, EstimatorError> {
    let b = accs[0].wired;
    if alpha.get(i) != alpha.get(b) {
        return Err(EstimatorError::NotApplicable {
            i: i.label(),
            ai: alpha.get(i),
            ab: alpha.get(b),
        });
    }
    let pool = |f: &dyn Fn(&ObservableAccumulator) -> Estimate| {
        Estimate::combine(&accs.iter().map(f).collect::<Vec<_>>())
    };
    let nc = accs[0].bx.n_cells();
    let mut cells = Vec::with_capacity(nc);
    for cell in 0..nc {
        let imbalance = pool(&|a| a.excess[cell][i.index()].estimate());
        let conn = pool(&|a| a.wired_conn[cell].estimate());
        let defect = pool(&|a| a.defect[cell][i.index()].estimate());
        cells.push(CellZ {
            cell,
            interior: accs[0].interior[cell],
            imbalance,
            connectivity: conn,
            defect,
            z: z_score(&defect),
        });
    }
    let max_abs_z = cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let min_eff = cells
        .iter()
        .filter(|c| c.interior)
        .map(|c| c.defect.effective_samples())
        .fold(f64::INFINITY, f64::min);
    Ok(IdentityReport {
        color: i.label(),
        passed: max_abs_z < IDENTITY_Z_LIMIT,
        cells,
        max_abs_z,
        min_effective_samples: min_eff,
    })
}

pub fn count_max_colors(alpha: &Proportions) -> usize {
    alpha.count_max_colors()
}

/// Runs `chains` independent chains in parallel; chain `k` uses
/// `stream.derive(k)` and results are returned in chain order.
pub fn run_chains(
    params: &ModelParams,
    bx: &SimBox,
    schedule: &Schedule,
    wired: Color,
    chains: usize,
    stream: RngStream,
) -> Result<Vec<ObservableAccumulator>, McmcError> {
    (0..chains)
        .into_par_iter()
        .map(|k| {
            let mut acc = ObservableAccumulator::new(params, bx, wired);
            run_chain(params, bx, schedule, wired, ProposalMix::default(), stream.derive(k as u64), |_, c, e| {
                record(&mut acc, c, e)
            })?;
            Ok(acc)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationRow {
    pub z: f64,
    /// Smallest `P(N_Δ ≥ n*)` over interior cells.
    pub min_probability: f64,
    pub stderr: f64,
    pub meets_target: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationReport {
    pub n_star: usize,
    pub target: f64,
    pub rows: Vec<OccupationRow>,
    /// Smallest scanned `z` whose row meets `√p*`.
    pub threshold_z: Option<f64>,
}

/// `P(N_Δ ≥ n*)` per interior cell under the point marginal of the wired
/// Potts measure, for each `z` in the grid.
pub fn occupation_test(
    params: &ModelParams,
    bx: &SimBox,
    z_grid: &[f64],
    schedule: &Schedule,
    chains: usize,
    stream: RngStream,
) -> Result<OccupationReport, McmcError> {
    let target = params.p_star.sqrt();
    let mut rows = Vec::new();
    for (zi, &z) in z_grid.iter().enumerate() {
        let p = ModelParams { z, ..params.clone() };
        let n_star = p.n_star;
        let nc = bx.n_cells();
        let interior: Vec<usize> = (0..nc).filter(|&c| bx.cell_is_interior(c, p.radii.r4)).collect();
        let per_chain: Vec<Vec<Series>> = (0..chains)
            .into_par_iter()
            .map(|k| {
                let mut s = vec![Series::new(); nc];
                run_chain(&p, bx, schedule, Color::FIRST, ProposalMix::default(), stream.derive(zi as u64).derive(k as u64), |_, c, _| {
                    let mut counts = vec![0usize; nc];
                    for x in c.points.points() {
                        counts[bx.cell_of(x)] += 1;
                    }
                    for cell in 0..nc {
                        s[cell].push((counts[cell] >= n_star) as u8 as f64);
                    }
                })?;
                Ok(s)
            })
            .collect::<Result<_, McmcError>>()?;
        let mut worst = Estimate::exact(f64::INFINITY);
        for &cell in &interior {
            let e = Estimate::combine(&per_chain.iter().map(|s| s[cell].estimate()).collect::<Vec<_>>());
            if e.mean < worst.mean {
                worst = e;
            }
        }
        if interior.is_empty() {
            worst = Estimate::exact(f64::NAN);
        }
        rows.push(OccupationRow {
            z,
            min_probability: worst.mean,
            stderr: worst.stderr,
            meets_target: worst.mean >= target,
        });
    }
    let threshold_z = rows.iter().find(|r| r.meets_target).map(|r| r.z);
    Ok(OccupationReport {
        n_star: params.n_star,
        target,
        rows,
        threshold_z,
    })
}

/// One CSV row of the experiment output.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    #[serde(rename = "box")]
    pub box_cells: usize,
    pub z: f64,
    pub cell: String,
    pub observable: String,
    pub mean: f64,
    pub stderr: f64,
    pub tau_int: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WiredSummary {
    pub wired: usize,
    /// Colour the excess is measured against.
    pub contrast: usize,
    pub excess: Estimate,
    pub excess_lcb99: f64,
    pub excess_ci99: (f64, f64),
    pub connectivity: Estimate,
    /// Minimum over interior cells of the lower 99% bound of `N_{Δ↔∞}`.
    pub epsilon: f64,
    pub identity_max_abs_z: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub box_cells: usize,
    pub z: f64,
    pub wired: Vec<WiredSummary>,
    /// `|excess_b - excess_b'|` in units of combined stderr, for the first two
    /// maximal colours.
    pub mirror_z: Option<f64>,
    pub breaking: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub max_colors: usize,
    pub points: Vec<PointSummary>,
    /// `z` values with a positive lower bound at every box size.
    pub breaking_z: Vec<f64>,
    /// The smallest `z` has a 99% interval containing 0 at every box size.
    pub small_z_symmetric: bool,
    /// Every mirror comparison within 3 stderr.
    pub mirror_ok: bool,
    pub verdict: String,
    #[serde(skip)]
    pub rows: Vec<ExperimentRow>,
}

fn contrast_color(alpha: &Proportions, b: Color) -> Color {
    if let Some(&c) = alpha.maximal_colors().iter().find(|&&c| c != b) {
        return c;
    }
    alpha
        .colors()
        .filter(|&c| c != b)
        .max_by(|x, y| alpha.get(*x).total_cmp(&alpha.get(*y)).then(y.0.cmp(&x.0)))
        .expect("q ≥ 2")
}

/// For every box size and `z`, runs wired-`b` chains for each maximal colour
/// `b` (only the first when there is a single one) and summarizes the
/// interior excess of `b`.
pub fn phase_transition_experiment(
    params: &ModelParams,
    box_sizes: &[usize],
    z_values: &[f64],
    schedule: &Schedule,
    chains: usize,
    stream: RngStream,
) -> Result<PhaseReport, McmcError> {
    let maxc = params.alpha.maximal_colors();
    let max_colors = maxc.len();
    let wired_list: Vec<Color> = if max_colors >= 2 { maxc.clone() } else { vec![maxc[0]] };
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (bi, &cells) in box_sizes.iter().enumerate() {
        for (zi, &z) in z_values.iter().enumerate() {
            let p = ModelParams { z, ..params.clone() };
            let bx = p.cubic_box(cells);
            let mut wired = Vec::new();
            for &b in &wired_list {
                let tag = ((bi as u64) << 40) | ((zi as u64) << 16) | b.0 as u64;
                let accs = run_chains(&p, &bx, schedule, b, chains, stream.derive(tag))?;
                let c = contrast_color(&p.alpha, b);
                let pool = |f: &dyn Fn(&ObservableAccumulator) -> Estimate| {
                    Estimate::combine(&accs.iter().map(f).collect::<Vec<_>>())
                };
                let excess = pool(&|a| a.interior_excess[c.index()].estimate());
                let conn = pool(&|a| a.interior_conn.estimate());
                let mut eps = f64::INFINITY;
                for cell in 0..bx.n_cells() {
                    let wc = pool(&|a| a.wired_conn[cell].estimate());
                    let imb = pool(&|a| a.count[cell][b.index()].estimate());
                    let other = pool(&|a| a.count[cell][c.index()].estimate());
                    let label = cell.to_string();
                    let mut push = |name: String, e: &Estimate| {
                        rows.push(ExperimentRow {
                            box_cells: cells,
                            z,
                            cell: label.clone(),
                            observable: name,
                            mean: e.mean,
                            stderr: e.stderr,
                            tau_int: e.tau_int,
                        })
                    };
                    push(format!("wired{}:N_{}", b, b), &imb);
                    push(format!("wired{}:N_{}", b, c), &other);
                    push(format!("wired{}:N_inf", b), &wc);
                    if accs[0].is_interior(cell) {
                        eps = eps.min(wc.lcb99());
                    }
                }
                for (name, e) in [("excess", &excess), ("N_inf", &conn)] {
                    rows.push(ExperimentRow {
                        box_cells: cells,
                        z,
                        cell: "interior".into(),
                        observable: format!("wired{}:{}", b, name),
                        mean: e.mean,
                        stderr: e.stderr,
                        tau_int: e.tau_int,
                    });
                }
                let identity = identity_test(&accs, &p.alpha, c).ok().map(|r| r.max_abs_z);
                wired.push(WiredSummary {
                    wired: b.label(),
                    contrast: c.label(),
                    excess,
                    excess_lcb99: excess.lcb99(),
                    excess_ci99: excess.ci99(),
                    connectivity: conn,
                    epsilon: if eps.is_finite() { eps } else { f64::NAN },
                    identity_max_abs_z: identity,
                });
            }
            let mirror_z = (wired.len() >= 2).then(|| {
                let (d, se) = difference(&wired[0].excess, &wired[1].excess);
                if se > 0.0 { d.abs() / se } else if d == 0.0 { 0.0 } else { f64::INFINITY }
            });
            let breaking = wired.iter().all(|w| w.excess_lcb99 > 0.0);
            points.push(PointSummary {
                box_cells: cells,
                z,
                wired,
                mirror_z,
                breaking,
            });
        }
    }
    let breaking_z: Vec<f64> = z_values
        .iter()
        .copied()
        .filter(|&z| points.iter().filter(|p| p.z == z).all(|p| p.breaking))
        .collect();
    let z_min = z_values.iter().copied().fold(f64::INFINITY, f64::min);
    let small_z_symmetric = points.iter().filter(|p| p.z == z_min).all(|p| {
        p.wired.iter().all(|w| w.excess_ci99.0 <= 0.0 && 0.0 <= w.excess_ci99.1)
    });
    let mirror_ok = points.iter().all(|p| p.mirror_z.is_none_or(|m| m < 3.0));
    let verdict = if max_colors < 2 {
        if breaking_z.is_empty() {
            "no positive wired-1 excess; single maximal colour, no multi-measure claim".to_string()
        } else {
            "positive wired-1 excess; single maximal colour, no multi-measure claim".to_string()
        }
    } else if !breaking_z.is_empty() && small_z_symmetric && mirror_ok {
        "symmetry breaking evidence".to_string()
    } else {
        "no symmetry breaking evidence".to_string()
    };
    Ok(PhaseReport {
        max_colors,
        points,
        breaking_z,
        small_z_symmetric,
        mirror_ok,
        verdict,
        rows,
    })
}
