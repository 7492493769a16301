//! Birth/death/shift/recolour Metropolis-Hastings and Swendsen-Wang sweeps
//! targeting the wired-boundary Potts measure, with joint `(ω̃, E)` readouts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{decompose_clusters, recolor_clusters, sample_edges, shell_is_wired, EdgeSet};
use crate::model::{
    energy_delta_delete, energy_delta_insert, hamiltonian, point_energy, Color, ColoredConfig,
    ModelParams, ParamError, SimBox,
};
use crate::sampling::RngStream;

#[derive(Debug, thiserror::Error)]
pub enum McmcError {
    #[error("burn_in ({burn_in}) must be smaller than sweeps ({sweeps})")]
    Schedule { sweeps: u64, burn_in: u64 },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("initial configuration has infinite energy or violates the wired shell")]
    InitialState,
    #[error("proposal mix must be non-negative with positive sum")]
    Mix,
}

/// Probabilities of the four local proposals; normalized on use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalMix {
    pub birth: f64,
    pub death: f64,
    pub shift: f64,
    pub recolor: f64,
}

impl Default for ProposalMix {
    fn default() -> Self {
        Self {
            birth: 0.4,
            death: 0.4,
            shift: 0.2,
            recolor: 0.0,
        }
    }
}

impl ProposalMix {
    /// Colour flips only: the point set stays fixed.
    pub fn recolor_only() -> Self {
        Self {
            birth: 0.0,
            death: 0.0,
            shift: 0.0,
            recolor: 1.0,
        }
    }

    fn normalized(self) -> Result<Self, McmcError> {
        let s = self.birth + self.death + self.shift + self.recolor;
        let parts = [self.birth, self.death, self.shift, self.recolor];
        if parts.iter().any(|p| !(*p >= 0.0)) || !(s > 0.0) || !s.is_finite() {
            return Err(McmcError::Mix);
        }
        Ok(Self {
            birth: self.birth / s,
            death: self.death / s,
            shift: self.shift / s,
            recolor: self.recolor / s,
        })
    }
}

/// A concrete proposal from the current state.
#[derive(Debug, Clone, PartialEq)]
pub enum Move {
    Birth { x: Vec<f64>, c: Color },
    Death { i: usize },
    Shift { i: usize, x: Vec<f64> },
    Recolor { i: usize, c: Color },
}

#[derive(Debug, Clone)]
pub struct ChainState {
    params: ModelParams,
    wired: Color,
    mix: ProposalMix,
    shift_radius: f64,
    pub config: ColoredConfig,
    /// Edges of the last readout.
    pub edges: Option<EdgeSet>,
    pub sweeps_done: u64,
    rng: ChaCha8Rng,
}

impl ChainState {
    /// Chain started from the empty configuration.
    pub fn new(
        params: &ModelParams,
        bx: SimBox,
        wired: Color,
        mix: ProposalMix,
        stream: RngStream,
    ) -> Result<Self, McmcError> {
        Self::with_config(params, ColoredConfig::empty(bx), wired, mix, stream)
    }

    pub fn with_config(
        params: &ModelParams,
        mut config: ColoredConfig,
        wired: Color,
        mix: ProposalMix,
        stream: RngStream,
    ) -> Result<Self, McmcError> {
        params.check()?;
        let mix = mix.normalized()?;
        let bx = config.points.sim_box().clone();
        if hamiltonian(&config, params) == f64::INFINITY
            || !shell_is_wired(&bx, &config.points, &config.colors, params.radii.r4, wired)
        {
            return Err(McmcError::InitialState);
        }
        config.points.ensure_index(params.interaction_cutoff());
        Ok(Self {
            params: params.clone(),
            wired,
            mix,
            shift_radius: 0.5 * params.radii.r3,
            config,
            edges: None,
            sweeps_done: 0,
            rng: stream.rng(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn wired(&self) -> Color {
        self.wired
    }

    pub fn set_shift_radius(&mut self, h: f64) {
        assert!(h > 0.0);
        self.shift_radius = h;
    }

    fn bx(&self) -> &SimBox {
        self.config.points.sim_box()
    }

    fn in_shell(&self, x: &[f64]) -> bool {
        self.bx().dist_to_complement(x) <= self.params.radii.r4
    }

    /// `ln` of the unnormalized target density
    /// `z^N Π α_σ 1_{shell wired} e^{-H}`, from the full Hamiltonian.
    pub fn log_density(&self, cfg: &ColoredConfig) -> f64 {
        let bx = cfg.points.sim_box();
        if !shell_is_wired(bx, &cfg.points, &cfg.colors, self.params.radii.r4, self.wired) {
            return f64::NEG_INFINITY;
        }
        let h = hamiltonian(cfg, &self.params);
        let la: f64 = cfg.colors.iter().map(|&c| self.params.alpha.get(c).ln()).sum();
        cfg.len() as f64 * self.params.z.ln() + la - h
    }

    /// `ln q(s → s')` of a move from the current state.
    pub fn log_proposal(&self, m: &Move) -> f64 {
        let n = self.config.len() as f64;
        let d = self.bx().dim() as i32;
        let a = &self.params.alpha;
        match m {
            Move::Birth { c, .. } => self.mix.birth.ln() - self.bx().volume().ln() + a.get(*c).ln(),
            Move::Death { .. } => self.mix.death.ln() - n.ln(),
            Move::Shift { i, x } => {
                let old = self.config.points.point(*i);
                let inside = old.iter().zip(x).all(|(a, b)| (a - b).abs() <= self.shift_radius);
                if !inside {
                    return f64::NEG_INFINITY;
                }
                self.mix.shift.ln() - n.ln() - (2.0 * self.shift_radius).powi(d).ln()
            }
            Move::Recolor { c, .. } => self.mix.recolor.ln() - n.ln() + a.get(*c).ln(),
        }
    }

    /// Metropolis-Hastings acceptance probability of a move, from local
    /// energy differences.
    pub fn acceptance(&self, m: &Move) -> f64 {
        let cfg = &self.config;
        let p = &self.params;
        let n = cfg.len() as f64;
        let zl = p.z * self.bx().volume();
        let ratio = match m {
            Move::Birth { x, c } => {
                if !self.bx().contains(x) || (self.in_shell(x) && *c != self.wired) {
                    return 0.0;
                }
                let dh = energy_delta_insert(cfg, p, x, *c);
                zl * self.mix.death / ((n + 1.0) * self.mix.birth) * (-dh).exp()
            }
            Move::Death { i } => {
                let dh = energy_delta_delete(cfg, p, *i);
                n * self.mix.birth / (zl * self.mix.death) * (-dh).exp()
            }
            Move::Shift { i, x } => {
                let c = cfg.colors[*i];
                if !self.bx().contains(x) || (self.in_shell(x) && c != self.wired) {
                    return 0.0;
                }
                let new = point_energy(cfg, p, x, c, Some(*i));
                if new == f64::INFINITY {
                    return 0.0;
                }
                let old = point_energy(cfg, p, cfg.points.point(*i), c, Some(*i));
                (old - new).exp()
            }
            Move::Recolor { i, c } => {
                let x = cfg.points.point(*i);
                if self.in_shell(x) && *c != self.wired {
                    return 0.0;
                }
                let new = point_energy(cfg, p, x, *c, Some(*i));
                if new == f64::INFINITY {
                    return 0.0;
                }
                let old = point_energy(cfg, p, x, cfg.colors[*i], Some(*i));
                (old - new).exp()
            }
        };
        ratio.min(1.0)
    }

    fn apply(&mut self, m: &Move) {
        match m {
            Move::Birth { x, c } => self.config.push(x, *c),
            Move::Death { i } => self.config.swap_remove(*i),
            Move::Shift { i, x } => self.config.points.set_point(*i, x),
            Move::Recolor { i, c } => self.config.colors[*i] = *c,
        }
    }

    /// The state reached by `m`, and the move that reverses it from there.
    pub fn successor(&self, m: &Move) -> (ChainState, Move) {
        let mut next = self.clone();
        next.apply(m);
        let rev = match m {
            Move::Birth { .. } => Move::Death { i: self.config.len() },
            Move::Death { i } => Move::Birth {
                x: self.config.points.point(*i).to_vec(),
                c: self.config.colors[*i],
            },
            Move::Shift { i, .. } => Move::Shift {
                i: *i,
                x: self.config.points.point(*i).to_vec(),
            },
            Move::Recolor { i, .. } => Move::Recolor {
                i: *i,
                c: self.config.colors[*i],
            },
        };
        (next, rev)
    }

    /// Draws a proposal, or `None` if the drawn kind has no target (e.g. a
    /// death from the empty configuration).
    pub fn propose(&mut self) -> Option<Move> {
        let u: f64 = self.rng.random();
        let n = self.config.len();
        let mix = self.mix;
        if u < mix.birth {
            let bx = self.bx().clone();
            let x = crate::sampling::uniform_in_box(&bx, &mut self.rng);
            let c = self.params.alpha.sample(&mut self.rng);
            return Some(Move::Birth { x, c });
        }
        if n == 0 {
            return None;
        }
        let i = self.rng.random_range(0..n);
        if u < mix.birth + mix.death {
            Some(Move::Death { i })
        } else if u < mix.birth + mix.death + mix.shift {
            let h = self.shift_radius;
            let old = self.config.points.point(i).to_vec();
            let x = old
                .iter()
                .map(|v| v + (2.0 * self.rng.random::<f64>() - 1.0) * h)
                .collect();
            Some(Move::Shift { i, x })
        } else {
            let c = self.params.alpha.sample(&mut self.rng);
            Some(Move::Recolor { i, c })
        }
    }

    /// One local Metropolis-Hastings step; returns whether it was accepted.
    pub fn step_birth_death_move(&mut self) -> bool {
        let Some(m) = self.propose() else {
            return false;
        };
        let a = self.acceptance(&m);
        if a > 0.0 && (a >= 1.0 || self.rng.random::<f64>() < a) {
            self.apply(&m);
            true
        } else {
            false
        }
    }

    /// Edges given colours, then colours given edges.
    pub fn sweep_swendsen_wang(&mut self) {
        let edges = sample_edges(
            &self.config.points,
            Some(&self.config.colors),
            &self.params,
            true,
            &mut self.rng,
        )
        .expect("colours present");
        let decomp = decompose_clusters(&edges);
        self.config.colors = recolor_clusters(&decomp, &self.params.alpha, self.wired, &mut self.rng);
        debug_assert!(edges.respects_colors(&self.config.colors));
    }

    /// Fresh conditional edge draw for the current colouring.
    pub fn readout(&mut self) -> &EdgeSet {
        let edges = sample_edges(
            &self.config.points,
            Some(&self.config.colors),
            &self.params,
            true,
            &mut self.rng,
        )
        .expect("colours present");
        assert!(edges.respects_colors(&self.config.colors), "event A violated");
        let bx = self.bx();
        assert!(
            shell_is_wired(bx, &self.config.points, &self.config.colors, self.params.radii.r4, self.wired),
            "wired shell violated"
        );
        self.edges = Some(edges);
        self.edges.as_ref().expect("just set")
    }

    /// `bd_steps` local steps followed by one Swendsen-Wang sweep.
    pub fn sweep(&mut self, bd_steps: usize) {
        for _ in 0..bd_steps {
            self.step_birth_death_move();
        }
        self.sweep_swendsen_wang();
        self.sweeps_done += 1;
    }

    /// `ln π(s) q(s→s') a(s→s') - ln π(s') q(s'→s) a(s'→s)` for a move, with
    /// `π` from full Hamiltonians. Zero up to rounding when detailed balance
    /// holds; `NaN` flags a one-sided zero flow.
    pub fn detailed_balance_log_residual(&self, m: &Move) -> f64 {
        let fwd_a = self.acceptance(m);
        if let Move::Birth { x, .. } | Move::Shift { x, .. } = m {
            if !self.bx().contains(x) {
                return if fwd_a == 0.0 { 0.0 } else { f64::NAN };
            }
        }
        let (next, rev) = self.successor(m);
        let bwd_a = next.acceptance(&rev);
        if fwd_a == 0.0 && bwd_a == 0.0 {
            return 0.0;
        }
        if fwd_a == 0.0 || bwd_a == 0.0 {
            // allowed only if the target itself vanishes on one side
            let lp = self.log_density(&self.config);
            let lq = next.log_density(&next.config);
            return if (fwd_a == 0.0 && lq == f64::NEG_INFINITY) || (bwd_a == 0.0 && lp == f64::NEG_INFINITY) {
                0.0
            } else {
                f64::NAN
            };
        }
        let fwd = self.log_density(&self.config) + self.log_proposal(m) + fwd_a.ln();
        let bwd = next.log_density(&next.config) + next.log_proposal(&rev) + bwd_a.ln();
        fwd - bwd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub sweeps: u64,
    pub burn_in: u64,
    pub readout_every: u64,
    pub bd_steps_per_sweep: usize,
}

/// Runs one chain, calling `observe(sweep, config, edges)` at every readout
/// after burn-in. Returns the final state (or `None` when `sweeps == 0`).
pub fn run_chain(
    params: &ModelParams,
    bx: &SimBox,
    schedule: &Schedule,
    wired: Color,
    mix: ProposalMix,
    stream: RngStream,
    mut observe: impl FnMut(u64, &ColoredConfig, &EdgeSet),
) -> Result<Option<ChainState>, McmcError> {
    if schedule.sweeps == 0 {
        return Ok(None);
    }
    if schedule.burn_in >= schedule.sweeps {
        return Err(McmcError::Schedule {
            sweeps: schedule.sweeps,
            burn_in: schedule.burn_in,
        });
    }
    let every = schedule.readout_every.max(1);
    let mut st = ChainState::new(params, bx.clone(), wired, mix, stream)?;
    for s in 1..=schedule.sweeps {
        st.sweep(schedule.bd_steps_per_sweep);
        if s > schedule.burn_in && (s - schedule.burn_in) % every == 0 {
            st.readout();
            let edges = st.edges.as_ref().expect("readout sets edges");
            observe(s, &st.config, edges);
        }
    }
    Ok(Some(st))
}

/// Collected readouts of one chain.
pub fn collect_chain(
    params: &ModelParams,
    bx: &SimBox,
    schedule: &Schedule,
    wired: Color,
    mix: ProposalMix,
    stream: RngStream,
) -> Result<Vec<(ColoredConfig, EdgeSet)>, McmcError> {
    let mut out = Vec::new();
    run_chain(params, bx, schedule, wired, mix, stream, |_, c, e| {
        out.push((c.clone(), e.clone()))
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PairPotential, PointConfig, Proportions, Radii};

    fn free_params(z: f64) -> ModelParams {
        ModelParams {
            dim: 2,
            z,
            alpha: Proportions::uniform(2),
            u: 1.0,
            radii: Radii { r1: 0.0, r2: 0.0, r3: 0.5, r4: 0.5 },
            p_star: 0.9,
            n_star: 1,
            phi: PairPotential::Zero,
            psi: PairPotential::Zero,
            psi_superstable: false,
        }
    }

    #[test]
    fn schedule_errors_and_empty_stream() {
        let p = ModelParams::widom_rowlinson(1.0);
        let bx = p.cubic_box(4);
        let st = RngStream::new(1, 0);
        let zero = Schedule { sweeps: 0, burn_in: 0, readout_every: 1, bd_steps_per_sweep: 1 };
        assert!(collect_chain(&p, &bx, &zero, Color::FIRST, ProposalMix::default(), st).unwrap().is_empty());
        let bad = Schedule { sweeps: 10, burn_in: 10, ..zero };
        assert!(matches!(
            collect_chain(&p, &bx, &bad, Color::FIRST, ProposalMix::default(), st),
            Err(McmcError::Schedule { .. })
        ));
        let ok = Schedule { sweeps: 10, burn_in: 4, readout_every: 2, bd_steps_per_sweep: 3 };
        assert_eq!(collect_chain(&p, &bx, &ok, Color::FIRST, ProposalMix::default(), st).unwrap().len(), 3);
    }

    #[test]
    fn infinite_energy_birth_rejected() {
        let p = ModelParams::widom_rowlinson(1.0);
        let bx = p.cubic_box(20);
        let pts = PointConfig::from_points(bx, &[vec![4.0, 4.0]]);
        let cfg = ColoredConfig::new(pts, vec![Color(0)]);
        let st = ChainState::with_config(&p, cfg, Color::FIRST, ProposalMix::default(), RngStream::new(1, 0)).unwrap();
        assert_eq!(st.acceptance(&Move::Birth { x: vec![4.5, 4.0], c: Color(1) }), 0.0);
        // shell birth with the wrong colour
        assert_eq!(st.acceptance(&Move::Birth { x: vec![0.5, 4.0], c: Color(1) }), 0.0);
        assert!(st.acceptance(&Move::Birth { x: vec![0.5, 4.0], c: Color(0) }) > 0.0);
    }

    #[test]
    fn rejects_bad_initial_state() {
        let p = ModelParams::widom_rowlinson(1.0);
        let bx = p.cubic_box(20);
        let pts = PointConfig::from_points(bx.clone(), &[vec![0.5, 4.0]]);
        let cfg = ColoredConfig::new(pts, vec![Color(1)]);
        assert!(ChainState::with_config(&p, cfg, Color::FIRST, ProposalMix::default(), RngStream::new(1, 0)).is_err());
        let pts = PointConfig::from_points(bx, &[vec![4.0, 4.0], vec![4.5, 4.0]]);
        let cfg = ColoredConfig::new(pts, vec![Color(0), Color(1)]);
        assert!(ChainState::with_config(&p, cfg, Color::FIRST, ProposalMix::default(), RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn detailed_balance_audit() {
        let mut p = ModelParams::widom_rowlinson(1.5);
        p.phi = PairPotential::Step { radii: vec![1.0, 1.2], values: vec![2.0, 0.3] };
        p.u = 2.0;
        p.radii.r4 = 1.2;
        p.psi = PairPotential::Step { radii: vec![0.1, 0.6], values: vec![0.5, -0.2] };
        p.psi_superstable = true;
        p.radii.r2 = 0.1;
        let bx = p.cubic_box(10);
        let mix = ProposalMix { birth: 0.3, death: 0.3, shift: 0.2, recolor: 0.2 };
        let mut st = ChainState::new(&p, bx, Color::FIRST, mix, RngStream::new(5, 0)).unwrap();
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for _ in 0..3000 {
            if let Some(m) = st.propose() {
                let r = st.detailed_balance_log_residual(&m);
                assert!(!r.is_nan(), "one-sided flow for {m:?}");
                worst = worst.max(r.abs());
                checked += 1;
            }
            st.step_birth_death_move();
        }
        assert!(checked > 2000);
        assert!(worst < 1e-10, "residual {worst}");
    }

    #[test]
    fn poisson_count_without_interactions() {
        // φ ≡ ψ ≡ 0: Poisson count, with intensity z α_b in the wired shell
        let p = free_params(1.0);
        let bx = SimBox::cubic(2, 4, 0.5);
        let inner = (bx.side(0) - 2.0 * p.radii.r4).powi(2);
        let mean = p.z * (inner + p.alpha.get(Color::FIRST) * (bx.volume() - inner));
        let sched = Schedule { sweeps: 100_000, burn_in: 1000, readout_every: 1, bd_steps_per_sweep: 5 };
        let mut counts = vec![0usize; 30];
        let mut total = 0usize;
        run_chain(&p, &bx, &sched, Color::FIRST, ProposalMix::default(), RngStream::new(3, 0), |_, c, _| {
            counts[c.len().min(29)] += 1;
            total += 1;
        })
        .unwrap();
        // KS distance against the Poisson cdf
        let mut cdf = 0.0;
        let mut emp = 0.0;
        let mut pk = (-mean).exp();
        let mut ks: f64 = 0.0;
        for (k, &c) in counts.iter().enumerate() {
            cdf += pk;
            pk *= mean / (k + 1) as f64;
            emp += c as f64 / total as f64;
            ks = ks.max((cdf - emp).abs());
        }
        // effective samples ≪ readouts because of autocorrelation
        assert!(ks < 0.02, "KS {ks}");
    }

    #[test]
    fn swendsen_wang_examples() {
        let p = ModelParams::widom_rowlinson(1.0);
        let bx = p.cubic_box(20);
        // far-apart interior points: i.i.d. recolouring
        let pts = PointConfig::from_points(bx.clone(), &[vec![3.0, 3.0], vec![5.0, 5.0], vec![0.2, 5.0]]);
        let cfg = ColoredConfig::new(pts, vec![Color(0); 3]);
        let mut st = ChainState::with_config(&p, cfg, Color::FIRST, ProposalMix::recolor_only(), RngStream::new(2, 0)).unwrap();
        let mut ones = 0;
        let runs = 20_000;
        for _ in 0..runs {
            st.sweep_swendsen_wang();
            assert_eq!(st.config.colors[2], Color(0));
            ones += (st.config.colors[0] == Color(0)) as usize;
        }
        let f = ones as f64 / runs as f64;
        assert!((f - 0.5).abs() < 4.0 * (0.25 / runs as f64).sqrt());
        // a chain of overlapping points from the shell inward
        let chain: Vec<Vec<f64>> = (0..8).map(|k| vec![0.5 + 0.6 * k as f64, 4.0]).collect();
        let pts = PointConfig::from_points(bx, &chain);
        let cfg = ColoredConfig::new(pts, vec![Color(0); 8]);
        let mut st = ChainState::with_config(&p, cfg, Color::FIRST, ProposalMix::recolor_only(), RngStream::new(2, 1)).unwrap();
        for _ in 0..100 {
            st.sweep_swendsen_wang();
            assert!(st.config.colors.iter().all(|&c| c == Color(0)));
        }
    }

    #[test]
    fn shell_constraint_holds_along_a_run() {
        let p = ModelParams::widom_rowlinson(3.0);
        let bx = p.cubic_box(8);
        let sched = Schedule { sweeps: 3000, burn_in: 100, readout_every: 1, bd_steps_per_sweep: 20 };
        let mut n = 0;
        run_chain(&p, &bx, &sched, Color(1), ProposalMix::default(), RngStream::new(4, 0), |_, c, e| {
            assert!(shell_is_wired(c.points.sim_box(), &c.points, &c.colors, 1.0, Color(1)));
            assert!(e.respects_colors(&c.colors));
            assert!(hamiltonian(c, &p).is_finite());
            n += 1;
        })
        .unwrap();
        assert_eq!(n, 2900);
    }
}
