//! Command-line front end. Every run that writes files also writes
//! `PREFIX.manifest.json`; `cpotts replay` reruns it with identical output.

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::coupling::{bernoulli_edge_probability, cluster_stats, decompose_clusters};
use crate::estimators::{phase_transition_experiment, record, Estimate, ObservableAccumulator};
use crate::lattice::{er_connectivity, theta_estimate, ErMode, ER_EXACT_MAX_N};
use crate::mcmc::{run_chain, ProposalMix, Schedule};
use crate::model::{load_params, validate_assumptions, Color, ModelParams, Proportions};
use crate::oracle::{enumerate_joint, load_corpus, verify_conditionals, verify_corpus};
use crate::sampling::RngStream;

/// Environment variable with the worker thread count.
pub const THREADS_ENV: &str = "CPOTTS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cpotts", version, about = "Continuum Potts and random cluster toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Check the model assumptions and print their margins.
    Validate(ValidateArgs),
    /// Run wired-boundary chains and write readouts and per-cell averages.
    Sample(SampleArgs),
    /// Check the enumeration identities on the built-in corpus.
    Verify(VerifyArgs),
    /// Estimate the site-bond percolation probability on a grid of p.
    Percolation(PercolationArgs),
    /// Tabulate Erdős–Rényi connectivity probabilities.
    Ergraph(ErgraphArgs),
    /// Scan activities and box sizes for symmetry breaking.
    Experiment(ExperimentArgs),
    /// Rerun a manifest written by an earlier run.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Built-in parameter set (`wr`); the default when no config is given.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// TOML model file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Colour proportions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Boundary colour (1-based).
    #[arg(long, default_value_t = 1)]
    pub wired: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 2000)]
    pub sweeps: u64,
    #[arg(long, default_value_t = 200)]
    pub burn_in: u64,
    #[arg(long, default_value_t = 1)]
    pub readout_every: u64,
    /// Birth/death/shift steps per sweep.
    #[arg(long, default_value_t = 100)]
    pub bd_steps: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl ChainArgs {
    fn schedule(&self) -> Schedule {
        Schedule {
            sweeps: self.sweeps,
            burn_in: self.burn_in,
            readout_every: self.readout_every,
            bd_steps_per_sweep: self.bd_steps,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub z: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub z: Option<f64>,
    #[arg(long, default_value_t = 15)]
    pub box_cells: usize,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value = "sample")]
    pub out: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Also write the full report as JSON to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PercolationArgs {
    #[arg(long = "d", default_value_t = 2)]
    pub dim: usize,
    /// Side length of the lattice box.
    #[arg(long = "L", default_value_t = 21)]
    pub side: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub p_grid: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output prefix; CSV goes to stdout when absent.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ErgraphArgs {
    #[arg(long, default_value_t = 7)]
    pub n_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    pub p_grid: Vec<f64>,
    /// Any of exact, recursive, bound, mc.
    #[arg(long, value_delimiter = ',', default_value = "exact,bound,mc")]
    pub modes: Vec<String>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Activities to scan.
    #[arg(long, value_delimiter = ',', default_value = "0.05,8")]
    pub z: Vec<f64>,
    /// Box sizes in cells per axis.
    #[arg(long, value_delimiter = ',', default_value = "15")]
    pub box_cells: Vec<usize>,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value = "experiment")]
    pub out: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this prefix instead of the recorded one.
    #[arg(long)]
    pub out: Option<String>,
}

/// Everything needed to rerun a command bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: Command,
    /// Resolved model as TOML, so that a later edit of `--config` does not
    /// change a replay. TOML keeps infinite values.
    pub params: Option<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failed(String),
}

type CliResult<T> = Result<T, CliError>;

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl ModelArgs {
    fn resolve(&self, z: Option<f64>) -> CliResult<ModelParams> {
        let mut p = match (&self.preset, &self.config) {
            (_, Some(path)) => load_params(path).map_err(usage)?,
            (Some(name), None) => ModelParams::preset(name, 1.0).ok_or_else(|| usage(format!("unknown preset {name}")))?,
            (None, None) => ModelParams::widom_rowlinson(1.0),
        };
        if let Some(a) = &self.alpha {
            p.alpha = Proportions::new(a.clone()).map_err(usage)?;
        }
        if let Some(z) = z {
            p.z = z;
        }
        p.check().map_err(usage)?;
        self.wired_color(&p)?;
        Ok(p)
    }

    fn wired_color(&self, p: &ModelParams) -> CliResult<Color> {
        Color::from_label(self.wired)
            .filter(|c| c.index() < p.q())
            .ok_or_else(|| usage(format!("--wired must be between 1 and {}", p.q())))
    }
}

fn create(path: &str) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| failed(format!("{path}: {e}")))
}

fn write_manifest(prefix: &str, command: &Command, params: Option<&ModelParams>, outputs: Vec<String>) -> CliResult<()> {
    let m = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.clone(),
        params: params.map(|p| toml::to_string(p)).transpose().map_err(failed)?,
        outputs,
    };
    let mut w = create(&format!("{prefix}.manifest.json"))?;
    serde_json::to_writer_pretty(&mut w, &m).map_err(failed)?;
    writeln!(w).map_err(failed)?;
    w.flush().map_err(failed)
}

fn fmt_margin(v: f64) -> String {
    if v.is_finite() {
        format!("{:.6e}", v + 0.0)
    } else {
        v.to_string()
    }
}

fn run_validate(a: &ValidateArgs, _fixed: Option<ModelParams>) -> CliResult<()> {
    let p = a.model.resolve(a.z)?;
    let rep = validate_assumptions(&p);
    println!("{:<9} {:<6} {:>14}  condition", "check", "result", "margin");
    for c in &rep.checks {
        println!(
            "{:<9} {:<6} {:>14}  {}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            fmt_margin(c.margin),
            c.condition
        );
    }
    println!("delta = {}", p.delta());
    println!("p_bar = {}", bernoulli_edge_probability(&p));
    println!("n_star = {}", p.n_star);
    if rep.all_passed() {
        Ok(())
    } else {
        Err(failed("assumption check failed"))
    }
}

#[derive(Serialize)]
struct Readout<'a> {
    chain: usize,
    sweep: u64,
    n: usize,
    counts: &'a [usize],
    to_infinity: usize,
    clusters: usize,
    largest_finite: usize,
    edges: usize,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    cell: usize,
    interior: bool,
    observable: &'a str,
    mean: f64,
    stderr: f64,
    tau_int: f64,
}

fn run_sample(command: &Command, a: &SampleArgs, fixed: Option<ModelParams>) -> CliResult<()> {
    let p = match fixed {
        Some(p) => p,
        None => a.model.resolve(a.z)?,
    };
    let wired = a.model.wired_color(&p)?;
    let bx = p.cubic_box(a.box_cells);
    let sched = a.chain.schedule();
    let stream = RngStream::new(a.chain.seed, 0);
    let q = p.q();
    let per_chain: Vec<(ObservableAccumulator, Vec<String>)> = (0..a.chain.chains)
        .into_par_iter()
        .map(|k| {
            let mut acc = ObservableAccumulator::new(&p, &bx, wired);
            let mut lines = Vec::new();
            run_chain(&p, &bx, &sched, wired, ProposalMix::default(), stream.derive(k as u64), |s, cfg, edges| {
                record(&mut acc, cfg, edges);
                let d = decompose_clusters(edges);
                let st = cluster_stats(&cfg.points, edges, &d);
                let mut counts = vec![0usize; q];
                for c in &cfg.colors {
                    counts[c.index()] += 1;
                }
                let r = Readout {
                    chain: k,
                    sweep: s,
                    n: cfg.len(),
                    counts: &counts,
                    to_infinity: d.infinite_size(),
                    clusters: d.n_clusters(),
                    largest_finite: st.size_histogram.last().map_or(0, |h| h.0),
                    edges: st.n_edges,
                };
                lines.push(serde_json::to_string(&r).expect("readout serializes"));
            })?;
            Ok((acc, lines))
        })
        .collect::<Result<_, crate::mcmc::McmcError>>()
        .map_err(failed)?;

    let readouts = format!("{}.readouts.jsonl", a.out);
    let mut w = create(&readouts)?;
    for (_, lines) in &per_chain {
        for l in lines {
            writeln!(w, "{l}").map_err(failed)?;
        }
    }
    w.flush().map_err(failed)?;

    let summary = format!("{}.summary.csv", a.out);
    let mut csv = csv::Writer::from_writer(create(&summary)?);
    let accs: Vec<&ObservableAccumulator> = per_chain.iter().map(|(a, _)| a).collect();
    let pooled = |f: &dyn Fn(&ObservableAccumulator) -> Estimate| Estimate::combine(&accs.iter().map(|a| f(a)).collect::<Vec<_>>());
    let names: Vec<String> = (1..=q).map(|i| format!("N_{i}")).collect();
    for cell in 0..bx.n_cells() {
        let interior = accs[0].is_interior(cell);
        for (i, name) in names.iter().enumerate() {
            let e = pooled(&|acc| acc.count[cell][i].estimate());
            csv.serialize(SummaryRow { cell, interior, observable: name, mean: e.mean, stderr: e.stderr, tau_int: e.tau_int })
                .map_err(failed)?;
        }
        let e = pooled(&|acc| acc.wired_conn[cell].estimate());
        csv.serialize(SummaryRow { cell, interior, observable: "N_inf", mean: e.mean, stderr: e.stderr, tau_int: e.tau_int })
            .map_err(failed)?;
    }
    csv.flush().map_err(failed)?;
    println!("{} readouts from {} chains", per_chain.iter().map(|c| c.1.len()).sum::<usize>(), per_chain.len());
    write_manifest(&a.out, command, Some(&p), vec![readouts, summary])
}

fn run_verify(a: &VerifyArgs) -> CliResult<()> {
    let corpus = load_corpus().map_err(failed)?;
    let reports = verify_corpus(&corpus).map_err(failed)?;
    println!("{:>3} {:>2} {:>2} {:>3} {:>8} {:>10} {:>10}  {:<6} note", "id", "n", "q", "m", "entries", "max_err", "cond_err", "result");
    let mut ok = true;
    let mut conds = Vec::new();
    for (inst, r) in corpus.iter().zip(&reports) {
        let cond = if inst.points.len() <= 6 {
            let t = enumerate_joint(&inst.points, &inst.params, inst.wired).map_err(failed)?;
            let c = verify_conditionals(&t);
            Some(c)
        } else {
            None
        };
        let cond_ok = cond.as_ref().is_none_or(|c| c.max_abs_error < 1e-12 && c.holley_violations == 0);
        let pass = r.passed && cond_ok;
        ok &= pass;
        println!(
            "{:>3} {:>2} {:>2} {:>3} {:>8} {:>10.2e} {:>10}  {:<6} {}",
            r.id,
            r.n,
            r.q,
            r.candidates,
            r.entries,
            r.max_error,
            cond.as_ref().map_or("-".to_string(), |c| format!("{:.2e}", c.max_abs_error)),
            if pass { "pass" } else { "FAIL" },
            r.note
        );
        conds.push(cond);
    }
    println!("{} of {} instances pass", reports.iter().zip(&conds).filter(|(r, c)| r.passed && c.as_ref().is_none_or(|c| c.max_abs_error < 1e-12 && c.holley_violations == 0)).count(), reports.len());
    if let Some(path) = &a.report {
        let v = serde_json::json!({ "instances": reports, "conditionals": conds });
        let mut w = File::create(path).map(BufWriter::new).map_err(failed)?;
        serde_json::to_writer_pretty(&mut w, &v).map_err(failed)?;
        writeln!(w).map_err(failed)?;
    }
    if ok {
        Ok(())
    } else {
        Err(failed("corpus verification failed"))
    }
}

fn csv_sink(out: &Option<String>, name: &str) -> CliResult<(csv::Writer<Box<dyn Write>>, Option<String>)> {
    match out {
        Some(prefix) => {
            let path = format!("{prefix}.{name}.csv");
            let w: Box<dyn Write> = Box::new(create(&path)?);
            Ok((csv::Writer::from_writer(w), Some(path)))
        }
        None => Ok((csv::Writer::from_writer(Box::new(std::io::stdout())), None)),
    }
}

fn run_percolation(command: &Command, a: &PercolationArgs) -> CliResult<()> {
    if a.dim == 0 || a.side < 2 || a.runs == 0 {
        return Err(usage("need --d ≥ 1, --L ≥ 2 and --runs ≥ 1"));
    }
    if a.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(usage("--p-grid values must lie in [0, 1]"));
    }
    let (mut w, path) = csv_sink(&a.out, "theta")?;
    w.write_record(["p", "theta", "stderr"]).map_err(failed)?;
    let stream = RngStream::new(a.seed, 0);
    for &p in &a.p_grid {
        let e = theta_estimate(a.dim, a.side, p, a.runs, stream);
        w.write_record([p.to_string(), e.mean.to_string(), e.stderr.to_string()]).map_err(failed)?;
    }
    w.flush().map_err(failed)?;
    match (&a.out, path) {
        (Some(prefix), Some(path)) => write_manifest(prefix, command, None, vec![path]),
        _ => Ok(()),
    }
}

fn run_ergraph(command: &Command, a: &ErgraphArgs) -> CliResult<()> {
    let modes: Vec<ErMode> = a.modes.iter().map(|m| m.parse::<ErMode>().map_err(usage)).collect::<CliResult<_>>()?;
    if modes.contains(&ErMode::Exact) && a.n_max > ER_EXACT_MAX_N {
        return Err(usage(format!("exact mode supports n ≤ {ER_EXACT_MAX_N}")));
    }
    if a.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(usage("--p-grid values must lie in [0, 1]"));
    }
    let (mut w, path) = csv_sink(&a.out, "connectivity")?;
    w.write_record(["n", "p", "mode", "gamma", "stderr"]).map_err(failed)?;
    let stream = RngStream::new(a.seed, 0);
    for n in 1..=a.n_max {
        for (pi, &p) in a.p_grid.iter().enumerate() {
            for (mode, name) in modes.iter().zip(&a.modes) {
                let s = stream.derive(((n as u64) << 32) | pi as u64);
                let e = er_connectivity(n, p, *mode, a.samples, s);
                w.write_record([n.to_string(), p.to_string(), name.clone(), e.mean.to_string(), e.stderr.to_string()])
                    .map_err(failed)?;
            }
        }
    }
    w.flush().map_err(failed)?;
    match (&a.out, path) {
        (Some(prefix), Some(path)) => write_manifest(prefix, command, None, vec![path]),
        _ => Ok(()),
    }
}

fn run_experiment(command: &Command, a: &ExperimentArgs, fixed: Option<ModelParams>) -> CliResult<()> {
    let p = match fixed {
        Some(p) => p,
        None => a.model.resolve(None)?,
    };
    if a.z.is_empty() || a.box_cells.is_empty() {
        return Err(usage("--z and --box-cells need at least one value"));
    }
    let rep = phase_transition_experiment(&p, &a.box_cells, &a.z, &a.chain.schedule(), a.chain.chains, RngStream::new(a.chain.seed, 0))
        .map_err(failed)?;
    let rows = format!("{}.csv", a.out);
    let mut w = csv::Writer::from_writer(create(&rows)?);
    for r in &rep.rows {
        w.serialize(r).map_err(failed)?;
    }
    w.flush().map_err(failed)?;
    let summary = format!("{}.summary.json", a.out);
    let mut s = create(&summary)?;
    serde_json::to_writer_pretty(&mut s, &rep).map_err(failed)?;
    writeln!(s).map_err(failed)?;
    s.flush().map_err(failed)?;
    println!("{}", rep.verdict);
    write_manifest(&a.out, command, Some(&p), vec![rows, summary])
}

fn run_replay(a: &ReplayArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| usage(format!("{}: {e}", a.manifest.display())))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(usage)?;
    let fixed = m.params.as_deref().map(toml::from_str::<ModelParams>).transpose().map_err(usage)?;
    let mut command = m.command;
    if let Some(out) = &a.out {
        match &mut command {
            Command::Sample(s) => s.out = out.clone(),
            Command::Experiment(e) => e.out = out.clone(),
            Command::Percolation(p) => p.out = Some(out.clone()),
            Command::Ergraph(g) => g.out = Some(out.clone()),
            _ => {}
        }
    }
    if matches!(command, Command::Replay(_)) {
        return Err(usage("a manifest cannot replay another manifest"));
    }
    dispatch(&command, fixed)
}

fn dispatch(command: &Command, fixed: Option<ModelParams>) -> CliResult<()> {
    match command {
        Command::Validate(a) => run_validate(a, fixed),
        Command::Sample(a) => run_sample(command, a, fixed),
        Command::Verify(a) => run_verify(a),
        Command::Percolation(a) => run_percolation(command, a),
        Command::Ergraph(a) => run_ergraph(command, a),
        Command::Experiment(a) => run_experiment(command, a, fixed),
        Command::Replay(a) => run_replay(a),
    }
}

fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 when a
/// check or run fails, 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_threads();
    match dispatch(&cli.command, None) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

/// Reads a manifest.
pub fn read_manifest(path: &Path) -> Result<RunManifest, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}
