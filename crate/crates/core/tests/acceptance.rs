//! Acceptance run. Prints one line per criterion and exits non-zero if any
//! criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use cpotts::coupling::{
    bernoulli_edge_probability, candidate_pairs, conditional_edge_probability, holley_pointwise_check, EdgeSet,
    shell_flags, HOLLEY_TOLERANCE,
};
use cpotts::estimators::{identity_test, phase_transition_experiment, run_chains};
use cpotts::lattice::{adjacent_cell_max_distance, er_bound, er_exact, er_monte_carlo, theta_estimate};
use cpotts::mcmc::{ChainState, ProposalMix, Schedule};
use cpotts::oracle::{enumerate_joint, load_corpus, verify_conditionals, verify_corpus, CorpusInstance};
use cpotts::sampling::sample_poisson;
use cpotts::{Color, ColoredConfig, ModelParams, RngStream};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn criterion_1(corpus: &[CorpusInstance]) -> Outcome {
    let t = Instant::now();
    let reports = verify_corpus(corpus).expect("corpus enumerates");
    let secs = t.elapsed().as_secs_f64();
    let worst = reports.iter().map(|r| r.max_error).fold(0.0, f64::max);
    let cc = reports.iter().filter(|r| r.color_connectivity.is_some()).count();
    let ok = reports.len() == 50 && reports.iter().all(|r| r.passed) && secs < 120.0;
    outcome(
        ok,
        format!(
            "{} instances, max relative error {worst:.2e}, colour-connectivity checked on {cc}, {secs:.1}s",
            reports.len()
        ),
    )
}

fn small(corpus: &[CorpusInstance]) -> Vec<&CorpusInstance> {
    corpus.iter().filter(|c| c.points.len() <= 6).collect()
}

fn criterion_2_3(corpus: &[CorpusInstance]) -> (Outcome, Outcome) {
    let mut tuples = 0;
    let mut worst: f64 = 0.0;
    let mut holley = 0;
    let mut violations = 0;
    let mut direct_worst: f64 = 0.0;
    for inst in small(corpus) {
        let t = enumerate_joint(&inst.points, &inst.params, inst.wired).unwrap();
        let r = verify_conditionals(&t);
        tuples += r.tuples;
        worst = worst.max(r.max_abs_error);
        holley += r.holley_tuples;
        violations += r.holley_violations;
        // the public entry point on a few masks, against the table
        if inst.wired == Color::FIRST && !t.candidates.is_empty() {
            let marg = t.edge_marginal_scaled();
            for mask in 0u32..(1u32 << t.candidates.len()).min(64) {
                for (k, &(i, j, _)) in t.candidates.iter().enumerate() {
                    if mask >> k & 1 == 1 {
                        continue;
                    }
                    let w_in = marg.get(&(mask | 1 << k)).copied().unwrap_or(0.0);
                    let w_out = marg.get(&mask).copied().unwrap_or(0.0);
                    if w_in + w_out == 0.0 {
                        continue;
                    }
                    let f = conditional_edge_probability(&t.points, &t.edges_of(mask), (i, j), &t.params);
                    direct_worst = direct_worst.max((f - w_in / (w_in + w_out)).abs());
                }
            }
        }
    }
    let c2 = outcome(
        tuples > 0 && worst < 1e-12 && direct_worst < 1e-12,
        format!("{tuples} (E, e) tuples, max |formula - enumerated| {:.2e}", worst.max(direct_worst)),
    );

    // sampled configurations beyond enumeration
    let mut rng = RngStream::new(303, 0).rng();
    let mut sampled = 0;
    let mut sampled_viol = 0;
    let families: Vec<&CorpusInstance> = corpus.iter().filter(|c| c.wired == Color::FIRST).collect();
    let mut attempts = 0;
    while sampled < 10_000 {
        attempts += 1;
        assert!(attempts < 1_000_000, "could not draw enough tuples");
        let inst = families[rng.random_range(0..families.len())];
        let p = ModelParams { z: rng.random_range(0.5..3.0), ..inst.params.clone() };
        let bx = p.cubic_box(rng.random_range(8..14));
        let pts = sample_poisson(&bx, p.z, &mut rng);
        if pts.len() <= 6 {
            continue;
        }
        let cand = candidate_pairs(&pts, &p.phi);
        let r3sq = p.radii.r3 * p.radii.r3;
        let close: Vec<usize> = (0..cand.len()).filter(|&k| pts.dist2(cand[k].0, pts.point(cand[k].1)) <= r3sq).collect();
        if close.is_empty() {
            continue;
        }
        let pick = close[rng.random_range(0..close.len())];
        let keep = rng.random::<f64>();
        let pairs: Vec<(usize, usize)> = cand
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != pick && rng.random::<f64>() < keep)
            .map(|(_, c)| (c.0, c.1))
            .collect();
        let edges = EdgeSet::from_pairs(shell_flags(&pts, p.radii.r4), pairs);
        let e = (cand[pick].0, cand[pick].1);
        let pb = bernoulli_edge_probability(&p);
        let ok = holley_pointwise_check(&pts, &edges, e, &p)
            && conditional_edge_probability(&pts, &edges, e, &p) >= pb - HOLLEY_TOLERANCE;
        sampled += 1;
        sampled_viol += (!ok) as usize;
    }
    let c3 = outcome(
        violations == 0 && sampled_viol == 0 && holley > 0,
        format!("{holley} enumerated and {sampled} sampled tuples, {} violations", violations + sampled_viol),
    );
    (c2, c3)
}

fn criterion_4(corpus: &[CorpusInstance]) -> Outcome {
    const SWEEPS: u64 = 1_000_000;
    let mut picks: Vec<&CorpusInstance> = corpus
        .iter()
        .filter(|c| c.points.len() <= 4 && c.params.q() <= 3 && !candidate_pairs(&c.points, &c.params.phi).is_empty())
        .collect();
    picks.sort_by_key(|c| std::cmp::Reverse(enumerate_joint(&c.points, &c.params, c.wired).unwrap().entries.len()));
    // one instance per family and colour count where available
    let mut chosen: Vec<&CorpusInstance> = Vec::new();
    for c in picks {
        let key = (c.note.split_whitespace().nth(1).map(str::to_string), c.params.q());
        if chosen.iter().all(|d| (d.note.split_whitespace().nth(1).map(str::to_string), d.params.q()) != key) && chosen.len() < 4 {
            chosen.push(c);
        }
    }
    let mut worst_tv: f64 = 0.0;
    let mut details = Vec::new();
    for (k, inst) in chosen.iter().enumerate() {
        let t = enumerate_joint(&inst.points, &inst.params, inst.wired).unwrap();
        let exact = t.joint_probs();
        let colors = vec![inst.wired; inst.points.len()];
        let cfg = ColoredConfig::new(inst.points.clone(), colors);
        let mut st = ChainState::with_config(&inst.params, cfg, inst.wired, ProposalMix::recolor_only(), RngStream::new(404, k as u64)).unwrap();
        let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
        for _ in 0..SWEEPS {
            st.sweep(1);
            let edges = st.readout().clone();
            let key = t.key_of(&st.config.colors, &edges).expect("edges among candidates");
            *counts.entry(key).or_insert(0) += 1;
        }
        let mut tv = 0.0;
        for (key, &p) in &exact {
            tv += (p - counts.get(key).copied().unwrap_or(0) as f64 / SWEEPS as f64).abs();
        }
        let outside: u64 = counts.iter().filter(|(k, _)| !exact.contains_key(k)).map(|(_, &v)| v).sum();
        tv += outside as f64 / SWEEPS as f64;
        tv *= 0.5;
        worst_tv = worst_tv.max(tv);
        details.push(format!("#{} ({} states) TV {tv:.4}", inst.id, exact.len()));
    }

    // detailed balance of the local moves
    let mut p = ModelParams::widom_rowlinson(1.5);
    p.phi = cpotts::PairPotential::Step { radii: vec![1.0, 1.2], values: vec![2.0, 0.3] };
    p.u = 2.0;
    p.radii.r4 = 1.2;
    p.psi = cpotts::PairPotential::Step { radii: vec![0.1, 0.6], values: vec![0.5, -0.2] };
    p.radii.r2 = 0.1;
    p.psi_superstable = true;
    let mut residual: f64 = 0.0;
    let mut audited = 0;
    for (s, params) in [p, ModelParams::widom_rowlinson(2.0)].iter().enumerate() {
        let mix = ProposalMix { birth: 0.3, death: 0.3, shift: 0.2, recolor: 0.2 };
        let mut st = ChainState::new(params, params.cubic_box(10), Color::FIRST, mix, RngStream::new(405, s as u64)).unwrap();
        for _ in 0..20_000 {
            if let Some(m) = st.propose() {
                let r = st.detailed_balance_log_residual(&m);
                residual = residual.max(if r.is_nan() { f64::INFINITY } else { r.abs() });
                audited += 1;
            }
            st.step_birth_death_move();
        }
    }
    outcome(
        chosen.len() >= 3 && worst_tv < 0.01 && residual < 1e-10,
        format!("{}; detailed-balance residual {residual:.1e} over {audited} moves", details.join(", ")),
    )
}

fn criterion_5() -> Outcome {
    let stream = RngStream::new(505, 0);
    let mut worst_z: f64 = 0.0;
    let mut bound_ok = true;
    for n in 2..=7 {
        for (pi, &p) in [0.2, 0.5, 0.8].iter().enumerate() {
            let mc = er_monte_carlo(n, p, 100_000, stream.derive((n * 10 + pi) as u64));
            let ex = er_exact(n, p);
            let z = (mc.mean - ex).abs() / mc.stderr;
            worst_z = worst_z.max(z);
        }
    }
    for n in 1..=7 {
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            bound_ok &= er_bound(n, p) <= er_exact(n, p) + 1e-15;
        }
    }
    let g = er_exact(3, 0.5);
    outcome(
        worst_z < 3.0 && bound_ok && g == 0.5,
        format!("max |MC - exact| / stderr {worst_z:.2}, bound below exact on 707 points, gamma(3, 0.5) = {g}"),
    )
}

fn criterion_6() -> Outcome {
    let p = ModelParams::widom_rowlinson(1.0);
    let bx = p.cubic_box(15);
    let sched = Schedule { sweeps: 9500, burn_in: 500, readout_every: 1, bd_steps_per_sweep: 200 };
    let accs = run_chains(&p, &bx, &sched, Color::FIRST, 2, RngStream::new(606, 0)).unwrap();
    let r = identity_test(&accs, &p.alpha, Color(1)).unwrap();
    let interior_z = r.cells.iter().filter(|c| c.interior).map(|c| c.z.abs()).fold(0.0, f64::max);
    let n_int = r.cells.iter().filter(|c| c.interior).count();
    outcome(
        r.passed && interior_z < 4.0 && r.min_effective_samples >= 1e4,
        format!(
            "{n_int} interior cells, max |z| {interior_z:.2} (all cells {:.2}), min effective samples {:.0}",
            r.max_abs_z, r.min_effective_samples
        ),
    )
}

fn criterion_7() -> Outcome {
    let p = ModelParams::widom_rowlinson(1.0);
    let sched = Schedule { sweeps: 3000, burn_in: 500, readout_every: 1, bd_steps_per_sweep: 200 };
    let t = Instant::now();
    let r = phase_transition_experiment(&p, &[15, 21], &[0.05, 1.0, 4.0], &sched, 2, RngStream::new(707, 0)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let mirror = r.points.iter().filter_map(|p| p.mirror_z).fold(0.0, f64::max);
    let lcb: Vec<String> = r
        .points
        .iter()
        .filter(|q| r.breaking_z.contains(&q.z))
        .map(|q| format!("{}@{}: {:.4}", q.z, q.box_cells, q.wired[0].excess_lcb99))
        .collect();
    outcome(
        r.max_colors == 2 && !r.breaking_z.is_empty() && r.small_z_symmetric && r.mirror_ok && secs < 7200.0,
        format!(
            "breaking at z {:?} (LCB99 {}), z = 0.05 CI contains 0: {}, max mirror z {mirror:.2}, {secs:.0}s",
            r.breaking_z,
            lcb.join(", "),
            r.small_z_symmetric
        ),
    )
}

fn criterion_8() -> Outcome {
    let stream = RngStream::new(808, 0);
    let grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let est: Vec<_> = grid.iter().map(|&p| theta_estimate(2, 21, p, 2000, stream)).collect();
    let monotone = est
        .windows(2)
        .all(|w| w[1].mean >= w[0].mean - 3.0 * w[0].stderr.hypot(w[1].stderr));
    let top = est.last().unwrap().mean;
    let p = ModelParams::widom_rowlinson(1.0);
    let mut rng = RngStream::new(809, 0).rng();
    let far = adjacent_cell_max_distance(&p.cubic_box(15), 100_000, false, &mut rng);
    outcome(
        monotone && top == 1.0 && far <= p.radii.r3,
        format!(
            "theta {:?}, theta(1) = {top}, largest adjacent-cell distance {far:.6} <= r3 = {}",
            est.iter().map(|e| (e.mean * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            p.radii.r3
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_cpotts"))
        .args(args)
        .current_dir(dir)
        .env("CPOTTS_THREADS", "2")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn criterion_9() -> Outcome {
    let runs: [&[&str]; 4] = [
        &["experiment", "--preset", "wr", "--z", "8", "--box-cells", "21", "--chains", "8", "--seed", "7", "--sweeps", "40", "--burn-in", "10", "--bd-steps", "50", "--out", "exp"],
        &["sample", "--z", "2", "--box-cells", "9", "--chains", "3", "--sweeps", "200", "--burn-in", "20", "--seed", "11", "--out", "smp"],
        &["percolation", "--L", "15", "--runs", "300", "--seed", "5", "--out", "perc"],
        &["ergraph", "--n-max", "6", "--samples", "5000", "--seed", "5", "--out", "er"],
    ];
    let mut ok = true;
    let mut n_files = 0;
    for args in runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        ok &= run_cli(a.path(), args) && run_cli(b.path(), args);
        let fa = files(a.path());
        ok &= fa == files(b.path()) && !fa.is_empty();
        n_files += fa.len();
        // replay from the manifest into a fresh directory
        let prefix = args[args.len() - 1];
        let manifest = a.path().join(format!("{prefix}.manifest.json"));
        let c = tempfile::tempdir().unwrap();
        ok &= run_cli(c.path(), &["replay", manifest.to_str().unwrap(), "--out", prefix]);
        let fc = files(c.path());
        ok &= fc == fa;
    }
    outcome(ok, format!("4 subcommands run twice and replayed, {n_files} files byte-identical"))
}

fn main() {
    let corpus = load_corpus().expect("corpus loads");
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let report = |n: usize, o: &Outcome| {
        println!("criterion {n}: {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    };
    let mut push = |n: usize, o: Outcome| {
        report(n, &o);
        results.push((n, o));
    };
    push(1, criterion_1(&corpus));
    let (c2, c3) = criterion_2_3(&corpus);
    push(2, c2);
    push(3, c3);
    push(4, criterion_4(&corpus));
    push(5, criterion_5());
    push(6, criterion_6());
    push(7, criterion_7());
    push(8, criterion_8());
    push(9, criterion_9());
    let failed: Vec<usize> = results.iter().filter(|r| !r.1.passed).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
