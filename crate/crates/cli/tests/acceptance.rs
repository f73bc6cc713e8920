//! End-to-end acceptance checks. Each criterion prints one `[PASS]` or
//! `[FAIL]` line; the process exits nonzero if any fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use batchlab_cli::commands::{self, SweepAxis, SweepReport};
use batchlab_cli::{ExperimentConfig, OutputDir};
use batchlab_core::check::{gradient_check, log_log_slope, minibatch_moments};
use batchlab_core::{
    brute_force_sfo_argmin, build_plan, draw_theta0, epoch_sfo, lemma1_bound, run_replicated, run_sgd,
    ComplexityParams, Error, GradientOracle, LeastSquares, Logistic, NoisyQuadratic, ReplicatedRecord,
    RunOptions, SampleStream, ScheduleSpec, TrainPlan,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn seeds(k: u64) -> Vec<u64> {
    (0..k).collect()
}

/// 20 parameter sets with `eta < 1/L`.
fn random_params() -> Vec<ComplexityParams> {
    let mut rng = SampleStream::new(2024).data();
    (0..20)
        .map(|_| {
            let l = rng.random_range(0.5..5.0);
            ComplexityParams::new(
                rng.random_range(0.1..10.0),
                l,
                rng.random_range(0.1..10.0),
                rng.random_range(0.05..0.95) / l,
                rng.random_range(0.05..0.5),
            )
            .expect("valid draw")
        })
        .collect()
}

fn grid_end(b_star: f64) -> u64 {
    100u64.max(4 * b_star.ceil() as u64)
}

fn critical_batch_oracle() -> Outcome {
    let mut worst_step = 0.0f64;
    let mut worst_rel = 0.0f64;
    for p in random_params() {
        let crit = p.critical_batch_size();
        let (b_grid, _) = brute_force_sfo_argmin(&p.model(), 1..=grid_end(crit.b_star)).map_err(|e| e.to_string())?;
        let step = (b_grid as f64 - crit.b_star).abs();
        ensure(step <= 1.0, || format!("b* = {} but grid argmin = {b_grid}", crit.b_star))?;
        let closed = 4.0 * p.c1() * p.c2() / p.eps().powi(4);
        let at_star = p.sfo_complexity(crit.b_star).map_err(|e| e.to_string())?;
        let rel = (at_star - closed).abs() / closed;
        ensure(rel <= 1e-12 && (crit.min_sfo - closed).abs() <= 1e-12 * closed, || {
            format!("N(b*) = {at_star}, 4 C1 C2 / eps^4 = {closed}")
        })?;
        worst_step = worst_step.max(step);
        worst_rel = worst_rel.max(rel);
    }
    Ok(format!("20 draws, max |argmin - b*| = {worst_step:.3}, max rel err of N(b*) = {worst_rel:.1e}"))
}

fn sfo_convexity_and_domain() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut points = 0usize;
    for p in random_params() {
        let m = p.model();
        let lo = m.threshold().floor() as u64 + 1;
        let hi = grid_end(m.critical_batch().b_star).max(lo + 2);
        let n: Vec<f64> = (lo..=hi)
            .filter_map(|b| m.sfo(b as f64).ok())
            .collect();
        for w in n.windows(3) {
            let d2 = w[2] - 2.0 * w[1] + w[0];
            worst = worst.min(d2);
            ensure(d2 >= -1e-9, || format!("second difference {d2:e} below -1e-9"))?;
        }
        points += n.len();
        for b in [m.threshold(), m.threshold().floor(), 1.0] {
            if b > 0.0 && b <= m.threshold() {
                match m.sfo(b) {
                    Err(Error::BatchOutOfDomain { .. }) => {}
                    other => return Err(format!("N({b}) at threshold {}: {other:?}", m.threshold())),
                }
            }
        }
    }
    Ok(format!("{points} admissible points, min second difference {worst:.3e}, domain errors raised"))
}

/// Mean over runs of `min_{t < T} ||grad f(theta_t)||^2`.
fn mean_min_grad_sq_before(rec: &ReplicatedRecord, t_end: u64) -> f64 {
    let sum: f64 = rec
        .runs
        .iter()
        .map(|r| {
            r.rows
                .iter()
                .filter(|row| row.t < t_end)
                .map(|row| row.grad_norm * row.grad_norm)
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / rec.runs.len() as f64
}

fn mean_initial_gap(rec: &ReplicatedRecord) -> f64 {
    rec.runs.iter().map(|r| r.summary.initial_gap).sum::<f64>() / rec.runs.len() as f64
}

fn plan_prefix(plan: &TrainPlan, t_end: usize) -> (Vec<f64>, Vec<usize>) {
    plan.iterations().take(t_end).map(|(b, eta)| (eta, b)).unzip()
}

fn lemma1_bound_holds() -> Outcome {
    let hand = lemma1_bound(1.0, 1.0, 1.0, &[0.1; 100], &[16; 100]).map_err(|e| e.to_string())?;
    ensure((hand - 0.10855).abs() <= 1e-5, || format!("hand instance gives {hand}"))?;

    let p = NoisyQuadratic::isotropic(10, 1.0, 1.0).map_err(|e| e.to_string())?;
    let t_end = 2000;
    let plan = build_plan(&ScheduleSpec::constant(16, 0.1, 1, 1), 16 * t_end).map_err(|e| e.to_string())?;
    ensure(plan.total_iterations() == t_end as u64, || "plan length".into())?;
    let rec = run_replicated(&p, &plan, &seeds(30), &RunOptions::new(0)).map_err(|e| e.to_string())?;
    let observed = mean_min_grad_sq_before(&rec, t_end as u64);
    let (etas, batches) = plan_prefix(&plan, t_end);
    let bound = lemma1_bound(mean_initial_gap(&rec), 1.0, 1.0, &etas, &batches).map_err(|e| e.to_string())?;
    ensure(observed <= bound, || format!("observed {observed:.4e} > bound {bound:.4e}"))?;
    Ok(format!(
        "hand instance {hand:.6}; 30 seeds at T = 2000: observed {observed:.4e} <= bound {bound:.4e}"
    ))
}

fn increasing_batch_rate() -> Outcome {
    // batches double each epoch until they reach n, then one full batch per stage
    let n = 1024;
    let p = NoisyQuadratic::isotropic(10, 1.0, 1.0).map_err(|e| e.to_string())?;
    let plan = build_plan(&ScheduleSpec::exp_bs(16, 2.0, 0.1, 9880, 1), n).map_err(|e| e.to_string())?;
    ensure(plan.total_iterations() == 10_000, || format!("plan has {} iterations", plan.total_iterations()))?;
    let rec = run_replicated(&p, &plan, &seeds(30), &RunOptions::new(0)).map_err(|e| e.to_string())?;
    let f_gap = mean_initial_gap(&rec);

    let mut analytic = Vec::new();
    let mut detail = Vec::new();
    for t_end in [100usize, 1_000, 10_000] {
        let (etas, batches) = plan_prefix(&plan, t_end);
        let bound = lemma1_bound(f_gap, 1.0, 1.0, &etas, &batches).map_err(|e| e.to_string())?;
        let observed = mean_min_grad_sq_before(&rec, t_end as u64);
        ensure(observed <= bound, || format!("T = {t_end}: observed {observed:.4e} > bound {bound:.4e}"))?;
        analytic.push((t_end as f64, bound));
        detail.push(format!("T={t_end}: {observed:.2e} <= {bound:.2e}"));
    }
    let slope = log_log_slope(&analytic);
    ensure((slope + 1.0).abs() <= 0.05, || format!("bound slope {slope:.4}"))?;
    Ok(format!("bound slope {slope:.4}; {}", detail.join(", ")))
}

fn config(body: &str, dir: &Path) -> Result<ExperimentConfig, String> {
    let text = format!(
        "[problem]\nkind = noisy_quadratic\nn = 1024\ndim = 10\nsigma2 = 1\nl = 1\n\n{body}\n\n[output]\ndir = {}\nprefix = acc\n",
        dir.display()
    );
    ExperimentConfig::parse(&text).map_err(|e| e.to_string())
}

fn run_sweep(body: &str, axis: SweepAxis, values: &[f64]) -> Result<SweepReport, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = config(body, tmp.path())?;
    let mut out = OutputDir::create(tmp.path().join("acc")).map_err(|e| e.to_string())?;
    let report = commands::sweep(&cfg, axis, values, &mut out).map_err(|e| e.to_string())?;
    ensure(report.cells.iter().all(|c| c.record.diverged() == 0), || "a run diverged".into())?;
    ensure(
        report.cells.iter().all(|c| c.record.runs.iter().all(|r| r.summary.total_sfo <= report.budget)),
        || "a run exceeded the SFO budget".into(),
    )?;
    Ok(report)
}

fn describe(report: &SweepReport) -> String {
    report
        .cells
        .iter()
        .map(|c| format!("{}={:.4}", c.value, c.mean_min_grad_norm()))
        .collect::<Vec<_>>()
        .join(", ")
}

fn gamma_sweep() -> Outcome {
    let body = "[schedule]\nkind = exp_bs_exp_lr\nb0 = 16\neta0 = 0.01\ndelta = 2\ngamma = 1.1\nnum_stages = 6\n\n\
                [run]\nseeds = 0-29\nepochs_per_stage = 1";
    let values = [1.1, 1.2, 1.3, 1.4];
    let r = run_sweep(body, SweepAxis::Gamma, &values)?;
    let max_lr = r.cells.iter().map(|c| c.spec.eta0 * c.spec.gamma.powi(5)).fold(0.0, f64::max);
    ensure(max_lr < 1.0, || format!("largest lr {max_lr} not below 1/L"))?;
    let m: Vec<f64> = r.cells.iter().map(|c| c.mean_min_grad_norm()).collect();
    ensure(m.windows(2).all(|w| w[1] <= w[0]), || format!("not monotone: {}", describe(&r)))?;
    ensure(r.argmin_value() == Some(1.4), || format!("argmin {:?}: {}", r.argmin_value(), describe(&r)))?;
    Ok(format!("budget {} SFO; {}", r.budget, describe(&r)))
}

fn delta_sweep() -> Outcome {
    let body = "[schedule]\nkind = exp_bs_exp_lr\nb0 = 16\neta0 = 0.01\ndelta = 2\ngamma = 1.4\nnum_stages = 6\n\n\
                [run]\nseeds = 0-29\nepochs_per_stage = 1";
    let r = run_sweep(body, SweepAxis::Delta, &[2.0, 3.0, 4.0])?;
    ensure(r.argmin_value() == Some(2.0), || format!("argmin {:?}: {}", r.argmin_value(), describe(&r)))?;
    Ok(format!("budget {} SFO; {}", r.budget, describe(&r)))
}

fn linear_vs_constant() -> Outcome {
    let body = "[schedule]\nkind = linear\nb0 = 16\neta0 = 0.1\ndelta_b = 8\nnum_stages = 6\n\n\
                [run]\nseeds = 0-29\nepochs_per_stage = 1";
    let r = run_sweep(body, SweepAxis::DeltaB, &[0.0, 8.0])?;
    let (constant, linear) = (r.cells[0].mean_min_grad_norm(), r.cells[1].mean_min_grad_norm());
    ensure(linear < constant, || format!("linear {linear:.4} >= constant {constant:.4}"))?;
    Ok(format!("budget {} SFO; constant b=16 {constant:.4}, linear +8 {linear:.4}", r.budget))
}

fn epoch_sfo_invariance() -> Outcome {
    let mut rng = SampleStream::new(8).data();
    for _ in 0..100 {
        let n = rng.random_range(1..=10_000u64);
        let b = rng.random_range(1..=n);
        let e = rng.random_range(1..=10u64);
        let sfo = epoch_sfo(n, b, e);
        ensure(e * n <= sfo && sfo < e * (n + b), || format!("epoch_sfo({n}, {b}, {e}) = {sfo}"))?;
    }
    let p = NoisyQuadratic::isotropic(3, 1.0, 1.0).map_err(|e| e.to_string())?;
    let specs = [
        ScheduleSpec::constant(7, 0.1, 3, 2),
        ScheduleSpec::linear(5, 11, 0.1, 4, 1),
        ScheduleSpec::exp_bs(3, 3.0, 0.1, 5, 2),
        ScheduleSpec::exp_bs_exp_lr(4, 2.0, 0.05, 1.3, 4, 3),
    ];
    for (i, spec) in specs.iter().enumerate() {
        let plan = build_plan(spec, 500).map_err(|e| e.to_string())?;
        let rec = run_sgd(&p, &plan, &RunOptions::new(i as u64).with_cadence(7)).map_err(|e| e.to_string())?;
        let predicted: u64 = plan.stages.iter().map(|s| epoch_sfo(500, s.batch_size as u64, s.epochs as u64)).sum();
        ensure(rec.summary.total_sfo == plan.total_sfo() && predicted == plan.total_sfo(), || {
            format!("{:?}: executed {} vs plan {}", spec.kind, rec.summary.total_sfo, plan.total_sfo())
        })?;
    }
    Ok("100 random (n, b, E) within [E n, E (n + b)); 4 executed runs match their plans".into())
}

fn oracle_assumptions() -> Outcome {
    let quad = NoisyQuadratic::new(vec![0.5, 1.0, 2.0, 4.0, 8.0], 1.0).map_err(|e| e.to_string())?;
    let ls = LeastSquares::new(200, 5, 1).map_err(|e| e.to_string())?;
    let lg = Logistic::new(200, 5, 2).map_err(|e| e.to_string())?;
    let problems: [&dyn GradientOracle; 3] = [&quad, &ls, &lg];

    let mut fd_worst = 0.0f64;
    let mut z_worst = 0.0f64;
    let mut slopes = Vec::new();
    for (k, p) in problems.iter().enumerate() {
        for s in 0..10 {
            let theta = draw_theta0(p.dim(), 100 + s, 1.0);
            let err = gradient_check(*p, &theta);
            fd_worst = fd_worst.max(err);
            ensure(err <= 1e-6, || format!("{}: finite-difference rel err {err:e}", p.name()))?;
        }
        let theta = draw_theta0(p.dim(), 7, 1.0);
        let m = minibatch_moments(*p, &theta, 4, 100_000, 10 + k as u64).map_err(|e| e.to_string())?;
        z_worst = z_worst.max(m.max_z_score());
        ensure(m.max_z_score() < 4.0, || format!("{}: bias z-score {:.2}", p.name(), m.max_z_score()))?;

        let mut points = Vec::new();
        for b in [1usize, 2, 4, 8, 16, 32, 64] {
            let m = minibatch_moments(*p, &theta, b, 20_000, 1000 + b as u64).map_err(|e| e.to_string())?;
            points.push((b as f64, m.mse));
        }
        let slope = log_log_slope(&points);
        ensure((slope + 1.0).abs() <= 0.1, || format!("{}: variance slope {slope:.3}", p.name()))?;
        slopes.push(format!("{} {slope:.3}", p.name()));
    }
    Ok(format!(
        "max FD rel err {fd_worst:.1e}, max bias z {z_worst:.2}, variance slopes {}",
        slopes.join(", ")
    ))
}

fn train_csvs(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = OutputDir::create(dir.join("acc")).map_err(|e| e.to_string())?;
    commands::train(cfg, &mut out).map_err(|e| e.to_string())?;
    let mut files: Vec<(String, Vec<u8>)> = out
        .produced()
        .iter()
        .filter(|name| name.ends_with(".csv"))
        .map(|name| Ok((name.clone(), std::fs::read(out.path().join(name)).map_err(|e| e.to_string())?)))
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let body = "[schedule]\nkind = exp_bs_exp_lr\nb0 = 8\neta0 = 0.05\ndelta = 2\ngamma = 1.4\nnum_stages = 4\n\n\
                [run]\nseeds = 0-3\ncadence = 3\nepochs_per_stage = 1";
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let first = train_csvs(&config(body, a.path())?, a.path())?;
    let second = train_csvs(&config(body, b.path())?, b.path())?;
    ensure(!first.is_empty(), || "no CSV output".into())?;
    ensure(first == second, || {
        let differing: Vec<&str> = first
            .iter()
            .zip(&second)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.0.as_str())
            .collect();
        format!("outputs differ: {differing:?}")
    })?;
    let bytes: usize = first.iter().map(|(_, d)| d.len()).sum();
    Ok(format!("{} CSV files, {bytes} bytes, identical", first.len()))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { id: 1, name: "critical batch size matches brute force", limit: secs(1), run: critical_batch_oracle },
        Criterion { id: 2, name: "SFO convexity and domain", limit: secs(1), run: sfo_convexity_and_domain },
        Criterion { id: 3, name: "descent bound holds", limit: secs(60), run: lemma1_bound_holds },
        Criterion { id: 4, name: "increasing-batch rate", limit: None, run: increasing_batch_rate },
        Criterion { id: 5, name: "gamma sweep", limit: secs(300), run: gamma_sweep },
        Criterion { id: 6, name: "delta sweep", limit: secs(300), run: delta_sweep },
        Criterion { id: 7, name: "linear beats constant batch", limit: secs(300), run: linear_vs_constant },
        Criterion { id: 8, name: "epoch SFO invariance", limit: None, run: epoch_sfo_invariance },
        Criterion { id: 9, name: "gradient oracle assumptions", limit: None, run: oracle_assumptions },
        Criterion { id: 10, name: "training determinism", limit: None, run: determinism },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut outcome = (c.run)();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&outcome, c.limit) {
            if elapsed > limit {
                outcome = Err(format!("took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2} {}: {detail} ({elapsed:.2?})", c.id, c.name);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
