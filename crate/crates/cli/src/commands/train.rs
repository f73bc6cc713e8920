use std::fmt::Write as _;
use std::time::Duration;

use batchlab_core::{
    run_replicated, Diagnostic, EnvelopeRow, IterRow, ReplicatedRecord, RunOptions, RunRecord,
    StopReason, TrainPlan,
};

use super::{has_errors, schedule_diagnostics};
use crate::output::{fmt_f64, OutputDir};
use crate::{exit, CliError, ExperimentConfig};

pub const RUN_COLUMNS: &[&str] = &[
    "t", "epoch", "stage", "batch_size", "lr", "loss", "grad_norm", "sfo_count",
];

pub const ENVELOPE_COLUMNS: &[&str] = &[
    "t",
    "sfo_count",
    "loss_mean",
    "loss_min",
    "loss_max",
    "gradnorm_mean",
    "gradnorm_min",
    "gradnorm_max",
    "b_t",
    "eta_t",
    "epoch",
    "runs",
];

pub const SUMMARY_COLUMNS: &[&str] = &[
    "seed",
    "iterations",
    "total_sfo",
    "min_grad_norm",
    "final_loss",
    "initial_gap",
    "stop",
    "stopped_at",
];

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub plan: TrainPlan,
    pub diagnostics: Vec<Diagnostic>,
    pub record: ReplicatedRecord,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn exit_code(&self) -> i32 {
        if self.record.diverged() > 0 {
            exit::DIVERGED
        } else {
            exit::OK
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for d in &self.diagnostics {
            let _ = writeln!(s, "{d}");
        }
        let _ = writeln!(
            s,
            "plan: {} stages, {} iterations, {} SFO",
            self.plan.stages.len(),
            self.plan.total_iterations(),
            self.plan.total_sfo()
        );
        for r in &self.record.runs {
            let _ = writeln!(
                s,
                "seed {:>6}: min grad norm {:.6e}, final loss {:.6e}, {} SFO, {} ({:.3} s)",
                r.summary.seed,
                r.summary.min_grad_norm,
                r.summary.final_loss,
                r.summary.total_sfo,
                stop_name(r.summary.stop),
                r.wall_time.as_secs_f64()
            );
        }
        let _ = writeln!(
            s,
            "mean min grad norm {:.6e} over {} seeds, {} diverged, wall time {:.3} s",
            self.record.mean_min_grad_norm(),
            self.record.runs.len(),
            self.record.diverged(),
            self.wall_time.as_secs_f64()
        );
        s
    }
}

pub(crate) fn stop_name(stop: StopReason) -> &'static str {
    match stop {
        StopReason::Completed => "completed",
        StopReason::Budget => "budget",
        StopReason::Diverged { .. } => "diverged",
    }
}

pub(crate) fn run_options(cfg: &ExperimentConfig) -> RunOptions {
    RunOptions::new(0)
        .with_cadence(cfg.run.cadence)
        .with_init_scale(cfg.problem.init_scale)
        .with_sampling(cfg.run.sampling)
}

fn epoch(sfo: u64, n: usize) -> String {
    fmt_f64(sfo as f64 / n as f64)
}

pub(crate) fn run_rows(rows: &[IterRow], n: usize) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.t.to_string(),
                epoch(r.sfo, n),
                r.stage.to_string(),
                r.batch.to_string(),
                fmt_f64(r.lr),
                fmt_f64(r.loss),
                fmt_f64(r.grad_norm),
                r.sfo.to_string(),
            ]
        })
        .collect()
}

pub(crate) fn envelope_rows(env: &[EnvelopeRow], n: usize) -> Vec<Vec<String>> {
    env.iter()
        .map(|e| {
            vec![
                e.t.to_string(),
                e.sfo.to_string(),
                fmt_f64(e.loss_mean),
                fmt_f64(e.loss_min),
                fmt_f64(e.loss_max),
                fmt_f64(e.grad_norm_mean),
                fmt_f64(e.grad_norm_min),
                fmt_f64(e.grad_norm_max),
                e.batch.to_string(),
                fmt_f64(e.lr),
                epoch(e.sfo, n),
                e.runs.to_string(),
            ]
        })
        .collect()
}

pub(crate) fn summary_rows(runs: &[RunRecord]) -> Vec<Vec<String>> {
    runs.iter()
        .map(|r| {
            let s = &r.summary;
            vec![
                s.seed.to_string(),
                s.iterations.to_string(),
                s.total_sfo.to_string(),
                fmt_f64(s.min_grad_norm),
                fmt_f64(s.final_loss),
                fmt_f64(s.initial_gap),
                stop_name(s.stop).to_string(),
                match s.stop {
                    StopReason::Diverged { t } => t.to_string(),
                    _ => s.iterations.to_string(),
                },
            ]
        })
        .collect()
}

pub fn train(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<TrainReport, CliError> {
    let problem = cfg.build_problem()?;
    let plan = cfg.build_plan()?;
    let diagnostics = schedule_diagnostics(&cfg.schedule, &problem);
    if has_errors(&diagnostics) {
        let msgs: Vec<String> = diagnostics.iter().map(ToString::to_string).collect();
        return Err(CliError::Usage(format!("schedule rejected:\n{}", msgs.join("\n"))));
    }

    let started = std::time::Instant::now();
    let record = run_replicated(&problem, &plan, &cfg.run.seeds, &run_options(cfg))?;
    let wall_time = started.elapsed();

    let n = cfg.problem.n;
    for r in &record.runs {
        out.csv(&format!("train_seed_{}.csv", r.summary.seed), RUN_COLUMNS, run_rows(&r.rows, n))?;
    }
    out.csv("train_envelope.csv", ENVELOPE_COLUMNS, envelope_rows(&record.envelope, n))?;
    out.csv("train_summary.csv", SUMMARY_COLUMNS, summary_rows(&record.runs))?;

    let report = TrainReport {
        plan,
        diagnostics,
        record,
        wall_time,
    };
    out.text("train_summary.txt", &report.render())?;
    out.write_manifest("train")?;
    Ok(report)
}
