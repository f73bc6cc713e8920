//! Staged mini-batch SGD.
//!
//! [`run_sgd`] executes a [`TrainPlan`]: within stage `m` every update is
//! `theta <- theta - eta_m * g_B(theta)` with `|B| = b_m`, for exactly
//! `num_iterations` steps. Mini-batch draws for iteration `t` come from
//! [`SampleStream::iteration`], so a run is a pure function of
//! `(problem, plan, options)`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problems::GradientOracle;
use crate::rng::SampleStream;
use crate::schedule::TrainPlan;

/// Runs stop once the loss exceeds this or stops being finite.
pub const DIVERGENCE_LOSS: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// i.i.d. uniform draws with replacement.
    #[default]
    WithReplacement,
    /// A fresh permutation per epoch; the last batch of an epoch wraps around
    /// so every batch has exactly `b_m` samples. Finite sums only.
    ShuffledEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    /// Evaluate the full gradient every `cadence` iterations.
    pub cadence: u64,
    /// `theta_0 = init_scale * N(0, I)` unless `theta0` is set.
    pub init_scale: f64,
    pub theta0: Option<Vec<f64>>,
    /// Stop before any update that would push the SFO count past this.
    pub sfo_budget: Option<u64>,
    pub sampling: SamplingMode,
}

impl RunOptions {
    pub fn new(seed: u64) -> Self {
        RunOptions {
            seed,
            cadence: 1,
            init_scale: 1.0,
            theta0: None,
            sfo_budget: None,
            sampling: SamplingMode::WithReplacement,
        }
    }

    pub fn with_cadence(mut self, cadence: u64) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn with_budget(mut self, budget: Option<u64>) -> Self {
        self.sfo_budget = budget;
        self
    }

    pub fn with_init_scale(mut self, scale: f64) -> Self {
        self.init_scale = scale;
        self
    }

    pub fn with_theta0(mut self, theta0: Vec<f64>) -> Self {
        self.theta0 = Some(theta0);
        self
    }

    pub fn with_sampling(mut self, sampling: SamplingMode) -> Self {
        self.sampling = sampling;
        self
    }
}

/// One recorded iterate. `batch` and `lr` are the values used for the update
/// out of `theta_t`; `sfo` counts samples consumed before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRow {
    pub t: u64,
    pub stage: usize,
    pub batch: usize,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub sfo: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageRow {
    pub stage: usize,
    pub entry_loss: f64,
    /// `None` when no iterate of the stage was recorded.
    pub min_grad_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    Budget,
    Diverged { t: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub iterations: u64,
    pub total_sfo: u64,
    pub min_grad_norm: f64,
    pub final_loss: f64,
    /// `f(theta_0) - f*`.
    pub initial_gap: f64,
    pub stop: StopReason,
}

impl RunSummary {
    pub fn diverged(&self) -> bool {
        matches!(self.stop, StopReason::Diverged { .. })
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<IterRow>,
    pub stages: Vec<StageRow>,
    pub summary: RunSummary,
    pub theta0: Vec<f64>,
    pub theta_final: Vec<f64>,
    pub wall_time: Duration,
}

impl RunRecord {
    /// Same rows, stages, summary and iterates; wall time ignored.
    pub fn same_run(&self, other: &RunRecord) -> bool {
        self.rows == other.rows
            && self.stages == other.stages
            && self.summary == other.summary
            && self.theta0 == other.theta0
            && self.theta_final == other.theta_final
    }
}

struct Recorder<'a, P: ?Sized> {
    problem: &'a P,
    cadence: u64,
    grad: Vec<f64>,
    rows: Vec<IterRow>,
}

impl<P: GradientOracle + ?Sized> Recorder<'_, P> {
    fn record(&mut self, theta: &[f64], t: u64, stage: usize, batch: usize, lr: f64, sfo: u64) -> f64 {
        let loss = self.problem.loss(theta);
        self.problem.full_gradient(theta, &mut self.grad);
        let grad_norm = self.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        self.rows.push(IterRow {
            t,
            stage,
            batch,
            lr,
            loss,
            grad_norm,
            sfo,
        });
        loss
    }
}

fn is_divergent(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS
}

fn initial_point<P: GradientOracle + ?Sized>(problem: &P, opts: &RunOptions, stream: &SampleStream) -> Result<Vec<f64>> {
    let d = problem.dim();
    match &opts.theta0 {
        Some(t0) if t0.len() != d => Err(Error::DimensionMismatch {
            expected: d,
            got: t0.len(),
        }),
        Some(t0) => Ok(t0.clone()),
        None => Ok(draw_theta0(d, stream.seed(), opts.init_scale)),
    }
}

/// The default initial iterate of a run with this seed: `init_scale * N(0, I)`.
pub fn draw_theta0(dim: usize, seed: u64, init_scale: f64) -> Vec<f64> {
    let mut rng = SampleStream::new(seed).init();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            init_scale * z
        })
        .collect()
}

/// Executes every stage of `plan` on `problem`.
///
/// Divergence (non-finite iterate, or recorded loss above
/// [`DIVERGENCE_LOSS`]) ends the run early with [`StopReason::Diverged`]
/// rather than an error.
pub fn run_sgd<P: GradientOracle + ?Sized>(problem: &P, plan: &TrainPlan, opts: &RunOptions) -> Result<RunRecord> {
    if opts.cadence == 0 {
        return Err(Error::InvalidParams("record cadence must be >= 1".into()));
    }
    if plan.stages.is_empty() {
        return Err(Error::InvalidParams("plan has no stages".into()));
    }
    let n = plan.dataset_size;
    if let Some(pn) = problem.constants().n {
        if pn != n {
            return Err(Error::InvalidParams(format!(
                "plan built for n = {n} but problem has {pn} samples"
            )));
        }
    } else if opts.sampling == SamplingMode::ShuffledEpochs {
        return Err(Error::InvalidParams(
            "shuffled sampling needs a finite-sum problem".into(),
        ));
    }

    let started = Instant::now();
    let stream = SampleStream::new(opts.seed);
    let d = problem.dim();
    let theta0 = initial_point(problem, opts, &stream)?;
    let mut theta = theta0.clone();
    let mut g = vec![0.0; d];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut batch_idx = Vec::new();

    let mut rec = Recorder {
        problem,
        cadence: opts.cadence,
        grad: vec![0.0; d],
        rows: Vec::new(),
    };
    let mut stages = Vec::with_capacity(plan.stages.len());
    let mut t = 0u64;
    let mut sfo = 0u64;
    let mut stop = StopReason::Completed;
    let initial_loss = problem.loss(&theta);

    'stages: for stage in &plan.stages {
        let b = stage.batch_size;
        let entry_loss = if t == 0 { initial_loss } else { problem.loss(&theta) };
        stages.push(StageRow {
            stage: stage.stage,
            entry_loss,
            min_grad_norm: None,
        });
        let iters_per_epoch = n.div_ceil(b) as u64;

        for i in 0..stage.num_iterations {
            if opts.sfo_budget.is_some_and(|budget| sfo + b as u64 > budget) {
                stop = StopReason::Budget;
                break 'stages;
            }
            if t.is_multiple_of(rec.cadence) {
                let loss = rec.record(&theta, t, stage.stage, b, stage.lr, sfo);
                if is_divergent(loss) {
                    stop = StopReason::Diverged { t };
                    break 'stages;
                }
            }

            let mut rng = stream.iteration(t);
            match opts.sampling {
                SamplingMode::WithReplacement => problem.minibatch_gradient(&theta, b, &mut rng, &mut g),
                SamplingMode::ShuffledEpochs => {
                    let j = (i % iters_per_epoch) as usize;
                    if j == 0 {
                        perm.shuffle(&mut rng);
                    }
                    batch_idx.clear();
                    batch_idx.extend((0..b).map(|k| perm[(j * b + k) % n]));
                    problem.indexed_gradient(&theta, &batch_idx, &mut g)?;
                }
            }
            for (th, gi) in theta.iter_mut().zip(&g) {
                *th -= stage.lr * gi;
            }
            sfo += b as u64;
            t += 1;
            if theta.iter().any(|v| !v.is_finite()) {
                stop = StopReason::Diverged { t };
                break 'stages;
            }
        }
    }

    if rec.rows.last().is_none_or(|r| r.t != t) {
        let last = plan.stage_of(t).unwrap_or(plan.stages.len() - 1);
        let s = &plan.stages[last];
        let loss = rec.record(&theta, t, last, s.batch_size, s.lr, sfo);
        if stop != StopReason::Budget && is_divergent(loss) && !matches!(stop, StopReason::Diverged { .. }) {
            stop = StopReason::Diverged { t };
        }
    }

    let rows = rec.rows;
    for sr in &mut stages {
        sr.min_grad_norm = rows
            .iter()
            .filter(|r| r.stage == sr.stage)
            .map(|r| r.grad_norm)
            .reduce(f64::min);
    }
    let last = rows.last().expect("terminal row recorded");
    let summary = RunSummary {
        seed: opts.seed,
        iterations: t,
        total_sfo: sfo,
        min_grad_norm: rows.iter().map(|r| r.grad_norm).fold(f64::INFINITY, f64::min),
        final_loss: last.loss,
        initial_gap: initial_loss - problem.constants().f_star,
        stop,
    };
    Ok(RunRecord {
        rows,
        stages,
        summary,
        theta0,
        theta_final: theta,
        wall_time: started.elapsed(),
    })
}

/// Pointwise statistics across seeds at one iteration index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeRow {
    pub t: u64,
    pub sfo: u64,
    pub stage: usize,
    pub batch: usize,
    pub lr: f64,
    /// Number of runs with a row at this `t`.
    pub runs: usize,
    pub loss_mean: f64,
    pub loss_min: f64,
    pub loss_max: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_min: f64,
    pub grad_norm_max: f64,
}

#[derive(Debug, Clone)]
pub struct ReplicatedRecord {
    pub runs: Vec<RunRecord>,
    pub envelope: Vec<EnvelopeRow>,
}

impl ReplicatedRecord {
    pub fn mean_min_grad_norm(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.summary.min_grad_norm))
    }

    /// Mean over seeds of `min_t ||grad f(theta_t)||^2`.
    pub fn mean_min_grad_norm_sq(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.summary.min_grad_norm.powi(2)))
    }

    pub fn diverged(&self) -> usize {
        self.runs.iter().filter(|r| r.summary.diverged()).count()
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Runs one independent replica per seed (in parallel) and aligns them on `t`.
///
/// `template.seed` is ignored. A diverged replica stays in `runs` and simply
/// contributes fewer envelope rows; siblings are unaffected.
pub fn run_replicated<P: GradientOracle + ?Sized>(
    problem: &P,
    plan: &TrainPlan,
    seeds: &[u64],
    template: &RunOptions,
) -> Result<ReplicatedRecord> {
    if seeds.is_empty() {
        return Err(Error::InvalidParams("need at least one seed".into()));
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let opts = RunOptions {
                seed,
                ..template.clone()
            };
            run_sgd(problem, plan, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let envelope = envelope(&runs);
    Ok(ReplicatedRecord { runs, envelope })
}

fn envelope(runs: &[RunRecord]) -> Vec<EnvelopeRow> {
    let mut by_t: BTreeMap<u64, Vec<&IterRow>> = BTreeMap::new();
    for r in runs {
        for row in &r.rows {
            by_t.entry(row.t).or_default().push(row);
        }
    }
    by_t.into_iter()
        .map(|(t, rows)| {
            let first = rows[0];
            let stats = |f: fn(&IterRow) -> f64| {
                let vals: Vec<f64> = rows.iter().map(|r| f(r)).collect();
                (
                    mean(vals.iter().copied()),
                    vals.iter().copied().fold(f64::INFINITY, f64::min),
                    vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            let (loss_mean, loss_min, loss_max) = stats(|r| r.loss);
            let (grad_norm_mean, grad_norm_min, grad_norm_max) = stats(|r| r.grad_norm);
            EnvelopeRow {
                t,
                sfo: first.sfo,
                stage: first.stage,
                batch: first.batch,
                lr: first.lr,
                runs: rows.len(),
                loss_mean,
                loss_min,
                loss_max,
                grad_norm_mean,
                grad_norm_min,
                grad_norm_max,
            }
        })
        .collect()
}
