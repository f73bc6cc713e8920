//! Batch-size and learning-rate growth schedules for mini-batch SGD.
//!
//! The crate is split into six pieces:
//!
//! - [`schedule`]: declarative growth policies resolved into per-stage plans.
//! - [`theory`]: closed-form SFO complexity, critical batch sizes and the
//!   descent bound for variable step sizes and batch sizes.
//! - [`problems`]: objectives with known smoothness and noise constants.
//! - [`rng`]: counter-based random streams keyed by `(seed, iteration)`.
//! - [`engine`]: the staged mini-batch SGD loop with SFO accounting.
//! - [`check`]: finite-difference and Monte-Carlo checks of gradient oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod engine;
mod error;
pub mod problems;
pub mod rng;
pub mod schedule;
pub mod theory;

pub use engine::{
    draw_theta0, run_replicated, run_sgd, EnvelopeRow, IterRow, ReplicatedRecord, RunOptions, RunRecord,
    RunSummary, SamplingMode, StageRow, StopReason,
};
pub use error::{Error, Result};
pub use problems::{
    estimate_sigma2, ComponentLoss, FiniteSum, GradientOracle, LeastSquares, Logistic,
    LogisticLoss, NoisyQuadratic, Problem, ProblemConstants, Sigma2, SquaredLoss,
};
pub use rng::SampleStream;
pub use schedule::{
    batch_at_stage, build_plan, build_plan_with_epochs, lr_at_stage, split_epoch_budget,
    validate, Diagnostic, DiagnosticKind, ScheduleKind, ScheduleSpec, Severity, StagePlan,
    TrainPlan,
};
pub use theory::{
    brute_force_sfo_argmin, epoch_sfo, lemma1_bound, stage_critical_batch_sizes,
    ComplexityParams, CriticalBatch, EpsRate, SfoModel,
};
