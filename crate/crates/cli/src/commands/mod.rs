//! The five subcommands. Each takes a parsed config and an output directory,
//! writes its artifacts and returns a report whose `render` is printed to
//! standard output.

mod bound_report;
mod plan;
mod sfo_curve;
mod sweep;
mod train;

pub use bound_report::{bound_report, read_run_csv, BoundReport, RunTrace, SeedBound};
pub use plan::{plan, PlanReport};
pub use sfo_curve::{default_range as sfo_curve_default_range, sfo_curve, sfo_curve_params, CurveParams, SfoCurveReport};
pub use sweep::{sweep, SweepAxis, SweepCell, SweepReport};
pub use train::{train, TrainReport};

use batchlab_core::{validate, Diagnostic, GradientOracle, Problem, ScheduleSpec, Severity};

use crate::output::fmt_f64;

fn schedule_diagnostics(spec: &ScheduleSpec, problem: &Problem) -> Vec<Diagnostic> {
    validate(spec, Some(problem.constants().l))
}

fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}
