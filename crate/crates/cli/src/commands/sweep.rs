use std::fmt::{self, Write as _};
use std::str::FromStr;

use batchlab_core::{run_replicated, Diagnostic, ReplicatedRecord, ScheduleKind, ScheduleSpec};

use super::schedule_diagnostics;
use super::train::{envelope_rows, run_options};
use crate::output::{fmt_f64, OutputDir};
use crate::{exit, CliError, ExperimentConfig};

pub const SWEEP_COLUMNS: &[&str] = &[
    "axis",
    "value",
    "seeds",
    "mean_min_grad_norm",
    "stderr_min_grad_norm",
    "mean_min_grad_norm_sq",
    "mean_final_loss",
    "mean_total_sfo",
    "diverged",
    "argmin",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Gamma,
    Delta,
    DeltaB,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::Delta => "delta",
            SweepAxis::DeltaB => "delta_b",
        }
    }

    fn accepts(self, kind: ScheduleKind) -> bool {
        matches!(
            (self, kind),
            (SweepAxis::Gamma, ScheduleKind::ExpBsExpLr)
                | (SweepAxis::Delta, ScheduleKind::ExpBsConstantLr | ScheduleKind::ExpBsExpLr)
                | (SweepAxis::DeltaB, ScheduleKind::LinearBsConstantLr)
        )
    }

    fn apply(self, spec: &ScheduleSpec, value: f64) -> Result<ScheduleSpec, CliError> {
        let mut s = spec.clone();
        match self {
            SweepAxis::Gamma => s.gamma = value,
            SweepAxis::Delta => s.delta = value,
            SweepAxis::DeltaB => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(CliError::Usage(format!("delta_b must be a nonnegative integer, got {value}")));
                }
                s.delta_b = value as usize;
            }
        }
        s.check()?;
        Ok(s)
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gamma" => Ok(SweepAxis::Gamma),
            "delta" => Ok(SweepAxis::Delta),
            "delta_b" => Ok(SweepAxis::DeltaB),
            _ => Err(format!("unknown sweep axis `{s}` (expected gamma, delta or delta_b)")),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub value: f64,
    pub spec: ScheduleSpec,
    pub diagnostics: Vec<Diagnostic>,
    pub record: ReplicatedRecord,
}

impl SweepCell {
    pub fn mean_min_grad_norm(&self) -> f64 {
        self.record.mean_min_grad_norm()
    }

    pub fn stderr_min_grad_norm(&self) -> f64 {
        let v: Vec<f64> = self.record.runs.iter().map(|r| r.summary.min_grad_norm).collect();
        let k = v.len() as f64;
        if v.len() < 2 {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / k;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0) / k).sqrt()
    }

    fn mean(&self, f: impl Fn(&batchlab_core::RunSummary) -> f64) -> f64 {
        self.record.runs.iter().map(|r| f(&r.summary)).sum::<f64>() / self.record.runs.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub budget: u64,
    pub cells: Vec<SweepCell>,
    /// Index into `cells` of the smallest mean min-grad-norm among
    /// divergence-free cells.
    pub argmin: Option<usize>,
}

impl SweepReport {
    pub fn exit_code(&self) -> i32 {
        if self.cells.iter().any(|c| c.record.diverged() > 0) {
            exit::DIVERGED
        } else {
            exit::OK
        }
    }

    pub fn argmin_value(&self) -> Option<f64> {
        self.argmin.map(|i| self.cells[i].value)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sweep over {} at an equal budget of {} SFO", self.axis, self.budget);
        for (i, c) in self.cells.iter().enumerate() {
            for d in &c.diagnostics {
                let _ = writeln!(s, "  [{} = {}] {d}", self.axis, fmt_f64(c.value));
            }
            let _ = writeln!(
                s,
                "{:>10} mean min grad norm {:.6e} +- {:.2e}, {} diverged{}",
                fmt_f64(c.value),
                c.mean_min_grad_norm(),
                c.stderr_min_grad_norm(),
                c.record.diverged(),
                if Some(i) == self.argmin { "  <- argmin" } else { "" }
            );
        }
        s
    }
}

/// Replicated runs for each value of `axis`, all stopped at the same SFO budget
/// of `total_epochs * n` samples.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    out: &mut OutputDir,
) -> Result<SweepReport, CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("no sweep values".into()));
    }
    if !axis.accepts(cfg.schedule.kind) {
        return Err(CliError::Usage(format!(
            "axis {axis} does not apply to schedule kind {}",
            cfg.schedule.kind
        )));
    }
    let specs = values
        .iter()
        .map(|&v| axis.apply(&cfg.schedule, v))
        .collect::<Result<Vec<_>, _>>()?;

    let problem = cfg.build_problem()?;
    let budget = cfg.sfo_budget();
    let opts = run_options(cfg).with_budget(Some(budget));
    let mut cells = Vec::with_capacity(values.len());
    for (&value, spec) in values.iter().zip(specs) {
        let plan = cfg.build_plan_for(&spec)?;
        let diagnostics = schedule_diagnostics(&spec, &problem);
        let record = run_replicated(&problem, &plan, &cfg.run.seeds, &opts)?;
        out.csv(
            &format!("sweep_{}_{}_envelope.csv", axis, fmt_f64(value)),
            super::train::ENVELOPE_COLUMNS,
            envelope_rows(&record.envelope, cfg.problem.n),
        )?;
        cells.push(SweepCell {
            value,
            spec,
            diagnostics,
            record,
        });
    }

    let argmin = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.record.diverged() == 0)
        .min_by(|a, b| a.1.mean_min_grad_norm().total_cmp(&b.1.mean_min_grad_norm()))
        .map(|(i, _)| i);

    let rows = cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                axis.to_string(),
                fmt_f64(c.value),
                c.record.runs.len().to_string(),
                fmt_f64(c.mean_min_grad_norm()),
                fmt_f64(c.stderr_min_grad_norm()),
                fmt_f64(c.record.mean_min_grad_norm_sq()),
                fmt_f64(c.mean(|s| s.final_loss)),
                fmt_f64(c.mean(|s| s.total_sfo as f64)),
                c.record.diverged().to_string(),
                u8::from(Some(i) == argmin).to_string(),
            ]
        })
        .collect::<Vec<_>>();
    out.csv("sweep_summary.csv", SWEEP_COLUMNS, rows)?;

    let report = SweepReport {
        axis,
        budget,
        cells,
        argmin,
    };
    out.text("sweep_summary.txt", &report.render())?;
    out.write_manifest("sweep")?;
    Ok(report)
}
