//! Staged batch-size / learning-rate growth policies.
//!
//! A [`ScheduleSpec`] describes how `b_m` and `eta_m` evolve over `M` stages;
//! [`build_plan`] resolves it against a dataset size `n` into a [`TrainPlan`]
//! whose stage lengths are whole epochs, `ceil(n / b_m) * E` iterations each.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    ConstantBsConstantLr,
    /// `b_m = b0 + m * delta_b`
    LinearBsConstantLr,
    /// `b_m = b0 * delta^m`
    ExpBsConstantLr,
    /// `b_m = b0 * delta^m`, `eta_m = eta0 * gamma^m`
    ExpBsExpLr,
    /// Per-stage `(b_m, eta_m)` pairs given directly.
    Explicit,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::ConstantBsConstantLr => "constant",
            ScheduleKind::LinearBsConstantLr => "linear",
            ScheduleKind::ExpBsConstantLr => "exp_bs",
            ScheduleKind::ExpBsExpLr => "exp_bs_exp_lr",
            ScheduleKind::Explicit => "explicit",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "constant" => ScheduleKind::ConstantBsConstantLr,
            "linear" => ScheduleKind::LinearBsConstantLr,
            "exp_bs" => ScheduleKind::ExpBsConstantLr,
            "exp_bs_exp_lr" => ScheduleKind::ExpBsExpLr,
            "explicit" => ScheduleKind::Explicit,
            _ => return None,
        })
    }

    /// True when every stage shares `eta0`.
    pub fn constant_lr(self) -> bool {
        !matches!(self, ScheduleKind::ExpBsExpLr | ScheduleKind::Explicit)
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub b0: usize,
    pub eta0: f64,
    pub delta_b: usize,
    pub delta: f64,
    pub gamma: f64,
    pub num_stages: usize,
    pub epochs_per_stage: u32,
    pub explicit_stages: Option<Vec<(usize, f64)>>,
}

impl ScheduleSpec {
    /// Single-parameter constructor for the fixed batch / fixed rate case.
    pub fn constant(b: usize, eta: f64, num_stages: usize, epochs_per_stage: u32) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::ConstantBsConstantLr,
            b0: b,
            eta0: eta,
            delta_b: 0,
            delta: 2.0,
            gamma: 1.0,
            num_stages,
            epochs_per_stage,
            explicit_stages: None,
        }
    }

    pub fn linear(
        b0: usize,
        delta_b: usize,
        eta: f64,
        num_stages: usize,
        epochs_per_stage: u32,
    ) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::LinearBsConstantLr,
            delta_b,
            ..Self::constant(b0, eta, num_stages, epochs_per_stage)
        }
    }

    pub fn exp_bs(b0: usize, delta: f64, eta: f64, num_stages: usize, epochs_per_stage: u32) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::ExpBsConstantLr,
            delta,
            ..Self::constant(b0, eta, num_stages, epochs_per_stage)
        }
    }

    pub fn exp_bs_exp_lr(
        b0: usize,
        delta: f64,
        eta0: f64,
        gamma: f64,
        num_stages: usize,
        epochs_per_stage: u32,
    ) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::ExpBsExpLr,
            delta,
            gamma,
            ..Self::constant(b0, eta0, num_stages, epochs_per_stage)
        }
    }

    pub fn explicit(stages: Vec<(usize, f64)>, epochs_per_stage: u32) -> Self {
        let (b0, eta0) = stages.first().copied().unwrap_or((1, 1.0));
        ScheduleSpec {
            kind: ScheduleKind::Explicit,
            num_stages: stages.len(),
            explicit_stages: Some(stages),
            ..Self::constant(b0, eta0, 1, epochs_per_stage)
        }
    }

    /// Checks the field invariants. `gamma^2 < delta` is deliberately not
    /// checked here; [`validate`] reports it as a warning.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(msg));
        if self.num_stages == 0 {
            return bad("num_stages must be >= 1".into());
        }
        if self.epochs_per_stage == 0 {
            return bad("epochs_per_stage must be >= 1".into());
        }
        if self.kind == ScheduleKind::Explicit {
            let Some(stages) = &self.explicit_stages else {
                return bad("explicit schedule without stages".into());
            };
            if stages.len() != self.num_stages {
                return bad(format!(
                    "explicit schedule lists {} stages but num_stages = {}",
                    stages.len(),
                    self.num_stages
                ));
            }
            for (m, &(b, eta)) in stages.iter().enumerate() {
                if b == 0 {
                    return bad(format!("stage {m}: batch size must be >= 1"));
                }
                if !(eta > 0.0 && eta.is_finite()) {
                    return bad(format!("stage {m}: learning rate must be positive, got {eta}"));
                }
            }
            return Ok(());
        }
        if self.b0 == 0 {
            return bad("b0 must be >= 1".into());
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad(format!("eta0 must be positive, got {}", self.eta0));
        }
        match self.kind {
            ScheduleKind::ExpBsConstantLr if !(self.delta > 1.0 && self.delta.is_finite()) => {
                bad(format!("delta must be > 1, got {}", self.delta))
            }
            ScheduleKind::ExpBsExpLr if !(self.delta > 1.0 && self.delta.is_finite()) => {
                bad(format!("delta must be > 1, got {}", self.delta))
            }
            ScheduleKind::ExpBsExpLr if !(self.gamma > 1.0 && self.gamma.is_finite()) => {
                bad(format!("gamma must be > 1, got {}", self.gamma))
            }
            _ => Ok(()),
        }
    }

    fn check_stage(&self, m: usize) -> Result<()> {
        if m >= self.num_stages {
            return Err(Error::StageOutOfRange {
                stage: m,
                num_stages: self.num_stages,
            });
        }
        Ok(())
    }
}

/// Raw scheduled batch size at stage `m`, before clamping to the dataset size.
///
/// Exponential sizes are rounded to the nearest integer with a floor of 1.
pub fn batch_at_stage(spec: &ScheduleSpec, m: usize) -> Result<usize> {
    spec.check_stage(m)?;
    let b = match spec.kind {
        ScheduleKind::ConstantBsConstantLr => spec.b0,
        ScheduleKind::LinearBsConstantLr => spec.b0 + m * spec.delta_b,
        ScheduleKind::ExpBsConstantLr | ScheduleKind::ExpBsExpLr => {
            let raw = spec.b0 as f64 * spec.delta.powi(m as i32);
            if raw >= usize::MAX as f64 {
                usize::MAX
            } else {
                raw.round().max(1.0) as usize
            }
        }
        ScheduleKind::Explicit => explicit_stage(spec, m)?.0,
    };
    Ok(b)
}

pub fn lr_at_stage(spec: &ScheduleSpec, m: usize) -> Result<f64> {
    spec.check_stage(m)?;
    Ok(match spec.kind {
        ScheduleKind::ExpBsExpLr => spec.eta0 * spec.gamma.powi(m as i32),
        ScheduleKind::Explicit => explicit_stage(spec, m)?.1,
        _ => spec.eta0,
    })
}

fn explicit_stage(spec: &ScheduleSpec, m: usize) -> Result<(usize, f64)> {
    spec.explicit_stages
        .as_ref()
        .and_then(|s| s.get(m).copied())
        .ok_or_else(|| Error::InvalidSchedule(format!("explicit schedule has no stage {m}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub stage: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: u32,
    /// `ceil(n / batch_size) * epochs`
    pub num_iterations: u64,
    /// Iteration index one past the end of this stage.
    pub cumulative_iterations: u64,
}

impl StagePlan {
    /// First global iteration index of the stage.
    pub fn start(&self) -> u64 {
        self.cumulative_iterations - self.num_iterations
    }

    pub fn sfo(&self) -> u64 {
        self.batch_size as u64 * self.num_iterations
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub stages: Vec<StagePlan>,
    pub dataset_size: usize,
    pub spec: ScheduleSpec,
}

impl TrainPlan {
    pub fn total_iterations(&self) -> u64 {
        self.stages.last().map_or(0, |s| s.cumulative_iterations)
    }

    pub fn total_sfo(&self) -> u64 {
        self.stages.iter().map(StagePlan::sfo).sum()
    }

    pub fn total_epochs(&self) -> u64 {
        self.stages.iter().map(|s| s.epochs as u64).sum()
    }

    pub fn max_lr(&self) -> f64 {
        self.stages.iter().map(|s| s.lr).fold(0.0, f64::max)
    }

    /// Stage index containing global iteration `t`, if `t` is inside the plan.
    pub fn stage_of(&self, t: u64) -> Option<usize> {
        if t >= self.total_iterations() {
            return None;
        }
        Some(self.stages.partition_point(|s| s.cumulative_iterations <= t))
    }

    /// Per-iteration `(b_t, eta_t)` for the whole plan.
    pub fn iterations(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.stages
            .iter()
            .flat_map(|s| std::iter::repeat_n((s.batch_size, s.lr), s.num_iterations as usize))
    }
}

pub fn build_plan(spec: &ScheduleSpec, dataset_size: usize) -> Result<TrainPlan> {
    let epochs = vec![spec.epochs_per_stage; spec.num_stages];
    build_plan_with_epochs(spec, dataset_size, &epochs)
}

/// Like [`build_plan`] but with an explicit epoch count per stage, as produced
/// by [`split_epoch_budget`].
pub fn build_plan_with_epochs(
    spec: &ScheduleSpec,
    dataset_size: usize,
    epochs: &[u32],
) -> Result<TrainPlan> {
    spec.check()?;
    if dataset_size == 0 {
        return Err(Error::InvalidSchedule("dataset size must be >= 1".into()));
    }
    if epochs.len() != spec.num_stages {
        return Err(Error::InvalidSchedule(format!(
            "{} epoch counts for {} stages",
            epochs.len(),
            spec.num_stages
        )));
    }
    if let Some(m) = epochs.iter().position(|&e| e == 0) {
        return Err(Error::InvalidSchedule(format!("stage {m} has zero epochs")));
    }

    let mut stages = Vec::with_capacity(spec.num_stages);
    let mut cumulative = 0u64;
    for (m, &e) in epochs.iter().enumerate() {
        let batch_size = batch_at_stage(spec, m)?.min(dataset_size);
        let lr = lr_at_stage(spec, m)?;
        let num_iterations = dataset_size.div_ceil(batch_size) as u64 * e as u64;
        cumulative += num_iterations;
        stages.push(StagePlan {
            stage: m,
            batch_size,
            lr,
            epochs: e,
            num_iterations,
            cumulative_iterations: cumulative,
        });
    }
    Ok(TrainPlan {
        stages,
        dataset_size,
        spec: spec.clone(),
    })
}

/// Splits a total epoch budget evenly over `num_stages`, remainder to the last stage.
pub fn split_epoch_budget(total_epochs: u32, num_stages: usize) -> Result<Vec<u32>> {
    if num_stages == 0 || (total_epochs as usize) < num_stages {
        return Err(Error::InvalidSchedule(format!(
            "epoch budget {total_epochs} cannot give every one of {num_stages} stages an epoch"
        )));
    }
    let base = total_epochs / num_stages as u32;
    let mut out = vec![base; num_stages];
    out[num_stages - 1] += total_epochs - base * num_stages as u32;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticKind {
    InvalidField(String),
    /// `gamma^2 / delta` in `[0.8, 1.0]`.
    GrowthAligned { ratio: f64 },
    /// `gamma^2 / delta < 0.8`: batch size outpaces the critical batch size.
    BatchGrowsTooFast { ratio: f64 },
    /// `gamma^2 / delta > 1`: the `gamma^2 < delta` condition fails.
    GammaSquaredExceedsDelta { gamma_sq: f64, delta: f64, ratio: f64 },
    /// First stage with `eta_m > 1/L`.
    LrAboveInverseL { stage: usize, lr: f64, limit: f64 },
    /// First stage with `eta_m >= 2/L`; the descent guarantee no longer applies.
    LrAboveTwoOverL { stage: usize, lr: f64, limit: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.severity)?;
        match &self.kind {
            DiagnosticKind::InvalidField(msg) => write!(f, "{msg}"),
            DiagnosticKind::GrowthAligned { ratio } => {
                write!(f, "gamma^2/delta = {ratio:.4}: lr and batch growth aligned")
            }
            DiagnosticKind::BatchGrowsTooFast { ratio } => write!(
                f,
                "gamma^2/delta = {ratio:.4}: batch size grows faster than the critical batch size"
            ),
            DiagnosticKind::GammaSquaredExceedsDelta { gamma_sq, delta, ratio } => write!(
                f,
                "gamma^2 = {gamma_sq:.4} > delta = {delta}: violates gamma^2 < delta (ratio {ratio:.4})"
            ),
            DiagnosticKind::LrAboveInverseL { stage, lr, limit } => write!(
                f,
                "stage {stage}: lr {lr} exceeds 1/L = {limit}; C1 grows past this point"
            ),
            DiagnosticKind::LrAboveTwoOverL { stage, lr, limit } => write!(
                f,
                "stage {stage}: lr {lr} >= 2/L = {limit}; convergence guarantee void"
            ),
        }
    }
}

impl Diagnostic {
    fn new(severity: Severity, kind: DiagnosticKind) -> Self {
        Diagnostic { severity, kind }
    }
}

/// Reports growth-factor pairing and step-size limits for a schedule.
///
/// Exponential batch schedules get a `gamma^2 / delta` band (`gamma = 1` for
/// constant-rate variants). With `problem_l` given, the first stage above
/// `1/L` is a warning and the first stage at or above `2/L` an error.
pub fn validate(spec: &ScheduleSpec, problem_l: Option<f64>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if let Err(e) = spec.check() {
        let msg = match e {
            Error::InvalidSchedule(m) => m,
            other => other.to_string(),
        };
        out.push(Diagnostic::new(Severity::Error, DiagnosticKind::InvalidField(msg)));
        return out;
    }

    let gamma = match spec.kind {
        ScheduleKind::ExpBsExpLr => Some(spec.gamma),
        ScheduleKind::ExpBsConstantLr => Some(1.0),
        _ => None,
    };
    if let Some(gamma) = gamma {
        let ratio = gamma * gamma / spec.delta;
        let diag = if ratio > 1.0 {
            Diagnostic::new(
                Severity::Warning,
                DiagnosticKind::GammaSquaredExceedsDelta {
                    gamma_sq: gamma * gamma,
                    delta: spec.delta,
                    ratio,
                },
            )
        } else if ratio >= 0.8 {
            Diagnostic::new(Severity::Info, DiagnosticKind::GrowthAligned { ratio })
        } else {
            Diagnostic::new(Severity::Warning, DiagnosticKind::BatchGrowsTooFast { ratio })
        };
        out.push(diag);
    }

    if let Some(l) = problem_l {
        let lrs: Vec<f64> = (0..spec.num_stages)
            .map(|m| lr_at_stage(spec, m).expect("stage in range"))
            .collect();
        let inv = 1.0 / l;
        if let Some(stage) = lrs.iter().position(|&lr| lr > inv) {
            out.push(Diagnostic::new(
                Severity::Warning,
                DiagnosticKind::LrAboveInverseL {
                    stage,
                    lr: lrs[stage],
                    limit: inv,
                },
            ));
        }
        let two = 2.0 / l;
        if let Some(stage) = lrs.iter().position(|&lr| lr >= two) {
            out.push(Diagnostic::new(
                Severity::Error,
                DiagnosticKind::LrAboveTwoOverL {
                    stage,
                    lr: lrs[stage],
                    limit: two,
                },
            ));
        }
    }
    out
}
