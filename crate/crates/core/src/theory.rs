//! Closed-form SFO complexity.
//!
//! With a constant step `eta` and batch size `b`, the nonconvex descent bound
//!
//! ```text
//! min_t E||grad f(theta_t)||^2 <= C1(eta) / T + C2(eta) / b
//! C1(eta) = 2 (f(theta_0) - f*) / ((2 - L eta) eta)
//! C2(eta) = L sigma^2 eta / (2 - L eta)
//! ```
//!
//! gives the iteration count `T(b) = C1 b / (eps^2 b - C2)` to reach
//! `eps`-stationarity, SFO complexity `N(b) = T(b) b`, and its minimizer, the
//! critical batch size `b* = 2 C2 / eps^2` with `N(b*) = 4 C1 C2 / eps^4`.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::schedule::{ScheduleKind, ScheduleSpec, TrainPlan};

/// `(f(theta_0) - f*, L, sigma^2, eta, eps)`; the generators of `C1` and `C2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityParams {
    f_gap: f64,
    l: f64,
    sigma2: f64,
    eta: f64,
    eps: f64,
}

impl ComplexityParams {
    pub fn new(f_gap: f64, l: f64, sigma2: f64, eta: f64, eps: f64) -> Result<Self> {
        let fail = |m: String| Err(Error::InvalidParams(m));
        if !(f_gap >= 0.0 && f_gap.is_finite()) {
            return fail(format!("f_gap must be finite and >= 0, got {f_gap}"));
        }
        if !(l > 0.0 && l.is_finite()) {
            return fail(format!("L must be positive, got {l}"));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return fail(format!("sigma2 must be finite and >= 0, got {sigma2}"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return fail(format!("eps must be positive, got {eps}"));
        }
        if !(eta > 0.0) {
            return fail(format!("eta must be positive, got {eta}"));
        }
        if eta >= 2.0 / l {
            return Err(Error::StepTooLarge {
                lr: eta,
                limit: 2.0 / l,
            });
        }
        Ok(ComplexityParams {
            f_gap,
            l,
            sigma2,
            eta,
            eps,
        })
    }

    pub fn f_gap(&self) -> f64 {
        self.f_gap
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn c1(&self) -> f64 {
        2.0 * self.f_gap / ((2.0 - self.l * self.eta) * self.eta)
    }

    pub fn c2(&self) -> f64 {
        self.l * self.sigma2 * self.eta / (2.0 - self.l * self.eta)
    }

    /// Right-hand side of the descent bound, `C1/T + C2/b`.
    pub fn grad_bound_rhs(&self, iterations: f64, batch: f64) -> f64 {
        self.c1() / iterations + self.c2() / batch
    }

    pub fn model(&self) -> SfoModel {
        SfoModel {
            c1: self.c1(),
            c2: self.c2(),
            eps: self.eps,
        }
    }

    pub fn iterations_to_eps(&self, batch: f64) -> Result<f64> {
        self.model().iterations(batch)
    }

    pub fn sfo_complexity(&self, batch: f64) -> Result<f64> {
        self.model().sfo(batch)
    }

    pub fn critical_batch_size(&self) -> CriticalBatch {
        self.model().critical_batch()
    }
}

/// `T(b)` and `N(b)` for fixed `(C1, C2, eps)`.
const DOMAIN_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfoModel {
    pub c1: f64,
    pub c2: f64,
    pub eps: f64,
}

impl SfoModel {
    pub fn new(c1: f64, c2: f64, eps: f64) -> Result<Self> {
        if !(c1 >= 0.0 && c2 >= 0.0 && eps > 0.0) || !(c1.is_finite() && c2.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "need C1 >= 0, C2 >= 0, eps > 0; got C1={c1}, C2={c2}, eps={eps}"
            )));
        }
        Ok(SfoModel { c1, c2, eps })
    }

    /// Batch sizes must strictly exceed this.
    pub fn threshold(&self) -> f64 {
        self.c2 / (self.eps * self.eps)
    }

    /// Batches within rounding of the threshold count as outside the domain.
    fn check_domain(&self, batch: f64) -> Result<()> {
        let threshold = self.threshold();
        let e2b = self.eps * self.eps * batch;
        let denom = e2b - self.c2;
        if !(denom > DOMAIN_RTOL * e2b.max(self.c2)) || !batch.is_finite() {
            return Err(Error::BatchOutOfDomain { batch, threshold });
        }
        Ok(())
    }

    /// Real-valued `T(b) = C1 b / (eps^2 b - C2)`.
    pub fn iterations(&self, batch: f64) -> Result<f64> {
        self.check_domain(batch)?;
        Ok(self.c1 * batch / (self.eps * self.eps * batch - self.c2))
    }

    /// `N(b) = C1 b^2 / (eps^2 b - C2)`.
    pub fn sfo(&self, batch: f64) -> Result<f64> {
        self.check_domain(batch)?;
        Ok(self.c1 * batch * batch / (self.eps * self.eps * batch - self.c2))
    }

    pub fn critical_batch(&self) -> CriticalBatch {
        let e2 = self.eps * self.eps;
        let b_star = 2.0 * self.c2 / e2;
        let min_sfo = 4.0 * self.c1 * self.c2 / (e2 * e2);
        let note = (self.c2 == 0.0).then_some(
            "noiseless: N(b) = C1 b / eps^2 increases in b, so the smallest batch is optimal",
        );
        CriticalBatch {
            b_star,
            min_sfo,
            note,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalBatch {
    /// `2 C2 / eps^2`; zero for noiseless problems.
    pub b_star: f64,
    /// `4 C1 C2 / eps^4`, the value of `N` at `b_star`.
    pub min_sfo: f64,
    pub note: Option<&'static str>,
}

/// Exhaustive integer argmin of `N(b)` over the admissible part of `grid`.
///
/// Ties resolve to the smallest batch size.
pub fn brute_force_sfo_argmin(model: &SfoModel, grid: RangeInclusive<u64>) -> Result<(u64, f64)> {
    let threshold = model.threshold();
    let (lo, hi) = (*grid.start(), *grid.end());
    grid.filter_map(|b| model.sfo(b as f64).ok().map(|n| (b, n)))
        .fold(None, |best: Option<(u64, f64)>, (b, n)| match best {
            Some((_, bn)) if bn <= n => best,
            _ => Some((b, n)),
        })
        .ok_or(Error::EmptyGrid { lo, hi, threshold })
}

/// How the per-stage accuracy target shrinks with the stage index.
///
/// With constant step sizes the bound decays like `1/T`, so `eps_m^2 ∝ 1/(m+1)`;
/// with `eta_m = eta0 gamma^m` it decays like `gamma^-m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsRate {
    InverseStage,
    Geometric { gamma: f64 },
}

impl EpsRate {
    pub fn for_spec(spec: &ScheduleSpec) -> Self {
        match spec.kind {
            ScheduleKind::ExpBsExpLr => EpsRate::Geometric { gamma: spec.gamma },
            _ => EpsRate::InverseStage,
        }
    }

    /// `eps_m` for `m in 0..num_stages`, calibrated so `eps_0 = eps0`.
    pub fn schedule(&self, eps0: f64, num_stages: usize) -> Vec<f64> {
        (0..num_stages)
            .map(|m| {
                let scale = match *self {
                    EpsRate::InverseStage => 1.0 / (m as f64 + 1.0),
                    EpsRate::Geometric { gamma } => gamma.powi(-(m as i32)),
                };
                eps0 * scale.sqrt()
            })
            .collect()
    }
}

/// `b*_m = 2 C2(eta_m) / eps_m^2` for every stage of `plan`.
pub fn stage_critical_batch_sizes(
    plan: &TrainPlan,
    l: f64,
    sigma2: f64,
    eps: &[f64],
) -> Result<Vec<f64>> {
    if eps.len() != plan.stages.len() {
        return Err(Error::InvalidParams(format!(
            "{} accuracy targets for {} stages",
            eps.len(),
            plan.stages.len()
        )));
    }
    plan.stages
        .iter()
        .zip(eps)
        .map(|(s, &e)| {
            let p = ComplexityParams::new(0.0, l, sigma2, s.lr, e)?;
            Ok(p.critical_batch_size().b_star)
        })
        .collect()
}

/// Per-stage parameters with `f_gap` taken from the loss at each stage's first iterate.
pub fn stage_params(
    plan: &TrainPlan,
    stage_entry_losses: &[f64],
    f_star: f64,
    l: f64,
    sigma2: f64,
    eps: &[f64],
) -> Result<Vec<ComplexityParams>> {
    if stage_entry_losses.len() > plan.stages.len() || eps.len() != plan.stages.len() {
        return Err(Error::InvalidParams("stage count mismatch".into()));
    }
    plan.stages
        .iter()
        .zip(stage_entry_losses)
        .zip(eps)
        .map(|((s, &loss), &e)| ComplexityParams::new((loss - f_star).max(0.0), l, sigma2, s.lr, e))
        .collect()
}

/// Upper bound on `min_{t<T} E||grad f(theta_t)||^2` for per-iteration step
/// sizes `etas` and batch sizes `batches`:
///
/// ```text
/// 2 (f(theta_0) - f*) / ((2 - L eta_max) sum eta_t)
///   + L sigma^2 / (2 - L eta_max) * sum(eta_t^2 / b_t) / sum eta_t
/// ```
pub fn lemma1_bound(f_gap: f64, l: f64, sigma2: f64, etas: &[f64], batches: &[usize]) -> Result<f64> {
    if etas.is_empty() || etas.len() != batches.len() {
        return Err(Error::InvalidParams(format!(
            "need equal nonempty step and batch series, got {} and {}",
            etas.len(),
            batches.len()
        )));
    }
    if !(l > 0.0) || !(sigma2 >= 0.0) || !(f_gap >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "need L > 0, sigma2 >= 0, f_gap >= 0; got {l}, {sigma2}, {f_gap}"
        )));
    }
    if batches.contains(&0) {
        return Err(Error::InvalidParams("batch sizes must be >= 1".into()));
    }
    if etas.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::InvalidParams("step sizes must be >= 0".into()));
    }
    let eta_max = etas.iter().copied().fold(0.0, f64::max);
    if eta_max >= 2.0 / l {
        return Err(Error::StepTooLarge {
            lr: eta_max,
            limit: 2.0 / l,
        });
    }
    let sum_eta: f64 = etas.iter().sum();
    if sum_eta <= 0.0 {
        return Err(Error::InvalidParams("step sizes sum to zero".into()));
    }
    let sum_sq_over_b: f64 = etas
        .iter()
        .zip(batches)
        .map(|(&e, &b)| e * e / b as f64)
        .sum();
    let denom = 2.0 - l * eta_max;
    Ok(2.0 * f_gap / (denom * sum_eta) + l * sigma2 / denom * (sum_sq_over_b / sum_eta))
}

/// Exact SFO cost of `epochs` passes with batch size `b`: `E ceil(n/b) b`.
///
/// Requires `1 <= b <= n`.
pub fn epoch_sfo(n: u64, b: u64, epochs: u64) -> u64 {
    assert!(b >= 1 && b <= n, "epoch_sfo needs 1 <= b <= n (b={b}, n={n})");
    epochs * n.div_ceil(b) * b
}
