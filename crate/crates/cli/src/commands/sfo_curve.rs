use std::fmt::Write as _;
use std::ops::RangeInclusive;

use batchlab_core::{brute_force_sfo_argmin, draw_theta0, ComplexityParams, CriticalBatch, GradientOracle, SfoModel};

use super::opt;
use crate::output::{fmt_f64, OutputDir};
use crate::{CliError, ExperimentConfig};

pub const CURVE_COLUMNS: &[&str] = &["b", "T", "N", "b_star", "N_star", "grid_argmin"];

/// `(C1, C2, eps)` plus where they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveParams {
    pub model: SfoModel,
    /// `(f_gap, L, sigma2, eta)` when derived from a config.
    pub source: Option<(f64, f64, f64, f64)>,
}

impl CurveParams {
    pub fn direct(c1: f64, c2: f64, eps: f64) -> Result<Self, CliError> {
        Ok(CurveParams {
            model: SfoModel::new(c1, c2, eps)?,
            source: None,
        })
    }
}

/// Constants for the config's problem at `eta0`: `f_gap` is the mean initial
/// gap over the configured seeds, and `eps` comes from `[theory]`.
pub fn sfo_curve_params(cfg: &ExperimentConfig) -> Result<CurveParams, CliError> {
    let eps = cfg
        .eps
        .ok_or_else(|| CliError::Config("sfo-curve needs [theory] eps".into()))?;
    let mut problem = cfg.build_problem()?;
    let sigma2 = cfg.sigma2_for(&mut problem)?;
    let c = problem.constants();
    let gaps: f64 = cfg
        .run
        .seeds
        .iter()
        .map(|&s| problem.loss(&draw_theta0(problem.dim(), s, cfg.problem.init_scale)) - c.f_star)
        .sum();
    let f_gap = (gaps / cfg.run.seeds.len() as f64).max(0.0);
    let params = ComplexityParams::new(f_gap, c.l, sigma2, cfg.schedule.eta0, eps)?;
    Ok(CurveParams {
        model: params.model(),
        source: Some((f_gap, c.l, sigma2, cfg.schedule.eta0)),
    })
}

#[derive(Debug, Clone)]
pub struct SfoCurveReport {
    pub params: CurveParams,
    pub range: RangeInclusive<u64>,
    pub critical: CriticalBatch,
    pub grid_argmin: (u64, f64),
    pub admissible: usize,
}

impl SfoCurveReport {
    pub fn render(&self) -> String {
        let m = &self.params.model;
        let mut s = String::new();
        if let Some((f_gap, l, sigma2, eta)) = self.params.source {
            let _ = writeln!(s, "f_gap = {f_gap:.6}, L = {l:.6}, sigma2 = {sigma2:.6}, eta = {eta}");
        }
        let _ = writeln!(s, "C1 = {}, C2 = {}, eps = {}", fmt_f64(m.c1), fmt_f64(m.c2), fmt_f64(m.eps));
        let _ = writeln!(
            s,
            "b in [{}, {}]: {} admissible (b > C2/eps^2 = {:.6})",
            self.range.start(),
            self.range.end(),
            self.admissible,
            m.threshold()
        );
        let _ = writeln!(
            s,
            "analytic b* = {:.6}, N(b*) = {:.6}",
            self.critical.b_star, self.critical.min_sfo
        );
        if let Some(note) = self.critical.note {
            let _ = writeln!(s, "note: {note}");
        }
        let (b, n) = self.grid_argmin;
        let _ = writeln!(s, "grid argmin b = {b}, N = {n:.6}");
        s
    }
}

/// Default grid `1..=max(100, 4 ceil(b*))`.
pub fn default_range(model: &SfoModel) -> RangeInclusive<u64> {
    let b_star = model.critical_batch().b_star;
    1..=100u64.max(4 * b_star.ceil() as u64)
}

pub fn sfo_curve(
    params: &CurveParams,
    range: Option<RangeInclusive<u64>>,
    out: &mut OutputDir,
) -> Result<SfoCurveReport, CliError> {
    let model = &params.model;
    let range = range.unwrap_or_else(|| default_range(model));
    if range.is_empty() || *range.start() == 0 {
        return Err(CliError::Usage(format!(
            "batch range {}..={} must be nonempty and start at >= 1",
            range.start(),
            range.end()
        )));
    }
    let grid_argmin = brute_force_sfo_argmin(model, range.clone())?;
    let critical = model.critical_batch();

    let mut admissible = 0;
    let rows: Vec<Vec<String>> = range
        .clone()
        .map(|b| {
            let t = model.iterations(b as f64).ok();
            let n = model.sfo(b as f64).ok();
            admissible += usize::from(n.is_some());
            vec![
                b.to_string(),
                opt(t),
                opt(n),
                fmt_f64(critical.b_star),
                fmt_f64(critical.min_sfo),
                u8::from(b == grid_argmin.0).to_string(),
            ]
        })
        .collect();
    out.csv("sfo_curve.csv", CURVE_COLUMNS, rows)?;

    let report = SfoCurveReport {
        params: *params,
        range,
        critical,
        grid_argmin,
        admissible,
    };
    out.text("sfo_curve_summary.txt", &report.render())?;
    out.write_manifest("sfo_curve")?;
    Ok(report)
}
