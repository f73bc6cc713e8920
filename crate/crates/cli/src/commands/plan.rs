use std::fmt::Write as _;

use batchlab_core::{stage_critical_batch_sizes, Diagnostic, EpsRate, TrainPlan};

use super::{has_errors, opt, schedule_diagnostics};
use crate::output::{fmt_f64, OutputDir};
use crate::{exit, CliError, ExperimentConfig};

pub const PLAN_COLUMNS: &[&str] = &[
    "stage",
    "batch_size",
    "lr",
    "epochs",
    "iterations",
    "cumulative_iterations",
    "stage_sfo",
    "cumulative_sfo",
    "critical_batch",
];

#[derive(Debug, Clone)]
pub struct PlanReport {
    pub plan: TrainPlan,
    pub diagnostics: Vec<Diagnostic>,
    /// `b*_m` per stage when `[theory] eps` is set and the constants allow it.
    pub critical: Option<Vec<f64>>,
    pub critical_note: Option<String>,
}

impl PlanReport {
    pub fn exit_code(&self) -> i32 {
        if has_errors(&self.diagnostics) {
            exit::INVALID
        } else {
            exit::OK
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>5} {:>8} {:>12} {:>6} {:>10} {:>12} {:>14} {:>12}",
            "m", "b_m", "eta_m", "E_m", "dT_m", "T_m", "cum_sfo", "b*_m"
        );
        let mut cum = 0u64;
        for (i, st) in self.plan.stages.iter().enumerate() {
            cum += st.sfo();
            let crit = self
                .critical
                .as_ref()
                .map(|c| format!("{:.3}", c[i]))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:>5} {:>8} {:>12} {:>6} {:>10} {:>12} {:>14} {:>12}",
                st.stage,
                st.batch_size,
                format!("{:.6}", st.lr),
                st.epochs,
                st.num_iterations,
                st.cumulative_iterations,
                cum,
                crit
            );
        }
        let _ = writeln!(
            s,
            "total: {} iterations, {} SFO, {} epochs over n = {}",
            self.plan.total_iterations(),
            self.plan.total_sfo(),
            self.plan.total_epochs(),
            self.plan.dataset_size
        );
        if let Some(note) = &self.critical_note {
            let _ = writeln!(s, "note: {note}");
        }
        for d in &self.diagnostics {
            let _ = writeln!(s, "{d}");
        }
        s
    }
}

pub fn plan(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<PlanReport, CliError> {
    let mut problem = cfg.build_problem()?;
    let plan = cfg.build_plan()?;
    let diagnostics = schedule_diagnostics(&cfg.schedule, &problem);

    let (critical, critical_note) = match cfg.eps {
        None => (None, Some("set [theory] eps for the critical batch size overlay".to_string())),
        Some(eps0) => {
            let sigma2 = cfg.sigma2_for(&mut problem)?;
            let eps = EpsRate::for_spec(&cfg.schedule).schedule(eps0, plan.stages.len());
            let l = batchlab_core::GradientOracle::constants(&problem).l;
            match stage_critical_batch_sizes(&plan, l, sigma2, &eps) {
                Ok(c) => (Some(c), None),
                Err(e) => (None, Some(format!("no critical batch overlay: {e}"))),
            }
        }
    };

    let mut cum = 0u64;
    let rows: Vec<Vec<String>> = plan
        .stages
        .iter()
        .enumerate()
        .map(|(i, st)| {
            cum += st.sfo();
            vec![
                st.stage.to_string(),
                st.batch_size.to_string(),
                fmt_f64(st.lr),
                st.epochs.to_string(),
                st.num_iterations.to_string(),
                st.cumulative_iterations.to_string(),
                st.sfo().to_string(),
                cum.to_string(),
                opt(critical.as_ref().map(|c| c[i])),
            ]
        })
        .collect();
    out.csv("plan_stages.csv", PLAN_COLUMNS, rows)?;

    let report = PlanReport {
        plan,
        diagnostics,
        critical,
        critical_note,
    };
    out.text("plan_summary.txt", &report.render())?;
    out.write_manifest("plan")?;
    Ok(report)
}
