use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use batchlab_core::{lemma1_bound, GradientOracle};

use crate::output::{fmt_f64, OutputDir};
use crate::{CliError, ExperimentConfig};

pub const BOUND_COLUMNS: &[&str] = &[
    "seed",
    "iterations",
    "f_gap",
    "observed_min_grad_norm_sq",
    "bound",
    "ratio",
];

/// The columns of a `train_seed_<k>.csv` file that the bound needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub t: Vec<u64>,
    pub batch: Vec<usize>,
    pub lr: Vec<f64>,
    pub loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
}

pub fn read_run_csv(path: &Path) -> Result<RunTrace, CliError> {
    let io = |e: String| CliError::Io(format!("{}: {e}", path.display()));
    let seed = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("train_seed_"))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| io("expected a train_seed_<k>.csv file".into()))?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| io(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| io(format!("missing column `{name}`")))
    };
    let (it, ib, il, iloss, ig) = (col("t")?, col("batch_size")?, col("lr")?, col("loss")?, col("grad_norm")?);
    let mut trace = RunTrace {
        seed,
        t: Vec::new(),
        batch: Vec::new(),
        lr: Vec::new(),
        loss: Vec::new(),
        grad_norm: Vec::new(),
    };
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |name: &str| io(format!("row {}: bad `{name}` value", k + 2));
        trace.t.push(field(it).parse().map_err(|_| bad("t"))?);
        trace.batch.push(field(ib).parse().map_err(|_| bad("batch_size"))?);
        trace.lr.push(field(il).parse().map_err(|_| bad("lr"))?);
        trace.loss.push(field(iloss).parse().map_err(|_| bad("loss"))?);
        trace.grad_norm.push(field(ig).parse().map_err(|_| bad("grad_norm"))?);
    }
    if trace.t.len() < 2 {
        return Err(io("need at least one update".into()));
    }
    if trace.t.iter().enumerate().any(|(k, &t)| t != k as u64) {
        return Err(CliError::Usage(format!(
            "{}: iterations are not consecutive; bound reports need runs recorded with cadence 1",
            path.display()
        )));
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedBound {
    pub seed: u64,
    pub iterations: u64,
    pub f_gap: f64,
    /// `min_{t < T} ||grad f(theta_t)||^2`.
    pub observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub seeds: Vec<SeedBound>,
    pub l: f64,
    pub sigma2: f64,
    pub f_star_tolerance: Option<f64>,
}

impl BoundReport {
    pub fn mean_observed(&self) -> f64 {
        self.seeds.iter().map(|s| s.observed).sum::<f64>() / self.seeds.len() as f64
    }

    pub fn mean_bound(&self) -> f64 {
        self.seeds.iter().map(|s| s.bound).sum::<f64>() / self.seeds.len() as f64
    }

    pub fn mean_f_gap(&self) -> f64 {
        self.seeds.iter().map(|s| s.f_gap).sum::<f64>() / self.seeds.len() as f64
    }

    pub fn ratio(&self) -> f64 {
        self.mean_observed() / self.mean_bound()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "L = {}, sigma2 = {}", fmt_f64(self.l), fmt_f64(self.sigma2));
        if let Some(tol) = self.f_star_tolerance {
            let _ = writeln!(s, "f* is numerical (gradient norm {tol:.1e} at the reported minimizer)");
        }
        let _ = writeln!(
            s,
            "{} seeds: mean min ||grad||^2 = {:.6e}, mean bound = {:.6e}, ratio = {:.4}",
            self.seeds.len(),
            self.mean_observed(),
            self.mean_bound(),
            self.ratio()
        );
        let _ = writeln!(
            s,
            "{}",
            if self.ratio() <= 1.0 {
                "bound holds on average"
            } else {
                "bound exceeded on average"
            }
        );
        s
    }
}

/// Every `train_seed_<k>.csv` in `dir`, ordered by seed.
pub fn run_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<(u64, PathBuf)> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let seed = p
                .file_name()?
                .to_str()?
                .strip_prefix("train_seed_")?
                .strip_suffix(".csv")?
                .parse()
                .ok()?;
            Some((seed, p))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Io(format!("no train_seed_<k>.csv files in {}", dir.display())));
    }
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

/// Recomputes the descent bound for each recorded run from its own step and
/// batch series and its initial gap, and compares with the observed minimum.
pub fn bound_report(cfg: &ExperimentConfig, runs_dir: &Path, out: &mut OutputDir) -> Result<BoundReport, CliError> {
    let mut problem = cfg.build_problem()?;
    let sigma2 = cfg.sigma2_for(&mut problem)?;
    let c = problem.constants().clone();

    let mut seeds = Vec::new();
    for path in run_files(runs_dir)? {
        let tr = read_run_csv(&path)?;
        // the last row is the terminal iterate theta_T; the bound covers t < T
        let t_end = tr.t.len() - 1;
        let f_gap = (tr.loss[0] - c.f_star).max(0.0);
        let bound = lemma1_bound(f_gap, c.l, sigma2, &tr.lr[..t_end], &tr.batch[..t_end])?;
        let observed = tr.grad_norm[..t_end]
            .iter()
            .map(|g| g * g)
            .fold(f64::INFINITY, f64::min);
        seeds.push(SeedBound {
            seed: tr.seed,
            iterations: t_end as u64,
            f_gap,
            observed,
            bound,
        });
    }

    let report = BoundReport {
        seeds,
        l: c.l,
        sigma2,
        f_star_tolerance: c.f_star_tolerance,
    };
    let mut rows: Vec<Vec<String>> = report
        .seeds
        .iter()
        .map(|s| {
            vec![
                s.seed.to_string(),
                s.iterations.to_string(),
                fmt_f64(s.f_gap),
                fmt_f64(s.observed),
                fmt_f64(s.bound),
                fmt_f64(s.observed / s.bound),
            ]
        })
        .collect();
    rows.push(vec![
        "mean".into(),
        String::new(),
        fmt_f64(report.mean_f_gap()),
        fmt_f64(report.mean_observed()),
        fmt_f64(report.mean_bound()),
        fmt_f64(report.ratio()),
    ]);
    out.csv("bound_report.csv", BOUND_COLUMNS, rows)?;
    out.text("bound_report_summary.txt", &report.render())?;
    out.write_manifest("bound_report")?;
    Ok(report)
}
