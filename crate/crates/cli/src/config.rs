//! Experiment configuration files.
//!
//! The format is INI-like:
//!
//! ```text
//! # comment (also `;`)
//! [section]
//! key = value
//! ```
//!
//! Blank lines and comments are ignored, whitespace around keys and values is
//! trimmed, keys are unique within a section and unknown sections or keys are
//! rejected. Lists are comma separated. Sections and keys:
//!
//! | section      | key                  | value                                                    |
//! |--------------|----------------------|----------------------------------------------------------|
//! | `[problem]`  | `kind`               | `noisy_quadratic`, `least_squares` or `logistic`         |
//! |              | `n`                  | dataset size; for `noisy_quadratic` the epoch length     |
//! |              | `dim`                | parameter dimension                                      |
//! |              | `sigma2`             | noise variance (`noisy_quadratic` only, default 1)       |
//! |              | `l`                  | isotropic curvature (`noisy_quadratic`, default 1)       |
//! |              | `spectrum`           | explicit eigenvalues, overrides `dim` and `l`            |
//! |              | `seed`               | data seed for finite sums (default 0)                    |
//! |              | `init_scale`         | `theta_0 ~ init_scale * N(0, I)` (default 1)             |
//! | `[schedule]` | `kind`               | `constant`, `linear`, `exp_bs`, `exp_bs_exp_lr`, `explicit` |
//! |              | `b0`, `eta0`         | initial batch size and learning rate                     |
//! |              | `delta_b`            | linear increment (default 0)                             |
//! |              | `delta`, `gamma`     | growth factors (defaults 2 and 1)                        |
//! |              | `num_stages`         | `M`; implied by `stages` for explicit schedules          |
//! |              | `stages`             | explicit `b:eta` pairs, e.g. `16:0.1, 32:0.1`            |
//! | `[run]`      | `seeds`              | list of seeds; `a-b` ranges allowed (default `0`)        |
//! |              | `cadence`            | full-gradient evaluation period (default 1)              |
//! |              | `epochs_per_stage`   | `E`; exactly one of this and `total_epoch_budget`        |
//! |              | `total_epoch_budget` | total epochs split evenly, remainder to the last stage   |
//! |              | `sampling`           | `with_replacement` (default) or `shuffled`               |
//! | `[theory]`   | `eps`                | accuracy target for critical batch sizes (optional)      |
//! | `[output]`   | `dir`                | output root (default `out`)                              |
//! |              | `prefix`             | experiment subdirectory (default `experiment`)           |

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use batchlab_core::{
    build_plan_with_epochs, draw_theta0, split_epoch_budget, GradientOracle, LeastSquares, Logistic,
    NoisyQuadratic, Problem, SamplingMode, ScheduleKind, ScheduleSpec, TrainPlan,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}{msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl ConfigError {
    fn at(line: usize, msg: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            msg: msg.into(),
        }
    }

    fn global(msg: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    NoisyQuadratic,
    LeastSquares,
    Logistic,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::NoisyQuadratic => "noisy_quadratic",
            ProblemKind::LeastSquares => "least_squares",
            ProblemKind::Logistic => "logistic",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [
            ProblemKind::NoisyQuadratic,
            ProblemKind::LeastSquares,
            ProblemKind::Logistic,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    pub n: usize,
    pub dim: usize,
    pub sigma2: f64,
    pub l: f64,
    pub spectrum: Option<Vec<f64>>,
    pub seed: u64,
    pub init_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Epochs {
    PerStage(u32),
    TotalBudget(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub cadence: u64,
    pub epochs: Epochs,
    pub sampling: SamplingMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: String,
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    /// `epochs_per_stage` is filled from `[run]`; with a total budget it holds
    /// the per-stage share of the first stage.
    pub schedule: ScheduleSpec,
    pub run: RunSection,
    pub eps: Option<f64>,
    pub output: OutputSection,
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

const KEYS: &[(&str, &[&str])] = &[
    (
        "problem",
        &["kind", "n", "dim", "sigma2", "l", "spectrum", "seed", "init_scale"],
    ),
    (
        "schedule",
        &["kind", "b0", "eta0", "delta_b", "delta", "gamma", "num_stages", "stages"],
    ),
    (
        "run",
        &["seeds", "cadence", "epochs_per_stage", "total_epoch_budget", "sampling"],
    ),
    ("theory", &["eps"]),
    ("output", &["dir", "prefix"]),
];

fn tokenize(text: &str) -> Result<Sections, ConfigError> {
    let mut sections = Sections::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line_no, "unterminated section header"))?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::at(line_no, format!("unknown section [{name}]")));
            }
            if sections.contains_key(name) {
                return Err(ConfigError::at(line_no, format!("duplicate section [{name}]")));
            }
            sections.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line_no, format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let section = current
            .as_deref()
            .ok_or_else(|| ConfigError::at(line_no, "key outside of any section"))?;
        let allowed = KEYS.iter().find(|(s, _)| *s == section).unwrap().1;
        if !allowed.contains(&key) {
            return Err(ConfigError::at(line_no, format!("unknown key `{key}` in [{section}]")));
        }
        let entries = sections.get_mut(section).unwrap();
        if entries.contains_key(key) {
            return Err(ConfigError::at(line_no, format!("duplicate key `{key}` in [{section}]")));
        }
        entries.insert(key.to_string(), (line_no, value.to_string()));
    }
    Ok(sections)
}

struct Section<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, (usize, String)>>,
}

impl<'a> Section<'a> {
    fn raw(&self, key: &str) -> Option<(usize, &'a str)> {
        self.entries?.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<T>()
                    .map_err(|_| ConfigError::at(line, format!("invalid value `{v}` for `{key}`")))
            })
            .transpose()
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)?
            .ok_or_else(|| ConfigError::global(format!("missing `{key}` in [{}]", self.name)))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        self.raw(key)
            .map(|(line, v)| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse::<T>().map_err(|_| {
                            ConfigError::at(line, format!("invalid list item `{}` in `{key}`", item.trim()))
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Parses `1,2,5-8` into `[1, 2, 5, 6, 7, 8]`.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        let bad = || format!("invalid seed `{item}`");
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(format!("empty seed range `{item}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(item.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(out)
}

fn parse_sampling(s: &str) -> Option<SamplingMode> {
    match s {
        "with_replacement" => Some(SamplingMode::WithReplacement),
        "shuffled" => Some(SamplingMode::ShuffledEpochs),
        _ => None,
    }
}

fn sampling_name(m: SamplingMode) -> &'static str {
    match m {
        SamplingMode::WithReplacement => "with_replacement",
        SamplingMode::ShuffledEpochs => "shuffled",
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let sections = tokenize(text)?;
        let sec = |name: &'static str| Section {
            name,
            entries: sections.get(name),
        };

        let p = sec("problem");
        let (kind_line, kind) = p
            .raw("kind")
            .ok_or_else(|| ConfigError::global("missing `kind` in [problem]"))?;
        let kind = ProblemKind::from_name(kind)
            .ok_or_else(|| ConfigError::at(kind_line, format!("unknown problem kind `{kind}`")))?;
        let n = p.require("n")?;
        let spectrum: Option<Vec<f64>> = p.list("spectrum")?;
        let dim = match (&spectrum, p.get::<usize>("dim")?) {
            (Some(s), None) => s.len(),
            (Some(s), Some(d)) if d != s.len() => {
                return Err(ConfigError::at(
                    p.raw("dim").unwrap().0,
                    format!("dim = {d} but spectrum has {} entries", s.len()),
                ))
            }
            (_, Some(d)) => d,
            (None, None) => return Err(ConfigError::global("missing `dim` in [problem]")),
        };
        let problem = ProblemSection {
            kind,
            n,
            dim,
            sigma2: p.get("sigma2")?.unwrap_or(1.0),
            l: p.get("l")?.unwrap_or(1.0),
            spectrum,
            seed: p.get("seed")?.unwrap_or(0),
            init_scale: p.get("init_scale")?.unwrap_or(1.0),
        };

        let r = sec("run");
        let epochs = match (r.get::<u32>("epochs_per_stage")?, r.get::<u32>("total_epoch_budget")?) {
            (Some(e), None) => Epochs::PerStage(e),
            (None, Some(t)) => Epochs::TotalBudget(t),
            (Some(_), Some(_)) => {
                return Err(ConfigError::at(
                    r.raw("total_epoch_budget").unwrap().0,
                    "set exactly one of `epochs_per_stage` and `total_epoch_budget`",
                ))
            }
            (None, None) => {
                return Err(ConfigError::global(
                    "[run] needs one of `epochs_per_stage` and `total_epoch_budget`",
                ))
            }
        };
        let seeds = match r.raw("seeds") {
            Some((line, v)) => parse_seed_list(v).map_err(|e| ConfigError::at(line, e))?,
            None => vec![0],
        };
        let sampling = match r.raw("sampling") {
            Some((line, v)) => parse_sampling(v)
                .ok_or_else(|| ConfigError::at(line, format!("unknown sampling mode `{v}`")))?,
            None => SamplingMode::WithReplacement,
        };
        let run = RunSection {
            seeds,
            cadence: r.get("cadence")?.unwrap_or(1),
            epochs,
            sampling,
        };

        let s = sec("schedule");
        let (kind_line, skind) = s
            .raw("kind")
            .ok_or_else(|| ConfigError::global("missing `kind` in [schedule]"))?;
        let skind = ScheduleKind::from_name(skind)
            .ok_or_else(|| ConfigError::at(kind_line, format!("unknown schedule kind `{skind}`")))?;
        let explicit_stages = match s.raw("stages") {
            Some((line, v)) => Some(
                v.split(',')
                    .map(|pair| {
                        let bad = || ConfigError::at(line, format!("invalid stage `{}`, expected b:eta", pair.trim()));
                        let (b, eta) = pair.trim().split_once(':').ok_or_else(bad)?;
                        Ok((b.trim().parse().map_err(|_| bad())?, eta.trim().parse().map_err(|_| bad())?))
                    })
                    .collect::<Result<Vec<(usize, f64)>, ConfigError>>()?,
            ),
            None => None,
        };
        let first = explicit_stages.as_ref().and_then(|s| s.first().copied());
        let num_stages = match (&explicit_stages, s.get::<usize>("num_stages")?) {
            (_, Some(m)) => m,
            (Some(st), None) => st.len(),
            (None, None) => 1,
        };
        let epochs_per_stage = match epochs {
            Epochs::PerStage(e) => e,
            Epochs::TotalBudget(t) => split_epoch_budget(t, num_stages)
                .map_err(|e| ConfigError::at(r.raw("total_epoch_budget").unwrap().0, e.to_string()))?[0],
        };
        let schedule = ScheduleSpec {
            kind: skind,
            b0: match s.get("b0")? {
                Some(b) => b,
                None => first.map(|f| f.0).ok_or_else(|| ConfigError::global("missing `b0` in [schedule]"))?,
            },
            eta0: match s.get("eta0")? {
                Some(e) => e,
                None => first.map(|f| f.1).ok_or_else(|| ConfigError::global("missing `eta0` in [schedule]"))?,
            },
            delta_b: s.get("delta_b")?.unwrap_or(0),
            delta: s.get("delta")?.unwrap_or(2.0),
            gamma: s.get("gamma")?.unwrap_or(1.0),
            num_stages,
            epochs_per_stage,
            explicit_stages,
        };
        schedule
            .check()
            .map_err(|e| ConfigError::at(kind_line, e.to_string()))?;

        let o = sec("output");
        let output = OutputSection {
            dir: o.get("dir")?.unwrap_or_else(|| "out".to_string()),
            prefix: o.get("prefix")?.unwrap_or_else(|| "experiment".to_string()),
        };
        if output.prefix.is_empty() || output.prefix.contains(['/', '\\']) {
            return Err(ConfigError::global("output prefix must be a plain directory name"));
        }

        let cfg = ExperimentConfig {
            problem,
            schedule,
            run,
            eps: sec("theory").get("eps")?,
            output,
        };
        cfg.check().map_err(ConfigError::global)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Cross-field checks that have no single line to point at.
    fn check(&self) -> Result<(), String> {
        let p = &self.problem;
        if p.n == 0 || p.dim == 0 {
            return Err("[problem] n and dim must be >= 1".into());
        }
        if !(p.init_scale >= 0.0 && p.init_scale.is_finite()) {
            return Err("[problem] init_scale must be finite and >= 0".into());
        }
        if self.run.cadence == 0 {
            return Err("[run] cadence must be >= 1".into());
        }
        if let Some(e) = self.eps {
            if !(e > 0.0) {
                return Err("[theory] eps must be > 0".into());
            }
        }
        if self.problem.kind == ProblemKind::NoisyQuadratic && self.run.sampling == SamplingMode::ShuffledEpochs {
            return Err("shuffled sampling needs a finite-sum problem".into());
        }
        Ok(())
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let p = &self.problem;
        let _ = writeln!(s, "[problem]\nkind = {}\nn = {}\ndim = {}", p.kind.name(), p.n, p.dim);
        let _ = writeln!(s, "sigma2 = {:?}\nl = {:?}", p.sigma2, p.l);
        if let Some(sp) = &p.spectrum {
            let _ = writeln!(s, "spectrum = {}", join(sp.iter().map(|v| format!("{v:?}"))));
        }
        let _ = writeln!(s, "seed = {}\ninit_scale = {:?}\n", p.seed, p.init_scale);

        let sc = &self.schedule;
        let _ = writeln!(
            s,
            "[schedule]\nkind = {}\nb0 = {}\neta0 = {:?}\ndelta_b = {}\ndelta = {:?}\ngamma = {:?}\nnum_stages = {}",
            sc.kind.name(),
            sc.b0,
            sc.eta0,
            sc.delta_b,
            sc.delta,
            sc.gamma,
            sc.num_stages
        );
        if let Some(st) = &sc.explicit_stages {
            let _ = writeln!(s, "stages = {}", join(st.iter().map(|(b, e)| format!("{b}:{e:?}"))));
        }

        let r = &self.run;
        let _ = writeln!(
            s,
            "\n[run]\nseeds = {}\ncadence = {}",
            join(r.seeds.iter().map(u64::to_string)),
            r.cadence
        );
        match r.epochs {
            Epochs::PerStage(e) => writeln!(s, "epochs_per_stage = {e}"),
            Epochs::TotalBudget(t) => writeln!(s, "total_epoch_budget = {t}"),
        }
        .unwrap();
        let _ = writeln!(s, "sampling = {}", sampling_name(r.sampling));
        if let Some(e) = self.eps {
            let _ = writeln!(s, "\n[theory]\neps = {e:?}");
        }
        let _ = writeln!(s, "\n[output]\ndir = {}\nprefix = {}", self.output.dir, self.output.prefix);
        s
    }

    /// Per-stage epoch counts implied by `[run]`.
    pub fn stage_epochs(&self) -> Vec<u32> {
        let m = self.schedule.num_stages;
        match self.run.epochs {
            Epochs::PerStage(e) => vec![e; m],
            Epochs::TotalBudget(t) => split_epoch_budget(t, m).expect("checked at parse time"),
        }
    }

    pub fn total_epochs(&self) -> u64 {
        self.stage_epochs().iter().map(|&e| e as u64).sum()
    }

    /// Equal-budget comparisons use `total_epochs * n` samples.
    pub fn sfo_budget(&self) -> u64 {
        self.total_epochs() * self.problem.n as u64
    }

    pub fn build_plan(&self) -> Result<TrainPlan, CliError> {
        self.build_plan_for(&self.schedule)
    }

    pub fn build_plan_for(&self, spec: &ScheduleSpec) -> Result<TrainPlan, CliError> {
        let epochs = match self.run.epochs {
            Epochs::PerStage(e) => vec![e; spec.num_stages],
            Epochs::TotalBudget(t) => split_epoch_budget(t, spec.num_stages)?,
        };
        Ok(build_plan_with_epochs(spec, self.problem.n, &epochs)?)
    }

    pub fn build_problem(&self) -> Result<Problem, CliError> {
        let p = &self.problem;
        Ok(match p.kind {
            ProblemKind::NoisyQuadratic => {
                let q = match &p.spectrum {
                    Some(s) => NoisyQuadratic::new(s.clone(), p.sigma2)?,
                    None => NoisyQuadratic::isotropic(p.dim, p.l, p.sigma2)?,
                };
                Problem::NoisyQuadratic(q)
            }
            ProblemKind::LeastSquares => Problem::LeastSquares(LeastSquares::new(p.n, p.dim, p.seed)?),
            ProblemKind::Logistic => Problem::Logistic(Logistic::new(p.n, p.dim, p.seed)?),
        })
    }

    /// `sigma^2` for theory overlays: certified when known, otherwise estimated
    /// at the optimum and at initial points drawn like the runs' `theta_0`.
    pub fn sigma2_for(&self, problem: &mut Problem) -> Result<f64, CliError> {
        if let Some(v) = problem.constants().sigma2.value() {
            return Ok(v);
        }
        let mut probes = Vec::new();
        if let Problem::LeastSquares(p) = &*problem {
            probes.push(p.theta_star().to_vec());
        }
        if let Problem::Logistic(p) = &*problem {
            probes.push(p.theta_star().to_vec());
        }
        for &seed in self.run.seeds.iter().take(4) {
            probes.push(draw_theta0(problem.dim(), seed, self.problem.init_scale));
        }
        Ok(problem.ensure_sigma2(&probes, SIGMA2_DRAWS, self.problem.seed)?)
    }
}

const SIGMA2_DRAWS: usize = 20_000;

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(", ")
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}
