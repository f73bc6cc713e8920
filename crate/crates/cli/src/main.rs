use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use batchlab_cli::commands::{self, CurveParams, SweepAxis};
use batchlab_cli::config::parse_seed_list;
use batchlab_cli::{exit, resolve_root, CliError, ExperimentConfig, OutputDir};

/// Batch-size and learning-rate schedule experiments for mini-batch SGD.
#[derive(Parser)]
#[command(name = "batchlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides $BATCHLAB_OUT and the config's [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    parse_seed_list(s).map(Seeds)
}

#[derive(Args)]
struct RunOverrides {
    /// Seeds, e.g. `0-29` or `1,4,9`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    /// Full-gradient evaluation period.
    #[arg(long)]
    cadence: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the stage table, critical batch sizes and schedule diagnostics.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Run the schedule for every seed and write per-seed and envelope CSVs.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunOverrides,
    },
    /// Compare growth factors at an equal SFO budget.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunOverrides,
        /// gamma, delta or delta_b.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `1.1,1.2,1.3,1.4`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Tabulate T(b) and N(b) with the critical batch size.
    SfoCurve {
        /// Derive C1, C2 from this config's problem and eta0.
        #[arg(long, conflicts_with_all = ["c1", "c2"])]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, requires_all = ["c2", "eps"])]
        c1: Option<f64>,
        #[arg(long, requires_all = ["c1", "eps"])]
        c2: Option<f64>,
        /// Target accuracy; overrides [theory] eps.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 1)]
        b_min: u64,
        /// Defaults to max(100, 4 ceil(b*)).
        #[arg(long)]
        b_max: Option<u64>,
    },
    /// Compare recorded runs with the descent bound.
    BoundReport {
        #[command(flatten)]
        common: Common,
        /// Directory holding train_seed_<k>.csv files; defaults to the
        /// experiment directory.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
}

fn load(common: &Common, run: Option<&RunOverrides>) -> Result<(ExperimentConfig, OutputDir), CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(run) = run {
        if let Some(Seeds(seeds)) = &run.seeds {
            cfg.run.seeds = seeds.clone();
        }
        if let Some(k) = run.cadence {
            if k == 0 {
                return Err(CliError::Usage("--cadence must be >= 1".into()));
            }
            cfg.run.cadence = k;
        }
    }
    let root = resolve_root(common.out.as_deref(), &cfg.output.dir);
    let out = OutputDir::create(root.join(&cfg.output.prefix))?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Plan { common } => {
            let (cfg, mut out) = load(&common, None)?;
            let r = commands::plan(&cfg, &mut out)?;
            print!("{}", r.render());
            Ok(r.exit_code())
        }
        Command::Train { common, run } => {
            let (cfg, mut out) = load(&common, Some(&run))?;
            let r = commands::train(&cfg, &mut out)?;
            print!("{}", r.render());
            println!("wrote {}", out.path().display());
            Ok(r.exit_code())
        }
        Command::Sweep {
            common,
            run,
            axis,
            values,
        } => {
            let (cfg, mut out) = load(&common, Some(&run))?;
            let r = commands::sweep(&cfg, axis, &values, &mut out)?;
            print!("{}", r.render());
            println!("wrote {}", out.path().display());
            Ok(r.exit_code())
        }
        Command::SfoCurve {
            config,
            out,
            c1,
            c2,
            eps,
            b_min,
            b_max,
        } => {
            let (params, root, prefix) = match (config, c1, c2, eps) {
                (Some(path), _, _, eps) => {
                    let mut cfg = ExperimentConfig::load(&path)?;
                    if eps.is_some() {
                        cfg.eps = eps;
                    }
                    let root = resolve_root(out.as_deref(), &cfg.output.dir);
                    (commands::sfo_curve_params(&cfg)?, root, cfg.output.prefix)
                }
                (None, Some(c1), Some(c2), Some(eps)) => (
                    CurveParams::direct(c1, c2, eps)?,
                    resolve_root(out.as_deref(), "out"),
                    "sfo_curve".to_string(),
                ),
                _ => return Err(CliError::Usage("give --config or all of --c1, --c2, --eps".into())),
            };
            let range = b_max.map(|hi| b_min..=hi);
            let range = match range {
                None if b_min != 1 => {
                    Some(b_min..=*commands::sfo_curve_default_range(&params.model).end())
                }
                r => r,
            };
            let mut out = OutputDir::create(root.join(prefix))?;
            let r = commands::sfo_curve(&params, range, &mut out)?;
            print!("{}", r.render());
            Ok(exit::OK)
        }
        Command::BoundReport { common, runs } => {
            let (cfg, mut out) = load(&common, None)?;
            let runs = runs.unwrap_or_else(|| out.path().to_path_buf());
            let r = commands::bound_report(&cfg, &runs, &mut out)?;
            print!("{}", r.render());
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
