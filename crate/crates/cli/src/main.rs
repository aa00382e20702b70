mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Failure;
use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "rcfgan", version, about = "Reciprocal CF-GAN training and diagnostics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum FaultArg {
    None,
    /// Flip the sign of the imaginary term in c(t).
    FlipSign,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train critic, generator and t-net on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset: ring8, grid25, two_moons, bimodal1d or idx.
        #[arg(long)]
        dataset: Option<String>,
        /// Number of training iterations.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Run the metric property suites and print a pass/fail table.
    ValidateMetric {
        #[command(flatten)]
        common: Common,
        /// Deliberately break the distance to check the harness catches it.
        #[arg(long, value_enum, default_value = "none")]
        fault: FaultArg,
        /// Random pairs/triples in the axiom suite.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Phase/amplitude swap between two digit classes.
    Swap {
        #[command(flatten)]
        common: Common,
        /// Two distinct digits, e.g. 1,2.
        #[arg(long)]
        digits: Option<String>,
        /// Directory holding an IDX image file and label file.
        #[arg(long, value_name = "DIR")]
        mnist: Option<PathBuf>,
    },
    /// Generator-only training on bimodal1d for a list of alpha values.
    AlphaSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated alpha values in [0, 1].
        #[arg(long)]
        alphas: Option<String>,
        /// Training iterations per alpha.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Permutation two-sample test, repeated over independent trials.
    TwoSample {
        #[command(flatten)]
        common: Common,
        /// Draw both groups from N(0,1) to measure the false rejection rate.
        #[arg(long)]
        null: bool,
        /// Samples per group.
        #[arg(long)]
        n: Option<usize>,
        /// Number of independent trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Finite-difference check of every autodiff op and the CF distance.
    GradCheck {
        #[command(flatten)]
        common: Common,
    },
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::Train { common, .. }
            | Cmd::ValidateMetric { common, .. }
            | Cmd::Swap { common, .. }
            | Cmd::AlphaSweep { common, .. }
            | Cmd::TwoSample { common, .. }
            | Cmd::GradCheck { common } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Cmd::Train { .. } => "train",
            Cmd::ValidateMetric { .. } => "validate-metric",
            Cmd::Swap { .. } => "swap",
            Cmd::AlphaSweep { .. } => "alpha-sweep",
            Cmd::TwoSample { .. } => "two-sample",
            Cmd::GradCheck { .. } => "grad-check",
        }
    }
}

fn resolve(cmd: &Cmd) -> Result<RunConfig, Failure> {
    let common = cmd.common();
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    let mut set = |k: &str, v: String| cfg.set(k, &v).map_err(|e| Failure::Usage(format!("--{k}: {e}")));
    if let Some(s) = common.seed {
        set("seed", s.to_string())?;
    }
    match cmd {
        Cmd::Train {
            dataset, iterations, ..
        } => {
            if let Some(d) = dataset {
                set("dataset", d.clone())?;
            }
            if let Some(i) = iterations {
                set("iterations", i.to_string())?;
            }
        }
        Cmd::ValidateMetric { trials: Some(t), .. } => set("suite_trials", t.to_string())?,
        Cmd::Swap { digits: Some(d), .. } => set("swap_digits", d.clone())?,
        Cmd::AlphaSweep { alphas, iterations, .. } => {
            if let Some(a) = alphas {
                set("alphas", a.clone())?;
            }
            if let Some(i) = iterations {
                set("sweep_iterations", i.to_string())?;
            }
        }
        Cmd::TwoSample { n, trials, .. } => {
            if let Some(n) = n {
                set("two_sample_n", n.to_string())?;
            }
            if let Some(t) = trials {
                set("two_sample_trials", t.to_string())?;
            }
        }
        _ => {}
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli.cmd)?;
    let quiet = cli.cmd.common().quiet;
    let name = cli.cmd.name();
    match cli.cmd {
        Cmd::Train { .. } => commands::train(&cfg, quiet),
        Cmd::ValidateMetric { fault, .. } => commands::validate_metric(&cfg, fault == FaultArg::FlipSign, quiet),
        Cmd::Swap { mnist, .. } => commands::swap(&cfg, mnist.as_deref(), quiet),
        Cmd::AlphaSweep { .. } => commands::alpha_sweep(&cfg, quiet),
        Cmd::TwoSample { null, .. } => commands::two_sample(&cfg, null, quiet),
        Cmd::GradCheck { .. } => commands::grad_check(&cfg, quiet),
    }
    .map_err(|f| f.context(name))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
