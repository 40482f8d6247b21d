//! `dnr`: train, calibrate, attack and evaluate rejecting classifiers.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod demo;
mod evalcmd;
mod fail;
mod pipeline;
mod rundir;

use evalcmd::{AttackArgs, ModelSelection};
use fail::Failure;

#[derive(Parser)]
#[command(name = "dnr", version, about = "deep neural rejection workbench")]
struct Cli {
    /// Worker threads for batched forwards and attacks (also
    /// `DNR_WORKERS`; defaults to the CPU count).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train the base network and save it into the run directory.
    TrainNet(ConfigArg),
    /// Fit the rejecting pipelines (multi-tap and last-layer-only) on
    /// every configured split.
    FitDnr {
        #[command(flatten)]
        config: ConfigArg,
        /// Fit a single run instead of all configured splits.
        #[arg(long)]
        run: Option<usize>,
        /// Fit only the last-layer (NR) pipeline.
        #[arg(long)]
        nr_only: bool,
    },
    /// Set a model's reject threshold to the configured clean-rejection
    /// target on the calibration holdout.
    Calibrate {
        #[command(flatten)]
        config: ConfigArg,
        /// Model archive; defaults to the run's fitted dnr model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Attack one test sample and report the objective trajectory.
    Attack {
        #[command(flatten)]
        config: ConfigArg,
        /// Model archive (network or dnr).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        run: usize,
        /// Test-split sample index.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Perturbation budget.
        #[arg(long)]
        epsilon: f64,
        /// Write the per-iteration objective trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the security evaluation over the budget grid and write the
    /// curves CSV. Consumes saved artifacts; never retrains.
    SecEval {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated subset of dnr,nr,dnn.
        #[arg(long, default_value = "dnr,nr,dnn")]
        models: String,
    },
    /// Sweep the reject threshold without re-running attacks.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Render the security-curve SVG from the emitted CSV.
    Plot(ConfigArg),
    /// Self-contained 2-D demo: fits a rejecting model on Gaussian blobs,
    /// renders the decision regions and objective surface, and runs one
    /// attack whose endpoint must escape the reject region.
    DemoToy {
        /// Output directory.
        #[arg(long, default_value = "runs/demo-toy")]
        out: PathBuf,
        #[arg(long, default_value_t = 9)]
        seed: u64,
        /// Attack budget.
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests print to stdout and succeed; real
            // parse errors are usage failures.
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    if let Err(f) = init_workers(cli.workers) {
        eprintln!("{}", f.render());
        return ExitCode::from(f.code);
    }

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.render());
            ExitCode::from(f.code)
        }
    }
}

fn init_workers(flag: Option<usize>) -> Result<(), Failure> {
    let from_env = match std::env::var("DNR_WORKERS") {
        Ok(v) => Some(v.parse::<usize>().map_err(|_| {
            Failure::usage(
                format!("DNR_WORKERS {v:?} is not a number"),
                "set it to a positive worker count",
            )
        })?),
        Err(_) => None,
    };
    let workers = flag.or(from_env);
    if let Some(n) = workers {
        if n == 0 {
            return Err(Failure::usage("worker count must be positive", ""));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage("cannot size the worker pool", e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::TrainNet(c) => {
            let loaded = config::load_config(&c.config)?;
            pipeline::train_net(&loaded)
        }
        Command::FitDnr { config: c, run, nr_only } => {
            let loaded = config::load_config(&c.config)?;
            if !nr_only {
                pipeline::fit(&loaded, run, false)?;
            }
            pipeline::fit(&loaded, run, true)
        }
        Command::Calibrate { config: c, model, run } => {
            let loaded = config::load_config(&c.config)?;
            pipeline::calibrate(&loaded, model, run)
        }
        Command::Attack {
            config: c,
            model,
            run,
            index,
            epsilon,
            trace,
        } => {
            let loaded = config::load_config(&c.config)?;
            evalcmd::attack(
                &loaded,
                &AttackArgs {
                    model,
                    run,
                    index,
                    epsilon,
                    trace,
                },
            )
        }
        Command::SecEval { config: c, models } => {
            let selection = ModelSelection::parse(&models)?;
            let loaded = config::load_config(&c.config)?;
            evalcmd::sec_eval(&loaded, selection)
        }
        Command::Sweep { config: c, model, run } => {
            let loaded = config::load_config(&c.config)?;
            evalcmd::sweep(&loaded, model, run)
        }
        Command::Plot(c) => {
            let loaded = config::load_config(&c.config)?;
            evalcmd::plot(&loaded)
        }
        Command::DemoToy { out, seed, epsilon } => demo::demo_toy(&out, seed, epsilon),
    }
}
