use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use unrank_core::{Method, Scalar};
use unrank_harness::pipeline::{cmd_evaluate, cmd_generate, cmd_train, cmd_unlearn};
use unrank_harness::report::cmd_report;
use unrank_harness::sweep::{check, cmd_sweep};
use unrank_harness::{Axis, ExperimentConfig, HResult, HarnessError, Precision};

/// Corrective unranking experiments.
#[derive(Parser)]
#[command(name = "unrank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; missing fields take built-in defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set unlearn.k=15`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Override every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (same as `--set paths.out_dir=...`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run id; outputs go to `<out_dir>/<run_id>/`.
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/test corpora and forget specs.
    Generate(Common),
    /// Train the teacher model.
    Train(Common),
    /// Unlearn the forget set from the teacher.
    Unlearn {
        #[command(flatten)]
        common: Common,
        /// retrain, cf, amnesiac, neggrad, badt or curd.
        #[arg(long)]
        method: Method,
    },
    /// Score a checkpoint (default: the teacher).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Name of the output folder under `evaluate/`.
        #[arg(long)]
        name: Option<String>,
    },
    /// Sweep one parameter and aggregate over repeats.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// k, gamma, fraction or method.
        #[arg(long)]
        axis: Axis,
    },
    /// Summarise every evaluation and sweep in a run directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directory to summarise instead of the configured one.
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

fn load(c: &Common) -> HResult<ExperimentConfig> {
    let mut sets = c.sets.clone();
    if let Some(d) = &c.out_dir {
        sets.push(format!("paths.out_dir={}", serde_json::Value::String(d.display().to_string())));
    }
    if let Some(r) = &c.run_id {
        sets.push(format!("paths.run_id={}", serde_json::Value::String(r.clone())));
    }
    ExperimentConfig::load(c.config.as_deref(), &sets, c.seed)
}

fn run_typed<T: Scalar>(cmd: &Command, cfg: &ExperimentConfig) -> HResult<()> {
    match cmd {
        Command::Generate(_) => {
            let files = cmd_generate::<T>(cfg)?;
            println!("wrote {} files under {}", files.len(), cfg.run_dir().display());
        }
        Command::Train(_) => {
            let s = cmd_train::<T>(cfg)?;
            println!(
                "trained {} epochs: p_retain {:.4}, p_test {}",
                s.epochs,
                s.p_retain,
                s.p_test.map_or("-".into(), |v| format!("{v:.4}"))
            );
        }
        Command::Unlearn { method, .. } => {
            let out = cmd_unlearn::<T>(cfg, *method)?;
            print!("{}", out.report.to_csv());
            println!("outputs in {}", out.dir.display());
        }
        Command::Evaluate { checkpoint, name, .. } => {
            let out = cmd_evaluate::<T>(cfg, checkpoint.as_deref(), name.as_deref())?;
            print!("{}", out.report.to_csv());
        }
        Command::Sweep { axis, .. } => {
            let report = cmd_sweep::<T>(cfg, *axis)?;
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            check(&report)?;
        }
        Command::Report { run, .. } => {
            let dir = run.clone().unwrap_or_else(|| cfg.run_dir());
            let (path, text) = cmd_report(&dir)?;
            print!("{text}");
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> HResult<()> {
    let common = match &cli.command {
        Command::Generate(c) | Command::Train(c) => c,
        Command::Unlearn { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Sweep { common, .. }
        | Command::Report { common, .. } => common,
    };
    let cfg = load(common)?;
    match cfg.precision {
        Precision::F64 => run_typed::<f64>(&cli.command, &cfg),
        Precision::F32 => run_typed::<f32>(&cli.command, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let HarnessError::PartialSweep { .. } = e {
                eprintln!("failed cells are marked in the sweep CSV status column");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
