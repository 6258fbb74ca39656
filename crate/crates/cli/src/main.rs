use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pqfl_core::runner::{self, ExperimentConfig, Mode, OUTPUT_DIR_ENV, SEED_ENV};

#[derive(Parser)]
#[command(name = "pqfl", version, about = "Personalized quantum federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run(RunArgs),
    /// Run every point of the config's [sweep] grid.
    Sweep(RunArgs),
    /// Compare finished run directories.
    Compare {
        #[arg(required = true, num_args = 2..)]
        run_dirs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    /// Training mode; overrides the config.
    #[arg(long, value_enum)]
    mode: Option<CliMode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Qfl,
    Pqfl,
    Local,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Qfl => Mode::Qfl,
            CliMode::Pqfl => Mode::Pqfl,
            CliMode::Local => Mode::Local,
        }
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = runner::load_config(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let result = runner::run(&cfg)?;
            let s = &result.summary;
            let m = &s.final_metrics;
            println!("wrote {}", result.dir.display());
            println!(
                "mode {} seed {} rounds {}: val_loss {} FE {} ME {} AUROC {} AUPR {}",
                s.mode.as_str(),
                s.seed,
                s.global_rounds,
                fmt(m.val_loss),
                fmt(m.fe_pct),
                fmt(m.me_pct),
                fmt(m.auroc),
                fmt(m.aupr)
            );
            println!("payload {} bits total, {} circuit evaluations", s.total_payload_bits, s.total_circuit_evals);
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            let results = runner::run_sweep(&cfg)?;
            for (point, s) in &results {
                println!("{:<40} AUROC {}  AUPR {}", point.name, fmt(s.final_metrics.auroc), fmt(s.final_metrics.aupr));
            }
            println!("wrote {}", cfg.output_dir.join(runner::SWEEP_SUMMARY_FILE).display());
        }
        Command::Compare { run_dirs } => {
            print!("{}", runner::compare(&run_dirs)?.render());
        }
    }
    Ok(())
}
