use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use focal_anneal::harness::{
    cmd_ablate, cmd_bench, cmd_evaluate, cmd_fuse, cmd_generate, cmd_train, ErrorRecord, ExperimentConfig,
};
use focal_anneal::{Error, Result};

/// Focal-loss γ annealing experiments on two-modality long-tailed data.
#[derive(Debug, Parser)]
#[command(name = "focal-anneal", version)]
struct Cli {
    /// JSON experiment config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run ablation cells one after another.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset and write its feature table and manifest.
    Generate,
    /// Train the configured pathways and evaluate them on the test split.
    Train,
    /// Compare cross-entropy with the four γ profiles.
    Ablate,
    /// Average two prediction tables and evaluate the result.
    Fuse { a: PathBuf, b: PathBuf },
    /// Time fused inference at increasing batch sizes.
    Bench,
    /// Evaluate one prediction table.
    Evaluate { table: PathBuf },
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!("config file {} does not exist", path.display())));
            }
            ExperimentConfig::load(path)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Generate => {
            let out = cmd_generate(&cfg)?;
            let [train, val, test] = out.split_sizes;
            println!("wrote {}", out.features.display());
            println!("splits train {train}  val {val}  test {test}");
            print!("{}", out.histogram);
        }
        Command::Train => print!("{}", cmd_train(&cfg)?.summary.to_text()),
        Command::Ablate => print!("{}", cmd_ablate(&cfg, cli.serial)?.to_text()),
        Command::Fuse { a, b } => {
            let out = cmd_fuse(a, b, &cfg.out_dir)?;
            print_warnings(&out.warnings);
            print!("{}", out.report.to_text());
        }
        Command::Bench => print!("{}", cmd_bench(&cfg)?.to_text()),
        Command::Evaluate { table } => print!("{}", cmd_evaluate(table, &cfg.out_dir)?.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": ErrorRecord::from(&e) });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
