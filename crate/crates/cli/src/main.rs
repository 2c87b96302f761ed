use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pointexplainer::par;
use pointexplainer_cli::{cmd_explain, cmd_report, cmd_synth, cmd_train, cmd_verify, CliError, RunConfig};

/// Point-cloud diagnosis of hand-drawn spirals with perturbation-based explanations.
#[derive(Debug, Parser)]
#[command(name = "pointexplainer", version)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Master seed (same as `--set seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort of spiral recordings.
    Synth,
    /// Cross-validate the classifier and save one model per fold.
    Train,
    /// Attribution map and SVG rendering for one subject.
    Explain {
        subject_id: String,
    },
    /// Faithfulness metrics for every surrogate kind and perturbation strategy.
    Verify,
    /// ROC, calibration and decision curves with bootstrap bands.
    Report,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &cli.overrides {
        config.apply_override(pair)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let config = resolve(cli)?;
    par::with_threads(cli.threads, || match &cli.command {
        Command::Synth => {
            let files = cmd_synth(&config)?;
            Ok(format!("wrote {} recordings to {}", files.len(), config.data_dir().display()))
        }
        Command::Train => {
            let outcome = cmd_train(&config)?;
            let acc: Vec<String> = outcome
                .fold_metrics
                .iter()
                .map(|m| m.accuracy.map(|a| format!("{a:.4}")).unwrap_or_default())
                .collect();
            Ok(format!("trained {} folds, accuracy per fold: {}", acc.len(), acc.join(" ")))
        }
        Command::Explain { subject_id } => {
            let out = cmd_explain(&config, subject_id)?;
            Ok(format!("wrote {} and {}", out.map_path.display(), out.svg_path.display()))
        }
        Command::Verify => {
            let outcome = cmd_verify(&config)?;
            Ok(pointexplainer::fidelity::report_table(&outcome.rows))
        }
        Command::Report => {
            let outcome = cmd_report(&config)?;
            Ok(format!(
                "AUC {:.4} (95% CI {:.4}-{:.4}), Brier {:.4}",
                outcome.auc, outcome.auc_band.lo[0], outcome.auc_band.hi[0], outcome.brier
            ))
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(message) => {
            println!("{}", message.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
