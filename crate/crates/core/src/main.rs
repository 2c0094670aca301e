use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ofe_gwr::gwr::AiccFormula;
use ofe_gwr::io::{FITS_DIR, SCORES_FILE, TRIALS_DIR};
use ofe_gwr::pipeline::{
    fit_to_dir, report_to_dir, resolve_config, run_to_dir, score_to_dir, simulate_to_dir, Overrides,
};
use ofe_gwr::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ofe-gwr",
    version,
    about = "Randomised vs systematic strip trials analysed by GWR"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; defaults to <in>/config.json when present, else the full study.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Existing output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_formula)]
    aicc_formula: Option<AiccFormula>,
}

fn parse_formula(s: &str) -> std::result::Result<AiccFormula, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, fit, score and report in one go.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write per-trial and per-fit files.
        #[arg(long)]
        emit_trials: bool,
    },
    /// Write trial files.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Only this scenario id (requires --replicate).
        #[arg(long, requires = "replicate")]
        scenario: Option<usize>,
        #[arg(long, requires = "scenario")]
        replicate: Option<usize>,
    },
    /// Fit stored trials.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Directory holding trials/ (default: --out).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Fit at this fixed bandwidth instead of the configured policies.
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Score stored fits against the true coefficients.
    Score {
        #[command(flatten)]
        common: Common,
        /// Directory holding trials/ and fits/ (default: --out).
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Tables, ANOVA and figures from a score file.
    Report {
        #[command(flatten)]
        common: Common,
        /// Score file (default: <out>/scores.csv).
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

fn setup(common: &Common, fallback: Option<&PathBuf>) -> Result<ofe_gwr::config::ScenarioConfig> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot start {n} threads: {e}")))?;
    }
    let overrides = Overrides {
        seed: common.seed,
        aicc_formula: common.aicc_formula,
    };
    resolve_config(
        common.config.as_deref(),
        fallback.map(|p| p.as_path()),
        &overrides,
    )
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            common,
            emit_trials,
        } => {
            let config = setup(&common, None)?;
            run_to_dir(&config, &common.out, emit_trials).map(|_| ())
        }
        Command::Simulate {
            common,
            scenario,
            replicate,
        } => {
            let config = setup(&common, None)?;
            simulate_to_dir(&config, &common.out, scenario.zip(replicate))
        }
        Command::Fit {
            common,
            input,
            bandwidth,
        } => {
            let input = input.unwrap_or_else(|| common.out.clone());
            let config = setup(&common, Some(&input))?;
            fit_to_dir(&config, &input.join(TRIALS_DIR), &common.out, bandwidth)
        }
        Command::Score { common, input } => {
            let input = input.unwrap_or_else(|| common.out.clone());
            let config = setup(&common, Some(&input))?;
            score_to_dir(
                &config,
                &input.join(TRIALS_DIR),
                &input.join(FITS_DIR),
                &common.out,
            )
            .map(|_| ())
        }
        Command::Report { common, scores } => {
            let scores = scores.unwrap_or_else(|| common.out.join(SCORES_FILE));
            let fallback = scores.parent().map(PathBuf::from);
            let config = setup(&common, fallback.as_ref())?;
            report_to_dir(&config, &scores, &common.out)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
