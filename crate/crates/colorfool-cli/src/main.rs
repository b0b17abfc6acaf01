//! Command-line driver for the semantic colorization attacks.
//!
//! Subcommands: `attack`, `calibrate`, `evaluate`, `randomness`. Exit codes:
//! 0 success, 1 usage error, 2 I/O error, 3 oracle/protocol error. Log level
//! comes from the `COLORFOOL_LOG` environment variable.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use colorfool_cli::commands::{cmd_attack, cmd_calibrate, cmd_evaluate, cmd_randomness};
use colorfool_cli::config::{parse_filters, OracleSpec, RunConfig};
use colorfool_cli::CliError;

#[derive(Parser)]
#[command(name = "colorfool", version, about = "Semantic adversarial colorization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Attack variant: colorfool, colorfool-r or semanticadv.
    #[arg(long, default_value = "colorfool")]
    variant: String,

    /// Trial budget N.
    #[arg(long, default_value_t = 1000)]
    trials: u32,

    /// Base seed; per-image seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Oracle spec: ref:<weights-path> or remote:<host:port>.
    #[arg(long)]
    oracle: String,

    /// Comma list of filters (kind:parameter); defaults to the full grid.
    #[arg(long)]
    filters: Option<String>,

    /// Label-id to category mapping file; defaults to the bundled ADE20K
    /// table.
    #[arg(long)]
    category_map: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Worker pool size.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Attack every image in a manifest and write adversarial PNGs plus
    /// per-image records.
    Attack {
        /// JSON-lines manifest of {image_path, label_map_path?, class_id?}.
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Calibrate detection thresholds on clean images.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score generated adversarial images: success rate, robustness,
    /// undetectability and optional transferability.
    Evaluate {
        /// Directory holding <stem>.adv.png files from `attack`.
        #[arg(long)]
        adv_dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// thresholds.json from `calibrate`.
        #[arg(long)]
        thresholds: PathBuf,
        /// Second oracle spec for transferability.
        #[arg(long)]
        test_oracle: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Repeat the attack on one image with distinct seeds.
    Randomness {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        label_map: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        runs: u32,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn build_config(common: &CommonArgs, test_oracle: Option<&str>) -> Result<RunConfig, CliError> {
    Ok(RunConfig {
        variant: common
            .variant
            .parse()
            .map_err(|e: String| CliError::Usage(e))?,
        max_trials: common.trials,
        seed: common.seed,
        oracle: OracleSpec::parse(&common.oracle)?,
        test_oracle: test_oracle.map(OracleSpec::parse).transpose()?,
        filters: parse_filters(common.filters.as_deref())?,
        category_map: common.category_map.clone(),
        out_dir: common.out.clone(),
        workers: common.workers,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Attack { manifest, common } => {
            let config = build_config(&common, None)?;
            let summary = cmd_attack(&manifest, &config)?;
            println!(
                "attacked {} images: success rate {:.3}",
                summary.images, summary.success_rate
            );
        }
        Command::Calibrate { manifest, common } => {
            let config = build_config(&common, None)?;
            let path = cmd_calibrate(&manifest, &config)?;
            println!("wrote {}", path.display());
        }
        Command::Evaluate {
            adv_dir,
            manifest,
            thresholds,
            test_oracle,
            common,
        } => {
            let config = build_config(&common, test_oracle.as_deref())?;
            let report = cmd_evaluate(&adv_dir, &manifest, &thresholds, &config)?;
            let aggregates = report.aggregates();
            println!(
                "evaluated {} images: sr {:.3}, worst-case sr {}, undetectability {}",
                aggregates.images,
                aggregates.success_rate,
                aggregates
                    .worst_case_sr
                    .map(|v| format!("{v:.3}"))
                    .unwrap_or_else(|| "n/a".into()),
                aggregates
                    .undetectability_any
                    .map(|v| format!("{v:.3}"))
                    .unwrap_or_else(|| "n/a".into()),
            );
        }
        Command::Randomness {
            image,
            label_map,
            runs,
            common,
        } => {
            let config = build_config(&common, None)?;
            cmd_randomness(&image, label_map.as_deref(), runs, &config)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COLORFOOL_LOG", "warn"))
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are not usage errors.
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
