//! Command-line front end for the car-following analytics pipeline.
//!
//! Exit codes: 0 success, 1 partial failure (some drives failed), 2 invalid
//! input or configuration. Log verbosity comes from `CARFOLLOW_LOG`
//! (error, warn, info, debug).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use carfollow::config::PipelineConfig;
use carfollow::error::{Error, Result};
use carfollow::pipeline::{
    cmd_calibrate, cmd_extract, cmd_groups, cmd_simulate, cmd_train, CmdStatus, TrainTarget,
};

#[derive(Parser)]
#[command(name = "carfollow", version, about = "Car-following analytics pipeline")]
struct Cli {
    /// Key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-drive parallelism (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit depth calibration against lidar and select the best model.
    Calibrate,
    /// Run the full ingest -> leading-vehicle -> distance -> kinematics
    /// chain on every configured drive.
    Extract,
    /// Compare labeled following-distance groups (t-test table plus
    /// density grids).
    Groups {
        /// `label=series.csv` pairs; falls back to `series.*` config keys.
        #[arg(value_name = "LABEL=SERIES")]
        series: Vec<String>,
    },
    /// Train a boosted acceleration model from following series.
    Train {
        /// Which acceleration to model.
        #[arg(long, value_parser = ["ego", "lv"])]
        target: String,
        /// Series files; falls back to `series.*` config keys.
        series: Vec<PathBuf>,
    },
    /// Render a synthetic drive from a scenario file.
    Simulate { scenario: PathBuf },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        info!("override seed={seed}");
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        info!("override workers={workers}");
        config.workers = workers;
    }
    if let Some(out) = &cli.out {
        info!("override out={}", out.display());
        config.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<CmdStatus> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Calibrate => {
            let outcome = cmd_calibrate(&config)?;
            for m in &outcome.models {
                println!("{}: rmse_m={}", m.model_id, m.fit.rmse_m);
            }
            println!("selected {}", outcome.selected);
            Ok(CmdStatus::Ok)
        }
        Command::Extract => cmd_extract(&config),
        Command::Groups { series } => {
            let pairs: Vec<(String, PathBuf)> = series
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(label, path)| (label.to_string(), PathBuf::from(path)))
                        .ok_or_else(|| {
                            Error::Config(format!("expected LABEL=SERIES, got {s:?}"))
                        })
                })
                .collect::<Result<_>>()?;
            let table = cmd_groups(&config, &pairs)?;
            print!("{table}");
            Ok(CmdStatus::Ok)
        }
        Command::Train { target, series } => {
            let target = TrainTarget::parse(target)?;
            let outcome = cmd_train(&config, target, series)?;
            println!("target={} rmse={}", target.as_str(), outcome.rmse);
            println!("n_train={} n_test={}", outcome.n_train, outcome.n_test);
            for (feature, gain) in outcome.model.feature_importance() {
                println!("importance {feature}={gain}");
            }
            Ok(CmdStatus::Ok)
        }
        Command::Simulate { scenario } => {
            let dir = cmd_simulate(&config, scenario)?;
            println!("rendered {}", dir.display());
            Ok(CmdStatus::Ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("CARFOLLOW_LOG", "warn"),
    )
    .format_timestamp(None)
    .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(CmdStatus::Ok) => ExitCode::from(0),
        Ok(CmdStatus::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
