use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cidp_bench::calibrate::{calibrate, load_record_eps, CalibrateOptions};
use cidp_bench::config::{ExperimentConfig, TopologyConfig};
use cidp_bench::pipeline::{run_pipeline, PipelineOptions};
use cidp_bench::{experiment, presets, BenchError};
use cidp_core::patchgen::FirmwareImage;
use cidp_core::simnet::RadioParams;

/// Differential reprogramming bench: dissemination experiments, channel
/// calibration, and the end-to-end patch pipeline.
#[derive(Parser)]
#[command(name = "cidp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a preset or a config file.
    Run {
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for CSVs and the plot.
        #[arg(long)]
        out: PathBuf,
        /// Seed base; overridden by $CIDP_SEED when set.
        #[arg(long)]
        seed: Option<u64>,
        /// Override runs per sweep point.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Use floor(log2(N+1)) for N_max instead of the ceiling.
        #[arg(long)]
        nmax_floor: bool,
        /// Disseminate the object as one unfragmented packet.
        #[arg(long)]
        glossy_mode: bool,
        /// Calibration record supplying eps_byte.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Diff two firmware images, disseminate the patch once, and verify
    /// every delivered node byte-for-byte.
    Pipeline {
        /// Old firmware image (text format).
        #[arg(long)]
        old: PathBuf,
        /// Proposed new firmware image.
        #[arg(long)]
        new: PathBuf,
        /// Topology spec, e.g. line:3, grid:4x5:r=1, rgg:n=94,r=1,side=4.5.
        #[arg(long, default_value = "line:3")]
        topology: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-byte corruption probability (default 0: lossless demo).
        #[arg(long)]
        eps: Option<f64>,
        /// Start jitter sigma in microseconds (default 0).
        #[arg(long)]
        sigma_us: Option<f64>,
        /// Directory for the (old, new, patch) version store.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        nmax_floor: bool,
    },
    /// Bisect eps_byte until the unfragmented 128-byte flood at N=94,
    /// N_max=6 hits the target reliability.
    Calibrate {
        #[arg(long, default_value_t = 0.9934)]
        target: f64,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 0.05)]
        hi: f64,
        /// Node trials per reliability evaluation.
        #[arg(long, default_value_t = 30_000)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the calibration record here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Preset inventory.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
}

#[derive(Subcommand)]
enum PresetsAction {
    List,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// $CIDP_SEED beats any other seed source.
fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64, BenchError> {
    if let Ok(env) = std::env::var("CIDP_SEED") {
        return env
            .parse()
            .map_err(|e| BenchError::Invalid(format!("bad CIDP_SEED: {e}")));
    }
    Ok(flag.unwrap_or(fallback))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, BenchError> {
    match cli.command {
        Command::Run {
            preset,
            config,
            out,
            seed,
            runs,
            workers,
            nmax_floor,
            glossy_mode,
            calibration,
        } => {
            let mut config = match (&preset, &config) {
                (Some(name), None) => presets::preset(name)?,
                (None, Some(path)) => ExperimentConfig::from_file(path)?,
                (None, None) => {
                    return Err(BenchError::Invalid(
                        "pass --preset NAME or --config FILE".into(),
                    ))
                }
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            config.seed = resolve_seed(seed, config.seed)?;
            if let Some(runs) = runs {
                config.runs = runs;
                config.min_node_trials = None;
            }
            if nmax_floor {
                config.nmax_floor = true;
            }
            if glossy_mode {
                config.glossy_mode = true;
            }
            if let Some(record) = calibration {
                config.radio.eps_byte = load_record_eps(&record)?;
            }
            let outcome = experiment::run_experiment(&config, &out, workers)?;
            for series in &outcome.series {
                for point in &series.points {
                    println!(
                        "{} {}={}: reliability {:.6} (n={}), mean latency {:.1} us",
                        series.name,
                        point.variable,
                        point.value,
                        point.metrics.reliability,
                        point.node_trials,
                        point.metrics.latency.mean_us
                    );
                }
            }
            println!("artifacts written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Pipeline {
            old,
            new,
            topology,
            seed,
            eps,
            sigma_us,
            store,
            nmax_floor,
        } => {
            let old_image = FirmwareImage::from_text(&std::fs::read_to_string(&old)?)
                .map_err(BenchError::Patch)?;
            let new_image = FirmwareImage::from_text(&std::fs::read_to_string(&new)?)
                .map_err(BenchError::Patch)?;
            let mut radio = RadioParams::lossless();
            if let Some(eps) = eps {
                radio.eps_byte = eps;
            }
            if let Some(sigma) = sigma_us {
                radio.sigma_jitter_ns = sigma * 1000.0;
            }
            let opts = PipelineOptions {
                topology: TopologyConfig::parse(&topology)?,
                seed: resolve_seed(seed, 1)?,
                radio,
                nmax_floor,
                store_dir: store,
                ..PipelineOptions::default()
            };
            let report = run_pipeline(&old_image, &new_image, &opts)?;
            println!("{report}");
            if report.all_verified() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: verification failed on a delivered node");
                Ok(ExitCode::from(4))
            }
        }
        Command::Calibrate {
            target,
            lo,
            hi,
            trials,
            seed,
            out,
            workers,
        } => {
            let defaults = CalibrateOptions::default();
            let opts = CalibrateOptions {
                target,
                eps_lo: lo,
                eps_hi: hi,
                node_trials: trials,
                seed: resolve_seed(seed, defaults.seed)?,
                ..defaults
            };
            let result = calibrate(&opts, workers)?;
            print!("{}", result.to_record());
            if let Some(path) = out {
                std::fs::write(&path, result.to_record())?;
                println!("record written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { action } => match action {
            PresetsAction::List => {
                for (name, description) in presets::list() {
                    println!("{name:<16} {description}");
                }
                Ok(ExitCode::SUCCESS)
            }
        },
    }
}
