//! `posetrack`: prior training, synthetic data, tracking, evaluation and
//! the filter benchmark.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod commands;
mod config;
mod error;
mod estimates;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use posetrack::trackers::Variant;

use crate::config::Config;
use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "posetrack", version, about = "Upper-body 3D pose tracking from 2D joint measurements")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file; see `show-config` for every key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set tracker.n_particles=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit left and right arm priors to skeleton recordings.
    TrainPrior {
        /// Skeleton CSV files, concatenated in order.
        #[arg(long = "skeleton", required = true)]
        skeletons: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Mixture components per chain.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n_views: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic skeleton and optionally its measurements and edges.
    GenSynth {
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skeleton CSV.
        #[arg(long)]
        out: PathBuf,
        /// Also write clean 2D measurements here.
        #[arg(long)]
        measurements: Option<PathBuf>,
        /// Also write synthetic limb edges here.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Add pixel noise, hand swaps and dropouts to a measurement file.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-frame swap flags as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        p_drop: Option<f64>,
        #[arg(long)]
        p_swap: Option<f64>,
        #[arg(long)]
        swap_duration: Option<f64>,
    },
    /// Track a measurement sequence.
    Track {
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        prior_left: PathBuf,
        #[arg(long)]
        prior_right: PathBuf,
        /// Estimates and per-frame diagnostics as CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tracker: TrackerFlags,
        /// Edge file; enables the hand-swap check on every frame.
        #[arg(long)]
        edge_file: Option<PathBuf>,
        /// Per-frame swap-check results as CSV.
        #[arg(long, requires = "edge_file")]
        swap_log: Option<PathBuf>,
    },
    /// Compare estimates against a skeleton recording.
    Eval {
        #[arg(long)]
        estimates: PathBuf,
        /// Ground-truth skeleton CSV.
        #[arg(long)]
        truth: PathBuf,
        /// Take the camera from this measurement file instead of the config.
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Time tracker variants over several seeds.
    Bench {
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        prior_left: PathBuf,
        #[arg(long)]
        prior_right: PathBuf,
        /// Ground-truth skeleton for the error columns.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Comma-separated; all five by default.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        tracks: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the effective configuration with all defaults.
    ShowConfig,
}

#[derive(Args, Debug)]
struct TrackerFlags {
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    particles: Option<usize>,
    /// Tracks per chain for mkf-sampled.
    #[arg(long)]
    tracks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Turns dedicated flags into `--set` overrides so that they win over the
/// config file the same way.
fn push<T: ToString>(out: &mut Vec<String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        out.push(format!("{key}={}", v.to_string()));
    }
}

fn quoted(s: String) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn run(cli: Cli) -> CliResult<()> {
    let mut overrides = cli.common.overrides.clone();
    match &cli.command {
        Command::TrainPrior { k, n_views, seed, .. } => {
            push(&mut overrides, "training.k", *k);
            push(&mut overrides, "training.n_views", *n_views);
            push(&mut overrides, "training.seed", *seed);
        }
        Command::Corrupt {
            noise_sigma,
            p_drop,
            p_swap,
            swap_duration,
            ..
        } => {
            push(&mut overrides, "corruption.noise_sigma_px", *noise_sigma);
            push(&mut overrides, "corruption.p_drop", *p_drop);
            push(&mut overrides, "corruption.p_swap_onset", *p_swap);
            push(&mut overrides, "corruption.swap_mean_duration", *swap_duration);
        }
        Command::Track { tracker, .. } => {
            if let Some(v) = &tracker.variant {
                v.parse::<Variant>()?;
            }
            push(&mut overrides, "tracker.variant", tracker.variant.clone().map(quoted));
            push(&mut overrides, "tracker.n_particles", tracker.particles);
            push(&mut overrides, "tracker.n_tracks", tracker.tracks);
            push(&mut overrides, "tracker.rng_seed", tracker.seed);
        }
        Command::Bench { particles, tracks, .. } => {
            push(&mut overrides, "tracker.n_particles", *particles);
            push(&mut overrides, "tracker.n_tracks", *tracks);
        }
        _ => {}
    }
    let cfg = Config::load(cli.common.config.as_deref(), &overrides)?;

    match cli.command {
        Command::ShowConfig => commands::show_config(&cfg),
        Command::GenSynth {
            frames,
            seed,
            out,
            measurements,
            edges,
        } => commands::gen_synth(
            &cfg,
            &commands::SynthArgs {
                frames,
                seed,
                out,
                measurements,
                edges,
            },
        ),
        Command::Corrupt { input, out, seed, log, .. } => commands::corrupt(&cfg, &commands::CorruptArgs { input, out, seed, log }),
        Command::TrainPrior { skeletons, out_dir, .. } => commands::train_prior(&cfg, &commands::TrainArgs { skeletons, out_dir }),
        Command::Track {
            measurements,
            prior_left,
            prior_right,
            out,
            edge_file,
            swap_log,
            ..
        } => commands::track(
            &cfg,
            &commands::TrackArgs {
                measurements,
                prior_left,
                prior_right,
                out,
                edge_file,
                swap_log,
            },
        ),
        Command::Eval {
            estimates,
            truth,
            measurements,
            out_dir,
        } => commands::eval(
            &cfg,
            &commands::EvalArgs {
                estimates,
                truth,
                measurements,
                out_dir,
            },
        ),
        Command::Bench {
            measurements,
            prior_left,
            prior_right,
            truth,
            variants,
            seeds,
            out_dir,
            ..
        } => {
            let variants = if variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                variants.iter().map(|v| v.parse::<Variant>()).collect::<posetrack::Result<Vec<_>>>()?
            };
            commands::bench(
                &cfg,
                &commands::BenchArgs {
                    prior_left,
                    prior_right,
                    measurements,
                    truth,
                    variants,
                    seeds,
                    out_dir,
                },
            )
        }
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
            ExitCode::from(e.exit_code())
        }
    }
}

