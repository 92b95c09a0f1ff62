//! `wdist`: command-line front end for Wasserstein distortion.

mod cmd;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "wdist", version, about = "Wasserstein distortion: evaluation, heatmaps, sigma maps, synthesis")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// diag | bures | exact1d | sliced
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Constant pooling width, used where no sigma map is given.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Sigma map as a single-layer WDGRID.
    #[arg(long = "sigma-map", global = true)]
    sigma_map: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Caps the worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Distortion between a reference and a reconstruction.
    Distortion(cmd::distortion::DistortionArgs),
    /// Optimize an image toward a reference under a sigma map.
    Synthesize(cmd::synthesize::SynthesizeArgs),
    /// Build a sigma map from a saliency image or a constant.
    SigmaMap(cmd::sigma_map::SigmaMapArgs),
    /// Numerical checks of the pooling axioms and the small/large-width limits.
    ValidateLimits,
    /// Normalized distortion matrix over a list of images.
    Pairwise(cmd::pairwise::PairwiseArgs),
    /// One synthesis per constant width.
    Progression(cmd::progression::ProgressionArgs),
    /// Time the distortion backends.
    Bench,
    /// Write the feature stack of an image as WDGRID.
    ExportFeatures(cmd::features::ExportArgs),
}

/// Resolved shared state handed to every command.
pub struct Ctx {
    pub config: RunConfig,
    pub sigma: Option<f64>,
    pub sigma_map: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Ctx {
    fn new(common: &Common) -> CliResult<Self> {
        let mut config = RunConfig::load(common.config.as_deref())?;
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        if let Some(b) = &common.backend {
            config.backend = b.parse()?;
            config.bench.backends = vec![b.clone()];
        }
        if let Some(s) = common.sigma {
            if !s.is_finite() || s < 0.0 {
                return Err(CliError::Usage(format!("--sigma must be finite and >= 0, got {s}")));
            }
        }
        Ok(Self {
            config,
            sigma: common.sigma,
            sigma_map: common.sigma_map.clone(),
            out: common.out.clone(),
        })
    }

    pub fn out(&self) -> CliResult<&std::path::Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("this command needs --out".into()))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx::new(&cli.common)?;
    match cli.command {
        Command::Distortion(a) => cmd::distortion::run(&ctx, &a),
        Command::Synthesize(a) => cmd::synthesize::run(&ctx, &a),
        Command::SigmaMap(a) => cmd::sigma_map::run(&ctx, &a),
        Command::ValidateLimits => cmd::limits::run(&ctx),
        Command::Pairwise(a) => cmd::pairwise::run(&ctx, &a),
        Command::Progression(a) => cmd::progression::run(&ctx, &a),
        Command::Bench => cmd::bench::run(&ctx),
        Command::ExportFeatures(a) => cmd::features::run(&ctx, &a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wdist: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
