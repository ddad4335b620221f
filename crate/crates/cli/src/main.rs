use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use octocal::pipeline::{self, PipelineConfig};
use octocal::synth::{write_batch, BatchConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "octocal", version, about = "Focal-length self-calibration from stop-sign images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate focal lengths from a dataset directory.
    Calibrate {
        dataset: PathBuf,
        /// Pipeline configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Reference focal lengths `fx,fy` for relative-error columns.
        #[arg(long, value_parser = parse_gt)]
        gt: Option<[f64; 2]>,
    },
    /// Render a synthetic dataset with known intrinsics.
    Synth {
        #[arg(long)]
        scenes: usize,
        /// Contour noise, pixels.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scene settings (TOML); `--noise` still applies.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the summary of a finished calibration.
    Report { out_dir: PathBuf },
    /// Print the default pipeline configuration.
    DefaultConfig,
}

fn parse_gt(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [fx, fy] = parts.as_slice() else {
        return Err(format!("expected fx,fy, got {s:?}"));
    };
    let fx: f64 = fx.parse().map_err(|e| format!("fx: {e}"))?;
    let fy: f64 = fy.parse().map_err(|e| format!("fy: {e}"))?;
    if !(fx > 0.0 && fy > 0.0) {
        return Err("focal lengths must be positive".into());
    }
    Ok([fx, fy])
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Calibrate {
            dataset,
            config,
            out,
            seed,
            gt,
        } => {
            let mut cfg = PipelineConfig::from_file(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if gt.is_some() {
                cfg.ground_truth = gt;
            }
            let report = pipeline::run(&dataset, &cfg, &out)
                .with_context(|| format!("calibrating {}", dataset.display()))?;
            print!("{}", pipeline::summary_table(&report));
            info!("outputs written to {}", out.display());
        }
        Command::Synth {
            scenes,
            noise,
            out,
            seed,
            config,
        } => {
            if scenes == 0 {
                bail!("--scenes must be at least 1");
            }
            if !(noise >= 0.0) {
                bail!("--noise must be non-negative");
            }
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    toml::from_str::<BatchConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => BatchConfig::default(),
            };
            cfg.contour_noise_px = noise;
            let truth = write_batch(&out, scenes, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
            println!(
                "wrote {} scenes to {} (fx={}, fy={}, cx={}, cy={})",
                truth.frames.len(),
                out.display(),
                truth.intrinsics.fx,
                truth.intrinsics.fy,
                truth.intrinsics.cx,
                truth.intrinsics.cy
            );
        }
        Command::Report { out_dir } => {
            let report = pipeline::load_report(&out_dir)?;
            print!("{}", pipeline::summary_table(&report));
        }
        Command::DefaultConfig => print!("{}", PipelineConfig::default().to_toml_string()),
    }
    Ok(())
}
