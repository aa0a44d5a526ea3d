//! Command-line front end for the dual-arm simulation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use specfuse::config::{load_config, PipelineConfig, SceneConfig};
use specfuse::error::{Error, Result};
use specfuse::pipeline::{
    run_classify, run_design, run_fuse, run_pipeline, run_simulate, ClassifyRecord, DesignRecord,
    FuseRecord, SimulateRecord, StageOutcome,
};
use specfuse::sensing::NoiseKind;

#[derive(Parser)]
#[command(
    name = "specfuse",
    version,
    about = "Dual-arm compressive spectral imaging: design, simulate, fuse, classify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the filter banks and per-pixel coded-aperture patterns.
    Design(StageArgs),
    /// Measure the scene through both arms, with optional noise.
    Simulate(StageArgs),
    /// Reconstruct the fused feature cube from the measurements.
    Fuse(StageArgs),
    /// Train the pixel classifier on fused features and score it.
    Classify(StageArgs),
    /// Run design, simulate, fuse and classify in order.
    Pipeline(StageArgs),
}

impl Command {
    fn args(&self) -> &StageArgs {
        match self {
            Command::Design(a)
            | Command::Simulate(a)
            | Command::Fuse(a)
            | Command::Classify(a)
            | Command::Pipeline(a) => a,
        }
    }
}

#[derive(Args)]
struct StageArgs {
    /// TOML config file; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Master seed: sets the scene, design, noise and classifier seeds.
    #[arg(long)]
    seed: Option<u64>,

    /// Noise model: none, gaussian or poisson (overrides noise.kind).
    #[arg(long)]
    noise: Option<String>,

    /// Measurement SNR in dB (overrides noise.snr_db).
    #[arg(long)]
    snr_db: Option<f64>,

    /// Sparsity weight (overrides fusion.lambda1; auto-scaled when unset).
    #[arg(long)]
    lambda1: Option<f64>,

    /// Smoothness weight (overrides fusion.lambda2).
    #[arg(long)]
    lambda2: Option<f64>,

    /// Solver iteration cap (overrides fusion.max_iters).
    #[arg(long)]
    max_iters: Option<usize>,

    /// Training epochs (overrides classifier.epochs).
    #[arg(long)]
    epochs: Option<usize>,

    /// Fraction of labeled pixels used for training (overrides
    /// classifier.train_rate).
    #[arg(long)]
    train_rate: Option<f64>,
}

fn resolve_config(args: &StageArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    if let Some(seed) = args.seed {
        if let SceneConfig::Synthetic { seed: s, .. } = &mut config.scene {
            *s = seed;
        }
        config.design.seed = seed;
        config.noise.seed = seed;
        config.classifier.seed = seed;
    }
    if let Some(kind) = &args.noise {
        config.noise.kind = match kind.as_str() {
            "none" => NoiseKind::None,
            "gaussian" => NoiseKind::Gaussian,
            "poisson" => NoiseKind::Poisson,
            other => {
                return Err(Error::Config(format!(
                    "unknown noise model {other:?}; expected none, gaussian or poisson"
                )))
            }
        };
    }
    if let Some(snr) = args.snr_db {
        config.noise.snr_db = Some(snr);
    }
    if let Some(l1) = args.lambda1 {
        config.fusion.lambda1 = Some(l1);
    }
    if let Some(l2) = args.lambda2 {
        config.fusion.lambda2 = l2;
    }
    if let Some(iters) = args.max_iters {
        config.fusion.max_iters = iters;
    }
    if let Some(epochs) = args.epochs {
        config.classifier.epochs = epochs;
    }
    if let Some(rate) = args.train_rate {
        config.classifier.train_rate = rate;
    }
    Ok(config)
}

fn cache_note(cached: bool) -> &'static str {
    if cached {
        " (cached)"
    } else {
        ""
    }
}

fn print_design(outcome: &StageOutcome<DesignRecord>) {
    let r = &outcome.record;
    println!(
        "design: {}x{}x{} scene -> {} feature bands, hs {} snapshots of {} filters, \
         ms {} snapshots of {} filters, rates 1/q={:.4} 1/p^2={:.4}{}",
        r.scene_rows,
        r.scene_cols,
        r.scene_bands,
        r.feature_bands,
        r.hs_snapshots,
        r.hs_filters,
        r.ms_snapshots,
        r.ms_filters,
        r.spectral_rate,
        r.spatial_rate,
        cache_note(outcome.cached)
    );
}

fn print_simulate(outcome: &StageOutcome<SimulateRecord>) {
    let r = &outcome.record;
    let noise = match (r.noise.kind, r.noise.snr_db) {
        (NoiseKind::None, _) => "none".to_string(),
        (kind, Some(snr)) => format!("{kind:?} at {snr} dB").to_lowercase(),
        (kind, None) => format!("{kind:?}").to_lowercase(),
    };
    let alpha = match (r.poisson_alpha_ms, r.poisson_alpha_hs) {
        (Some(a), Some(b)) => format!(", photon scales {a:.4e} / {b:.4e}"),
        _ => String::new(),
    };
    println!(
        "simulate: {} ms + {} hs measurements, noise {noise}{alpha}{}",
        r.ms_measurements,
        r.hs_measurements,
        cache_note(outcome.cached)
    );
}

fn print_fuse(outcome: &StageOutcome<FuseRecord>) {
    let r = &outcome.record;
    println!(
        "fuse: {} iterations ({}), lambda1 = {:.6e}, lambda2 = {:.6e}, \
         objective {:.6e}, rel change {:.3e}{}",
        r.iterations,
        if r.converged { "converged" } else { "iteration cap" },
        r.lambda1,
        r.lambda2,
        r.final_objective,
        r.final_rel_change,
        cache_note(outcome.cached)
    );
}

fn print_classify(outcome: &StageOutcome<ClassifyRecord>) {
    let r = &outcome.record;
    println!(
        "classify: overall accuracy {:.4}, average accuracy {:.4}, kappa {:.4} \
         ({} train / {} test pixels){}",
        r.overall_accuracy,
        r.average_accuracy,
        r.kappa,
        r.train_pixels,
        r.test_pixels,
        cache_note(outcome.cached)
    );
}

fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(cli.command.args())?;
    match cli.command {
        Command::Design(_) => print_design(&run_design(&config)?),
        Command::Simulate(_) => print_simulate(&run_simulate(&config)?),
        Command::Fuse(_) => print_fuse(&run_fuse(&config)?),
        Command::Classify(_) => print_classify(&run_classify(&config)?),
        Command::Pipeline(_) => {
            let summary = run_pipeline(&config)?;
            print_design(&summary.design);
            print_simulate(&summary.simulate);
            print_fuse(&summary.fuse);
            print_classify(&summary.classify);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
