use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use dipolelets::bands::BandSet;
use dipolelets::config::RunConfig;
use dipolelets::io::{read_any_volume, VOLUME_EXT};
use dipolelets::metrics::metric_report;
use dipolelets::pipeline::{
    build_phantom, compute_weights, corruption_spec, reconstruct, run_pipeline, simulate_phase,
    ArtifactWriter, InStage, StageError, MANIFEST_NAME,
};
use dipolelets::simulate::{corrupt, Phantom};
use dipolelets::transform::analyze;
use dipolelets::volume::Volume;
use dipolelets::Error;

/// Dipole-aligned multiscale analysis and susceptibility reconstruction.
#[derive(Parser)]
#[command(name = "dipolelets", version)]
struct Cli {
    /// Run configuration (JSON); built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Random seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize the configured phantom.
    Phantom,
    /// Simulate the clean phase of a susceptibility map.
    Forward {
        /// chi33 volume; the configured phantom when absent.
        #[arg(long)]
        chi: Option<PathBuf>,
        #[arg(long, requires = "chi")]
        chi13: Option<PathBuf>,
        #[arg(long, requires = "chi")]
        chi23: Option<PathBuf>,
    },
    /// Add phase offsets and complex noise.
    Corrupt {
        #[arg(long)]
        phase: PathBuf,
    },
    /// Split a phase volume into its bands.
    Decompose {
        #[arg(long)]
        phase: PathBuf,
    },
    /// Near-cone energy, data weight and reliability mask.
    Weights {
        #[arg(long)]
        phase: PathBuf,
    },
    /// Reconstruct susceptibility with the configured solver.
    Recon {
        #[arg(long)]
        phase: PathBuf,
        /// Data weight; `W = 1` when absent.
        #[arg(long)]
        weight: Option<PathBuf>,
    },
    /// Compare an estimate with the ground truth inside a region.
    Metrics {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        roi: PathBuf,
    },
    /// Every stage, with figures and a manifest.
    Pipeline,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Phantom => "phantom",
            Command::Forward { .. } => "forward",
            Command::Corrupt { .. } => "corrupt",
            Command::Decompose { .. } => "decompose",
            Command::Weights { .. } => "weights",
            Command::Recon { .. } => "solve",
            Command::Metrics { .. } => "metrics",
            Command::Pipeline => "pipeline",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("plain JSON"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = json!({
                "stage": e.stage,
                "code": e.error.code(),
                "message": e.error.to_string(),
            });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<(), StageError> {
    let Ok(raw) = std::env::var("DIPOLELETS_THREADS") else {
        return Ok(());
    };
    let n = raw
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("DIPOLELETS_THREADS = {raw:?} is not a positive integer")))
        .stage("config")?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
        .stage("config")
}

fn load_config(cli: &Cli) -> Result<RunConfig, StageError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path).stage("config")?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.output {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn read(path: &Path, stage: &'static str) -> Result<Volume, StageError> {
    read_any_volume(path).stage(stage)
}

fn run(cli: &Cli) -> Result<serde_json::Value, StageError> {
    configure_threads()?;
    let mut cfg = load_config(cli)?;
    let stage = cli.command.stage();
    let quiet = cli.quiet;
    let say = |msg: &str| {
        if !quiet {
            eprintln!("dipolelets: {msg}");
        }
    };

    if let Command::Pipeline = cli.command {
        let manifest = run_pipeline(&cfg, &cfg.output_dir, &mut |s| say(s))?;
        return Ok(json!({
            "stage": stage,
            "manifest": cfg.output_dir.join(MANIFEST_NAME),
            "artifacts": manifest.artifacts.len(),
            "metrics": manifest.metrics,
        }));
    }

    // Standalone stages take their grid from the input volume.
    let adopt = |cfg: &mut RunConfig, v: &Volume| cfg.grid = *v.grid();
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Error::Io { path: cfg.output_dir.clone(), source: e })
        .stage(stage)?;
    let mut w = ArtifactWriter::new(cfg.output_dir.clone());
    let vol = |name: &str| format!("{name}.{VOLUME_EXT}");
    let mut extra = json!(null);
    say(stage);

    match &cli.command {
        Command::Phantom => {
            let p = build_phantom(&cfg).stage(stage)?;
            w.volume(&vol("phantom_chi33"), &p.chi33, stage).stage(stage)?;
            if let Some(v) = &p.chi13 {
                w.volume(&vol("phantom_chi13"), v, stage).stage(stage)?;
            }
            if let Some(v) = &p.chi23 {
                w.volume(&vol("phantom_chi23"), v, stage).stage(stage)?;
            }
            w.volume(&vol("roi"), &p.mask, stage).stage(stage)?;
        }
        Command::Forward { chi, chi13, chi23 } => {
            let p = match chi {
                Some(path) => {
                    let chi33 = read(path, stage)?;
                    let chi13 = chi13.as_deref().map(|p| read(p, stage)).transpose()?;
                    let chi23 = chi23.as_deref().map(|p| read(p, stage)).transpose()?;
                    adopt(&mut cfg, &chi33);
                    Phantom {
                        mask: Volume::filled(*chi33.grid(), 1.0),
                        chi33,
                        chi13,
                        chi23,
                        description: vec![format!("loaded from {}", path.display())],
                    }
                }
                None => build_phantom(&cfg).stage(stage)?,
            };
            let psi = simulate_phase(&cfg, &p).stage(stage)?;
            w.volume(&vol("phase_clean"), &psi, stage).stage(stage)?;
        }
        Command::Corrupt { phase } => {
            let psi = read(phase, stage)?;
            adopt(&mut cfg, &psi);
            let out = corrupt(&psi, &corruption_spec(&cfg)).stage(stage)?;
            w.volume(&vol("phase_corrupted"), &out, stage).stage(stage)?;
        }
        Command::Decompose { phase } => {
            let psi = read(phase, stage)?;
            adopt(&mut cfg, &psi);
            let bs = BandSet::new(&cfg.grid, &cfg.bands).stage(stage)?;
            let d = analyze(&psi, &bs).stage(stage)?;
            for (b, v) in d.bands() {
                w.volume(&format!("bands/phase_{b}.{VOLUME_EXT}"), v, stage).stage(stage)?;
            }
            w.volume(&format!("bands/phase_coarse.{VOLUME_EXT}"), d.coarse(), stage).stage(stage)?;
        }
        Command::Weights { phase } => {
            let psi = read(phase, stage)?;
            adopt(&mut cfg, &psi);
            let bs = BandSet::new(&cfg.grid, &cfg.bands).stage(stage)?;
            let d = analyze(&psi, &bs).stage(stage)?;
            let (wm, mask) = compute_weights(&cfg, &d).stage(stage)?;
            w.volume(&vol("energy"), &wm.energy, stage).stage(stage)?;
            w.volume(&vol("weight"), &wm.weight, stage).stage(stage)?;
            if let Some(m) = &mask {
                w.volume(&vol("reliability_mask"), m, stage).stage(stage)?;
            }
            extra = json!(wm.warnings);
        }
        Command::Recon { phase, weight } => {
            let psi = read(phase, stage)?;
            adopt(&mut cfg, &psi);
            let weight = weight.as_deref().map(|p| read(p, stage)).transpose()?;
            let bs = BandSet::new(&cfg.grid, &cfg.bands).stage(stage)?;
            let (chi, report) = reconstruct(&cfg, &psi, weight.as_ref(), &bs).stage(stage)?;
            w.volume(&vol("chi_recon"), &chi, stage).stage(stage)?;
            w.json("solver_report.json", &report, stage).stage(stage)?;
        }
        Command::Metrics { estimate, truth, roi } => {
            let est = read(estimate, stage)?;
            adopt(&mut cfg, &est);
            let truth = read(truth, stage)?;
            let roi = read(roi, stage)?;
            let bs = BandSet::new(&cfg.grid, &cfg.bands).stage(stage)?;
            let near = bs.near_cone_selection();
            let report = metric_report(&est, &truth, &roi, &cfg.metrics.xsim, &bs, &near).stage(stage)?;
            w.json("metrics.json", &report, stage).stage(stage)?;
            extra = json!(report);
        }
        Command::Pipeline => unreachable!("handled above"),
    }

    let files: Vec<String> = w.into_artifacts().into_iter().map(|a| a.path).collect();
    Ok(json!({
        "stage": stage,
        "output": cfg.output_dir,
        "artifacts": files,
        "details": extra,
    }))
}
