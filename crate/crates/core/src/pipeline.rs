//! End-to-end run: phantom, forward model, corruption, decomposition,
//! weights, reconstruction, metrics and figures, with a manifest of every
//! file written.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bands::{BandId, BandSet};
use crate::config::{ForwardModel, RunConfig, SolverKind};
use crate::error::{Error, Result};
use crate::io::{montage, slice_image, write_png, write_volume, GrayImage, VOLUME_EXT};
use crate::metrics::{metric_report, MetricReport};
use crate::simulate::{
    corrupt, default_offsets, forward_dipole, forward_sti_z, make_phantom, Axis, CorruptionSpec,
    Phantom, PhantomRecipe,
};
use crate::solvers::{admm_weighted_tv, band_regularized_descent, tkd, SolverReport};
use crate::transform::{analyze, Decomposition};
use crate::volume::Volume;
use crate::weights::{make_mask, make_weight, WeightMap};

pub const MANIFEST_NAME: &str = "manifest.json";

/// An error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub trait InStage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> InStage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Volume,
    Png,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub kind: ArtifactKind,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub library: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
    pub metrics: MetricReport,
}

pub fn build_phantom(cfg: &RunConfig) -> Result<Phantom> {
    let recipe = cfg
        .phantom
        .recipe
        .clone()
        .unwrap_or_else(|| PhantomRecipe::default_head(&cfg.grid));
    let p = make_phantom(&cfg.grid, &recipe)?;
    Ok(match cfg.phantom.cross_terms {
        Some([s13, s23]) => p.with_proportional_cross_terms(s13, s23),
        None => p,
    })
}

pub fn simulate_phase(cfg: &RunConfig, p: &Phantom) -> Result<Volume> {
    match cfg.forward.model {
        ForwardModel::Dipole => forward_dipole(&p.chi33, cfg.forward.dc_value),
        ForwardModel::Sti => forward_sti_z(p),
    }
}

pub fn corruption_spec(cfg: &RunConfig) -> CorruptionSpec {
    CorruptionSpec {
        noise_snr: cfg.corruption.noise_snr,
        offsets: cfg
            .corruption
            .offsets
            .clone()
            .unwrap_or_else(|| default_offsets(&cfg.grid)),
        seed: cfg.seed,
    }
}

/// Weight map and, when a threshold is configured, the reliability mask.
pub fn compute_weights(cfg: &RunConfig, d: &Decomposition) -> Result<(WeightMap, Option<Volume>)> {
    let wm = make_weight(d, &cfg.weights)?;
    let mask = match cfg.weights.threshold {
        Some(t) => Some(make_mask(&wm.weight, t)?),
        None => None,
    };
    Ok((wm, mask))
}

/// Runs the configured solver; `weight` defaults to 1 everywhere.
pub fn reconstruct(
    cfg: &RunConfig,
    psi: &Volume,
    weight: Option<&Volume>,
    bs: &BandSet,
) -> Result<(Volume, SolverReport)> {
    let ones;
    let w = match weight {
        Some(w) if cfg.solver.weighted => w,
        _ => {
            ones = Volume::filled(*psi.grid(), 1.0);
            &ones
        }
    };
    match cfg.solver.kind {
        SolverKind::Tkd => {
            let start = std::time::Instant::now();
            let chi = tkd(psi, &cfg.solver.tkd)?;
            Ok((
                chi,
                SolverReport {
                    solver: "tkd".into(),
                    iterations: 1,
                    converged: true,
                    objective_trace: vec![],
                    final_residual: 0.0,
                    projection_leakage: None,
                    timing_seconds: start.elapsed().as_secs_f64(),
                },
            ))
        }
        SolverKind::Tv => admm_weighted_tv(psi, w, &cfg.solver.tv),
        SolverKind::Bandreg => band_regularized_descent(psi, w, bs, &cfg.solver.bandreg),
    }
}

/// Writes files under one root and records them.
pub struct ArtifactWriter {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            artifacts: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn target(&mut self, rel: &str, kind: ArtifactKind, stage: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            kind,
            stage: stage.to_string(),
        });
        Ok(path)
    }

    pub fn volume(&mut self, rel: &str, v: &Volume, stage: &str) -> Result<()> {
        let path = self.target(rel, ArtifactKind::Volume, stage)?;
        write_volume(v, path)
    }

    pub fn png(&mut self, rel: &str, img: &GrayImage, stage: &str) -> Result<()> {
        let path = self.target(rel, ArtifactKind::Png, stage)?;
        write_png(img, path)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T, stage: &str) -> Result<()> {
        let path = self.target(rel, ArtifactKind::Json, stage)?;
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn into_artifacts(self) -> Vec<Artifact> {
        self.artifacts
    }
}

fn axis_tag(axis: Axis) -> &'static str {
    match axis {
        Axis::X => "x",
        Axis::Y => "y",
        Axis::Z => "z",
    }
}

fn center(v: &Volume, axis: Axis) -> usize {
    let shape = v.grid().shape();
    match axis {
        Axis::X => shape[0] / 2,
        Axis::Y => shape[1] / 2,
        Axis::Z => shape[2] / 2,
    }
}

fn symmetric_window(v: &Volume) -> [f64; 2] {
    let m = v.linf_norm().max(1e-12);
    [-m, m]
}

/// Centre slice of every band image, tiled in band order (coarse last).
pub fn band_montage(d: &Decomposition, axis: Axis, cols: usize) -> Result<GrayImage> {
    let mut ids: Vec<BandId> = d.bands().map(|(b, _)| BandId::Detail(b)).collect();
    ids.push(BandId::Coarse);
    let tiles: Vec<GrayImage> = ids
        .iter()
        .map(|&id| {
            let v = d.get(id).expect("listed from the decomposition");
            slice_image(v, axis, center(v, axis), symmetric_window(v))
        })
        .collect::<Result<_>>()?;
    montage(&tiles, cols)
}

/// Removes the artifacts of a previous run; refuses to touch foreign files.
fn prepare_output(out: &Path) -> Result<()> {
    if !out.exists() {
        return fs::create_dir_all(out).map_err(|e| Error::io(out, e));
    }
    let manifest = out.join(MANIFEST_NAME);
    if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let old: Manifest = serde_json::from_str(&text)?;
        for a in old.artifacts {
            let p = out.join(&a.path);
            if p.is_file() {
                fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        fs::remove_file(&manifest).map_err(|e| Error::io(&manifest, e))?;
    }
    let leftovers = list_files(out)?;
    let foreign: Vec<_> = leftovers.iter().filter(|p| !p.ends_with('/')).collect();
    if !foreign.is_empty() {
        return Err(Error::config(format!(
            "output directory {} holds files not written by a previous run: {:?}",
            out.display(),
            foreign
        )));
    }
    Ok(())
}

/// Files under `root`, relative and `/`-separated, sorted.
pub fn list_files(root: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("under root");
                let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

/// Every stage of a run, writing into `out`. `progress` receives one line
/// per stage.
pub fn run_pipeline(
    cfg: &RunConfig,
    out: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<Manifest, StageError> {
    cfg.validate().stage("config")?;
    prepare_output(out).stage("config")?;
    let mut w = ArtifactWriter::new(out);
    let mut warnings = Vec::new();
    let render = &cfg.metrics.render;
    w.json("config.json", cfg, "config").stage("config")?;

    progress("phantom");
    let phantom = build_phantom(cfg).stage("phantom")?;
    w.volume(&format!("phantom_chi33.{VOLUME_EXT}"), &phantom.chi33, "phantom").stage("phantom")?;
    for (name, v) in [("chi13", &phantom.chi13), ("chi23", &phantom.chi23)] {
        if let Some(v) = v {
            w.volume(&format!("phantom_{name}.{VOLUME_EXT}"), v, "phantom").stage("phantom")?;
        }
    }
    w.volume(&format!("roi.{VOLUME_EXT}"), &phantom.mask, "phantom").stage("phantom")?;

    progress("forward");
    let psi_clean = simulate_phase(cfg, &phantom).stage("forward")?;
    w.volume(&format!("phase_clean.{VOLUME_EXT}"), &psi_clean, "forward").stage("forward")?;

    progress("corrupt");
    let psi = corrupt(&psi_clean, &corruption_spec(cfg)).stage("corrupt")?;
    w.volume(&format!("phase_corrupted.{VOLUME_EXT}"), &psi, "corrupt").stage("corrupt")?;

    progress("decompose");
    let bs = BandSet::new(&cfg.grid, &cfg.bands).stage("decompose")?;
    warnings.extend(bs.warnings().iter().cloned());
    let d = analyze(&psi, &bs).stage("decompose")?;
    for (b, v) in d.bands() {
        w.volume(&format!("bands/phase_{b}.{VOLUME_EXT}"), v, "decompose").stage("decompose")?;
    }
    w.volume(&format!("bands/phase_coarse.{VOLUME_EXT}"), d.coarse(), "decompose").stage("decompose")?;

    progress("weights");
    let (wm, mask) = compute_weights(cfg, &d).stage("weights")?;
    warnings.extend(wm.warnings.iter().cloned());
    w.volume(&format!("energy.{VOLUME_EXT}"), &wm.energy, "weights").stage("weights")?;
    w.volume(&format!("weight.{VOLUME_EXT}"), &wm.weight, "weights").stage("weights")?;
    if let Some(m) = &mask {
        w.volume(&format!("reliability_mask.{VOLUME_EXT}"), m, "weights").stage("weights")?;
    }

    progress("solve");
    let (chi, report) = reconstruct(cfg, &psi, Some(&wm.weight), &bs).stage("solve")?;
    if !report.converged {
        warnings.push(format!("{} stopped after {} iterations without meeting its tolerance", report.solver, report.iterations));
    }
    w.volume(&format!("chi_recon.{VOLUME_EXT}"), &chi, "solve").stage("solve")?;
    w.json("solver_report.json", &report, "solve").stage("solve")?;

    progress("metrics");
    let near = bs.near_cone_selection();
    let metrics = metric_report(&chi, &phantom.chi33, &phantom.mask, &cfg.metrics.xsim, &bs, &near).stage("metrics")?;
    w.json("metrics.json", &metrics, "metrics").stage("metrics")?;

    progress("render");
    for &axis in &render.axes {
        let t = axis_tag(axis);
        let figs: [(&str, &Volume, [f64; 2]); 5] = [
            ("phantom", &phantom.chi33, render.chi_window),
            ("phase_corrupted", &psi, render.phase_window),
            ("weight", &wm.weight, [0.0, 1.0]),
            ("chi_recon", &chi, render.chi_window),
            ("chi_error", &chi.sub(&phantom.chi33).stage("render")?, symmetric_window(&phantom.chi33)),
        ];
        for (name, v, window) in figs {
            let img = slice_image(v, axis, center(v, axis), window).stage("render")?;
            w.png(&format!("figures/{name}_{t}.png"), &img, "render").stage("render")?;
        }
        let m = band_montage(&d, axis, render.montage_columns).stage("render")?;
        w.png(&format!("figures/bands_{t}.png"), &m, "render").stage("render")?;
    }

    let manifest = Manifest {
        library: "dipolelets".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash().stage("config")?,
        seed: cfg.seed,
        artifacts: w.into_artifacts(),
        warnings,
        metrics,
    };
    let path = out.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::from).stage("manifest")?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e)).stage("manifest")?;
    Ok(manifest)
}
