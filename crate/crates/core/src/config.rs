//! Run configuration: one JSON document per run, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bands::BandConfig;
use crate::error::{Error, Result};
use crate::metrics::XsimParams;
use crate::simulate::{Axis, PhantomRecipe, PhaseOffset};
use crate::solvers::{BandRegConfig, TkdConfig, TvConfig};
use crate::volume::GridSpec;
use crate::weights::WeightConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default)]
    pub phantom: PhantomSection,
    #[serde(default)]
    pub forward: ForwardSection,
    #[serde(default)]
    pub corruption: CorruptionSection,
    #[serde(default)]
    pub bands: BandConfig,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid() -> GridSpec {
    GridSpec::cubic(32).expect("valid")
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            phantom: PhantomSection::default(),
            forward: ForwardSection::default(),
            corruption: CorruptionSection::default(),
            bands: BandConfig::default(),
            weights: WeightConfig::default(),
            solver: SolverSection::default(),
            metrics: MetricsSection::default(),
            output_dir: default_output(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    /// Explicit recipe; the grid-scaled head phantom when absent.
    #[serde(default)]
    pub recipe: Option<PhantomRecipe>,
    /// `[s13, s23]`: adds `chi13 = s13 chi33`, `chi23 = s23 chi33`.
    #[serde(default)]
    pub cross_terms: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForwardModel {
    #[default]
    Dipole,
    Sti,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    #[serde(default)]
    pub model: ForwardModel,
    #[serde(default)]
    pub dc_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSection {
    #[serde(default = "default_snr")]
    pub noise_snr: Option<f64>,
    /// Explicit offsets; three `+pi` balls at fixed grid fractions when
    /// absent, none when empty.
    #[serde(default)]
    pub offsets: Option<Vec<PhaseOffset>>,
}

fn default_snr() -> Option<f64> {
    Some(100.0)
}

impl Default for CorruptionSection {
    fn default() -> Self {
        Self {
            noise_snr: default_snr(),
            offsets: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Tkd,
    #[default]
    Tv,
    Bandreg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub kind: SolverKind,
    /// Use the band-energy weight as data weight (tv, bandreg); `W = 1`
    /// otherwise.
    #[serde(default = "yes")]
    pub weighted: bool,
    #[serde(default)]
    pub tkd: TkdConfig,
    #[serde(default)]
    pub tv: TvConfig,
    #[serde(default)]
    pub bandreg: BandRegConfig,
}

fn yes() -> bool {
    true
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            kind: SolverKind::Tv,
            weighted: true,
            tkd: TkdConfig::default(),
            tv: TvConfig::default(),
            bandreg: BandRegConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    /// Slice normals rendered for every volume figure.
    #[serde(default = "default_axes")]
    pub axes: Vec<Axis>,
    #[serde(default = "default_chi_window")]
    pub chi_window: [f64; 2],
    #[serde(default = "default_phase_window")]
    pub phase_window: [f64; 2],
    /// Tiles per montage row.
    #[serde(default = "default_cols")]
    pub montage_columns: usize,
}

fn default_axes() -> Vec<Axis> {
    vec![Axis::Z, Axis::X]
}
fn default_chi_window() -> [f64; 2] {
    [-0.15, 0.35]
}
fn default_phase_window() -> [f64; 2] {
    [-std::f64::consts::PI, std::f64::consts::PI]
}
fn default_cols() -> usize {
    4
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            axes: default_axes(),
            chi_window: default_chi_window(),
            phase_window: default_phase_window(),
            montage_columns: default_cols(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default)]
    pub xsim: XsimParams,
    #[serde(default)]
    pub render: RenderSection,
}

impl RunConfig {
    /// Parses and validates; unknown keys are reported by name.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Checks every section that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        self.bands.radial.validate()?;
        for a in self.bands.per_scale()? {
            a.validate()?;
        }
        self.weights.validate()?;
        self.solver.tkd.validate()?;
        self.solver.tv.validate()?;
        if let Some(snr) = self.corruption.noise_snr {
            if !(snr > 0.0) {
                return Err(Error::config(format!("noise_snr {snr} must be positive")));
            }
        }
        let r = &self.metrics.render;
        for w in [r.chi_window, r.phase_window] {
            if !(w[0] < w[1]) {
                return Err(Error::config(format!("render window {w:?} must satisfy lo < hi")));
            }
        }
        if r.montage_columns == 0 {
            return Err(Error::config("montage_columns must be positive"));
        }
        Ok(())
    }

    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical serialization with `output_dir` left out,
    /// hex encoded.
    pub fn hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let digest = Sha256::digest(serde_json::to_vec(&value)?);
        Ok(hex::encode(digest))
    }
}
