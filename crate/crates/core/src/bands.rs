//! Radial (starlet-style) filters, cone-proximity angular windows and the
//! combined band family.
//!
//! Radial filters form a dyadic family of low-passes `Phi_j(r) = Phi_1(2^(j-1) r)`
//! with `Phi_0 = 1`; detail bands are `Psi_j = Phi_j - Phi_(j+1)` and the
//! coarse band is `Phi_(J+1)`. The sum telescopes to one at every bin.
//!
//! Angular windows depend on a frequency only through `|D(xi)|`. Smooth
//! discs `A_m = eta((delta_m - |D|) / eps_m)` are differenced into shells
//! `W_m = A_m - A_(m-1)` (with `A_(-1) = 0`, `A_M = 1`) and normalized to
//! sum to one. Window `0` hugs the magic cone, window `M` is far from it.
//!
//! The combined windows `W_(j,m) = Psi_j * W_m^(j)` together with the
//! coarse band are a partition of unity, which is what makes synthesis a
//! plain sum of the band images.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cone_distance_proxy, SpectralWindow};
use crate::volume::{FreqGrid, GridSpec};

/// Leakage below which a window counts as vanishing outside its tube.
pub const SUPPORT_LEAKAGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RadialProfile {
    #[default]
    RaisedCosine,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialConfig {
    /// Index `J` of the coarsest detail scale; scales are `0..=J` plus the
    /// coarse band.
    pub max_scale: usize,
    #[serde(default)]
    pub profile: RadialProfile,
    /// Where `Phi_1` reaches zero (raised cosine) or its quarter-power
    /// point (Gaussian), in cycles per voxel of the finest axis.
    #[serde(default = "default_base_cutoff")]
    pub base_cutoff: f64,
}

fn default_base_cutoff() -> f64 {
    0.5
}

impl Default for RadialConfig {
    fn default() -> Self {
        Self {
            max_scale: 2,
            profile: RadialProfile::RaisedCosine,
            base_cutoff: default_base_cutoff(),
        }
    }
}

impl RadialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_cutoff > 0.0 && self.base_cutoff <= 0.5) {
            return Err(Error::config(format!(
                "base_cutoff {} outside (0, 0.5]",
                self.base_cutoff
            )));
        }
        if self.max_scale > 16 {
            return Err(Error::config(format!("max_scale {} is unreasonably large", self.max_scale)));
        }
        Ok(())
    }

    /// `Phi_1(r)` with `r` in cycles per voxel.
    pub fn phi1(&self, r: f64) -> f64 {
        let c = self.base_cutoff;
        match self.profile {
            RadialProfile::RaisedCosine => {
                let (a, b) = (0.5 * c, c);
                if r <= a {
                    1.0
                } else if r >= b {
                    0.0
                } else {
                    let t = (r - a) / (b - a);
                    let v = (0.5 * std::f64::consts::PI * t).cos();
                    v * v
                }
            }
            RadialProfile::Gaussian => {
                let s = r / (0.75 * c);
                (-std::f64::consts::LN_2 * s * s).exp()
            }
        }
    }

    /// `Phi_j(r)`, `j >= 0`.
    pub fn phi(&self, j: usize, r: f64) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.phi1(r * 2f64.powi(j as i32 - 1))
        }
    }
}

/// Transition profile `eta` of the angular discs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Eta {
    /// Quintic smoothstep on `[-1, 1]`: exactly 0 below, exactly 1 above.
    #[default]
    Smoothstep,
    /// `(1 + erf(2t)) / 2`; never exactly 0 or 1.
    Erf,
}

impl Eta {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Eta::Smoothstep => {
                let s = ((t + 1.0) * 0.5).clamp(0.0, 1.0);
                s * s * s * (s * (6.0 * s - 15.0) + 10.0)
            }
            Eta::Erf => 0.5 * (1.0 + libm::erf(2.0 * t)),
        }
    }
}

/// Thresholds `delta_0 < ... < delta_(M-1) <= 1/3` on `|D|` with transition
/// widths `eps_m`. `M = thresholds.len()`; `M = 0` is a single all-pass
/// window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngularConfig {
    pub thresholds: Vec<f64>,
    pub widths: Vec<f64>,
    #[serde(default)]
    pub eta: Eta,
}

impl Default for AngularConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.05, 0.15],
            widths: vec![0.02, 0.02],
            eta: Eta::Smoothstep,
        }
    }
}

impl AngularConfig {
    /// Single all-pass window (plain starlet).
    pub fn all_pass() -> Self {
        Self {
            thresholds: vec![],
            widths: vec![],
            eta: Eta::Smoothstep,
        }
    }

    /// `M` evenly spaced thresholds from 0.05 up to 0.3 with width 0.02.
    pub fn evenly_spaced(m: usize) -> Self {
        let thresholds: Vec<f64> = match m {
            0 => vec![],
            1 => vec![0.05],
            _ => (0..m).map(|i| 0.05 + 0.25 * i as f64 / (m - 1) as f64).collect(),
        };
        Self {
            widths: vec![0.02; thresholds.len()],
            thresholds,
            eta: Eta::Smoothstep,
        }
    }

    /// Index of the far-from-cone window, `M`.
    pub fn far_index(&self) -> usize {
        self.thresholds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != self.thresholds.len() {
            return Err(Error::config(format!(
                "{} angular thresholds but {} widths",
                self.thresholds.len(),
                self.widths.len()
            )));
        }
        if let Some(&first) = self.thresholds.first() {
            if !(first > 0.0) {
                return Err(Error::config(format!(
                    "near-cone threshold delta_0 = {first} must be strictly positive"
                )));
            }
        }
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("angular thresholds must be strictly increasing"));
        }
        if let Some(&last) = self.thresholds.last() {
            if last > 1.0 / 3.0 + 1e-12 {
                return Err(Error::config(format!("angular threshold {last} exceeds 1/3")));
            }
        }
        if let Some(&e) = self.widths.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::config(format!("angular width {e} must be positive")));
        }
        Ok(())
    }

    /// `A_m(|D|)` for `m` in `-1..=M`.
    fn disc(&self, m: isize, abs_d: f64) -> f64 {
        let big_m = self.thresholds.len() as isize;
        if m < 0 {
            0.0
        } else if m >= big_m {
            1.0
        } else {
            let m = m as usize;
            self.eta.eval((self.thresholds[m] - abs_d) / self.widths[m])
        }
    }

    /// Unnormalized shell `W_m`, clamped at zero.
    fn raw_window(&self, m: usize, abs_d: f64) -> f64 {
        let m = m as isize;
        (self.disc(m, abs_d) - self.disc(m - 1, abs_d)).max(0.0)
    }

    /// `[lo, hi]` range of `|D|` outside of which window `m` vanishes.
    pub fn tube(&self, m: usize) -> (f64, f64) {
        let big_m = self.thresholds.len();
        let lo = if m == 0 {
            f64::NEG_INFINITY
        } else {
            self.thresholds[m - 1] - self.widths[m - 1]
        };
        let hi = if m >= big_m {
            f64::INFINITY
        } else {
            self.thresholds[m] + self.widths[m]
        };
        (lo, hi)
    }
}

/// Radial bands `Psi_0..Psi_J` and the coarse low-pass `Phi_(J+1)`.
#[derive(Debug, Clone)]
pub struct RadialBands {
    pub details: Vec<SpectralWindow>,
    pub coarse: SpectralWindow,
    pub warnings: Vec<String>,
}

/// Radius of each bin in cycles per voxel of the finest axis.
fn normalized_radius(fg: &FreqGrid) -> Vec<f64> {
    let h = fg.grid().voxel_size().iter().cloned().fold(f64::INFINITY, f64::min);
    fg.map_bins(|xi| (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt() * h)
}

pub fn radial_filters(fg: &FreqGrid, cfg: &RadialConfig) -> Result<RadialBands> {
    cfg.validate()?;
    let grid = *fg.grid();
    let radius = normalized_radius(fg);
    let big_j = cfg.max_scale;

    let mut warnings = Vec::new();
    let h = grid.voxel_size().iter().cloned().fold(f64::INFINITY, f64::min);
    let bin = (0..3)
        .map(|a| h / (grid.shape()[a] as f64 * grid.voxel_size()[a]))
        .fold(0.0, f64::max);
    let coarsest = cfg.base_cutoff * 2f64.powi(-(big_j as i32));
    if coarsest <= bin {
        warnings.push(format!(
            "coarsest radial cutoff {coarsest:.4} is not above the bin spacing {bin:.4}; \
             its transition is narrower than one frequency bin"
        ));
    }

    let mut details = Vec::with_capacity(big_j + 1);
    let mut upper: Vec<f64> = vec![1.0; grid.len()];
    for j in 0..=big_j {
        let lower: Vec<f64> = radius.iter().map(|&r| cfg.phi(j + 1, r)).collect();
        let psi: Vec<f64> = upper
            .iter()
            .zip(&lower)
            .map(|(&a, &b)| (a - b).max(0.0))
            .collect();
        details.push(SpectralWindow::new(grid, psi)?);
        upper = lower;
    }
    Ok(RadialBands {
        details,
        coarse: SpectralWindow::new(grid, upper)?,
        warnings,
    })
}

/// Normalized angular windows `W_0..W_M` evaluated from `|D|`.
pub fn angular_windows(abs_d: &SpectralWindow, cfg: &AngularConfig) -> Result<Vec<SpectralWindow>> {
    cfg.validate()?;
    let grid = *abs_d.grid();
    let count = cfg.far_index() + 1;
    let mut raw: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); count];
    for (idx, &d) in abs_d.data().iter().enumerate() {
        let vals: Vec<f64> = (0..count).map(|m| cfg.raw_window(m, d)).collect();
        let total: f64 = vals.iter().sum();
        if total < 1e-8 {
            return Err(Error::Construction(format!(
                "angular windows leave a gap at bin {:?} (|D| = {d}, raw sum {total:.3e})",
                grid.unravel(idx)
            )));
        }
        for (m, v) in vals.into_iter().enumerate() {
            raw[m].push(v / total);
        }
    }
    raw.into_iter().map(|w| SpectralWindow::new(grid, w)).collect()
}

/// Position `(j, m)` of a detail band; serialized as `"j<scale>_m<angle>"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BandIndex {
    pub scale: usize,
    pub angle: usize,
}

impl BandIndex {
    pub fn new(scale: usize, angle: usize) -> Self {
        Self { scale, angle }
    }
}

impl fmt::Display for BandIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j{}_m{}", self.scale, self.angle)
    }
}

/// A detail band or the coarse band; serialized as `"j1_m0"` or `"coarse"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BandId {
    Detail(BandIndex),
    Coarse,
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandId::Detail(b) => b.fmt(f),
            BandId::Coarse => f.write_str("coarse"),
        }
    }
}

impl FromStr for BandIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("band name {s:?} is not of the form j<scale>_m<angle>"));
        let (j, m) = s.strip_prefix('j').and_then(|r| r.split_once("_m")).ok_or_else(bad)?;
        Ok(BandIndex::new(j.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?))
    }
}

impl TryFrom<String> for BandIndex {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BandIndex> for String {
    fn from(b: BandIndex) -> String {
        b.to_string()
    }
}

impl FromStr for BandId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "coarse" {
            Ok(BandId::Coarse)
        } else {
            s.parse().map(BandId::Detail)
        }
    }
}

impl TryFrom<String> for BandId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BandId> for String {
    fn from(b: BandId) -> String {
        b.to_string()
    }
}

/// Radial configuration plus one angular configuration per detail scale
/// (or a single one shared by all scales).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    #[serde(default)]
    pub radial: RadialConfig,
    #[serde(default = "default_angular")]
    pub angular: Vec<AngularConfig>,
}

fn default_angular() -> Vec<AngularConfig> {
    vec![AngularConfig::default()]
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            radial: RadialConfig::default(),
            angular: default_angular(),
        }
    }
}

impl BandConfig {
    pub fn new(max_scale: usize, angular: AngularConfig) -> Self {
        Self {
            radial: RadialConfig {
                max_scale,
                ..RadialConfig::default()
            },
            angular: vec![angular],
        }
    }

    /// Angular configuration of every scale, broadcasting a single entry.
    pub fn per_scale(&self) -> Result<Vec<AngularConfig>> {
        let scales = self.radial.max_scale + 1;
        match self.angular.len() {
            1 => Ok(vec![self.angular[0].clone(); scales]),
            n if n == scales => Ok(self.angular.clone()),
            n => Err(Error::config(format!(
                "{n} angular configs given for {scales} detail scales (expected 1 or {scales})"
            ))),
        }
    }
}

/// The full band family on one grid.
#[derive(Debug, Clone)]
pub struct BandSet {
    grid: GridSpec,
    config: BandConfig,
    angular_configs: Vec<AngularConfig>,
    radial: RadialBands,
    angular: Vec<Vec<SpectralWindow>>,
    combined: Vec<Vec<SpectralWindow>>,
    pu_residual: f64,
}

/// Construction fails if the partition of unity is off by more than this.
pub const PU_TOL: f64 = 1e-10;

pub fn build_bandset(fg: &FreqGrid, config: &BandConfig) -> Result<BandSet> {
    let grid = *fg.grid();
    let angular_configs = config.per_scale()?;
    let radial = radial_filters(fg, &config.radial)?;
    let abs_d = cone_distance_proxy(fg);

    let mut angular = Vec::with_capacity(angular_configs.len());
    for (j, cfg) in angular_configs.iter().enumerate() {
        // identical configs share the evaluation
        let reuse = angular_configs[..j].iter().position(|c| c == cfg);
        angular.push(match reuse {
            Some(prev) => angular_windows_clone(&angular, prev),
            None => angular_windows(&abs_d, cfg)?,
        });
    }

    let mut combined = Vec::with_capacity(angular.len());
    for (psi, windows) in radial.details.iter().zip(&angular) {
        combined.push(
            windows
                .iter()
                .map(|w| psi.zip_map(w, |a, b| a * b))
                .collect::<Result<Vec<_>>>()?,
        );
    }

    let mut total = radial.coarse.data().to_vec();
    for row in &combined {
        for w in row {
            for (t, &v) in total.iter_mut().zip(w.data()) {
                *t += v;
            }
        }
    }
    let pu_residual = total.iter().map(|t| (1.0 - t).abs()).fold(0.0, f64::max);
    if !(pu_residual < PU_TOL) {
        return Err(Error::Construction(format!(
            "partition of unity residual {pu_residual:.3e} exceeds {PU_TOL:e}"
        )));
    }

    Ok(BandSet {
        grid,
        config: config.clone(),
        angular_configs,
        radial,
        angular,
        combined,
        pu_residual,
    })
}

fn angular_windows_clone(done: &[Vec<SpectralWindow>], idx: usize) -> Vec<SpectralWindow> {
    done[idx].clone()
}

impl BandSet {
    pub fn new(grid: &GridSpec, config: &BandConfig) -> Result<Self> {
        build_bandset(&FreqGrid::new(grid), config)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn config(&self) -> &BandConfig {
        &self.config
    }

    pub fn angular_config(&self, scale: usize) -> &AngularConfig {
        &self.angular_configs[scale]
    }

    pub fn max_scale(&self) -> usize {
        self.combined.len() - 1
    }

    pub fn radial(&self) -> &RadialBands {
        &self.radial
    }

    pub fn warnings(&self) -> &[String] {
        &self.radial.warnings
    }

    /// Normalized angular windows of scale `j`.
    pub fn angular(&self, scale: usize) -> &[SpectralWindow] {
        &self.angular[scale]
    }

    pub fn combined(&self, band: BandIndex) -> Option<&SpectralWindow> {
        self.combined.get(band.scale)?.get(band.angle)
    }

    pub fn coarse(&self) -> &SpectralWindow {
        &self.radial.coarse
    }

    pub fn window(&self, id: BandId) -> Option<&SpectralWindow> {
        match id {
            BandId::Detail(b) => self.combined(b),
            BandId::Coarse => Some(self.coarse()),
        }
    }

    /// Max over bins of `|1 - (coarse + sum of combined windows)|`.
    pub fn pu_residual(&self) -> f64 {
        self.pu_residual
    }

    /// All detail band indices, scale-major.
    pub fn detail_indices(&self) -> Vec<BandIndex> {
        self.combined
            .iter()
            .enumerate()
            .flat_map(|(j, row)| (0..row.len()).map(move |m| BandIndex::new(j, m)))
            .collect()
    }

    /// Detail bands followed by the coarse band.
    pub fn band_ids(&self) -> Vec<BandId> {
        let mut ids: Vec<BandId> = self.detail_indices().into_iter().map(BandId::Detail).collect();
        ids.push(BandId::Coarse);
        ids
    }

    pub fn band_count(&self) -> usize {
        self.combined.iter().map(Vec::len).sum::<usize>() + 1
    }

    /// Cone-adjacent bands `(j, 0)` of every scale that is angularly split.
    pub fn near_cone_selection(&self) -> Vec<BandIndex> {
        (0..self.combined.len())
            .filter(|&j| self.angular_configs[j].far_index() > 0)
            .map(|j| BandIndex::new(j, 0))
            .collect()
    }

    /// Far-from-cone bands `(j, M_j)` of every angularly split scale.
    pub fn far_selection(&self) -> Vec<BandIndex> {
        (0..self.combined.len())
            .filter(|&j| self.angular_configs[j].far_index() > 0)
            .map(|j| BandIndex::new(j, self.angular_configs[j].far_index()))
            .collect()
    }

    pub fn contains(&self, band: BandIndex) -> bool {
        self.combined(band).is_some()
    }

    /// `sum_b weight(b) * W_b` over `bands`.
    pub fn weighted_sum(&self, bands: &[(BandId, f64)]) -> Result<SpectralWindow> {
        let mut acc = vec![0.0; self.grid.len()];
        for &(id, weight) in bands {
            let w = self
                .window(id)
                .ok_or_else(|| Error::config(format!("band {id} is not part of the band set")))?;
            for (a, &v) in acc.iter_mut().zip(w.data()) {
                *a += weight * v;
            }
        }
        SpectralWindow::new(self.grid, acc)
    }
}

/// Per-band leakage of a window outside its `|D|` tube.
#[derive(Debug, Clone, Serialize)]
pub struct SupportReport {
    pub leakage: Vec<(BandIndex, f64)>,
    pub max_leakage: f64,
    pub passed: bool,
}

pub fn band_support_report(bs: &BandSet, abs_d: &SpectralWindow) -> Result<SupportReport> {
    bs.grid().ensure_matches(abs_d.grid())?;
    let mut leakage = Vec::new();
    for band in bs.detail_indices() {
        let cfg = bs.angular_config(band.scale);
        if cfg.far_index() == 0 {
            continue;
        }
        let (lo, hi) = cfg.tube(band.angle);
        let w = bs.combined(band).expect("index from detail_indices");
        let worst = w
            .data()
            .iter()
            .zip(abs_d.data())
            .skip(1) // DC bin
            .filter(|(_, &d)| d < lo || d > hi)
            .map(|(&v, _)| v.abs())
            .fold(0.0, f64::max);
        leakage.push((band, worst));
    }
    let max_leakage = leakage.iter().map(|(_, l)| *l).fold(0.0, f64::max);
    Ok(SupportReport {
        passed: max_leakage < SUPPORT_LEAKAGE_TOL,
        leakage,
        max_leakage,
    })
}
