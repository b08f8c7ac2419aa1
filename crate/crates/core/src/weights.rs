//! Data-fidelity weights and reliability masks from near-cone band energy.

use serde::{Deserialize, Serialize};

use crate::bands::{BandId, BandIndex};
use crate::error::{Error, Result};
use crate::transform::{band_energy_map, Decomposition, EnergyMode};
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rescale {
    /// `floor + (1 - floor) * (1 - |E| / max |E|)`
    #[default]
    LinearComplement,
    /// `1 / (1 + |E| / median |E|)`, min-max rescaled onto `[floor, 1]`.
    Reciprocal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    /// Bands entering the energy map; the near-cone bands of every scale
    /// when absent.
    #[serde(default)]
    pub selection: Option<Vec<BandIndex>>,
    #[serde(default)]
    pub mode: EnergyMode,
    #[serde(default)]
    pub rescale: Rescale,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub threshold: Option<f64>,
}

fn default_floor() -> f64 {
    0.1
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            selection: None,
            mode: EnergyMode::SumOfSquares,
            rescale: Rescale::LinearComplement,
            floor: default_floor(),
            threshold: Some(0.5),
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.floor) {
            return Err(Error::config(format!("weight floor {} outside [0, 1)", self.floor)));
        }
        if let Some(sel) = &self.selection {
            if sel.is_empty() {
                return Err(Error::config("weight band selection is empty"));
            }
        }
        if let Some(t) = self.threshold {
            check_threshold(t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WeightMap {
    pub weight: Volume,
    /// `|E|`, the energy the weight was derived from.
    pub energy: Volume,
    pub warnings: Vec<String>,
}

/// Selection used when the config leaves it open: the `(j, 0)` bands of
/// every angularly split scale.
pub fn near_cone_bands(d: &Decomposition) -> Vec<BandIndex> {
    d.bands()
        .map(|(b, _)| b)
        .filter(|b| b.angle == 0)
        .filter(|b| d.band(BandIndex::new(b.scale, 1)).is_some())
        .collect()
}

pub fn make_weight(d: &Decomposition, cfg: &WeightConfig) -> Result<WeightMap> {
    cfg.validate()?;
    let selection: Vec<BandIndex> = match &cfg.selection {
        Some(s) => s.clone(),
        None => near_cone_bands(d),
    };
    if selection.is_empty() {
        return Err(Error::config(
            "no near-cone bands available (angular split needed for weights)",
        ));
    }
    let ids: Vec<BandId> = selection.into_iter().map(BandId::Detail).collect();
    let energy = band_energy_map(d, &ids, cfg.mode)?.map.map(f64::abs);
    weight_from_energy(&energy, cfg.rescale, cfg.floor)
}

/// Inverts and rescales a non-negative energy map into `[floor, 1]`.
pub fn weight_from_energy(energy: &Volume, rescale: Rescale, floor: f64) -> Result<WeightMap> {
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::config(format!("weight floor {floor} outside [0, 1)")));
    }
    let grid = *energy.grid();
    let max = energy.linf_norm();
    if max == 0.0 {
        return Ok(WeightMap {
            weight: Volume::filled(grid, 1.0),
            energy: energy.clone(),
            warnings: vec!["band energy is identically zero; weight set to 1".into()],
        });
    }
    let span = 1.0 - floor;
    let weight = match rescale {
        Rescale::LinearComplement => energy.map(|e| floor + span * (1.0 - e.abs() / max)),
        Rescale::Reciprocal => {
            let mut sorted: Vec<f64> = energy.data().iter().map(|e| e.abs()).collect();
            sorted.sort_by(f64::total_cmp);
            let mut scale = sorted[sorted.len() / 2];
            if scale == 0.0 {
                scale = sorted.iter().sum::<f64>() / sorted.len() as f64;
            }
            let r = energy.map(|e| 1.0 / (1.0 + e.abs() / scale));
            let (lo, hi) = r.min_max();
            if hi > lo {
                r.map(|v| floor + span * (v - lo) / (hi - lo))
            } else {
                Volume::filled(grid, 1.0)
            }
        }
    };
    Ok(WeightMap {
        weight,
        energy: energy.clone(),
        warnings: vec![],
    })
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("mask threshold {t} must lie in (0, 1)")))
    }
}

/// 0 where `w < threshold` (unreliable), 1 elsewhere.
pub fn make_mask(w: &Volume, threshold: f64) -> Result<Volume> {
    check_threshold(threshold)?;
    Ok(w.map(|v| if v < threshold { 0.0 } else { 1.0 }))
}
