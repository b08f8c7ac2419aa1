use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Fft3;
use crate::kernel::{dipole_kernel, SpectralWindow};
use crate::volume::{FreqGrid, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TkdConfig {
    /// Truncation threshold on `|D|`, in `(0, 2/3]`.
    #[serde(default = "default_h")]
    pub h: f64,
}

fn default_h() -> f64 {
    0.2
}

impl Default for TkdConfig {
    fn default() -> Self {
        Self { h: default_h() }
    }
}

impl TkdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h > 0.0 && self.h <= 2.0 / 3.0 + 1e-12 {
            Ok(())
        } else {
            Err(Error::config(format!("tkd threshold h = {} outside (0, 2/3]", self.h)))
        }
    }
}

/// Division by `D` where `|D| >= h`, zero elsewhere (DC included).
pub fn tkd(psi: &Volume, cfg: &TkdConfig) -> Result<Volume> {
    cfg.validate()?;
    let grid = *psi.grid();
    let d = dipole_kernel(&FreqGrid::new(&grid), 0.0);
    let inv: Vec<f64> = d
        .data()
        .iter()
        .map(|&v| if v.abs() >= cfg.h { 1.0 / v } else { 0.0 })
        .collect();
    Fft3::for_grid(&grid).apply_multiplier(psi, &SpectralWindow::new(grid, inv)?)
}
