//! Dipole kernel and z-axis tensor forward multipliers on the FFT grid.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::{FreqGrid, GridSpec, Volume};

/// Real multiplier sampled on the FFT frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralWindow {
    #[serde(skip)]
    grid: GridSpec,
    #[serde(skip)]
    data: Vec<f64>,
    range: [f64; 2],
}

impl SpectralWindow {
    pub fn new(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::config(format!(
                "window has {} bins, grid {grid} needs {}",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite window value".into()));
        }
        let range = data
            .iter()
            .fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], &v| [lo.min(v), hi.max(v)]);
        Ok(Self { grid, data, range })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
            range: [value, value],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `[min, max]` over all bins.
    pub fn range(&self) -> [f64; 2] {
        self.range
    }

    pub fn max(&self) -> f64 {
        self.range[1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_matches(&other.grid)?;
        Self::new(
            self.grid,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// The window values as a volume in FFT layout (for export).
    pub fn to_volume(&self) -> Volume {
        Volume::from_vec_unchecked(self.grid, self.data.clone())
    }
}

/// `1/3 - xi_z^2 / |xi|^2`, or `None` at the origin.
#[inline]
pub fn dipole_value(xi: [f64; 3]) -> Option<f64> {
    let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    if r2 == 0.0 {
        None
    } else {
        Some(1.0 / 3.0 - xi[2] * xi[2] / r2)
    }
}

/// Dipole kernel with B0 along z. The origin bin holds `dc_value`.
pub fn dipole_kernel(fg: &FreqGrid, dc_value: f64) -> SpectralWindow {
    let data = fg.map_bins(|xi| dipole_value(xi).unwrap_or(dc_value));
    SpectralWindow::new(*fg.grid(), data).expect("dipole kernel is finite")
}

/// `|D(xi)|`, the distance-to-cone coordinate used by the angular windows.
/// The origin bin is 0.
pub fn cone_distance_proxy(fg: &FreqGrid) -> SpectralWindow {
    let data = fg.map_bins(|xi| dipole_value(xi).map_or(0.0, f64::abs));
    SpectralWindow::new(*fg.grid(), data).expect("|D| is finite")
}

/// Multipliers for the z-axis tensor forward model
/// `B = D chi33 - (xi_z xi_x/|xi|^2) chi13 - (xi_z xi_y/|xi|^2) chi23`.
#[derive(Debug, Clone)]
pub struct StiMultipliers {
    pub chi33: SpectralWindow,
    pub chi13: SpectralWindow,
    pub chi23: SpectralWindow,
}

pub fn sti_forward_multipliers(fg: &FreqGrid) -> StiMultipliers {
    let grid = *fg.grid();
    let shape = grid.shape();
    // Odd in a coordinate that is its own mirror: zeroed to stay Hermitian.
    let nyquist = |axis: usize, idx: usize| shape[axis].is_multiple_of(2) && 2 * idx == shape[axis];
    let cross = |axis: usize| {
        let data = (0..grid.len())
            .map(|idx| {
                let p = grid.unravel(idx);
                let xi = fg.xi(idx);
                let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
                if r2 == 0.0 || nyquist(axis, p[axis]) || nyquist(2, p[2]) {
                    0.0
                } else {
                    -xi[2] * xi[axis] / r2
                }
            })
            .collect();
        SpectralWindow::new(grid, data).expect("finite")
    };
    StiMultipliers {
        chi33: dipole_kernel(fg, 0.0),
        chi13: cross(0),
        chi23: cross(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_values() {
        assert!((dipole_value([0.0, 0.0, 0.3]).unwrap() + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dipole_value([1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((dipole_value([1.0, 0.0, 0.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(dipole_value([0.0; 3]), None);
    }

    #[test]
    fn dc_bin_convention() {
        let fg = FreqGrid::new(&GridSpec::cubic(8).unwrap());
        assert_eq!(dipole_kernel(&fg, 0.0).data()[0], 0.0);
        assert_eq!(dipole_kernel(&fg, 0.25).data()[0], 0.25);
    }

    #[test]
    fn on_grid_cone_and_axes() {
        let grid = GridSpec::cubic(8).unwrap();
        let fg = FreqGrid::new(&grid);
        let d = dipole_kernel(&fg, 0.0);
        let p = cone_distance_proxy(&fg);
        // (1,1,1) bin lies on the magic cone
        let on_cone = grid.index(1, 1, 1);
        assert_eq!(d.data()[on_cone], 0.0);
        assert_eq!(p.data()[on_cone], 0.0);
        let z = grid.index(0, 0, 1);
        assert!((d.data()[z] + 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[z] - 2.0 / 3.0).abs() < 1e-15);
        let x = grid.index(1, 0, 0);
        assert!((p.data()[x] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn range_bounds() {
        let fg = FreqGrid::new(&GridSpec::with_shape([7, 8, 9]).unwrap());
        let d = dipole_kernel(&fg, 0.0);
        assert!(d.range()[0] >= -2.0 / 3.0 - 1e-15 && d.range()[1] <= 1.0 / 3.0 + 1e-15);
        let p = cone_distance_proxy(&fg);
        assert!(p.range()[0] >= 0.0 && p.range()[1] <= 2.0 / 3.0 + 1e-15);
    }

    #[test]
    fn kernel_is_even() {
        let fg = FreqGrid::new(&GridSpec::with_shape([6, 7, 8]).unwrap());
        let d = dipole_kernel(&fg, 0.0);
        for idx in 0..fg.grid().len() {
            assert!((d.data()[idx] - d.data()[fg.mirror_index(idx)]).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_is_scale_invariant_on_grid() {
        let grid = GridSpec::cubic(16).unwrap();
        let fg = FreqGrid::new(&grid);
        let d = dipole_kernel(&fg, 0.0);
        for (i, j, k) in [(1, 2, 1), (1, 0, 2), (2, 1, 2), (1, 1, 1), (0, 1, 2)] {
            for lambda in [2, 3] {
                let a = d.data()[grid.index(i, j, k)];
                let b = d.data()[grid.index(lambda * i, lambda * j, lambda * k)];
                assert!((a - b).abs() < 1e-12, "({i},{j},{k}) x{lambda}");
            }
        }
    }

    #[test]
    fn sti_multiplier_values() {
        let grid = GridSpec::cubic(8).unwrap();
        let fg = FreqGrid::new(&grid);
        let m = sti_forward_multipliers(&fg);
        let at = |w: &SpectralWindow, i, j, k| w.data()[grid.index(i, j, k)];
        assert!((at(&m.chi33, 1, 0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((at(&m.chi13, 1, 0, 0), at(&m.chi23, 1, 0, 0)), (0.0, 0.0));
        assert!((at(&m.chi33, 0, 0, 1) + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((at(&m.chi13, 0, 0, 1), at(&m.chi23, 0, 0, 1)), (0.0, 0.0));
        // xi = (1,0,1): hand evaluation gives (-1/6, -1/2, 0)
        assert!((at(&m.chi33, 1, 0, 1) + 1.0 / 6.0).abs() < 1e-15);
        assert!((at(&m.chi13, 1, 0, 1) + 0.5).abs() < 1e-15);
        assert_eq!(at(&m.chi23, 1, 0, 1), 0.0);
        assert_eq!(m.chi33, dipole_kernel(&fg, 0.0));
        assert_eq!(m.chi13.data()[0], 0.0);
    }

    #[test]
    fn anisotropic_voxels_move_the_cone() {
        // With 2mm z spacing, index (1,1,2) has physical xi = (1/8, 1/8, 1/8).
        let grid = GridSpec::new([8, 8, 8], [1.0, 1.0, 2.0]).unwrap();
        let fg = FreqGrid::new(&grid);
        let d = dipole_kernel(&fg, 0.0);
        assert!(d.data()[grid.index(1, 1, 2)].abs() < 1e-15);
    }
}
