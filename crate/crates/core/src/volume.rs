//! Regular 3D grids, sampled volumes and the discrete frequency grid.
//!
//! Samples are stored in one flat buffer with x varying fastest:
//! `index = i + nx * (j + ny * k)`. Every file format and every spectral
//! routine in the crate relies on this order.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted extent along any axis.
pub const MIN_EXTENT: usize = 4;

/// Shape and voxel spacing (millimeters) of a regular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridSpec {
    shape: [usize; 3],
    voxel_size: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    shape: [usize; 3],
    #[serde(default = "unit_voxel")]
    voxel_size: [f64; 3],
}

fn unit_voxel() -> [f64; 3] {
    [1.0; 3]
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.shape, raw.voxel_size)
    }
}

impl From<GridSpec> for RawGrid {
    fn from(g: GridSpec) -> Self {
        RawGrid {
            shape: g.shape,
            voxel_size: g.voxel_size,
        }
    }
}

impl GridSpec {
    pub fn new(shape: [usize; 3], voxel_size: [f64; 3]) -> Result<Self> {
        if let Some(axis) = shape.iter().position(|&n| n < MIN_EXTENT) {
            return Err(Error::config(format!(
                "grid extent {} along axis {axis} is below the minimum of {MIN_EXTENT}",
                shape[axis]
            )));
        }
        if let Some(axis) = voxel_size.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::config(format!(
                "voxel size {} along axis {axis} must be positive",
                voxel_size[axis]
            )));
        }
        Ok(Self { shape, voxel_size })
    }

    /// Grid with unit voxels.
    pub fn with_shape(shape: [usize; 3]) -> Result<Self> {
        Self::new(shape, [1.0; 3])
    }

    /// `n x n x n` grid with unit voxels.
    pub fn cubic(n: usize) -> Result<Self> {
        Self::with_shape([n; 3])
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.shape;
        i + nx * (j + ny * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.shape;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Periodic index of `(i + di, j + dj, k + dk)`.
    #[inline]
    pub fn wrapped_index(&self, pos: [usize; 3], delta: [isize; 3]) -> usize {
        let mut p = [0usize; 3];
        for a in 0..3 {
            let n = self.shape[a] as isize;
            p[a] = (pos[a] as isize + delta[a]).rem_euclid(n) as usize;
        }
        self.index(p[0], p[1], p[2])
    }

    /// Same shape and voxel size, within a relative tolerance on the spacing.
    pub fn matches(&self, other: &GridSpec) -> bool {
        self.shape == other.shape
            && self
                .voxel_size
                .iter()
                .zip(other.voxel_size.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()))
    }

    pub fn ensure_matches(&self, other: &GridSpec) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [nx, ny, nz] = self.shape;
        let [vx, vy, vz] = self.voxel_size;
        write!(f, "{nx}x{ny}x{nz} @ ({vx}, {vy}, {vz}) mm")
    }
}

/// Sample type of a volume: `f64` or `Complex64`.
pub trait Sample: Copy + Default + Send + Sync + PartialEq + fmt::Debug + 'static {
    const KIND: VolumeKind;

    fn norm_sqr(self) -> f64;
    fn magnitude(self) -> f64;
    fn is_finite(self) -> bool;
    fn to_complex(self) -> Complex64;
    fn scale(self, s: f64) -> Self;
    fn add(self, other: Self) -> Self;
}

impl Sample for f64 {
    const KIND: VolumeKind = VolumeKind::Real;

    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
}

impl Sample for Complex64 {
    const KIND: VolumeKind = VolumeKind::Complex;

    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
    fn to_complex(self) -> Complex64 {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Real,
    Complex,
}

/// A sampled scalar field on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T: Sample = f64> {
    grid: GridSpec,
    data: Vec<T>,
}

pub type ComplexVolume = Volume<Complex64>;

impl<T: Sample> Volume<T> {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            data: vec![T::default(); grid.len()],
        }
    }

    pub fn filled(grid: GridSpec, value: T) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// Wraps `data`, which must hold one finite sample per voxel.
    pub fn from_vec(grid: GridSpec, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::config(format!(
                "volume data has {} samples, grid {grid} needs {}",
                data.len(),
                grid.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite sample at voxel {:?}",
                grid.unravel(idx)
            )));
        }
        Ok(Self { grid, data })
    }

    /// Builds a volume by evaluating `f` at every voxel index.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut([usize; 3]) -> T) -> Self {
        let data = (0..grid.len()).map(|idx| f(grid.unravel(idx))).collect();
        Self { grid, data }
    }

    pub(crate) fn from_vec_unchecked(grid: GridSpec, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> VolumeKind {
        T::KIND
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.grid.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: T) {
        let idx = self.grid.index(i, j, k);
        self.data[idx] = value;
    }

    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<U: Sample, V: Sample>(
        &self,
        other: &Volume<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Volume<V>> {
        self.grid.ensure_matches(&other.grid)?;
        Ok(Volume {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| v.scale(s))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a.add(b.scale(-1.0)))
    }

    pub fn stats(&self) -> VolumeStats<T> {
        volume_stats(self)
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().map(|v| v.magnitude()).fold(0.0, f64::max)
    }

    pub fn to_complex(&self) -> ComplexVolume {
        self.map(|v| v.to_complex())
    }

    /// Zero-pads odd extents by one sample at the high end of each axis.
    pub fn pad_to_even(&self) -> Result<Self> {
        let shape = self.grid.shape.map(|n| n + n % 2);
        let grid = GridSpec::new(shape, self.grid.voxel_size)?;
        let [nx, ny, nz] = self.grid.shape;
        let mut out = Self::zeros(grid);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    out.set(i, j, k, self.get(i, j, k));
                }
            }
        }
        Ok(out)
    }

    /// Keeps the low corner of the volume with the shape of `grid`.
    pub fn crop_to(&self, grid: GridSpec) -> Result<Self> {
        if (0..3).any(|a| grid.shape[a] > self.grid.shape[a]) {
            return Err(Error::config(format!("cannot crop {} to {grid}", self.grid)));
        }
        Ok(Self::from_fn(grid, |[i, j, k]| self.get(i, j, k)))
    }
}

impl Volume<f64> {
    /// Elementwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Index of the first voxel with the largest value.
    pub fn argmax(&self) -> [usize; 3] {
        let mut best = 0;
        for (idx, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = idx;
            }
        }
        self.grid.unravel(best)
    }

    pub fn argmin(&self) -> [usize; 3] {
        let mut best = 0;
        for (idx, &v) in self.data.iter().enumerate() {
            if v < self.data[best] {
                best = idx;
            }
        }
        self.grid.unravel(best)
    }
}

impl ComplexVolume {
    pub fn re(&self) -> Volume<f64> {
        self.map(|c| c.re)
    }

    pub fn im(&self) -> Volume<f64> {
        self.map(|c| c.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeStats<T> {
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub mean: T,
}

pub fn volume_stats<T: Sample>(v: &Volume<T>) -> VolumeStats<T> {
    let n = v.data.len() as f64;
    let sum = v.data.iter().fold(T::default(), |acc, &x| acc.add(x));
    VolumeStats {
        l2_norm: v.l2_norm(),
        linf_norm: v.linf_norm(),
        mean: sum.scale(1.0 / n),
    }
}

/// FFT-layout frequency coordinates (cycles per unit length) for `n`
/// samples spaced `spacing` apart.
pub fn frequency_coordinates(n: usize, spacing: f64) -> Vec<f64> {
    let step = 1.0 / (n as f64 * spacing);
    (0..n)
        .map(|k| {
            if 2 * k < n {
                k as f64 * step
            } else {
                (k as f64 - n as f64) * step
            }
        })
        .collect()
}

/// Frequency coordinates of every FFT bin of a grid, in cycles/mm.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqGrid {
    grid: GridSpec,
    coords: [Vec<f64>; 3],
}

impl FreqGrid {
    pub fn new(grid: &GridSpec) -> Self {
        let coords = [0, 1, 2].map(|a| frequency_coordinates(grid.shape[a], grid.voxel_size[a]));
        Self { grid: *grid, coords }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    #[inline]
    pub fn xi(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.grid.unravel(idx);
        [self.coords[0][i], self.coords[1][j], self.coords[2][k]]
    }

    /// Flat index of the bin holding `-xi` for the bin at `idx`.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let [nx, ny, nz] = self.grid.shape;
        let [i, j, k] = self.grid.unravel(idx);
        self.grid.index((nx - i) % nx, (ny - j) % ny, (nz - k) % nz)
    }

    /// Evaluates `f(xi)` at every bin.
    pub fn map_bins(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..self.grid.len()).map(|idx| f(self.xi(idx))).collect()
    }
}

pub fn make_freq_grid(grid: &GridSpec) -> FreqGrid {
    FreqGrid::new(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    #[test]
    fn frequency_layout_even_unit_voxel() {
        assert!(close(&frequency_coordinates(4, 1.0), &[0.0, 0.25, -0.5, -0.25]));
    }

    #[test]
    fn frequency_layout_even_wide_voxel() {
        let expected: Vec<f64> = [0, 1, 2, 3, -4, -3, -2, -1].iter().map(|&k| k as f64 / 16.0).collect();
        assert!(close(&frequency_coordinates(8, 2.0), &expected));
    }

    #[test]
    fn frequency_layout_odd() {
        assert!(close(&frequency_coordinates(5, 1.0), &[0.0, 0.2, 0.4, -0.4, -0.2]));
    }

    #[test]
    fn frequency_antisymmetry_under_reflection() {
        for n in [4usize, 5, 8, 9, 16] {
            let c = frequency_coordinates(n, 0.7);
            assert_eq!(c[0], 0.0);
            for k in 1..n {
                if 2 * k == n {
                    continue;
                }
                assert!((c[k] + c[(n - k) % n]).abs() < 1e-15, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn small_grids_are_rejected() {
        assert!(matches!(GridSpec::with_shape([3, 8, 8]), Err(Error::Config(_))));
        assert!(matches!(GridSpec::new([8, 8, 8], [1.0, 0.0, 1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn stats_of_zero_volume() {
        let v = Volume::<f64>::zeros(GridSpec::cubic(4).unwrap());
        let s = v.stats();
        assert_eq!((s.l2_norm, s.linf_norm, s.mean), (0.0, 0.0, 0.0));
    }

    #[test]
    fn stats_single_voxel() {
        // Grids below 4^3 are rejected, so the 2^3 case becomes 4^3 (mean 3/64).
        let grid = GridSpec::cubic(4).unwrap();
        let mut v = Volume::<f64>::zeros(grid);
        v.set(1, 2, 3, 3.0);
        let s = v.stats();
        assert_eq!(s.l2_norm, 3.0);
        assert_eq!(s.linf_norm, 3.0);
        assert!((s.mean - 3.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn stats_constant_volume() {
        let v = Volume::filled(GridSpec::with_shape([4, 5, 6]).unwrap(), -2.5);
        assert_eq!(v.stats().linf_norm, 2.5);
        let c = Volume::filled(GridSpec::cubic(4).unwrap(), Complex64::new(3.0, 4.0));
        assert!((c.stats().linf_norm - 5.0).abs() < 1e-15);
    }

    #[test]
    fn l2_matches_direct_loop() {
        let grid = GridSpec::with_shape([4, 5, 7]).unwrap();
        let v = Volume::from_fn(grid, |[i, j, k]| (i as f64 * 0.3 - j as f64 + 0.1 * k as f64).sin());
        let mut acc = 0.0;
        for k in 0..7 {
            for j in 0..5 {
                for i in 0..4 {
                    acc += v.get(i, j, k) * v.get(i, j, k);
                }
            }
        }
        assert!((v.stats().l2_norm - acc.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn index_roundtrip_and_order() {
        let grid = GridSpec::with_shape([4, 5, 6]).unwrap();
        assert_eq!(grid.index(1, 0, 0), 1);
        assert_eq!(grid.index(0, 1, 0), 4);
        assert_eq!(grid.index(0, 0, 1), 20);
        for idx in 0..grid.len() {
            let [i, j, k] = grid.unravel(idx);
            assert_eq!(grid.index(i, j, k), idx);
        }
    }

    #[test]
    fn mirror_index_negates_frequency() {
        let fg = FreqGrid::new(&GridSpec::with_shape([5, 6, 7]).unwrap());
        for idx in 0..fg.grid().len() {
            let a = fg.xi(idx);
            let b = fg.xi(fg.mirror_index(idx));
            let [i, j, k] = fg.grid().unravel(idx);
            for (axis, pos) in [i, j, k].into_iter().enumerate() {
                let n = fg.grid().shape()[axis];
                if 2 * pos != n {
                    assert!((a[axis] + b[axis]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn from_vec_rejects_nan_and_bad_length() {
        let grid = GridSpec::cubic(4).unwrap();
        assert!(Volume::from_vec(grid, vec![0.0; 63]).is_err());
        let mut data = vec![0.0; 64];
        data[5] = f64::NAN;
        assert!(matches!(Volume::from_vec(grid, data), Err(Error::Numerical(_))));
    }

    #[test]
    fn pad_and_crop() {
        let grid = GridSpec::with_shape([5, 4, 7]).unwrap();
        let v = Volume::from_fn(grid, |[i, j, k]| (i + 10 * j + 100 * k) as f64);
        let p = v.pad_to_even().unwrap();
        assert_eq!(p.grid().shape(), [6, 4, 8]);
        assert_eq!(p.get(5, 0, 0), 0.0);
        assert_eq!(p.crop_to(grid).unwrap(), v);
    }
}
