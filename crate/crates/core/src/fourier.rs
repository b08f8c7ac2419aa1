//! Unnormalized forward / `1/N`-normalized inverse 3D DFT and Fourier
//! multipliers.
//!
//! The forward transform uses the `exp(-2 pi i xi.x)` sign, so the DC bin of
//! a spectrum equals the plain sum of the samples.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::kernel::SpectralWindow;
use crate::volume::{ComplexVolume, GridSpec, Sample, Volume};

/// Largest imaginary residue, relative to the larger of `sum |c| / N` of the
/// spectrum being inverted and the input magnitude, that is silently dropped
/// when a real result is requested.
pub const REAL_RESIDUE_TOL: f64 = 1e-9;

/// Complex spectrum in FFT layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_vec(grid: GridSpec, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::config(format!(
                "spectrum has {} bins, grid {grid} needs {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    /// Bin-wise product with a real window.
    pub fn multiplied(&self, w: &SpectralWindow) -> Result<Spectrum> {
        self.grid.ensure_matches(w.grid())?;
        let data = self
            .data
            .par_iter()
            .zip(w.data().par_iter())
            .map(|(s, &m)| s * m)
            .collect();
        Ok(Spectrum { grid: self.grid, data })
    }

    /// Largest deviation from `data[k] == conj(data[-k])`, relative to the
    /// largest bin magnitude.
    pub fn hermitian_defect(&self) -> f64 {
        let [nx, ny, nz] = self.grid.shape();
        let scale = self.data.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for idx in 0..self.data.len() {
            let [i, j, k] = self.grid.unravel(idx);
            let m = self.grid.index((nx - i) % nx, (ny - j) % ny, (nz - k) % nz);
            worst = worst.max((self.data[idx] - self.data[m].conj()).norm());
        }
        worst / scale
    }
}

/// Cached 1D plans for a 3D shape. Immutable, so one instance can be shared
/// between threads; scratch space is allocated per call.
pub struct Fft3 {
    shape: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("shape", &self.shape).finish()
    }
}

fn plan_cache() -> &'static Mutex<HashMap<[usize; 3], Arc<Fft3>>> {
    static CACHE: OnceLock<Mutex<HashMap<[usize; 3], Arc<Fft3>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Fft3 {
    pub fn new(shape: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.map(|n| planner.plan_fft(n, FftDirection::Forward));
        let inverse = shape.map(|n| planner.plan_fft(n, FftDirection::Inverse));
        Self {
            shape,
            forward,
            inverse,
        }
    }

    /// Shared plan for `grid`'s shape.
    pub fn for_grid(grid: &GridSpec) -> Arc<Fft3> {
        let shape = grid.shape();
        let mut cache = plan_cache().lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry(shape)
            .or_insert_with(|| Arc::new(Fft3::new(shape)))
            .clone()
    }

    /// In-place unnormalized transform along all three axes.
    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// In-place inverse transform including the `1/N` factor.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [nx, ny, nz] = self.shape;
        assert_eq!(data.len(), nx * ny * nz, "buffer does not match plan shape");
        let slab = nx * ny;

        // x: contiguous lines
        let px = &plans[0];
        data.par_chunks_mut(nx).for_each_init(
            || vec![Complex64::default(); px.get_inplace_scratch_len()],
            |scratch, line| px.process_with_scratch(line, scratch),
        );

        // y: strided within each z-slab
        let py = &plans[1];
        data.par_chunks_mut(slab).for_each_init(
            || {
                (
                    vec![Complex64::default(); ny],
                    vec![Complex64::default(); py.get_inplace_scratch_len()],
                )
            },
            |(line, scratch), plane| {
                for i in 0..nx {
                    for j in 0..ny {
                        line[j] = plane[i + nx * j];
                    }
                    py.process_with_scratch(line, scratch);
                    for j in 0..ny {
                        plane[i + nx * j] = line[j];
                    }
                }
            },
        );

        // z: transpose so lines are contiguous, transform, transpose back
        let pz = &plans[2];
        let mut columns = vec![Complex64::default(); data.len()];
        {
            let src: &[Complex64] = data;
            columns
                .par_chunks_mut(nz)
                .enumerate()
                .for_each(|(ij, col)| {
                    for (k, c) in col.iter_mut().enumerate() {
                        *c = src[ij + slab * k];
                    }
                });
        }
        columns.par_chunks_mut(nz).for_each_init(
            || vec![Complex64::default(); pz.get_inplace_scratch_len()],
            |scratch, col| pz.process_with_scratch(col, scratch),
        );
        data.par_chunks_mut(slab).enumerate().for_each(|(k, plane)| {
            for (ij, v) in plane.iter_mut().enumerate() {
                *v = columns[ij * nz + k];
            }
        });
    }

    pub fn fft3<T: Sample>(&self, v: &Volume<T>) -> Spectrum {
        let mut data: Vec<Complex64> = v.data().iter().map(|s| s.to_complex()).collect();
        self.forward_in_place(&mut data);
        Spectrum {
            grid: *v.grid(),
            data,
        }
    }

    pub fn ifft3(&self, s: &Spectrum) -> ComplexVolume {
        let mut data = s.data.clone();
        self.inverse_in_place(&mut data);
        Volume::from_vec_unchecked(s.grid, data)
    }

    pub fn ifft3_real(&self, s: &Spectrum) -> Result<Volume> {
        self.inverse_real(s.grid, s.data.clone(), 0.0)
    }

    /// `F^-1(w . F v)` for a real volume; the result must be real.
    pub fn apply_multiplier(&self, v: &Volume, w: &SpectralWindow) -> Result<Volume> {
        v.grid().ensure_matches(w.grid())?;
        let mut data: Vec<Complex64> = v.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward_in_place(&mut data);
        data.par_iter_mut()
            .zip(w.data().par_iter())
            .for_each(|(c, &m)| *c *= m);
        self.inverse_real(*v.grid(), data, v.linf_norm())
    }

    pub fn apply_multiplier_complex(
        &self,
        v: &ComplexVolume,
        w: &SpectralWindow,
    ) -> Result<ComplexVolume> {
        v.grid().ensure_matches(w.grid())?;
        let mut data = v.data().to_vec();
        self.forward_in_place(&mut data);
        data.par_iter_mut()
            .zip(w.data().par_iter())
            .for_each(|(c, &m)| *c *= m);
        self.inverse_in_place(&mut data);
        Ok(Volume::from_vec_unchecked(*v.grid(), data))
    }
}

impl Fft3 {
    /// Inverse transform of a spectrum whose inverse must be real; `input_scale`
    /// is the magnitude of the data the spectrum was derived from.
    pub fn inverse_real(&self, grid: GridSpec, mut data: Vec<Complex64>, input_scale: f64) -> Result<Volume> {
        let bound = (data.iter().map(|c| c.norm()).sum::<f64>() / data.len() as f64).max(input_scale);
        self.inverse_in_place(&mut data);
        real_part_checked(grid, data, bound)
    }
}

/// Drops the imaginary part after checking it is only rounding residue;
/// `bound` caps every sample magnitude.
fn real_part_checked(grid: GridSpec, data: Vec<Complex64>, bound: f64) -> Result<Volume> {
    let mut max_re: f64 = 0.0;
    let mut max_im: f64 = 0.0;
    for c in &data {
        max_re = max_re.max(c.re.abs());
        max_im = max_im.max(c.im.abs());
    }
    let scale = max_re.max(max_im).max(bound);
    if scale > 0.0 && max_im > REAL_RESIDUE_TOL * scale {
        return Err(Error::Numerical(format!(
            "imaginary residue {:.3e} (relative {:.3e}) too large for a real result",
            max_im,
            max_im / scale
        )));
    }
    if !scale.is_finite() {
        return Err(Error::Numerical("non-finite samples after inverse FFT".into()));
    }
    Ok(Volume::from_vec_unchecked(
        grid,
        data.into_iter().map(|c| c.re).collect(),
    ))
}

pub fn fft3<T: Sample>(v: &Volume<T>) -> Spectrum {
    Fft3::for_grid(v.grid()).fft3(v)
}

pub fn ifft3(s: &Spectrum) -> ComplexVolume {
    Fft3::for_grid(s.grid()).ifft3(s)
}

/// Inverse transform of a Hermitian-symmetric spectrum.
pub fn ifft3_real(s: &Spectrum) -> Result<Volume> {
    Fft3::for_grid(s.grid()).ifft3_real(s)
}

pub fn apply_multiplier(v: &Volume, w: &SpectralWindow) -> Result<Volume> {
    Fft3::for_grid(v.grid()).apply_multiplier(v, w)
}
