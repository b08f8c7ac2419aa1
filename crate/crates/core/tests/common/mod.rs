//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use dipolelets::volume::{GridSpec, Volume};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_volume(grid: GridSpec, seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Volume::from_fn(grid, |_| rng.random_range(-1.0..1.0))
}

/// `sum_x f(x) exp(sign 2 pi i <k, x / n>)` by direct summation, x-fastest.
pub fn dft3_direct(grid: &GridSpec, f: &[Complex64], sign: f64) -> Vec<Complex64> {
    let [nx, ny, nz] = grid.shape();
    let mut out = vec![Complex64::new(0.0, 0.0); f.len()];
    for kz in 0..nz {
        for ky in 0..ny {
            for kx in 0..nx {
                let mut acc = Complex64::new(0.0, 0.0);
                for z in 0..nz {
                    for y in 0..ny {
                        for x in 0..nx {
                            let phase = sign
                                * 2.0
                                * PI
                                * ((kx * x) as f64 / nx as f64
                                    + (ky * y) as f64 / ny as f64
                                    + (kz * z) as f64 / nz as f64);
                            acc += f[x + nx * (y + ny * z)] * Complex64::from_polar(1.0, phase);
                        }
                    }
                }
                out[kx + nx * (ky + ny * kz)] = acc;
            }
        }
    }
    out
}

/// Spatial kernel of a real multiplier via the direct inverse DFT.
pub fn kernel_of_window(grid: &GridSpec, window: &[f64]) -> Vec<f64> {
    let w: Vec<Complex64> = window.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let n = grid.len() as f64;
    dft3_direct(grid, &w, 1.0).into_iter().map(|c| c.re / n).collect()
}

/// `(f * k)(x) = sum_y f(y) k(x - y)` with periodic wrap.
pub fn circular_convolution(grid: &GridSpec, f: &[f64], k: &[f64]) -> Vec<f64> {
    let [nx, ny, nz] = grid.shape();
    let mut out = vec![0.0; f.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let mut acc = 0.0;
                for qz in 0..nz {
                    for qy in 0..ny {
                        for qx in 0..nx {
                            let d = ((x + nx - qx) % nx) + nx * (((y + ny - qy) % ny) + ny * ((z + nz - qz) % nz));
                            acc += f[qx + nx * (qy + ny * qz)] * k[d];
                        }
                    }
                }
                out[x + nx * (y + ny * z)] = acc;
            }
        }
    }
    out
}

pub fn rel_l2_complex(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Central difference `(f(x + eps v) - f(x - eps v)) / (2 eps)`.
pub fn central_difference(f: impl Fn(&Volume) -> f64, x: &Volume, v: &Volume, eps: f64) -> f64 {
    let plus = x.zip_map(v, |a, b| a + eps * b).unwrap();
    let minus = x.zip_map(v, |a, b| a - eps * b).unwrap();
    (f(&plus) - f(&minus)) / (2.0 * eps)
}
