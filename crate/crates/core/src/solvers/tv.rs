use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{relative_change, SolverReport};
use crate::error::{Error, Result};
use crate::fourier::Fft3;
use crate::kernel::{dipole_kernel, SpectralWindow};
use crate::volume::{FreqGrid, GridSpec, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TvKind {
    /// `sum |d_x| + |d_y| + |d_z|`
    #[default]
    Anisotropic,
    /// `sum sqrt(d_x^2 + d_y^2 + d_z^2)`
    Isotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Splitting penalty; `10 * lambda` when absent.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub kind: TvKind,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max_iters")]
    pub cg_max_iters: usize,
}

fn default_lambda() -> f64 {
    0.3
}
fn default_max_iters() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-4
}
fn default_cg_tol() -> f64 {
    1e-8
}
fn default_cg_max_iters() -> usize {
    100
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            rho: None,
            max_iters: default_max_iters(),
            tol: default_tol(),
            kind: TvKind::Anisotropic,
            cg_tol: default_cg_tol(),
            cg_max_iters: default_cg_max_iters(),
        }
    }
}

impl TvConfig {
    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or(10.0 * self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("rho", self.rho()),
            ("tol", self.tol),
            ("cg_tol", self.cg_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("tv {name} = {v} must be positive")));
            }
        }
        if self.max_iters == 0 || self.cg_max_iters == 0 {
            return Err(Error::config("tv iteration caps must be positive"));
        }
        Ok(())
    }
}

/// Periodic forward differences along x, y, z (voxel units).
pub fn forward_gradient(v: &Volume) -> [Volume; 3] {
    let grid = *v.grid();
    [0, 1, 2].map(|axis| {
        let mut delta = [0isize; 3];
        delta[axis] = 1;
        let data = v.data();
        Volume::from_fn(grid, |p| {
            data[grid.wrapped_index(p, delta)] - data[grid.index(p[0], p[1], p[2])]
        })
    })
}

/// Adjoint of [`forward_gradient`] (negative backward divergence).
pub fn divergence(g: &[Volume; 3]) -> Volume {
    let grid = *g[0].grid();
    let mut out = Volume::zeros(grid);
    for (axis, ga) in g.iter().enumerate() {
        let mut delta = [0isize; 3];
        delta[axis] = -1;
        let d = ga.data();
        for (idx, o) in out.data_mut().iter_mut().enumerate() {
            let p = grid.unravel(idx);
            *o += d[grid.wrapped_index(p, delta)] - d[idx];
        }
    }
    out
}

fn tv_norm(g: &[Volume; 3], kind: TvKind) -> f64 {
    let n = g[0].data().len();
    (0..n)
        .map(|i| {
            let c = [g[0].data()[i], g[1].data()[i], g[2].data()[i]];
            match kind {
                TvKind::Anisotropic => c.iter().map(|x| x.abs()).sum::<f64>(),
                TvKind::Isotropic => c.iter().map(|x| x * x).sum::<f64>().sqrt(),
            }
        })
        .sum()
}

struct Operators {
    plan: std::sync::Arc<Fft3>,
    d: SpectralWindow,
    w2: Volume,
}

impl Operators {
    fn forward(&self, chi: &Volume) -> Result<Volume> {
        self.plan.apply_multiplier(chi, &self.d)
    }

    fn data_term(&self, chi: &Volume, psi: &Volume) -> Result<f64> {
        let r = self.forward(chi)?.sub(psi)?;
        Ok(r.data().iter().zip(self.w2.data()).map(|(r, w2)| w2 * r * r).sum())
    }
}

/// `|W (A chi - psi)|^2 + lambda TV(chi)`.
pub fn tv_objective(chi: &Volume, psi: &Volume, w: &Volume, cfg: &TvConfig) -> Result<f64> {
    let ops = operators(psi.grid(), w)?;
    chi.grid().ensure_matches(psi.grid())?;
    Ok(ops.data_term(chi, psi)? + cfg.lambda * tv_norm(&forward_gradient(chi), cfg.kind))
}

fn operators(grid: &GridSpec, w: &Volume) -> Result<Operators> {
    grid.ensure_matches(w.grid())?;
    if let Some(bad) = w.data().iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::config(format!("weight value {bad} outside [0, 1]")));
    }
    Ok(Operators {
        plan: Fft3::for_grid(grid),
        d: dipole_kernel(&FreqGrid::new(grid), 0.0),
        w2: w.map(|x| x * x),
    })
}

fn shrink(v: &mut [Volume; 3], t: f64, kind: TvKind) {
    let n = v[0].data().len();
    match kind {
        TvKind::Anisotropic => {
            for a in v.iter_mut() {
                for x in a.data_mut() {
                    *x = x.signum() * (x.abs() - t).max(0.0);
                }
            }
        }
        TvKind::Isotropic => {
            for i in 0..n {
                let mag = (0..3).map(|a| v[a].data()[i].powi(2)).sum::<f64>().sqrt();
                let s = if mag > t { 1.0 - t / mag } else { 0.0 };
                for a in v.iter_mut() {
                    a.data_mut()[i] *= s;
                }
            }
        }
    }
}

/// ADMM on `|W (A chi - psi)|^2 + lambda |grad chi|_1` with `z = grad chi`.
///
/// The chi-step solves `(2 A W^2 A + rho grad^T grad) chi = rhs` in closed
/// form when `W` is constant, otherwise by warm-started conjugate gradient
/// preconditioned with the closed-form inverse for `W = max W`.
pub fn admm_weighted_tv(psi: &Volume, w: &Volume, cfg: &TvConfig) -> Result<(Volume, SolverReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let grid = *psi.grid();
    let ops = operators(&grid, w)?;
    let rho = cfg.rho();

    let w0 = w.data()[0];
    let constant = w.data().iter().all(|&x| x == w0);
    let c = ops.w2.data().iter().cloned().fold(0.0, f64::max);
    let inverse = {
        let shape = grid.shape();
        let inv: Vec<f64> = ops
            .d
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &d)| {
                let p = grid.unravel(idx);
                let lap: f64 = (0..3)
                    .map(|a| {
                        let s = (std::f64::consts::PI * p[a] as f64 / shape[a] as f64).sin();
                        4.0 * s * s
                    })
                    .sum();
                let den = 2.0 * c * d * d + rho * lap;
                if den > 0.0 {
                    1.0 / den
                } else {
                    0.0
                }
            })
            .collect();
        SpectralWindow::new(grid, inv)?
    };
    let precondition = |r: &Volume| ops.plan.apply_multiplier(r, &inverse);

    let rhs_data = ops.forward(&psi.mul(&ops.w2)?)?.scaled(2.0);
    let normal = |x: &Volume| -> Result<Volume> {
        let awa = ops.forward(&ops.forward(x)?.mul(&ops.w2)?)?.scaled(2.0);
        awa.add(&divergence(&forward_gradient(x)).scaled(rho))
    };

    let mut chi = Volume::zeros(grid);
    let mut z = [0, 1, 2].map(|_| Volume::zeros(grid));
    let mut u = [0, 1, 2].map(|_| Volume::zeros(grid));
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let zu: [Volume; 3] = [0, 1, 2].map(|a| z[a].sub(&u[a]).expect("same grid"));
        let rhs = rhs_data.add(&divergence(&zu).scaled(rho))?;
        let next = if constant {
            precondition(&rhs)?
        } else {
            conjugate_gradient(&normal, &precondition, &rhs, &chi, cfg.cg_tol, cfg.cg_max_iters)?
        };
        let g = forward_gradient(&next);
        let mut v: [Volume; 3] = [0, 1, 2].map(|a| g[a].add(&u[a]).expect("same grid"));
        shrink(&mut v, cfg.lambda / rho, cfg.kind);
        z = v;
        let mut primal = 0.0;
        let mut gnorm = 0.0;
        for a in 0..3 {
            for ((ui, &gi), &zi) in u[a].data_mut().iter_mut().zip(g[a].data()).zip(z[a].data()) {
                *ui += gi - zi;
                primal += (gi - zi) * (gi - zi);
                gnorm += gi * gi;
            }
        }
        residual = if gnorm > 0.0 { (primal / gnorm).sqrt() } else { primal.sqrt() };

        let obj = ops.data_term(&next, psi)? + cfg.lambda * tv_norm(&g, cfg.kind);
        if !obj.is_finite() {
            return Err(Error::Numerical(format!("tv objective became {obj}")));
        }
        trace.push(obj);
        let change = relative_change(next.data(), chi.data());
        chi = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok((
        chi,
        SolverReport {
            solver: "tv".into(),
            iterations,
            converged,
            objective_trace: trace,
            final_residual: residual,
            projection_leakage: None,
            timing_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Preconditioned conjugate gradient for a symmetric positive semidefinite
/// operator, started from `x0`.
fn conjugate_gradient(
    op: &impl Fn(&Volume) -> Result<Volume>,
    precondition: &impl Fn(&Volume) -> Result<Volume>,
    b: &Volume,
    x0: &Volume,
    tol: f64,
    max_iters: usize,
) -> Result<Volume> {
    let bnorm = b.l2_norm();
    if bnorm == 0.0 {
        return Ok(Volume::zeros(*b.grid()));
    }
    let mut x = x0.clone();
    let mut r = b.sub(&op(&x)?)?;
    let mut z = precondition(&r)?;
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iters {
        if r.l2_norm() <= tol * bnorm || rz <= 0.0 {
            break;
        }
        let ap = op(&p)?;
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for ((xi, ri), (&pi, &api)) in x
            .data_mut()
            .iter_mut()
            .zip(r.data_mut().iter_mut())
            .zip(p.data().iter().zip(ap.data()))
        {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        z = precondition(&r)?;
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.data_mut().iter_mut().zip(z.data()) {
            *pi = zi + beta * *pi;
        }
    }
    Ok(x)
}
