use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{relative_change, SolverReport};
use crate::bands::{BandId, BandSet};
use crate::error::{Error, Result};
use crate::fourier::Fft3;
use crate::kernel::{dipole_kernel, SpectralWindow};
use crate::transform::{analyze, synthesize};
use crate::volume::{FreqGrid, Volume};

/// Step halvings tried before an iteration is declared stalled.
const MAX_HALVINGS: usize = 30;
/// Objective growth over its initial value treated as divergence.
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    /// `sum W^2 |exp(i A chi) - exp(i psi)|^2`
    #[default]
    NonlinearExp,
    /// `sum W^2 (A chi - psi)^2`
    Linear,
}

/// `alpha_(j,0) = alpha0 2^-j`, `beta_(j,0) = beta0 2^-j` on near-cone bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Dyadic {
    #[serde(default)]
    pub alpha0: Option<f64>,
    #[serde(default)]
    pub beta0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandRegConfig {
    /// Quadratic band penalties; absent bands have `alpha = 0`.
    #[serde(default)]
    pub alphas: BTreeMap<BandId, f64>,
    /// Sup-norm bounds; absent bands are unconstrained.
    #[serde(default)]
    pub betas: BTreeMap<BandId, f64>,
    /// Fills near-cone entries not set explicitly above.
    #[serde(default)]
    pub dyadic: Option<Dyadic>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub fidelity: Fidelity,
    /// Clip-and-resynthesize passes per projection inside the descent.
    #[serde(default = "default_projection_rounds")]
    pub projection_rounds: usize,
    /// Passes of the projection applied to the returned iterate.
    #[serde(default = "default_final_projection_rounds")]
    pub final_projection_rounds: usize,
    /// Relative band excess `|D_b chi|_inf / beta_b - 1` accepted as feasible.
    #[serde(default = "default_projection_tol")]
    pub projection_tol: f64,
}

fn default_projection_rounds() -> usize {
    1
}
fn default_final_projection_rounds() -> usize {
    1000
}
fn default_projection_tol() -> f64 {
    0.01
}
fn default_step() -> f64 {
    1.0
}
fn default_max_iters() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-6
}

impl Default for BandRegConfig {
    fn default() -> Self {
        Self {
            alphas: BTreeMap::new(),
            betas: BTreeMap::new(),
            dyadic: None,
            step: default_step(),
            max_iters: default_max_iters(),
            tol: default_tol(),
            fidelity: Fidelity::NonlinearExp,
            projection_rounds: default_projection_rounds(),
            final_projection_rounds: default_final_projection_rounds(),
            projection_tol: default_projection_tol(),
        }
    }
}

type Penalties = (BTreeMap<BandId, f64>, BTreeMap<BandId, f64>);

impl BandRegConfig {
    pub fn dyadic(alpha0: Option<f64>, beta0: Option<f64>) -> Self {
        Self {
            dyadic: Some(Dyadic { alpha0, beta0 }),
            ..Self::default()
        }
    }

    /// Explicit and dyadic entries merged and checked against `bs`.
    pub fn penalties(&self, bs: &BandSet) -> Result<Penalties> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::config(format!("descent step {} must be positive", self.step)));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 || self.projection_rounds == 0 || !(self.projection_tol >= 0.0) {
            return Err(Error::config("descent tol, max_iters and projection_rounds must be positive, projection_tol non-negative"));
        }
        let mut alphas = self.alphas.clone();
        let mut betas = self.betas.clone();
        if let Some(d) = self.dyadic {
            for b in bs.near_cone_selection() {
                let s = 0.5f64.powi(b.scale as i32);
                let b = BandId::Detail(b);
                if let Some(a) = d.alpha0 {
                    alphas.entry(b).or_insert(a * s);
                }
                if let Some(v) = d.beta0 {
                    betas.entry(b).or_insert(v * s);
                }
            }
        }
        for (name, map) in [("alpha", &alphas), ("beta", &betas)] {
            for (b, &v) in map {
                if bs.window(*b).is_none() {
                    return Err(Error::config(format!("{name} given for band {b}, not in the band set")));
                }
                if !(v >= 0.0) || v.is_nan() {
                    return Err(Error::config(format!("{name} for band {b} is {v}, must be >= 0")));
                }
            }
        }
        Ok((alphas, betas))
    }
}

/// Fidelity plus quadratic band penalties, with analytic gradient.
pub struct SmoothObjective {
    plan: Arc<Fft3>,
    d: SpectralWindow,
    penalty: SpectralWindow,
    psi: Volume,
    w2: Volume,
    fidelity: Fidelity,
}

impl SmoothObjective {
    pub fn new(psi: &Volume, w: &Volume, bs: &BandSet, cfg: &BandRegConfig) -> Result<Self> {
        let grid = *psi.grid();
        grid.ensure_matches(w.grid())?;
        grid.ensure_matches(bs.grid())?;
        let (alphas, _) = cfg.penalties(bs)?;
        let mut p = vec![0.0; grid.len()];
        for (b, &a) in &alphas {
            let win = bs.window(*b).expect("checked by penalties");
            for (acc, &v) in p.iter_mut().zip(win.data()) {
                *acc += a * v * v;
            }
        }
        Ok(Self {
            plan: Fft3::for_grid(&grid),
            d: dipole_kernel(&FreqGrid::new(&grid), 0.0),
            penalty: SpectralWindow::new(grid, p)?,
            psi: psi.clone(),
            w2: w.map(|x| x * x),
            fidelity: cfg.fidelity,
        })
    }

    pub fn value(&self, chi: &Volume) -> Result<f64> {
        Ok(self.evaluate(chi, false)?.0)
    }

    pub fn gradient(&self, chi: &Volume) -> Result<Volume> {
        Ok(self.evaluate(chi, true)?.1.expect("requested"))
    }

    pub fn value_and_gradient(&self, chi: &Volume) -> Result<(f64, Volume)> {
        let (v, g) = self.evaluate(chi, true)?;
        Ok((v, g.expect("requested")))
    }

    fn evaluate(&self, chi: &Volume, with_gradient: bool) -> Result<(f64, Option<Volume>)> {
        self.psi.grid().ensure_matches(chi.grid())?;
        let n = chi.data().len() as f64;
        let spectrum = self.plan.fft3(chi);
        let phi = self.plan.ifft3_real(&spectrum.multiplied(&self.d)?)?;

        // Parseval: |D_b chi|^2 = sum_xi W_b^2 |chi^|^2 / N.
        let quad: f64 = spectrum
            .data()
            .iter()
            .zip(self.penalty.data())
            .map(|(c, &p)| p * c.norm_sqr())
            .sum::<f64>()
            / n;

        let mut fid = 0.0;
        let mut residual = Vec::with_capacity(chi.data().len());
        for ((&f, &p), &w2) in phi.data().iter().zip(self.psi.data()).zip(self.w2.data()) {
            let r = f - p;
            match self.fidelity {
                Fidelity::NonlinearExp => {
                    fid += w2 * (2.0 - 2.0 * r.cos());
                    residual.push(2.0 * w2 * r.sin());
                }
                Fidelity::Linear => {
                    fid += w2 * r * r;
                    residual.push(2.0 * w2 * r);
                }
            }
        }
        let value = fid + 0.5 * quad;
        if !with_gradient {
            return Ok((value, None));
        }
        let residual = Volume::from_vec(*chi.grid(), residual)?;
        let mut g = self.plan.apply_multiplier(&residual, &self.d)?;
        if self.penalty.max() > 0.0 {
            let reg = self.plan.ifft3_real(&spectrum.multiplied(&self.penalty)?)?;
            for (a, &b) in g.data_mut().iter_mut().zip(reg.data()) {
                *a += b;
            }
        }
        Ok((value, Some(g)))
    }
}

/// Clip each constrained band to `[-beta, beta]` and resynthesize.
fn clip_resynthesize(chi: &Volume, bs: &BandSet, betas: &BTreeMap<BandId, f64>) -> Result<Volume> {
    let mut d = analyze(chi, bs)?;
    for (b, &beta) in betas {
        let band = match b {
            BandId::Detail(idx) => d.band_mut(*idx).expect("checked by penalties"),
            BandId::Coarse => d.coarse_mut(),
        };
        for v in band.data_mut() {
            *v = v.clamp(-beta, beta);
        }
    }
    synthesize(&d)
}

/// One clip-and-resynthesize pass, then up to `rounds - 1` accelerated
/// gradient steps on `0.5 sum_b |D_b chi - clip(D_b chi)|^2` (unit step,
/// restarted momentum) until the relative excess falls below `tol`; the
/// least infeasible iterate seen is returned.
fn project(
    chi: &Volume,
    bs: &BandSet,
    betas: &BTreeMap<BandId, f64>,
    rounds: usize,
    tol: f64,
) -> Result<Volume> {
    if betas.is_empty() {
        return Ok(chi.clone());
    }
    let chi = &clip_resynthesize(chi, bs, betas)?;
    let rounds = rounds.saturating_sub(1);
    if rounds == 0 {
        return Ok(chi.clone());
    }
    let grid = *chi.grid();
    let plan = Fft3::for_grid(&grid);
    let mut y = chi.clone();
    let mut prev = chi.clone();
    let mut t: f64 = 1.0;
    let mut last_worst = f64::INFINITY;
    let mut best: Option<(f64, Volume)> = None;
    for round in 0..=rounds {
        let d = analyze(&y, bs)?;
        let mut grad = vec![num_complex::Complex64::new(0.0, 0.0); grid.len()];
        let mut worst: f64 = 0.0;
        for (b, &beta) in betas {
            let band = d.get(*b).expect("checked by penalties");
            let over = band.map(|v| v - v.clamp(-beta, beta));
            let m = over.linf_norm();
            worst = worst.max(if beta > 0.0 { m / beta } else { m });
            if m > 0.0 {
                let w = bs.window(*b).expect("checked by penalties");
                for ((g, c), &wv) in grad.iter_mut().zip(plan.fft3(&over).data()).zip(w.data()) {
                    *g += c * wv;
                }
            }
        }
        if best.as_ref().is_none_or(|(w, _)| worst < *w) {
            best = Some((worst, y.clone()));
        }
        if worst <= tol || round == rounds {
            break;
        }
        if worst > last_worst {
            t = 1.0;
            prev = y.clone();
        }
        last_worst = worst;
        let next = y.sub(&plan.inverse_real(grid, grad, y.linf_norm())?)?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        y = next.zip_map(&prev, |a, b| a + momentum * (a - b))?;
        prev = next;
        t = t_next;
    }
    Ok(match best {
        Some((_, v)) => v,
        None => y,
    })
}

/// Largest relative excess `(|D_b chi|_inf - beta_b) / beta_b` across
/// constrained bands; zero when feasible.
fn feasibility_excess(chi: &Volume, bs: &BandSet, betas: &BTreeMap<BandId, f64>) -> Result<f64> {
    let d = analyze(chi, bs)?;
    let mut worst: f64 = 0.0;
    for (b, &beta) in betas {
        let m = d.get(*b).expect("checked by penalties").linf_norm();
        let excess = if beta > 0.0 { (m - beta) / beta } else { m };
        worst = worst.max(excess);
    }
    Ok(worst)
}

pub fn band_regularized_descent(
    psi: &Volume,
    w: &Volume,
    bs: &BandSet,
    cfg: &BandRegConfig,
) -> Result<(Volume, SolverReport)> {
    band_regularized_descent_from(psi, w, bs, cfg, &Volume::zeros(*psi.grid()))
}

/// Projected gradient descent with step halving, started from `init`.
pub fn band_regularized_descent_from(
    psi: &Volume,
    w: &Volume,
    bs: &BandSet,
    cfg: &BandRegConfig,
    init: &Volume,
) -> Result<(Volume, SolverReport)> {
    let start = Instant::now();
    psi.grid().ensure_matches(init.grid())?;
    let (_, betas) = cfg.penalties(bs)?;
    let objective = SmoothObjective::new(psi, w, bs, cfg)?;

    let mut chi = project(init, bs, &betas, cfg.projection_rounds, cfg.projection_tol)?;
    let mut obj = objective.value(&chi)?;
    let initial = obj;
    let mut step = cfg.step;
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut change = f64::INFINITY;
    let mut iterations = 0;

    'outer: for it in 0..cfg.max_iters {
        iterations = it + 1;
        let g = objective.gradient(&chi)?;
        let mut halvings = 0;
        let (trial, f) = loop {
            let moved = chi.zip_map(&g, |c, gi| c - step * gi)?;
            let trial = project(&moved, bs, &betas, cfg.projection_rounds, cfg.projection_tol)?;
            let f = objective.value(&trial)?;
            if f <= obj {
                break (trial, f);
            }
            if !f.is_finite() || f > DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE) {
                if halvings >= MAX_HALVINGS {
                    return Err(Error::Divergence {
                        iteration: iterations,
                        objective: f,
                        initial,
                    });
                }
            } else if halvings >= MAX_HALVINGS {
                // No descent available at any step tried.
                iterations = it;
                break 'outer;
            }
            step *= 0.5;
            halvings += 1;
        };
        change = relative_change(trial.data(), chi.data());
        chi = trial;
        obj = f;
        trace.push(obj);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    let leakage = if betas.is_empty() {
        None
    } else {
        chi = project(&chi, bs, &betas, cfg.final_projection_rounds, cfg.projection_tol)?;
        Some(feasibility_excess(&chi, bs, &betas)?)
    };
    Ok((
        chi,
        SolverReport {
            solver: "bandreg".into(),
            iterations,
            converged,
            objective_trace: trace,
            final_residual: change,
            projection_leakage: leakage,
            timing_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}
