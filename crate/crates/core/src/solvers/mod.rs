//! Susceptibility reconstruction: truncated k-space division, weighted-TV
//! ADMM and band-regularized projected descent.

mod bandreg;
mod tkd;
mod tv;

use serde::{Deserialize, Serialize};

pub use bandreg::{
    band_regularized_descent, band_regularized_descent_from, BandRegConfig, Dyadic, Fidelity,
    SmoothObjective,
};
pub use tkd::{tkd, TkdConfig};
pub use tv::{admm_weighted_tv, divergence, forward_gradient, tv_objective, TvConfig, TvKind};

/// Per-run diagnostics written next to the reconstructed volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub solver: String,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub final_residual: f64,
    /// Clip-and-resynthesize feasibility excess, band-regularized runs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_leakage: Option<f64>,
    pub timing_seconds: f64,
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&a, &b) in new.iter().zip(old) {
        num += (a - b) * (a - b);
        den += a * a;
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}
