//! Frequency-domain multiscale decomposition aligned with the dipole kernel,
//! with susceptibility reconstruction and phantom tooling.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod config;
pub mod error;
pub mod fourier;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod pipeline;
pub mod simulate;
pub mod solvers;
pub mod transform;
pub mod volume;
pub mod weights;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids-and-spectra.md")]
    mod grids_and_spectra {}
    #[doc = include_str!("../../../book/src/dipole-kernel.md")]
    mod dipole_kernel {}
    #[doc = include_str!("../../../book/src/bands.md")]
    mod bands {}
    #[doc = include_str!("../../../book/src/transform.md")]
    mod transform {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
