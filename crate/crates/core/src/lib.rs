//! Adaptive resolution residual networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: sampled signals on the periodic unit domain, bandlimited
//!   resampling and the smoothing kernels used everywhere else.
//! - [`pyramid`]: Laplacian pyramid decomposition and reconstruction,
//!   including the level-skipping path for low resolution inputs.
//! - [`nn`]: fixed-resolution layers with hand-written backward passes.
//! - [`arrn`]: Laplacian residuals, Laplacian dropout, and the full and
//!   adapted evaluation paths.
//! - [`train`]: synthetic data, optimisation, resolution sweeps and the
//!   kernel/dropout/adaptation ablation.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is on
//! (the default) and fall back to plain iterators otherwise. Results are
//! bit-identical either way.

pub mod arrn;
pub mod error;
pub mod io;
pub mod macs;
pub mod nn;
pub mod par;
pub mod pyramid;
pub mod real;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
pub use real::{DType, Real};
