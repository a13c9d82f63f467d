//! Bayesian spectral deconvolution.
//!
//! Forward models for Gaussian mixtures, powder X-ray diffraction patterns and
//! photoelectron spectra, their tempered posteriors, and two samplers that
//! estimate the Bayesian free energy `F = -log Z` alongside posterior draws:
//! waste-free sequential Monte Carlo ([`smc`]) and replica exchange ([`remc`]).
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below fix the scalar.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bench;
pub mod config;
pub mod defaults;
pub mod error;
pub mod kernel;
pub mod lineshape;
pub mod model;
mod parallel;
pub mod prior;
pub mod real;
pub mod remc;
pub mod report;
pub mod rng;
pub mod smc;
pub mod spectrum;
pub mod synthetic;
pub mod target;

pub use analysis::{credible_interval, model_select, weighted_quantile};
pub use bench::{benchmark, BenchTable, Condition, Reference, SamplerConfig};
pub use config::FitConfig;
pub use error::{Error, Result};
pub use model::{forward, ModelFamily, ModelSpec, NoiseSpec, PhaseRef};
pub use parallel::resolve_workers;
pub use prior::Prior;
pub use real::Real;
pub use remc::{remc_fit, remc_run, RemcConfig};
pub use report::{RunReport, SamplerKind};
pub use rng::{Purpose, RngStream};
pub use smc::{smc_fit, smc_run, SmcConfig};
pub use spectrum::{AxisKind, Spectrum};
pub use synthetic::{gen_gaussian_mixture, gen_xps, gen_xrd, Dataset, TruthTable};
pub use target::{energy, FnTarget, SpectralTarget, Target};

pub type Spectrum64 = Spectrum<f64>;
pub type Spectrum32 = Spectrum<f32>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type ModelSpec32 = ModelSpec<f32>;
pub type Prior64 = Prior<f64>;
pub type Prior32 = Prior<f32>;
pub type PhaseRef64 = PhaseRef<f64>;
pub type NoiseSpec64 = NoiseSpec<f64>;
