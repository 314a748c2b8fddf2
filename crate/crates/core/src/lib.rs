//! Multispectral analysis of diffusion-weighted MR images.
//!
//! The bands of a diffusion-weighted acquisition (b = 0, 500, 1000 s/mm²)
//! are treated as the channels of one multispectral image and classified
//! into cerebrospinal fluid, brain matter and background. The crate covers
//! the whole pipeline:
//!
//! * [`image`]: bands, stacks, label maps and their PGM/JSON formats;
//! * [`physics`]: the spin-echo signal model, a parametric brain phantom and
//!   Gaussian noise;
//! * [`adc`]: apparent diffusion coefficient maps;
//! * [`classifiers`]: polynomial network, perceptron and Kohonen maps;
//! * [`metrics`]: confusion matrix, overall accuracy, Cohen's κ, volumes;
//! * [`harness`]: baseline and noise-sweep experiments.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar type for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adc;
pub mod classifiers;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod physics;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BandF32 = image::Band<f32>;
pub type BandF64 = image::Band<f64>;
pub type StackF32 = image::SpectralStack<f32>;
pub type StackF64 = image::SpectralStack<f64>;
pub type SamplesF32 = image::SampleSet<f32>;
pub type SamplesF64 = image::SampleSet<f64>;
pub type ModelF32 = classifiers::TrainedModel<f32>;
pub type ModelF64 = classifiers::TrainedModel<f64>;
pub type PhantomF64 = physics::Phantom<f64>;
