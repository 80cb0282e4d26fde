//! Two-path assessment of neural classifiers as posterior estimators.
//!
//! A prescribed Gaussian-mixture generative model fixes the true posterior
//! `p(y|x)` exactly ([`oracle`]). The same model generates a labeled training
//! set ([`generator`]) for a fully connected softmax classifier ([`nn`]),
//! whose output `q(y|x)` is then compared pointwise against the truth
//! ([`metrics`]). [`sweep`] runs that comparison over parameter grids and
//! paths; [`embedding`] lifts 2-D models into higher dimensions without
//! changing their posteriors.

pub mod embedding;
pub mod error;
pub mod generator;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
pub use generator::{AnyMixture, Gaussian1D, Gaussian2D, LabeledDataset, Mixture, Mixture1D, Mixture2D};
pub use oracle::PosteriorVector;
