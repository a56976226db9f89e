//! Tensor linear discriminant analysis with a CP low-rank discriminant.
//!
//! The pipeline estimates the sample discriminant tensor from two labelled
//! samples, extracts warm-start CP bases by randomized composite PCA, refines
//! them by iterative projections, and classifies with the plug-in linear
//! rule. [`bench`] reproduces the simulation study at configurable scale.

pub mod bench;
pub mod classify;
pub mod cp_init;
pub mod cp_refine;
pub mod discriminant;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod tnorm;

pub use classify::LdaRule;
pub use cp_init::{InitConfig, WarmStart};
pub use cp_refine::FitReport;
pub use discriminant::DiscriminantEstimate;
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::CpModel;
pub use tensor::DenseTensor;
pub use tnorm::{Label, SimRng, TgmmParams};
