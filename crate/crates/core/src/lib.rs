//! Focal-loss training with an annealed modulating factor, late fusion of two
//! modality pathways, and class-prevalence-weighted evaluation, exercised on
//! synthetic long-tailed two-modality data.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases. The command-line
//! harness runs in `f64`.

pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod loss;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod schedule;
mod textfile;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GammaSchedule64 = schedule::GammaSchedule<f64>;
pub type GammaSchedule32 = schedule::GammaSchedule<f32>;
pub type ProbVector64 = loss::ProbVector<f64>;
pub type ProbVector32 = loss::ProbVector<f32>;
pub type PathwayModel64 = model::PathwayModel<f64>;
pub type PathwayModel32 = model::PathwayModel<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type PredictionTable64 = eval::PredictionTable<f64>;
pub type PredictionTable32 = eval::PredictionTable<f32>;
