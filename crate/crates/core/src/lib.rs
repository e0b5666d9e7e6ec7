//! Pixel-only document understanding toolkit: rendering, table QA
//! generation, patchification, pretraining targets, a toy encoder/decoder
//! with analytic gradients, curriculum scheduling and evaluation metrics.

pub mod corpus;
pub mod cli;
pub mod curriculum;
mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod patchify;
pub mod pretrain;
pub mod raster;
pub mod selftest;
pub mod tables;
pub mod targets;
pub mod tokenizer;

pub use error::{Error, Result};
