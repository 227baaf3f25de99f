//! Learning dynamics of DPO on a linear preference head: synthetic
//! preference embeddings, the reduced training engine, closed-form bound
//! checks and experiment recipes.

pub mod chart;
pub mod data;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
