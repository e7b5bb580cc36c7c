//! Joint heat statistics for a thermal system colliding in sequence with
//! thermal ancillas under energy-preserving unitaries.
//!
//! Exact enumeration and Monte Carlo sampling of the joint heat distribution,
//! together with checks of the joint and single-collision fluctuation
//! theorems, the product relation, causal structure and entropy production.

pub mod augmented;
pub mod chain;
pub mod cli;
pub mod collision;
pub mod document;
pub mod entropy;
pub mod error;
pub mod export;
pub mod ft;
pub mod heat;
pub mod model;
pub mod rational;
pub mod sampler;
pub mod spectrum;
pub mod streams;
pub mod thermal;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use rational::Rational;
