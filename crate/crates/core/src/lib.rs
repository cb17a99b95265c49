//! Prescriptive pricing trees distilled from a demand model.
//!
//! A teacher model estimates the probability that an item with features `x`
//! sells at price `p`. The student tree partitions feature space greedily so
//! that each leaf's single price maximizes the teacher-predicted revenue of the
//! rows it holds.

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod rng;
pub mod spt;
pub mod synth;
pub mod teacher;
pub mod tree;

pub use error::{Error, Result};
