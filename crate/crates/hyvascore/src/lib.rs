//! Fitting and comparing possibly-improper probability models with the
//! Hyvarinen score: H-posterior modes, Laplace-approximated integrated
//! H-scores and H-Bayes factors (with a non-local-prior adjustment),
//! robust Tukey regression and tempered kernel density estimation, plus
//! the simulation studies that exercise them.

pub mod data;
pub mod inference;
pub mod error;
pub mod models;
pub mod selection;
pub mod priors;
pub mod score;

pub use data::DataSet;
pub use error::{Error, Result};
