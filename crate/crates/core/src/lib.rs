//! Information matrices, weighted and system-of-interest optimality
//! criteria, weight analysis and exact design search for
//! treatment-plus-nuisance linear models.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod estimable;
pub mod instances;
pub mod linalg;
pub mod model;
pub mod search;
pub mod weighting;

pub use error::{Error, Result};
