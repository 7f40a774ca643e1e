//! Bayesian network classifiers whose conditional probability tables are
//! estimated jointly by hierarchical linear smoothing (HLS): a multinomial
//! logistic regression over a sparse design matrix that encodes each table's
//! parent-value tree.

pub mod bayes;
pub mod classifier;
pub mod data;
pub mod error;
pub mod eval;
mod linalg;
pub mod map;
pub mod smoothing;
pub mod structure;
pub mod tree;
mod treechol;

pub use error::{Error, Result};
