//! Semi-parametric binary classification over log-transformed univariate and
//! bivariate kernel density estimates.
//!
//! The pipeline ([`slb::fit_slb`]) screens variable pairs by their empirical
//! HSIC within each class, fits per-class Gaussian KDEs for every variable and
//! every retained pair, maps each sample to the vector of log-densities and
//! trains a linear hinge-loss SVM on the mapped samples. Baseline classifiers,
//! Bayesian-network benchmark generators and an evaluation harness live in the
//! sibling modules.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod density;
pub mod error;
pub mod eval;
pub mod features;
pub mod hsic;
pub mod model_file;
pub mod rng;
pub mod slb;
pub mod svm;
pub mod synth;

pub use data::{Dataset, Label, Matrix};
pub use error::{Error, ErrorKind, Result};
pub use rng::Rng;
