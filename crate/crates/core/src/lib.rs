//! Bias correction for regression on class labels produced by unsupervised
//! clustering.
//!
//! Labels from a fitted clustering model are noisy: points drawn from one
//! mixture component are sometimes assigned to another. Regressing an outcome
//! on those labels attenuates the estimated class effects. This crate
//! estimates the misclassification matrix implied by the clustering model and
//! corrects the regression coefficients by misclassification
//! simulation-extrapolation: extra label noise is simulated at increasing
//! levels, the coefficients are refitted, and the trend is extrapolated back to
//! the noise-free point.
//!
//! Modules:
//! - [`mixture`]: Gaussian mixtures by EM, k-means, sampling, label alignment
//! - [`misclass`]: the misclassification matrix, its fractional powers and estimators
//! - [`regress`]: logistic and Cox models on treatment-contrast class labels
//! - [`mcsimex`]: the simulation-extrapolation correction and its variance estimates
//! - [`simbench`]: simulation scenarios and bias/coverage tables
//! - [`io`]: CSV datasets and text model files

pub mod error;
pub mod io;
mod linalg;
pub mod mcsimex;
pub mod misclass;
pub mod mixture;
pub mod regress;
pub mod rng;
pub mod simbench;

pub use error::{Error, Result};
pub use mcsimex::{run_mcsimex, BootstrapResult, Extrapolant, SimexConfig, SimexFit};
pub use misclass::{check_power_validity, matrix_power, MisclassMatrix, PowerValidity};
pub use mixture::{fit_gmm, fit_kmeans, ClassifierRule, CovarianceStructure, EmConfig, GmmFit, GmmParams, KmeansFit};
pub use regress::{Family, Outcome, RegressionFit};
