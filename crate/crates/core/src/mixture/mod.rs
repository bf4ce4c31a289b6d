//! Unsupervised clustering: Gaussian mixtures fitted by EM, k-means, sampling
//! from a mixture, and alignment of component labels between two fits.
//!
//! Class labels are zero-based throughout the library (`0..m`).

mod align;
mod gmm;
mod kmeans;
pub(crate) mod sample;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::linalg::Gaussian;

pub use align::align_labels;
pub use gmm::{classify_gmm, fit_gmm, gmm_loglik, GmmClassifier};
pub use kmeans::{classify_kmeans, cluster_gaussians, fit_kmeans};
pub use sample::sample_gmm;

/// A hard assignment rule mapping a covariate vector to a class label.
pub trait Classifier: Sync {
    fn n_classes(&self) -> usize;
    fn dim(&self) -> usize;
    /// Caller guarantees `z.len() == self.dim()` and finite entries.
    fn classify(&self, z: &[f64]) -> usize;
}

/// How a fitted mixture turns densities into a hard label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierRule {
    /// argmax of the component density, ignoring mixture weights.
    #[default]
    Density,
    /// argmax of weight × density (maximum a posteriori).
    Weighted,
}

impl std::str::FromStr for ClassifierRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "density" => Ok(ClassifierRule::Density),
            "weighted" | "map" => Ok(ClassifierRule::Weighted),
            other => Err(Error::InvalidInput(format!("unknown classifier rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl GmmParams {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::InvalidInput("mixture needs at least one component".into()));
        }
        if means.len() != m || covariances.len() != m {
            return Err(Error::Dimension {
                expected: m,
                got: means.len().min(covariances.len()),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("mixture weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}, not 1")));
        }
        let p = means[0].len();
        if p == 0 {
            return Err(Error::InvalidInput("component dimension must be at least 1".into()));
        }
        for (mu, cov) in means.iter().zip(&covariances) {
            if mu.len() != p {
                return Err(Error::Dimension { expected: p, got: mu.len() });
            }
            if cov.nrows() != p || cov.ncols() != p {
                return Err(Error::Dimension { expected: p, got: cov.nrows() });
            }
            crate::linalg::check_finite(mu, "component mean")?;
            for i in 0..p {
                for j in 0..i {
                    if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 {
                        return Err(Error::InvalidInput("covariance matrix is not symmetric".into()));
                    }
                }
            }
            if nalgebra::Cholesky::new(cov.clone()).is_none() {
                return Err(Error::InvalidInput("covariance matrix is not positive definite".into()));
            }
        }
        Ok(GmmParams {
            weights,
            means,
            covariances,
        })
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn components(&self) -> Vec<Gaussian> {
        self.means
            .iter()
            .zip(&self.covariances)
            .map(|(mu, cov)| Gaussian::new(mu, cov).expect("validated covariance"))
            .collect()
    }

    /// Reorders components so that new component `k` is old component `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.m())?;
        Ok(GmmParams {
            weights: perm.iter().map(|&k| self.weights[k]).collect(),
            means: perm.iter().map(|&k| self.means[k].clone()).collect(),
            covariances: perm.iter().map(|&k| self.covariances[k].clone()).collect(),
        })
    }
}

pub(crate) fn check_permutation(perm: &[usize], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    if perm.len() != m {
        return Err(Error::Dimension { expected: m, got: perm.len() });
    }
    for &k in perm {
        if k >= m || seen[k] {
            return Err(Error::InvalidInput(format!("{perm:?} is not a permutation of 0..{m}")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Constraint on the component covariances of a fitted mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceStructure {
    /// A separate unrestricted covariance per component.
    #[default]
    Full,
    /// One unrestricted covariance shared by all components.
    Tied,
    /// One shared covariance proportional to the identity.
    Spherical,
}

impl std::str::FromStr for CovarianceStructure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(CovarianceStructure::Full),
            "tied" => Ok(CovarianceStructure::Tied),
            "spherical" => Ok(CovarianceStructure::Spherical),
            other => Err(Error::InvalidInput(format!("unknown covariance structure '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative change in log-likelihood that ends the iteration.
    pub tol: f64,
    pub restarts: usize,
    /// Ridge scale added to degenerate covariances.
    pub reg_eps: f64,
    pub covariance: CovarianceStructure,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 500,
            tol: 1e-8,
            restarts: 10,
            reg_eps: 1e-6,
            covariance: CovarianceStructure::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub params: GmmParams,
    pub loglik: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            max_iter: 100,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub within_ss: f64,
    pub n_iter: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub ss_trace: Vec<f64>,
}

impl KmeansFit {
    pub fn m(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.m())?;
        Ok(KmeansFit {
            centroids: perm.iter().map(|&k| self.centroids[k].clone()).collect(),
            ..self.clone()
        })
    }
}

impl Classifier for KmeansFit {
    fn n_classes(&self) -> usize {
        self.m()
    }

    fn dim(&self) -> usize {
        KmeansFit::dim(self)
    }

    fn classify(&self, z: &[f64]) -> usize {
        kmeans::nearest(&self.centroids, z).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub labels: Vec<usize>,
    pub data: DMatrix<f64>,
}

/// Labels every row of `data` with `classifier`.
pub fn classify_all<C: Classifier + ?Sized>(classifier: &C, data: &DMatrix<f64>) -> Result<Vec<usize>> {
    if data.ncols() != classifier.dim() {
        return Err(Error::Dimension {
            expected: classifier.dim(),
            got: data.ncols(),
        });
    }
    let p = data.ncols();
    let rows = crate::linalg::row_major(data, "covariates")?;
    Ok(rows.chunks_exact(p).map(|z| classifier.classify(z)).collect())
}
