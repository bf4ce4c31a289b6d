//! Outcome models on class labels: logistic regression with treatment
//! contrasts and the Cox proportional hazards model.

mod cox;
mod logistic;
mod newton;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cox::{fit_cox, CoxObjective};
pub use logistic::{fit_logistic, LogisticObjective};
pub use newton::Evaluation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logistic,
    Cox,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "logistic" => Ok(Family::Logistic),
            "cox" => Ok(Family::Cox),
            other => Err(Error::InvalidInput(format!("unknown family '{other}'"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Logistic => "logistic",
            Family::Cox => "cox",
        })
    }
}

/// Response variable: binary indicators or right-censored survival times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Binary(Vec<u8>),
    Survival { time: Vec<f64>, event: Vec<bool> },
}

impl Outcome {
    pub fn binary(y: Vec<u8>) -> Result<Self> {
        if let Some(v) = y.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidInput(format!("binary outcome contains {v}")));
        }
        Ok(Outcome::Binary(y))
    }

    pub fn survival(time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        if time.len() != event.len() {
            return Err(Error::Dimension {
                expected: time.len(),
                got: event.len(),
            });
        }
        if let Some(t) = time.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidInput(format!("survival time {t} is not strictly positive")));
        }
        Ok(Outcome::Survival { time, event })
    }

    pub fn len(&self) -> usize {
        match self {
            Outcome::Binary(y) => y.len(),
            Outcome::Survival { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Outcome {
        match self {
            Outcome::Binary(y) => Outcome::Binary(idx.iter().map(|&i| y[i]).collect()),
            Outcome::Survival { time, event } => Outcome::Survival {
                time: idx.iter().map(|&i| time[i]).collect(),
                event: idx.iter().map(|&i| event[i]).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub family: Family,
    /// Logistic: intercept then m-1 class contrasts. Cox: m-1 log hazard ratios.
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub n_iter: usize,
}

impl RegressionFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|j| self.covariance[(j, j)].max(0.0).sqrt())
            .collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|j| self.covariance[(j, j)]).collect()
    }
}

/// Treatment-contrast design: column 0 is all ones (class 0 is the reference),
/// column h flags class h for h >= 1.
pub fn design_matrix(labels: &[usize], m: usize) -> Result<DMatrix<f64>> {
    check_labels(labels, m)?;
    let mut x = DMatrix::zeros(labels.len(), m);
    for (i, &h) in labels.iter().enumerate() {
        x[(i, 0)] = 1.0;
        if h != 0 {
            x[(i, h)] = 1.0;
        }
    }
    Ok(x)
}

pub(crate) fn check_labels(labels: &[usize], m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    match labels.iter().find(|&&h| h >= m) {
        Some(h) => Err(Error::InvalidInput(format!("label {h} out of range 0..{m}"))),
        None => Ok(()),
    }
}

pub(crate) fn check_all_present(labels: &[usize], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    labels.iter().for_each(|&h| seen[h] = true);
    match seen.iter().position(|s| !s) {
        Some(h) => Err(Error::EmptyClass(h)),
        None => Ok(()),
    }
}

/// Fits the outcome model of `family` on `labels`.
pub fn fit(family: Family, outcome: &Outcome, labels: &[usize], m: usize) -> Result<RegressionFit> {
    match (family, outcome) {
        (Family::Logistic, Outcome::Binary(y)) => fit_logistic(y, labels, m),
        (Family::Cox, Outcome::Survival { time, event }) => fit_cox(time, event, labels, m),
        (Family::Logistic, _) => Err(Error::InvalidInput("logistic regression needs a binary outcome".into())),
        (Family::Cox, _) => Err(Error::InvalidInput("Cox regression needs a survival outcome".into())),
    }
}

/// Number of coefficients the model of `family` has for `m` classes.
pub fn n_coefficients(family: Family, m: usize) -> usize {
    match family {
        Family::Logistic => m,
        Family::Cox => m.saturating_sub(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treatment_contrasts() {
        let x = design_matrix(&[0, 1], 2).unwrap();
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        let x = design_matrix(&[0, 1, 2], 3).unwrap();
        assert_eq!(
            x,
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0])
        );
        let x = design_matrix(&[0, 0, 0], 3).unwrap();
        assert_eq!(x.column(0).sum(), 3.0);
        assert_eq!(x.columns(1, 2).sum(), 0.0);
        assert!(design_matrix(&[0, 3], 3).is_err());
    }

    #[test]
    fn outcome_validation() {
        assert!(Outcome::binary(vec![0, 1, 2]).is_err());
        assert!(Outcome::survival(vec![1.0, 0.0], vec![true, false]).is_err());
        assert!(Outcome::survival(vec![1.0], vec![true, false]).is_err());
        let o = Outcome::survival(vec![1.0, 2.0, 3.0], vec![true, false, true]).unwrap();
        assert_eq!(
            o.subset(&[2, 0]),
            Outcome::Survival {
                time: vec![3.0, 1.0],
                event: vec![true, true]
            }
        );
    }

    #[test]
    fn family_mismatch() {
        let o = Outcome::binary(vec![0, 1]).unwrap();
        assert!(fit(Family::Cox, &o, &[0, 1], 2).is_err());
    }
}
