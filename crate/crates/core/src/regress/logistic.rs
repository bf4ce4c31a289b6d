use nalgebra::{DMatrix, DVector};

use super::newton::{self, Evaluation};
use super::{check_all_present, check_labels, Family, RegressionFit};
use crate::error::{Error, Result};

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binomial log-likelihood with logit link over grouped rows
/// (`successes[k]` events out of `trials[k]` at covariate row `k`).
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    design: DMatrix<f64>,
    trials: Vec<f64>,
    successes: Vec<f64>,
}

impl LogisticObjective {
    pub fn new(design: DMatrix<f64>, trials: Vec<f64>, successes: Vec<f64>) -> Result<Self> {
        if trials.len() != design.nrows() || successes.len() != design.nrows() {
            return Err(Error::Dimension {
                expected: design.nrows(),
                got: trials.len().min(successes.len()),
            });
        }
        Ok(LogisticObjective {
            design,
            trials,
            successes,
        })
    }

    /// One row per class with the class counts: equivalent to the
    /// observation-level likelihood on the treatment-contrast design.
    pub fn from_labels(y: &[u8], labels: &[usize], m: usize) -> Result<Self> {
        if y.len() != labels.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                got: y.len(),
            });
        }
        check_labels(labels, m)?;
        let mut trials = vec![0.0; m];
        let mut successes = vec![0.0; m];
        for (&yi, &h) in y.iter().zip(labels) {
            trials[h] += 1.0;
            successes[h] += yi as f64;
        }
        let design = super::design_matrix(&(0..m).collect::<Vec<_>>(), m)?;
        Self::new(design, trials, successes)
    }

    pub fn n_params(&self) -> usize {
        self.design.ncols()
    }

    pub fn evaluate(&self, beta: &DVector<f64>) -> Evaluation {
        let q = self.design.ncols();
        let eta = &self.design * beta;
        let mut loglik = 0.0;
        let mut gradient = DVector::zeros(q);
        let mut information = DMatrix::zeros(q, q);
        for k in 0..self.design.nrows() {
            let (n, s, e) = (self.trials[k], self.successes[k], eta[k]);
            if n == 0.0 {
                continue;
            }
            loglik += s * e - n * softplus(e);
            let p = sigmoid(e);
            let x = self.design.row(k);
            let r = s - n * p;
            let w = n * p * (1.0 - p);
            for a in 0..q {
                gradient[a] += r * x[a];
                for b in 0..q {
                    information[(a, b)] += w * x[a] * x[b];
                }
            }
        }
        Evaluation {
            loglik,
            gradient,
            information,
        }
    }
}

/// Logit-link maximum likelihood by Newton/IRLS on treatment contrasts.
/// Coefficient 0 is the class-0 log-odds, coefficient h the log-odds ratio
/// of class h against class 0.
pub fn fit_logistic(y: &[u8], labels: &[usize], m: usize) -> Result<RegressionFit> {
    if let Some(v) = y.iter().find(|&&v| v > 1) {
        return Err(Error::InvalidInput(format!("binary outcome contains {v}")));
    }
    let events = y.iter().filter(|&&v| v == 1).count();
    if events == 0 || events == y.len() {
        return Err(Error::InvalidInput("binary outcome needs both zeros and ones".into()));
    }
    let objective = LogisticObjective::from_labels(y, labels, m)?;
    check_all_present(labels, m)?;
    let res = newton::maximize(m, |b| objective.evaluate(b)).map_err(|s| s.into_error(Family::Logistic))?;
    Ok(RegressionFit {
        family: Family::Logistic,
        coefficients: res.beta.iter().copied().collect(),
        covariance: newton::covariance(&res.eval.information)?,
        loglik: res.eval.loglik,
        converged: res.converged,
        n_iter: res.n_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(events: [usize; 2], totals: [usize; 2]) -> (Vec<u8>, Vec<usize>) {
        let mut y = Vec::new();
        let mut labels = Vec::new();
        for h in 0..2 {
            for i in 0..totals[h] {
                y.push(u8::from(i < events[h]));
                labels.push(h);
            }
        }
        (y, labels)
    }

    #[test]
    fn contingency_table_log_odds() {
        let (y, labels) = table([10, 20], [30, 30]);
        let fit = fit_logistic(&y, &labels, 2).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - (10.0f64 / 20.0).ln()).abs() < 1e-9);
        assert!((fit.coefficients[1] - 4.0f64.ln()).abs() < 1e-9);
        // Woolf variance of the log odds ratio
        let woolf = 1.0 / 10.0 + 1.0 / 20.0 + 1.0 / 20.0 + 1.0 / 10.0;
        assert!((fit.covariance[(1, 1)] - woolf).abs() < 1e-8);
    }

    #[test]
    fn separation_is_reported() {
        let (y, labels) = table([0, 20], [30, 30]);
        let r = fit_logistic(&y, &labels, 2);
        assert!(matches!(r, Err(Error::Separation { index: 1, .. })), "{r:?}");
    }

    #[test]
    fn empty_class_and_constant_outcome() {
        let (y, labels) = table([10, 20], [30, 30]);
        assert_eq!(fit_logistic(&y, &labels, 3), Err(Error::EmptyClass(2)));
        assert!(fit_logistic(&vec![1; 60], &labels, 2).is_err());
    }
}
