use nalgebra::{DMatrix, DVector};

use super::newton::{self, Evaluation};
use super::{check_all_present, check_labels, Family, RegressionFit};
use crate::error::{Error, Result};

/// Cox log partial likelihood with Efron's correction for tied event times.
#[derive(Debug, Clone)]
pub struct CoxObjective {
    // subjects sorted by decreasing time
    x: DMatrix<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
}

impl CoxObjective {
    pub fn new(time: &[f64], event: &[bool], covariates: &DMatrix<f64>) -> Result<Self> {
        let n = time.len();
        if event.len() != n || covariates.nrows() != n {
            return Err(Error::Dimension {
                expected: n,
                got: event.len().min(covariates.nrows()),
            });
        }
        if time.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("survival times"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
        let q = covariates.ncols();
        let x = DMatrix::from_fn(n, q, |i, j| covariates[(order[i], j)]);
        Ok(CoxObjective {
            x,
            time: order.iter().map(|&i| time[i]).collect(),
            event: order.iter().map(|&i| event[i]).collect(),
        })
    }

    /// Class indicators for classes 1..m (class 0 is the baseline).
    pub fn from_labels(time: &[f64], event: &[bool], labels: &[usize], m: usize) -> Result<Self> {
        check_labels(labels, m)?;
        if m < 2 {
            return Err(Error::InvalidInput("Cox regression needs at least two classes".into()));
        }
        let x = DMatrix::from_fn(labels.len(), m - 1, |i, j| if labels[i] == j + 1 { 1.0 } else { 0.0 });
        Self::new(time, event, &x)
    }

    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }

    pub fn evaluate(&self, beta: &DVector<f64>) -> Evaluation {
        let n = self.time.len();
        let q = self.x.ncols();
        let eta = &self.x * beta;
        let mut loglik = 0.0;
        let mut gradient = DVector::zeros(q);
        let mut information = DMatrix::zeros(q, q);

        // risk-set sums over subjects with time >= current
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; q];
        let mut s2 = vec![0.0; q * q];
        let mut d1 = vec![0.0; q];
        let mut d2 = vec![0.0; q * q];
        let mut a = vec![0.0; q];
        let mut i = 0;
        while i < n {
            let t = self.time[i];
            let mut j = i;
            let mut d = 0usize;
            let mut d0 = 0.0;
            d1.iter_mut().for_each(|v| *v = 0.0);
            d2.iter_mut().for_each(|v| *v = 0.0);
            while j < n && self.time[j] == t {
                let w = eta[j].exp();
                s0 += w;
                if self.event[j] {
                    d += 1;
                    d0 += w;
                    loglik += eta[j];
                }
                for u in 0..q {
                    let xu = self.x[(j, u)];
                    if xu == 0.0 {
                        continue;
                    }
                    s1[u] += w * xu;
                    if self.event[j] {
                        d1[u] += w * xu;
                        gradient[u] += xu;
                    }
                    for v in 0..q {
                        let xuv = xu * self.x[(j, v)];
                        s2[u * q + v] += w * xuv;
                        if self.event[j] {
                            d2[u * q + v] += w * xuv;
                        }
                    }
                }
                j += 1;
            }
            for k in 0..d {
                let f = k as f64 / d as f64;
                let den = s0 - f * d0;
                loglik -= den.ln();
                for u in 0..q {
                    a[u] = (s1[u] - f * d1[u]) / den;
                    gradient[u] -= a[u];
                }
                for u in 0..q {
                    for v in 0..q {
                        information[(u, v)] += (s2[u * q + v] - f * d2[u * q + v]) / den - a[u] * a[v];
                    }
                }
            }
            i = j;
        }
        Evaluation {
            loglik,
            gradient,
            information,
        }
    }
}

/// Newton-Raphson on the Efron partial likelihood with class indicators for
/// classes 1..m; coefficient h-1 is the log hazard ratio of class h vs class 0.
pub fn fit_cox(time: &[f64], event: &[bool], labels: &[usize], m: usize) -> Result<RegressionFit> {
    if time.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: time.len(),
        });
    }
    let objective = CoxObjective::from_labels(time, event, labels, m)?;
    if !event.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    check_all_present(labels, m)?;
    let res = newton::maximize(m - 1, |b| objective.evaluate(b)).map_err(|s| s.into_error(Family::Cox))?;
    Ok(RegressionFit {
        family: Family::Cox,
        coefficients: res.beta.iter().copied().collect(),
        covariance: newton::covariance(&res.eval.information)?,
        loglik: res.eval.loglik,
        converged: res.converged,
        n_iter: res.n_iter,
    })
}
