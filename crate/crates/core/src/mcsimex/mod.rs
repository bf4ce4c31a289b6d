//! Misclassification simulation-extrapolation.
//!
//! For each noise level `l` on a grid, labels are re-drawn through `P^l`
//! (so the total misclassification is `P^(1+l)`), the outcome model is refitted
//! `B` times and averaged. A parametric curve through the naive fit at `l = 0`
//! and the grid averages is then evaluated at `l = -1`, the noise-free point.

mod bootstrap;
mod extrapolant;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::misclass::{check_power_validity, matrix_power, MisclassMatrix};
use crate::mixture::sample::draw_categorical;
use crate::regress::{self, Family, Outcome, RegressionFit};
use crate::rng::stream;

pub use bootstrap::{bootstrap_simex, BootstrapOptions, BootstrapResult};
pub use extrapolant::{extrapolate, fit_extrapolant, Extrapolant, ExtrapolantKind};

/// Fraction of failed refits tolerated at any grid point.
pub const REFIT_FAILURE_CAP: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimexConfig {
    pub lambda_grid: Vec<f64>,
    /// Simulated label sets per grid point.
    pub b: usize,
    pub extrapolant: ExtrapolantKind,
    pub seed: u64,
}

impl Default for SimexConfig {
    fn default() -> Self {
        SimexConfig {
            lambda_grid: vec![0.5, 1.0, 1.5, 2.0],
            b: 100,
            extrapolant: ExtrapolantKind::Quadratic,
            seed: 0,
        }
    }
}

impl SimexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidInput("lambda grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidInput("lambda grid values must be positive".into()));
        }
        if self.lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("lambda grid must be strictly increasing".into()));
        }
        if self.b == 0 {
            return Err(Error::InvalidInput("B must be at least 1".into()));
        }
        if self.lambda_grid.len() + 1 < self.extrapolant.n_params() {
            return Err(Error::InvalidInput(format!(
                "{} extrapolant needs at least {} grid points",
                self.extrapolant,
                self.extrapolant.n_params() - 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMethod {
    Jackknife,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimexVariance {
    pub method: VarianceMethod,
    pub values: Vec<f64>,
}

/// Successful refits at one grid point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LambdaReplicates {
    pub lambda: f64,
    pub coefficients: Vec<Vec<f64>>,
    /// Model-based variances (covariance diagonals) of each refit.
    pub variances: Vec<Vec<f64>>,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimexFit {
    pub family: Family,
    pub m: usize,
    pub naive: RegressionFit,
    pub lambdas: Vec<f64>,
    /// `per_lambda[k][j]`: coefficient j averaged over the refits at `lambdas[k]`.
    pub per_lambda: Vec<Vec<f64>>,
    /// One fitted curve per coefficient.
    pub extrapolants: Vec<Extrapolant>,
    pub corrected: Vec<f64>,
    pub variance: Option<SimexVariance>,
    /// Failed refits per grid point.
    pub dropped: Vec<usize>,
    pub config: SimexConfig,
    #[serde(skip)]
    pub replicates: Vec<LambdaReplicates>,
}

impl SimexFit {
    /// `(lambda, coefficient, value)` including the naive point at 0.
    pub fn curve(&self) -> Vec<(f64, usize, f64)> {
        let mut out = Vec::new();
        for (j, &v) in self.naive.coefficients.iter().enumerate() {
            out.push((0.0, j, v));
        }
        for (l, row) in self.lambdas.iter().zip(&self.per_lambda) {
            for (j, &v) in row.iter().enumerate() {
                out.push((*l, j, v));
            }
        }
        out
    }

    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.variance
            .as_ref()
            .map(|v| v.values.iter().map(|x| x.max(0.0).sqrt()).collect())
    }

    /// Curve as CSV with columns `lambda,coef_index,value` (1-based index).
    pub fn write_curve_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["lambda", "coef_index", "value"])?;
        for (l, j, v) in self.curve() {
            wtr.write_record([l.to_string(), (j + 1).to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Re-draws each label from the column of `pi_lambda` indexed by that label.
pub fn simulate_labels<R: Rng + ?Sized>(labels: &[usize], pi_lambda: &MisclassMatrix, rng: &mut R) -> Result<Vec<usize>> {
    let m = pi_lambda.m();
    let cum: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            pi_lambda
                .column(j)
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    labels
        .iter()
        .map(|&h| {
            if h >= m {
                return Err(Error::InvalidInput(format!("label {h} out of range 0..{m}")));
            }
            Ok(draw_categorical(&cum[h], rng.random::<f64>()))
        })
        .collect()
}

/// Runs the correction for the outcome model of `family` on `labels`, whose
/// misclassification matrix is `pi`.
///
/// Refit `b` at grid index `k` draws from the stream `(seed, k, b)`, so the
/// result is independent of thread scheduling.
pub fn run_mcsimex(
    outcome: &Outcome,
    labels: &[usize],
    m: usize,
    pi: &MisclassMatrix,
    family: Family,
    config: &SimexConfig,
) -> Result<SimexFit> {
    config.validate()?;
    if pi.m() != m {
        return Err(Error::Dimension { expected: m, got: pi.m() });
    }
    if outcome.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: outcome.len(),
        });
    }
    let validity = check_power_validity(pi);
    if !validity.power_exists {
        let ev: Vec<String> = validity
            .eigenvalues
            .iter()
            .map(|z| if z.im == 0.0 { format!("{:.6}", z.re) } else { format!("{:.6}{:+.6}i", z.re, z.im) })
            .collect();
        return Err(Error::PowerDoesNotExist(format!(
            "{} (eigenvalues: {})",
            validity.reason.unwrap_or_default(),
            ev.join(", ")
        )));
    }
    let naive = regress::fit(family, outcome, labels, m)?;
    let q = naive.coefficients.len();

    let mut replicates = Vec::with_capacity(config.lambda_grid.len());
    for (k, &lambda) in config.lambda_grid.iter().enumerate() {
        let pi_lambda = matrix_power(pi, lambda)?;
        let fits: Vec<Option<RegressionFit>> = (0..config.b)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream(config.seed, &[k as u64, b as u64]);
                let sim = simulate_labels(labels, &pi_lambda, &mut rng).ok()?;
                regress::fit(family, outcome, &sim, m).ok()
            })
            .collect();
        let mut rep = LambdaReplicates {
            lambda,
            ..Default::default()
        };
        for f in fits {
            match f {
                Some(f) => {
                    rep.variances.push(f.variances());
                    rep.coefficients.push(f.coefficients);
                }
                None => rep.failed += 1,
            }
        }
        if rep.coefficients.is_empty() || rep.failed as f64 > REFIT_FAILURE_CAP * config.b as f64 {
            return Err(Error::TooManyFailures {
                stage: format!("refits at lambda = {lambda}"),
                failed: rep.failed,
                total: config.b,
                cap: REFIT_FAILURE_CAP * 100.0,
            });
        }
        replicates.push(rep);
    }

    let per_lambda: Vec<Vec<f64>> = replicates
        .iter()
        .map(|r| {
            let n = r.coefficients.len() as f64;
            (0..q).map(|j| r.coefficients.iter().map(|c| c[j]).sum::<f64>() / n).collect()
        })
        .collect();

    let mut extrapolants = Vec::with_capacity(q);
    for j in 0..q {
        let mut points = vec![(0.0, naive.coefficients[j])];
        points.extend(config.lambda_grid.iter().zip(&per_lambda).map(|(l, row)| (*l, row[j])));
        extrapolants.push(fit_extrapolant(&points, config.extrapolant)?);
    }
    let corrected = extrapolants.iter().map(|e| e.eval(-1.0)).collect();

    let mut fit = SimexFit {
        family,
        m,
        naive,
        lambdas: config.lambda_grid.clone(),
        per_lambda,
        extrapolants,
        corrected,
        variance: None,
        dropped: replicates.iter().map(|r| r.failed).collect(),
        config: config.clone(),
        replicates,
    };
    if fit.replicates.iter().all(|r| r.coefficients.len() >= 2) {
        let values = jackknife_variance(&fit, &fit.replicates)?;
        fit.variance = Some(SimexVariance {
            method: VarianceMethod::Jackknife,
            values,
        });
    }
    Ok(fit)
}

/// Simulation-extrapolation variance: at each grid point the mean model
/// variance of the refits minus the sample variance of their coefficients,
/// with the naive model variance at 0; extrapolated to -1 and floored at 0.
pub fn jackknife_variance(fit: &SimexFit, replicates: &[LambdaReplicates]) -> Result<Vec<f64>> {
    let q = fit.naive.coefficients.len();
    if replicates.len() != fit.lambdas.len() {
        return Err(Error::Dimension {
            expected: fit.lambdas.len(),
            got: replicates.len(),
        });
    }
    if let Some(r) = replicates.iter().find(|r| r.coefficients.len() < 2) {
        return Err(Error::InvalidInput(format!(
            "jackknife variance needs at least two refits at lambda = {}",
            r.lambda
        )));
    }
    let naive_var = fit.naive.variances();
    let kind = fit.config.extrapolant;
    (0..q)
        .map(|j| {
            let mut points = vec![(0.0, naive_var[j])];
            for r in replicates {
                let n = r.coefficients.len() as f64;
                let mean_model = r.variances.iter().map(|v| v[j]).sum::<f64>() / n;
                let mean_coef = r.coefficients.iter().map(|c| c[j]).sum::<f64>() / n;
                let spread = r.coefficients.iter().map(|c| (c[j] - mean_coef).powi(2)).sum::<f64>() / (n - 1.0);
                points.push((r.lambda, mean_model - spread));
            }
            Ok(fit_extrapolant(&points, kind)?.eval(-1.0).max(0.0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn identity_and_point_mass_columns() {
        let labels = vec![0, 1, 1, 0, 2];
        let id = MisclassMatrix::identity(3);
        assert_eq!(simulate_labels(&labels, &id, &mut stream(1, &[])).unwrap(), labels);
        let flip = MisclassMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let out = simulate_labels(&[0, 0, 1, 0], &flip, &mut stream(1, &[])).unwrap();
        assert_eq!(out, vec![1, 1, 1, 1]);
    }

    #[test]
    fn config_validation() {
        let mut c = SimexConfig::default();
        assert!(c.validate().is_ok());
        c.lambda_grid = vec![1.0, 0.5];
        assert!(c.validate().is_err());
        c.lambda_grid = vec![0.0, 0.5];
        assert!(c.validate().is_err());
        c.lambda_grid = vec![1.0];
        assert!(c.validate().is_err());
        c.extrapolant = ExtrapolantKind::Linear;
        assert!(c.validate().is_ok());
        c.b = 0;
        assert!(c.validate().is_err());
    }
}
