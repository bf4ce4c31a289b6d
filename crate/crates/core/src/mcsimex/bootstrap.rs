use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_mcsimex, SimexConfig};
use crate::error::{Error, Result};
use crate::misclass::{estimate_misclass_oob, MisclassMatrix};
use crate::mixture::{align_labels, classify_all, fit_gmm, ClassifierRule, EmConfig, GmmClassifier, GmmParams};
use crate::regress::{self, Family, Outcome, RegressionFit};
use crate::rng::stream;

/// Fraction of failed bootstrap iterations tolerated.
pub const BOOTSTRAP_FAILURE_CAP: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub n_boot: usize,
    pub em: EmConfig,
    pub rule: ClassifierRule,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            n_boot: 1000,
            em: EmConfig::default(),
            rule: ClassifierRule::Density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Corrected coefficients of each successful iteration.
    pub replicates: Vec<Vec<f64>>,
    /// Mean of the replicates.
    pub point: Vec<f64>,
    pub median: Vec<f64>,
    /// 2.5% and 97.5% percentiles.
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub n_boot: usize,
    pub n_failed: usize,
    /// Naive fit on the full data with the reference clustering.
    pub naive: RegressionFit,
    pub reference: GmmParams,
    /// Average of the out-of-bag misclassification matrices.
    pub mean_misclass: MisclassMatrix,
}

impl BootstrapResult {
    /// Replicates as CSV: `iteration,coef_1..coef_q`.
    pub fn write_replicates_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let q = self.point.len();
        let mut header = vec!["iteration".to_string()];
        header.extend((1..=q).map(|j| format!("coef_{j}")));
        wtr.write_record(&header)?;
        for (i, r) in self.replicates.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(r.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

struct Iteration {
    corrected: Vec<f64>,
    misclass: MisclassMatrix,
}

/// Bootstrap of the whole pipeline: every iteration re-clusters a resample,
/// estimates the misclassification matrix on the out-of-bag points against the
/// full-data clustering, and reruns the correction on the resample.
pub fn bootstrap_simex(
    outcome: &Outcome,
    covariates: &DMatrix<f64>,
    m: usize,
    family: Family,
    simex: &SimexConfig,
    options: &BootstrapOptions,
) -> Result<BootstrapResult> {
    simex.validate()?;
    let n = covariates.nrows();
    if outcome.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: outcome.len(),
        });
    }
    if options.n_boot == 0 {
        return Err(Error::InvalidInput("n_boot must be at least 1".into()));
    }
    let reference_fit = fit_gmm(covariates, m, &options.em, &mut stream(simex.seed, &[0]))?;
    let reference = reference_fit.params;
    let reference_cls = GmmClassifier::new(&reference, options.rule);
    let labels = classify_all(&reference_cls, covariates)?;
    let naive = regress::fit(family, outcome, &labels, m)?;

    let iterations: Vec<Option<Iteration>> = (0..options.n_boot)
        .into_par_iter()
        .map(|it| {
            let mut rng = stream(simex.seed, &[1, it as u64]);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            idx.iter().for_each(|&i| in_bag[i] = true);
            let oob: Vec<usize> = (0..n).filter(|&i| !in_bag[i]).collect();
            if oob.is_empty() {
                return None;
            }
            let bag_x = covariates.select_rows(&idx);
            let oob_x = covariates.select_rows(&oob);
            let fit = fit_gmm(&bag_x, m, &options.em, &mut rng).ok()?;
            let perm = align_labels(reference.means(), fit.params.means()).ok()?;
            let aligned = fit.params.permuted(&perm).ok()?;
            let bag_cls = GmmClassifier::new(&aligned, options.rule);
            let misclass = estimate_misclass_oob(&reference_cls, &bag_cls, &oob_x).ok()?;
            let bag_labels = classify_all(&bag_cls, &bag_x).ok()?;
            let cfg = SimexConfig {
                seed: crate::rng::derive_seed(simex.seed, &[2, it as u64]),
                ..simex.clone()
            };
            let sx = run_mcsimex(&outcome.subset(&idx), &bag_labels, m, &misclass, family, &cfg).ok()?;
            Some(Iteration {
                corrected: sx.corrected,
                misclass,
            })
        })
        .collect();

    let n_failed = iterations.iter().filter(|i| i.is_none()).count();
    if n_failed == options.n_boot || n_failed as f64 > BOOTSTRAP_FAILURE_CAP * options.n_boot as f64 {
        return Err(Error::TooManyFailures {
            stage: "bootstrap iterations".into(),
            failed: n_failed,
            total: options.n_boot,
            cap: BOOTSTRAP_FAILURE_CAP * 100.0,
        });
    }
    let done: Vec<Iteration> = iterations.into_iter().flatten().collect();
    let q = naive.coefficients.len();
    let k = done.len() as f64;

    let mut mean_pi = DMatrix::zeros(m, m);
    for it in &done {
        mean_pi += it.misclass.entries();
    }
    mean_pi /= k;
    for j in 0..m {
        let s: f64 = mean_pi.column(j).sum();
        mean_pi.column_mut(j).iter_mut().for_each(|v| *v /= s);
    }

    let replicates: Vec<Vec<f64>> = done.into_iter().map(|i| i.corrected).collect();
    let mut point = Vec::with_capacity(q);
    let mut median = Vec::with_capacity(q);
    let mut ci_lower = Vec::with_capacity(q);
    let mut ci_upper = Vec::with_capacity(q);
    for j in 0..q {
        let mut col: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
        point.push(col.iter().sum::<f64>() / k);
        col.sort_by(f64::total_cmp);
        median.push(quantile_sorted(&col, 0.5));
        ci_lower.push(quantile_sorted(&col, 0.025));
        ci_upper.push(quantile_sorted(&col, 0.975));
    }
    Ok(BootstrapResult {
        replicates,
        point,
        median,
        ci_lower,
        ci_upper,
        n_boot: options.n_boot,
        n_failed,
        naive,
        reference,
        mean_misclass: MisclassMatrix::new(mean_pi)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert!((quantile_sorted(&v, 0.975) - 4.9).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.025) - 1.1).abs() < 1e-12);
    }
}
