use nalgebra::DMatrix;
use rand::Rng;

use super::{GmmParams, LabeledSample};
use crate::error::{Error, Result};

/// Draws `n` labelled points: class from the mixture weights, then the
/// covariate vector from that class's Gaussian.
pub fn sample_gmm<R: Rng + ?Sized>(params: &GmmParams, n: usize, rng: &mut R) -> Result<LabeledSample> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let p = params.dim();
    let comps = params.components();
    let cum: Vec<f64> = params
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let mut labels = Vec::with_capacity(n);
    let mut data = DMatrix::zeros(n, p);
    let mut z = vec![0.0; p];
    for i in 0..n {
        let h = draw_categorical(&cum, rng.random::<f64>());
        comps[h].sample_into(rng, &mut z);
        for j in 0..p {
            data[(i, j)] = z[j];
        }
        labels.push(h);
    }
    Ok(LabeledSample { labels, data })
}

/// Inverse-CDF draw from cumulative probabilities; zero-probability classes
/// are never returned.
pub(crate) fn draw_categorical(cum: &[f64], u: f64) -> usize {
    for (k, &c) in cum.iter().enumerate() {
        if u < c {
            return k;
        }
    }
    // u beyond a total of 1 - rounding: last class with positive mass
    let mut k = cum.len() - 1;
    while k > 0 && cum[k] == cum[k - 1] {
        k -= 1;
    }
    k
}
