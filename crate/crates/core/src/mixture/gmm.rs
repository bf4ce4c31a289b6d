use nalgebra::DMatrix;
use rand::Rng;

use super::{kmeans, Classifier, ClassifierRule, CovarianceStructure, EmConfig, GmmFit, GmmParams};
use crate::error::{Error, Result};
use crate::linalg::{argmax, check_finite, row_major, Gaussian};

/// Precomputed classifier for a fitted mixture.
#[derive(Debug, Clone)]
pub struct GmmClassifier {
    components: Vec<Gaussian>,
    log_weights: Vec<f64>,
    rule: ClassifierRule,
}

impl GmmClassifier {
    pub fn new(params: &GmmParams, rule: ClassifierRule) -> Self {
        GmmClassifier {
            components: params.components(),
            log_weights: params.weights().iter().map(|w| w.ln()).collect(),
            rule,
        }
    }

    pub fn rule(&self) -> ClassifierRule {
        self.rule
    }

    fn scores(&self, z: &[f64], out: &mut [f64]) {
        for (h, g) in self.components.iter().enumerate() {
            out[h] = g.log_density(z);
            if self.rule == ClassifierRule::Weighted {
                out[h] += self.log_weights[h];
            }
        }
    }
}

impl Classifier for GmmClassifier {
    fn n_classes(&self) -> usize {
        self.components.len()
    }

    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn classify(&self, z: &[f64]) -> usize {
        let mut buf = [0.0f64; 16];
        let mut heap;
        let m = self.components.len();
        let scores: &mut [f64] = if m <= 16 {
            &mut buf[..m]
        } else {
            heap = vec![0.0; m];
            &mut heap
        };
        self.scores(z, scores);
        argmax(scores)
    }
}

/// Hard label for `z` together with the component densities `p_h(z)`.
pub fn classify_gmm(params: &GmmParams, z: &[f64], rule: ClassifierRule) -> Result<(usize, Vec<f64>)> {
    if z.len() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            got: z.len(),
        });
    }
    check_finite(z, "classification point")?;
    let classifier = GmmClassifier::new(params, rule);
    let mut scores = vec![0.0; params.m()];
    classifier.scores(z, &mut scores);
    let label = argmax(&scores);
    let densities = classifier.components.iter().map(|g| g.log_density(z).exp()).collect();
    Ok((label, densities))
}

/// Mixture log-likelihood `sum_i log sum_h w_h N(z_i; mu_h, S_h)`.
pub fn gmm_loglik(params: &GmmParams, data: &DMatrix<f64>) -> Result<f64> {
    if data.ncols() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            got: data.ncols(),
        });
    }
    let rows = row_major(data, "covariates")?;
    let comps = params.components();
    let log_w: Vec<f64> = params.weights().iter().map(|w| w.ln()).collect();
    let mut scratch = vec![0.0; params.m()];
    Ok(rows
        .chunks_exact(params.dim())
        .map(|z| {
            for (h, g) in comps.iter().enumerate() {
                scratch[h] = log_w[h] + g.log_density(z);
            }
            log_sum_exp(&scratch)
        })
        .sum())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Fits an `m`-component Gaussian mixture by EM, keeping the best of
/// `config.restarts` k-means++-seeded runs. Covariances are unrestricted per
/// component unless `config.covariance` ties them.
pub fn fit_gmm<R: Rng + ?Sized>(data: &DMatrix<f64>, m: usize, config: &EmConfig, rng: &mut R) -> Result<GmmFit> {
    let (n, p) = data.shape();
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    if p == 0 {
        return Err(Error::InvalidInput("data has no columns".into()));
    }
    if n <= m {
        return Err(Error::TooFewObservations { n, m });
    }
    let rows = row_major(data, "covariates")?;
    let global = covariance(&rows, p, None, &vec![1.0; n]);
    let global_scale = global.trace() / p as f64;
    if global_scale <= 0.0 && m > 1 {
        return Err(Error::Degenerate("all observations are identical".into()));
    }

    let mut best: Option<GmmFit> = None;
    let mut last_err = None;
    for _ in 0..config.restarts.max(1) {
        let seeds = kmeans::plus_plus_seeds(&rows, p, m, rng);
        let init = match initial_params(&rows, p, &seeds, &global, global_scale, config) {
            Ok(init) => init,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        match run_em(&rows, p, init, config, global_scale) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Degenerate("EM produced no valid fit".into())))
}

fn initial_params(
    rows: &[f64],
    p: usize,
    seeds: &[Vec<f64>],
    global: &DMatrix<f64>,
    global_scale: f64,
    config: &EmConfig,
) -> Result<GmmParams> {
    let n = rows.len() / p;
    let m = seeds.len();
    let assign: Vec<usize> = rows.chunks_exact(p).map(|z| kmeans::nearest(seeds, z).0).collect();
    let mut weights = vec![0.0; m];
    let mut means = Vec::with_capacity(m);
    let mut covs = Vec::with_capacity(m);
    for h in 0..m {
        let w: Vec<f64> = assign.iter().map(|&a| if a == h { 1.0 } else { 0.0 }).collect();
        let count: f64 = w.iter().sum();
        weights[h] = count / n as f64;
        if count == 0.0 {
            means.push(seeds[h].clone());
            covs.push(global.clone());
            continue;
        }
        let mu = weighted_mean(rows, p, &w);
        let cov = if count > p as f64 {
            covariance(rows, p, Some(&mu), &w)
        } else {
            global.clone()
        };
        covs.push(cov);
        means.push(mu);
    }
    // empty seeds get a small share so that every component stays alive
    let floor = 1.0 / (10.0 * n as f64);
    for w in weights.iter_mut() {
        *w = w.max(floor);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let covs = constrain(covs, &weights, config.covariance)
        .into_iter()
        .map(|c| regularize(c, global_scale, config.reg_eps))
        .collect::<Result<Vec<_>>>()?;
    GmmParams::new(normalized(weights), means, covs)
}

fn run_em(rows: &[f64], p: usize, mut params: GmmParams, config: &EmConfig, global_scale: f64) -> Result<GmmFit> {
    let n = rows.len() / p;
    let m = params.m();
    let mut resp = vec![0.0; n * m];
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut prev_params: Option<GmmParams> = None;

    for _ in 0..config.max_iter {
        let ll = e_step(rows, p, &params, &mut resp);
        if !ll.is_finite() {
            return Err(Error::Degenerate("EM log-likelihood is not finite".into()));
        }
        if let Some(&prev) = trace.last() {
            if ll < prev - 1e-8 {
                // only the covariance ridge can break monotonicity; keep the last good iterate
                params = prev_params.take().expect("previous iterate");
                break;
            }
            if (ll - prev).abs() <= config.tol * ll.abs().max(1e-300) {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        let next = m_step(rows, p, &resp, m, global_scale, config)?;
        prev_params = Some(std::mem::replace(&mut params, next));
    }
    if !converged && trace.len() == config.max_iter {
        // the last M-step has not been scored yet; report the scored iterate
        if let Some(prev) = prev_params {
            params = prev;
        }
    }
    let loglik = *trace.last().ok_or_else(|| Error::Degenerate("EM made no iterations".into()))?;
    Ok(GmmFit {
        params,
        loglik,
        n_iter: trace.len(),
        converged,
        loglik_trace: trace,
    })
}

fn e_step(rows: &[f64], p: usize, params: &GmmParams, resp: &mut [f64]) -> f64 {
    let m = params.m();
    let comps = params.components();
    let log_w: Vec<f64> = params.weights().iter().map(|w| w.ln()).collect();
    let mut ll = 0.0;
    for (i, z) in rows.chunks_exact(p).enumerate() {
        let r = &mut resp[i * m..(i + 1) * m];
        for h in 0..m {
            r[h] = log_w[h] + comps[h].log_density(z);
        }
        let lse = log_sum_exp(r);
        ll += lse;
        r.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    ll
}

fn m_step(rows: &[f64], p: usize, resp: &[f64], m: usize, global_scale: f64, config: &EmConfig) -> Result<GmmParams> {
    let n = rows.len() / p;
    let mut weights = Vec::with_capacity(m);
    let mut means = Vec::with_capacity(m);
    let mut covs = Vec::with_capacity(m);
    for h in 0..m {
        let w: Vec<f64> = (0..n).map(|i| resp[i * m + h]).collect();
        let nk: f64 = w.iter().sum();
        if nk < 1e-8 {
            return Err(Error::Degenerate(format!("component {h} lost all its mass")));
        }
        let mu = weighted_mean(rows, p, &w);
        covs.push(covariance(rows, p, Some(&mu), &w));
        means.push(mu);
        weights.push(nk / n as f64);
    }
    let covs = constrain(covs, &weights, config.covariance)
        .into_iter()
        .map(|c| regularize(c, global_scale, config.reg_eps))
        .collect::<Result<Vec<_>>>()?;
    GmmParams::new(normalized(weights), means, covs)
}

/// Pools per-component covariances by weight when they are tied.
fn constrain(covs: Vec<DMatrix<f64>>, weights: &[f64], structure: CovarianceStructure) -> Vec<DMatrix<f64>> {
    match structure {
        CovarianceStructure::Full => covs,
        CovarianceStructure::Tied | CovarianceStructure::Spherical => {
            let total: f64 = weights.iter().sum();
            let p = covs[0].nrows();
            let mut pooled = covs
                .iter()
                .zip(weights)
                .fold(DMatrix::zeros(p, p), |acc, (c, &w)| acc + c * (w / total));
            if structure == CovarianceStructure::Spherical {
                pooled = DMatrix::identity(p, p) * (pooled.trace() / p as f64);
            }
            vec![pooled; covs.len()]
        }
    }
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    // absorb the rounding residue so the weights sum to one exactly enough
    let residue = 1.0 - w.iter().sum::<f64>();
    let k = argmax(&w);
    w[k] += residue;
    w
}

fn weighted_mean(rows: &[f64], p: usize, w: &[f64]) -> Vec<f64> {
    let mut mu = vec![0.0; p];
    let mut total = 0.0;
    for (z, &wi) in rows.chunks_exact(p).zip(w) {
        total += wi;
        for j in 0..p {
            mu[j] += wi * z[j];
        }
    }
    mu.iter_mut().for_each(|v| *v /= total);
    mu
}

/// Weighted maximum-likelihood covariance (divides by the total weight).
pub(crate) fn covariance(rows: &[f64], p: usize, mean: Option<&[f64]>, w: &[f64]) -> DMatrix<f64> {
    let owned;
    let mu = match mean {
        Some(mu) => mu,
        None => {
            owned = weighted_mean(rows, p, w);
            &owned
        }
    };
    let mut cov = DMatrix::zeros(p, p);
    let mut total = 0.0;
    let mut d = vec![0.0; p];
    for (z, &wi) in rows.chunks_exact(p).zip(w) {
        if wi == 0.0 {
            continue;
        }
        total += wi;
        for j in 0..p {
            d[j] = z[j] - mu[j];
        }
        for a in 0..p {
            for b in 0..=a {
                cov[(a, b)] += wi * d[a] * d[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// Adds `eps * trace / p` to the diagonal when the smallest eigenvalue drops
/// below 1e-8. A zero-trace matrix borrows the scale of the whole data set.
pub(crate) fn regularize(mut cov: DMatrix<f64>, global_scale: f64, eps: f64) -> Result<DMatrix<f64>> {
    let p = cov.nrows();
    let min_eig = cov.clone().symmetric_eigenvalues().min();
    if min_eig >= 1e-8 {
        return Ok(cov);
    }
    let mut scale = cov.trace() / p as f64;
    if !(scale > 1e-12) {
        scale = global_scale;
    }
    if !(scale > 0.0) {
        return Err(Error::Degenerate("covariance has zero scale".into()));
    }
    let mut ridge = eps * scale;
    // a strongly indefinite estimate needs more than the nominal ridge
    if min_eig < 0.0 {
        ridge += -min_eig;
    }
    for j in 0..p {
        cov[(j, j)] += ridge;
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn two_points_two_components() {
        let data = DMatrix::from_column_slice(2, 1, &[0.0, 10.0]);
        let cfg = EmConfig { tol: 1e-12, ..Default::default() };
        let err = fit_gmm(&data, 2, &cfg, &mut stream(1, &[])).unwrap_err();
        // n must exceed m
        assert_eq!(err, Error::TooFewObservations { n: 2, m: 2 });
    }

    #[test]
    fn separated_points_are_captured_one_per_component() {
        let data = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 10.0]);
        let cfg = EmConfig { tol: 1e-12, ..Default::default() };
        let fit = fit_gmm(&data, 2, &cfg, &mut stream(1, &[])).unwrap();
        let mut means: Vec<f64> = fit.params.means().iter().map(|m| m[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!(means[0].abs() < 1e-6 && (means[1] - 10.0).abs() < 1e-6, "{means:?}");
    }

    #[test]
    fn rejects_non_finite() {
        let data = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, f64::NAN, 3.0]);
        assert!(matches!(
            fit_gmm(&data, 2, &EmConfig::default(), &mut stream(1, &[])),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn identical_points_are_degenerate() {
        let data = DMatrix::from_element(10, 2, 3.0);
        assert!(matches!(
            fit_gmm(&data, 2, &EmConfig::default(), &mut stream(1, &[])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn weighted_rule_shifts_boundary_toward_small_component() {
        let cov = DMatrix::identity(1, 1);
        let params = GmmParams::new(vec![0.2, 0.8], vec![vec![-1.0], vec![1.0]], vec![cov.clone(), cov]).unwrap();
        // density rule: boundary at 0; weighted: at -ln(4)/2
        assert_eq!(classify_gmm(&params, &[-0.3], ClassifierRule::Density).unwrap().0, 0);
        assert_eq!(classify_gmm(&params, &[-0.3], ClassifierRule::Weighted).unwrap().0, 1);
    }
}
