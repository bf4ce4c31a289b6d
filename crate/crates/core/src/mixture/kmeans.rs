use nalgebra::DMatrix;
use rand::Rng;

use super::{Gaussian, KmeansConfig, KmeansFit};
use crate::error::{Error, Result};
use crate::linalg::{check_finite, row_major, sq_dist};

/// Nearest centroid and its squared distance; ties go to the lowest index.
pub(crate) fn nearest(centroids: &[Vec<f64>], z: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, z);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding: first seed uniform, later seeds with probability
/// proportional to the squared distance to the closest existing seed.
pub(crate) fn plus_plus_seeds<R: Rng + ?Sized>(rows: &[f64], p: usize, m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = rows.len() / p;
    let row = |i: usize| rows[i * p..(i + 1) * p].to_vec();
    let mut seeds = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<f64> = rows.chunks_exact(p).map(|z| sq_dist(z, &seeds[0])).collect();
    while seeds.len() < m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let s = row(pick);
        for (d, z) in d2.iter_mut().zip(rows.chunks_exact(p)) {
            *d = d.min(sq_dist(z, &s));
        }
        seeds.push(s);
    }
    seeds
}

fn distinct_rows(rows: &[f64], p: usize, at_least: usize) -> bool {
    let mut found: Vec<&[f64]> = Vec::with_capacity(at_least);
    for z in rows.chunks_exact(p) {
        if !found.contains(&z) {
            found.push(z);
            if found.len() >= at_least {
                return true;
            }
        }
    }
    false
}

/// Lloyd's algorithm with k-means++ seeding; returns the restart with the
/// smallest within-cluster sum of squares.
pub fn fit_kmeans<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    m: usize,
    config: &KmeansConfig,
    rng: &mut R,
) -> Result<KmeansFit> {
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
    if !distinct_rows(&rows, p, m) {
        return Err(Error::Degenerate(format!("fewer than {m} distinct observations")));
    }
    let mut best: Option<KmeansFit> = None;
    for _ in 0..config.restarts.max(1) {
        let seeds = plus_plus_seeds(&rows, p, m, rng);
        let fit = lloyd(&rows, p, seeds, config.max_iter);
        if best.as_ref().is_none_or(|b| fit.within_ss < b.within_ss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(rows: &[f64], p: usize, mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KmeansFit {
    let n = rows.len() / p;
    let m = centroids.len();
    let mut assign = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut n_iter = 0;
    loop {
        let mut changed = false;
        let mut ss = 0.0;
        let mut dists = vec![0.0; n];
        for (i, z) in rows.chunks_exact(p).enumerate() {
            let (k, d) = nearest(&centroids, z);
            if assign[i] != k {
                assign[i] = k;
                changed = true;
            }
            dists[i] = d;
            ss += d;
        }
        trace.push(ss);
        if !changed || n_iter >= max_iter {
            return KmeansFit {
                centroids,
                within_ss: ss,
                n_iter,
                ss_trace: trace,
            };
        }
        n_iter += 1;

        let mut sums = vec![vec![0.0; p]; m];
        let mut counts = vec![0usize; m];
        for (z, &k) in rows.chunks_exact(p).zip(&assign) {
            counts[k] += 1;
            for j in 0..p {
                sums[k][j] += z[j];
            }
        }
        for k in 0..m {
            if counts[k] > 0 {
                centroids[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
        // an empty cluster takes over the point worst served by its centroid
        for k in 0..m {
            if counts[k] == 0 {
                let (far, _) = dists
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
                centroids[k] = rows[far * p..(far + 1) * p].to_vec();
                dists[far] = 0.0;
            }
        }
    }
}

pub fn classify_kmeans(fit: &KmeansFit, z: &[f64]) -> Result<usize> {
    if z.len() != fit.dim() {
        return Err(Error::Dimension {
            expected: fit.dim(),
            got: z.len(),
        });
    }
    check_finite(z, "classification point")?;
    Ok(nearest(&fit.centroids, z).0)
}

/// Per-cluster Gaussians (cluster mean, unbiased within-cluster covariance)
/// of the partition `fit` induces on `data`.
pub fn cluster_gaussians(fit: &KmeansFit, data: &DMatrix<f64>, reg_eps: f64) -> Result<Vec<Gaussian>> {
    let p = fit.dim();
    if data.ncols() != p {
        return Err(Error::Dimension { expected: p, got: data.ncols() });
    }
    let rows = row_major(data, "covariates")?;
    let n = rows.len() / p;
    let global = super::gmm::covariance(&rows, p, None, &vec![1.0; n]);
    let global_scale = global.trace() / p as f64;
    let assign: Vec<usize> = rows.chunks_exact(p).map(|z| nearest(&fit.centroids, z).0).collect();
    (0..fit.m())
        .map(|k| {
            let w: Vec<f64> = assign.iter().map(|&a| if a == k { 1.0 } else { 0.0 }).collect();
            let count: f64 = w.iter().sum();
            if count < 2.0 {
                return Err(Error::Degenerate(format!("cluster {k} has fewer than two members")));
            }
            let mut mu = vec![0.0; p];
            for (z, &wi) in rows.chunks_exact(p).zip(&w) {
                for j in 0..p {
                    mu[j] += wi * z[j] / count;
                }
            }
            let cov = super::gmm::covariance(&rows, p, Some(&mu), &w) * (count / (count - 1.0));
            let cov = super::gmm::regularize(cov, global_scale, reg_eps)?;
            Gaussian::new(&mu, &cov)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn single_cluster_is_grand_mean() {
        let data = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 2.0, 0.0, 0.0, 4.0, 2.0, 4.0]);
        let fit = fit_kmeans(&data, 1, &KmeansConfig::default(), &mut stream(3, &[])).unwrap();
        assert_eq!(fit.centroids[0], vec![1.0, 2.0]);
        // total SS about (1,2): 4 * (1 + 4)
        assert!((fit.within_ss - 20.0).abs() < 1e-12);
    }

    #[test]
    fn identical_points_fail_for_m_above_one() {
        let data = DMatrix::from_element(5, 2, 1.0);
        assert!(matches!(
            fit_kmeans(&data, 2, &KmeansConfig::default(), &mut stream(3, &[])),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_kmeans(&data, 1, &KmeansConfig::default(), &mut stream(3, &[])).is_ok());
    }

    #[test]
    fn nearest_centroid_ties_to_lower_index() {
        let fit = KmeansFit {
            centroids: vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            within_ss: 0.0,
            n_iter: 0,
            ss_trace: vec![],
        };
        assert_eq!(classify_kmeans(&fit, &[0.0, 5.0]).unwrap(), 0);
        assert_eq!(classify_kmeans(&fit, &[1.0, 0.0]).unwrap(), 1);
        assert!(classify_kmeans(&fit, &[f64::INFINITY, 0.0]).is_err());
    }
}
