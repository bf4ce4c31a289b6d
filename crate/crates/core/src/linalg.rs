//! Small dense helpers shared by the clustering and regression code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Copies an n×p matrix into a row-major buffer, rejecting non-finite entries.
pub(crate) fn row_major(data: &DMatrix<f64>, what: &'static str) -> Result<Vec<f64>> {
    let (n, p) = data.shape();
    let mut out = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            let v = data[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite(what));
            }
            out.push(v);
        }
    }
    Ok(out)
}

pub(crate) fn check_finite(z: &[f64], what: &'static str) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Multivariate normal with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    // lower triangle, row-major p×p
    chol: Vec<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::Dimension {
                expected: p,
                got: cov.nrows(),
            });
        }
        let chol = nalgebra::Cholesky::new(cov.clone()).ok_or_else(|| {
            Error::Degenerate("covariance matrix is not positive definite".into())
        })?;
        let l = chol.l();
        let mut flat = vec![0.0; p * p];
        let mut log_det = 0.0;
        for i in 0..p {
            for j in 0..=i {
                flat[i * p + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        Ok(Gaussian {
            mean: mean.to_vec(),
            chol: flat,
            log_norm: -0.5 * (p as f64 * LN_2PI + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let p = self.mean.len();
        // forward substitution L y = z - mu, accumulating |y|^2
        let mut y = [0.0f64; 16];
        let mut heap;
        let y: &mut [f64] = if p <= 16 {
            &mut y[..p]
        } else {
            heap = vec![0.0; p];
            &mut heap
        };
        let mut quad = 0.0;
        for i in 0..p {
            let row = &self.chol[i * p..i * p + i];
            let s: f64 = row.iter().zip(y.iter()).map(|(l, v)| l * v).sum();
            let yi = (z[i] - self.mean[i] - s) / self.chol[i * p + i];
            y[i] = yi;
            quad += yi * yi;
        }
        self.log_norm - 0.5 * quad
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let p = self.mean.len();
        let mut eps = [0.0f64; 16];
        let mut heap;
        let eps: &mut [f64] = if p <= 16 {
            &mut eps[..p]
        } else {
            heap = vec![0.0; p];
            &mut heap
        };
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for i in 0..p {
            let row = &self.chol[i * p..=i * p + i];
            out[i] = self.mean[i] + row.iter().zip(eps.iter()).map(|(l, e)| l * e).sum::<f64>();
        }
    }
}

/// Solves the symmetric positive-definite system `a x = b`, falling back to an
/// LU solve when Cholesky fails.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = nalgebra::Cholesky::new(a.clone()) {
        return Some(ch.solve(b));
    }
    a.clone().lu().solve(b)
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_density_at_mean() {
        let g = Gaussian::new(&[0.0], &DMatrix::identity(1, 1)).unwrap();
        assert!((g.log_density(&[0.0]) - (-0.918_938_533_204_672_8)).abs() < 1e-14);
    }

    #[test]
    fn bivariate_density_matches_closed_form() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let g = Gaussian::new(&[1.0, -1.0], &cov).unwrap();
        let z = [0.3, 0.4];
        let det: f64 = 2.0 * 1.0 - 0.36;
        let d = [z[0] - 1.0, z[1] + 1.0];
        // inverse of [[a,b],[b,c]] is [[c,-b],[-b,a]]/det
        let quad = (1.0 * d[0] * d[0] - 2.0 * 0.6 * d[0] * d[1] + 2.0 * d[1] * d[1]) / det;
        let expected = -LN_2PI - 0.5 * det.ln() - 0.5 * quad;
        assert!((g.log_density(&z) - expected).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }
}
