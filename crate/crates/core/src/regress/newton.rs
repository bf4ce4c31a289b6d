use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, symmetrize};

/// Log-likelihood with its gradient and observed information (negative Hessian).
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loglik: f64,
    pub gradient: DVector<f64>,
    pub information: DMatrix<f64>,
}

pub(crate) struct NewtonResult {
    pub beta: DVector<f64>,
    pub eval: Evaluation,
    pub n_iter: usize,
    pub converged: bool,
}

pub(crate) enum Stop {
    Diverged { index: usize, value: f64, gradient: f64 },
    Singular,
}

impl Stop {
    /// Maps a stop to the family-specific divergence error.
    pub fn into_error(self, family: crate::regress::Family) -> Error {
        match (self, family) {
            (Stop::Singular, _) => Error::Singular("information matrix is singular".into()),
            (Stop::Diverged { index, value, gradient }, crate::regress::Family::Logistic) => {
                Error::Separation { index, value, gradient }
            }
            (Stop::Diverged { index, value, gradient }, crate::regress::Family::Cox) => {
                Error::MonotoneLikelihood { index, value, gradient }
            }
        }
    }
}

const MAX_ITER: usize = 50;
const REL_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-8;
pub(crate) const DIVERGENCE_BOUND: f64 = 15.0;

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Newton-Raphson from zero with step halving whenever the likelihood drops.
pub(crate) fn maximize<F>(q: usize, f: F) -> std::result::Result<NewtonResult, Stop>
where
    F: Fn(&DVector<f64>) -> Evaluation,
{
    let mut beta = DVector::zeros(q);
    let mut eval = f(&beta);
    let mut converged = false;
    let mut n_iter = 0;
    while n_iter < MAX_ITER {
        n_iter += 1;
        let step = match solve_spd(&eval.information, &eval.gradient) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => return Err(Stop::Singular),
        };
        let mut t = 1.0;
        let (cand, cand_eval) = loop {
            let cand = &beta + &step * t;
            let e = f(&cand);
            if e.loglik.is_finite() && e.loglik >= eval.loglik - 1e-12 * eval.loglik.abs() {
                break (cand, e);
            }
            t *= 0.5;
            if t < 1e-10 {
                break (beta.clone(), eval.clone());
            }
        };
        let rel = (cand_eval.loglik - eval.loglik).abs() / (eval.loglik.abs() + 0.1);
        let stalled = t < 1e-10;
        beta = cand;
        eval = cand_eval;

        let (index, value) = beta
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (j, &b)| if b.abs() > acc.1.abs() { (j, b) } else { acc });
        if value.abs() > DIVERGENCE_BOUND {
            return Err(Stop::Diverged {
                index,
                value,
                gradient: inf_norm(&eval.gradient),
            });
        }
        if (rel < REL_TOL && inf_norm(&eval.gradient) < GRAD_TOL) || stalled {
            converged = inf_norm(&eval.gradient) < 1e-6;
            break;
        }
    }
    symmetrize(&mut eval.information);
    Ok(NewtonResult {
        beta,
        eval,
        n_iter,
        converged,
    })
}

/// Inverse observed information, or an error when it is singular.
pub(crate) fn covariance(info: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut cov = info
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("information matrix is singular".into()))?;
    symmetrize(&mut cov);
    Ok(cov)
}
