use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric family for the coefficient-vs-noise-level curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtrapolantKind {
    /// g0 + g1 l
    Linear,
    /// g0 + g1 l + g2 l^2
    #[default]
    Quadratic,
    /// g0 + exp(g1 + g2 l)
    Loglinear,
}

impl ExtrapolantKind {
    pub fn n_params(self) -> usize {
        match self {
            ExtrapolantKind::Linear => 2,
            ExtrapolantKind::Quadratic | ExtrapolantKind::Loglinear => 3,
        }
    }
}

impl std::str::FromStr for ExtrapolantKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(ExtrapolantKind::Linear),
            "quadratic" => Ok(ExtrapolantKind::Quadratic),
            "loglinear" => Ok(ExtrapolantKind::Loglinear),
            other => Err(Error::InvalidInput(format!("unknown extrapolant '{other}'"))),
        }
    }
}

impl std::fmt::Display for ExtrapolantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExtrapolantKind::Linear => "linear",
            ExtrapolantKind::Quadratic => "quadratic",
            ExtrapolantKind::Loglinear => "loglinear",
        })
    }
}

/// A fitted extrapolant. `kind` is the family actually used; `fell_back` is
/// set when a loglinear fit failed and the quadratic replaced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolant {
    pub kind: ExtrapolantKind,
    pub gamma: Vec<f64>,
    pub fell_back: bool,
}

impl Extrapolant {
    pub fn eval(&self, lambda: f64) -> f64 {
        extrapolate(&self.gamma, self.kind, lambda)
    }
}

/// Evaluates the extrapolant with coefficients `gamma` at `lambda`.
pub fn extrapolate(gamma: &[f64], kind: ExtrapolantKind, lambda: f64) -> f64 {
    match kind {
        ExtrapolantKind::Linear => gamma[0] + gamma[1] * lambda,
        ExtrapolantKind::Quadratic => gamma[0] + gamma[1] * lambda + gamma[2] * lambda * lambda,
        ExtrapolantKind::Loglinear => gamma[0] + (gamma[1] + gamma[2] * lambda).exp(),
    }
}

/// Least-squares fit of the extrapolant through `(lambda, value)` points.
pub fn fit_extrapolant(points: &[(f64, f64)], kind: ExtrapolantKind) -> Result<Extrapolant> {
    if points.len() < kind.n_params() {
        return Err(Error::InvalidInput(format!(
            "{kind} extrapolant needs at least {} points, got {}",
            kind.n_params(),
            points.len()
        )));
    }
    if points.iter().any(|(l, v)| !l.is_finite() || !v.is_finite()) {
        return Err(Error::NonFinite("extrapolation points"));
    }
    let mut lambdas: Vec<f64> = points.iter().map(|p| p.0).collect();
    lambdas.sort_by(f64::total_cmp);
    if lambdas.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Singular("duplicate lambda values in extrapolation".into()));
    }
    match kind {
        ExtrapolantKind::Linear | ExtrapolantKind::Quadratic => Ok(Extrapolant {
            kind,
            gamma: polynomial_ls(points, kind.n_params() - 1)?,
            fell_back: false,
        }),
        ExtrapolantKind::Loglinear => match loglinear(points) {
            Some(gamma) => Ok(Extrapolant {
                kind,
                gamma,
                fell_back: false,
            }),
            None => Ok(Extrapolant {
                kind: ExtrapolantKind::Quadratic,
                gamma: polynomial_ls(points, 2)?,
                fell_back: true,
            }),
        },
    }
}

fn polynomial_ls(points: &[(f64, f64)], degree: usize) -> Result<Vec<f64>> {
    let k = points.len();
    let x = DMatrix::from_fn(k, degree + 1, |i, j| points[i].0.powi(j as i32));
    let y = DVector::from_iterator(k, points.iter().map(|p| p.1));
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(Error::Singular("extrapolation design is rank deficient".into()));
    }
    let gamma = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    Ok(gamma.iter().copied().collect())
}

/// Levenberg-Marquardt for `g0 + exp(g1 + g2 l)`, seeded from a linear fit of
/// `log(value - g0)` with `g0` just below the smallest value.
fn loglinear(points: &[(f64, f64)]) -> Option<Vec<f64>> {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let spread = (hi - lo).max(1e-8 * lo.abs().max(1.0));
    let g0 = lo - 0.5 * spread;
    let logged: Vec<(f64, f64)> = points.iter().map(|&(l, v)| (l, (v - g0).ln())).collect();
    let lin = polynomial_ls(&logged, 1).ok()?;
    let mut g = [g0, lin[0], lin[1]];

    let sse = |g: &[f64; 3]| -> f64 {
        points
            .iter()
            .map(|&(l, v)| {
                let r = v - (g[0] + (g[1] + g[2] * l).exp());
                r * r
            })
            .sum()
    };
    let mut cur = sse(&g);
    let mut mu = 1e-3;
    for _ in 0..500 {
        let mut jtj = DMatrix::<f64>::zeros(3, 3);
        let mut jtr = DVector::<f64>::zeros(3);
        for &(l, v) in points {
            let e = (g[1] + g[2] * l).exp();
            let r = v - (g[0] + e);
            let jac = [1.0, e, l * e];
            for a in 0..3 {
                jtr[a] += jac[a] * r;
                for b in 0..3 {
                    jtj[(a, b)] += jac[a] * jac[b];
                }
            }
        }
        if jtr.amax() < 1e-14 * (1.0 + cur) {
            return Some(g.to_vec());
        }
        let mut improved = false;
        for _ in 0..60 {
            let mut damped = jtj.clone();
            for a in 0..3 {
                damped[(a, a)] += mu * jtj[(a, a)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let cand = [g[0] + step[0], g[1] + step[1], g[2] + step[2]];
            let next = sse(&cand);
            if next.is_finite() && next <= cur {
                let rel = (cur - next) / cur.max(1e-300);
                g = cand;
                cur = next;
                mu = (mu / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-12 || cur < 1e-28 {
                    return Some(g.to_vec());
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            // no descent direction left: accept only a genuine stationary point
            return (jtr.amax() < 1e-8 * (1.0 + cur.sqrt())).then(|| g.to_vec());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic() {
        let pts: Vec<(f64, f64)> = [0.0, 0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|&l| (l, 1.0 + 2.0 * l + 3.0 * l * l))
            .collect();
        let e = fit_extrapolant(&pts, ExtrapolantKind::Quadratic).unwrap();
        for (g, t) in e.gamma.iter().zip([1.0, 2.0, 3.0]) {
            assert!((g - t).abs() < 1e-10);
        }
        assert!((e.eval(-1.0) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn constant_values() {
        let pts: Vec<(f64, f64)> = [0.0, 0.5, 1.0, 2.0].iter().map(|&l| (l, -0.7)).collect();
        let e = fit_extrapolant(&pts, ExtrapolantKind::Quadratic).unwrap();
        assert!(e.gamma[1].abs() < 1e-12 && e.gamma[2].abs() < 1e-12);
        assert!((e.eval(-1.0) + 0.7).abs() < 1e-12);
    }

    #[test]
    fn linear_evaluation() {
        assert_eq!(extrapolate(&[3.0, 1.5], ExtrapolantKind::Linear, -1.0), 1.5);
        assert_eq!(extrapolate(&[1.0, 2.0, 3.0], ExtrapolantKind::Quadratic, -1.0), 2.0);
    }

    #[test]
    fn three_points_interpolated() {
        let pts = [(0.0, 1.3), (1.0, 0.9), (2.0, 0.8)];
        let e = fit_extrapolant(&pts, ExtrapolantKind::Quadratic).unwrap();
        // direct solve of the 3x3 Vandermonde system
        let g2 = ((0.8 - 0.9) - (0.9 - 1.3)) / 2.0;
        let g1 = (0.9 - 1.3) - g2;
        let expected = [1.3, g1, g2];
        for (g, t) in e.gamma.iter().zip(expected) {
            assert!((g - t).abs() < 1e-12);
        }
        for &(l, v) in &pts {
            assert!((e.eval(l) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn loglinear_recovers_exact_curve() {
        let truth = [0.4, -0.2, -0.8];
        let pts: Vec<(f64, f64)> = [0.0, 0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|&l| (l, extrapolate(&truth, ExtrapolantKind::Loglinear, l)))
            .collect();
        let e = fit_extrapolant(&pts, ExtrapolantKind::Loglinear).unwrap();
        assert!(!e.fell_back);
        let target = extrapolate(&truth, ExtrapolantKind::Loglinear, -1.0);
        assert!((e.eval(-1.0) - target).abs() < 1e-8, "{} vs {}", e.eval(-1.0), target);
    }

    #[test]
    fn duplicate_lambda_is_singular() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (1.0, 2.5), (2.0, 3.0)];
        assert!(matches!(
            fit_extrapolant(&pts, ExtrapolantKind::Quadratic),
            Err(Error::Singular(_))
        ));
        assert!(fit_extrapolant(&pts[..2], ExtrapolantKind::Quadratic).is_err());
    }
}
