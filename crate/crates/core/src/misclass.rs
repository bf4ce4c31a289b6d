//! The misclassification matrix `P[i][j] = P(observed i | true j)`: validation,
//! spectral fractional powers, and estimators.

use std::io::{Read, Write};

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Classifier, Gaussian};

/// Column-stochastic m×m matrix of misclassification probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassMatrix {
    entries: DMatrix<f64>,
}

const COLUMN_SUM_TOL: f64 = 1e-10;
const CLAMP_TOL: f64 = 1e-10;
const IMAG_TOL: f64 = 1e-10;

impl MisclassMatrix {
    /// Validates entries in [0, 1] and column sums of 1 within 1e-10.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        validate(&entries, COLUMN_SUM_TOL)?;
        Ok(MisclassMatrix { entries })
    }

    /// Builds from rows `rows[i][j] = P(observed i | true j)`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput("misclassification matrix must be square".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(m, m, &flat))
    }

    pub fn identity(m: usize) -> Self {
        MisclassMatrix {
            entries: DMatrix::identity(m, m),
        }
    }

    /// Two-class matrix flipping either label with probability `rate`.
    pub fn symmetric_flip(rate: f64) -> Result<Self> {
        Self::from_rows(&[vec![1.0 - rate, rate], vec![rate, 1.0 - rate]])
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, observed: usize, truth: usize) -> f64 {
        self.entries[(observed, truth)]
    }

    pub fn column(&self, truth: usize) -> Vec<f64> {
        self.entries.column(truth).iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.m())
            .map(|i| self.entries.row(i).iter().copied().collect())
            .collect()
    }

    /// Writes `col_1..col_m` header followed by m rows; columns index the true class.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let m = self.m();
        wtr.write_record((1..=m).map(|j| format!("col_{j}")))?;
        for i in 0..m {
            wtr.write_record((0..m).map(|j| format!("{}", self.entries[(i, j)])))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the CSV layout of [`write_csv`](Self::write_csv). Columns must sum
    /// to one within 1e-6 and are renormalized exactly.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers()?.clone();
        let m = header.len();
        for (j, name) in header.iter().enumerate() {
            if name != format!("col_{}", j + 1) {
                return Err(Error::Parse {
                    line: 1,
                    column: name.to_string(),
                    message: format!("expected header col_{}", j + 1),
                });
            }
        }
        let mut entries = DMatrix::zeros(m, m);
        let mut count = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if i >= m || rec.len() != m {
                return Err(Error::Parse {
                    line: i + 2,
                    column: String::new(),
                    message: format!("expected {m} rows of {m} values"),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                entries[(i, j)] = field.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 2,
                    column: format!("col_{}", j + 1),
                    message: e.to_string(),
                })?;
            }
            count += 1;
        }
        if count != m {
            return Err(Error::Parse {
                line: count + 1,
                column: String::new(),
                message: format!("expected {m} rows, found {count}"),
            });
        }
        validate(&entries, 1e-6)?;
        for j in 0..m {
            let s: f64 = entries.column(j).sum();
            entries.column_mut(j).iter_mut().for_each(|v| *v /= s);
        }
        Self::new(entries)
    }
}

fn validate(entries: &DMatrix<f64>, sum_tol: f64) -> Result<()> {
    let (r, c) = entries.shape();
    if r != c || r == 0 {
        return Err(Error::InvalidInput(format!("misclassification matrix must be square and non-empty, got {r}x{c}")));
    }
    for j in 0..c {
        let mut s = 0.0;
        for i in 0..r {
            let v = entries[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("entry ({i}, {j}) = {v} is not a probability")));
            }
            s += v;
        }
        if (s - 1.0).abs() > sum_tol {
            return Err(Error::InvalidInput(format!("column {j} sums to {s}, not 1")));
        }
    }
    Ok(())
}

/// Spectrum and existence diagnostics for fractional powers of a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerValidity {
    pub eigenvalues: Vec<Complex<f64>>,
    pub is_diagonalizable: bool,
    pub power_exists: bool,
    /// Most negative entry seen across the probe grid (0 when none is negative).
    pub max_negative_entry: f64,
    /// Reason the power fails to exist, when it does not.
    pub reason: Option<String>,
}

struct Spectral {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut ev: Vec<Complex<f64>> = a.clone().schur().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    ev
}

fn spectral(a: &DMatrix<f64>) -> Result<Spectral> {
    let m = a.nrows();
    let ev = eigenvalues(a);
    if let Some(bad) = ev.iter().find(|z| z.im.abs() > IMAG_TOL) {
        return Err(Error::PowerDoesNotExist(format!(
            "complex eigenvalue {:.6}{:+.6}i",
            bad.re, bad.im
        )));
    }
    let real: Vec<f64> = ev.iter().map(|z| z.re).collect();

    // cluster numerically repeated eigenvalues and take their eigenspaces whole
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &v in &real {
        match groups.last_mut() {
            Some(g) if (g[g.len() - 1] - v).abs() < 1e-7 => g.push(v),
            _ => groups.push(vec![v]),
        }
    }
    let scale = a.norm().max(1.0);
    let mut vectors = DMatrix::zeros(m, m);
    let mut values = Vec::with_capacity(m);
    let mut col = 0;
    for g in &groups {
        let mu = g.iter().sum::<f64>() / g.len() as f64;
        let shifted = a - DMatrix::identity(m, m) * mu;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
        let k = g.len();
        if svd.singular_values[order[k - 1]] > 1e-7 * scale {
            return Err(Error::PowerDoesNotExist(format!(
                "matrix is not diagonalizable at eigenvalue {mu:.6}"
            )));
        }
        for &idx in order.iter().take(k) {
            vectors.set_column(col, &v_t.row(idx).transpose());
            values.push(mu);
            col += 1;
        }
    }
    let inverse = vectors
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::PowerDoesNotExist("eigenvector matrix is singular".into()))?;
    let cond = vectors.norm() * inverse.norm();
    if !(cond < 1e10) {
        return Err(Error::PowerDoesNotExist(format!(
            "eigenvector matrix is ill-conditioned (condition {cond:.2e})"
        )));
    }
    Ok(Spectral {
        values,
        vectors,
        inverse,
    })
}

fn apply_power(s: &Spectral, lambda: f64) -> Result<DMatrix<f64>> {
    let mut scaled = s.vectors.clone();
    for (j, &v) in s.values.iter().enumerate() {
        let f = if lambda.fract() == 0.0 {
            v.powi(lambda as i32)
        } else if v > 0.0 {
            v.powf(lambda)
        } else {
            return Err(Error::PowerDoesNotExist(format!(
                "eigenvalue {v:.6} is not positive, so the {lambda} power is not real"
            )));
        };
        scaled.column_mut(j).iter_mut().for_each(|x| *x *= f);
    }
    Ok(scaled * &s.inverse)
}

fn int_power(a: &DMatrix<f64>, k: u32) -> DMatrix<f64> {
    let m = a.nrows();
    let mut result = DMatrix::identity(m, m);
    let mut base = a.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `E diag(v^lambda) E^-1` without any stochasticity checks. Negative powers
/// of invertible matrices are allowed here for diagnostics.
pub fn spectral_power_raw(pi: &MisclassMatrix, lambda: f64) -> Result<DMatrix<f64>> {
    if !lambda.is_finite() {
        return Err(Error::InvalidInput("power must be finite".into()));
    }
    let s = spectral(&pi.entries)?;
    apply_power(&s, lambda)
}

/// Clamps tiny negatives, rejects real ones, and renormalizes columns.
fn to_stochastic(mut raw: DMatrix<f64>, lambda: f64) -> Result<MisclassMatrix> {
    let m = raw.nrows();
    for j in 0..m {
        for i in 0..m {
            let v = raw[(i, j)];
            if v < -CLAMP_TOL {
                return Err(Error::PowerDoesNotExist(format!(
                    "entry ({i}, {j}) of the {lambda} power is {v:.3e}"
                )));
            }
            if v.abs() < 1e-12 {
                raw[(i, j)] = 0.0;
            }
        }
        let s: f64 = raw.column(j).sum();
        raw.column_mut(j).iter_mut().for_each(|v| *v /= s);
    }
    MisclassMatrix::new(raw)
}

/// `pi^lambda` as a misclassification matrix. Non-negative integer powers are
/// computed by repeated multiplication, all others spectrally.
pub fn matrix_power(pi: &MisclassMatrix, lambda: f64) -> Result<MisclassMatrix> {
    if !lambda.is_finite() || lambda < -1.0 {
        return Err(Error::InvalidInput(format!("power {lambda} must be finite and at least -1")));
    }
    if lambda >= 0.0 && lambda.fract() == 0.0 {
        return to_stochastic(int_power(&pi.entries, lambda as u32), lambda);
    }
    to_stochastic(spectral_power_raw(pi, lambda)?, lambda)
}

/// Reports whether real misclassification-matrix powers exist, probing
/// `lambda = 0.1, 0.2, ..., 2.0`.
pub fn check_power_validity(pi: &MisclassMatrix) -> PowerValidity {
    let eigenvalues = eigenvalues(&pi.entries);
    let spectral = spectral(&pi.entries);
    let is_diagonalizable = spectral.is_ok();
    let mut reason = None;
    if let Some(z) = eigenvalues.iter().find(|z| z.im.abs() > IMAG_TOL) {
        reason = Some(format!("complex eigenvalue {:.6}{:+.6}i", z.re, z.im));
    } else if let Some(z) = eigenvalues.iter().find(|z| z.re <= 0.0) {
        reason = Some(format!("non-positive eigenvalue {:.6}", z.re));
    } else if let Err(e) = &spectral {
        reason = Some(e.to_string());
    }
    let mut max_negative_entry: f64 = 0.0;
    if let Ok(s) = &spectral {
        for step in 1..=20 {
            let lambda = step as f64 / 10.0;
            match apply_power(s, lambda) {
                Ok(p) => {
                    let worst = p.iter().cloned().fold(f64::INFINITY, f64::min);
                    max_negative_entry = max_negative_entry.min(worst);
                }
                Err(e) => {
                    reason.get_or_insert_with(|| e.to_string());
                    break;
                }
            }
        }
    }
    if reason.is_none() && max_negative_entry < -CLAMP_TOL {
        reason = Some(format!("negative entry {max_negative_entry:.3e} on the probe grid"));
    }
    PowerValidity {
        eigenvalues,
        is_diagonalizable,
        power_exists: reason.is_none(),
        max_negative_entry,
        reason,
    }
}

/// Monte Carlo estimate of `P[i][j] = P(classifier(Z) = i)` for `Z` drawn from
/// component `j`, using `n_mc` draws per component.
pub fn estimate_misclass_mc<C, R>(components: &[Gaussian], classifier: &C, n_mc: usize, rng: &mut R) -> Result<MisclassMatrix>
where
    C: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    let m = components.len();
    if m == 0 || classifier.n_classes() != m {
        return Err(Error::Dimension {
            expected: m,
            got: classifier.n_classes(),
        });
    }
    if n_mc < 1000 {
        return Err(Error::InvalidInput(format!("n_mc = {n_mc} is below the minimum of 1000")));
    }
    let p = classifier.dim();
    if components.iter().any(|g| g.dim() != p) {
        return Err(Error::InvalidInput("component and classifier dimensions differ".into()));
    }
    let mut counts = DMatrix::<f64>::zeros(m, m);
    let mut z = vec![0.0; p];
    for (j, g) in components.iter().enumerate() {
        for _ in 0..n_mc {
            g.sample_into(rng, &mut z);
            counts[(classifier.classify(&z), j)] += 1.0;
        }
    }
    counts /= n_mc as f64;
    MisclassMatrix::new(counts)
}

/// Column-normalized cross-tabulation of `predicted` (rows) against
/// `reference` (columns). Classes absent from `reference` get the identity column.
pub fn cross_tabulate(reference: &[usize], predicted: &[usize], m: usize) -> Result<MisclassMatrix> {
    if reference.len() != predicted.len() {
        return Err(Error::Dimension {
            expected: reference.len(),
            got: predicted.len(),
        });
    }
    let mut counts = DMatrix::<f64>::zeros(m, m);
    for (&r, &p) in reference.iter().zip(predicted) {
        if r >= m || p >= m {
            return Err(Error::InvalidInput(format!("label {} out of range 0..{m}", r.max(p))));
        }
        counts[(p, r)] += 1.0;
    }
    for j in 0..m {
        let total: f64 = counts.column(j).sum();
        if total == 0.0 {
            counts[(j, j)] = 1.0;
        } else {
            counts.column_mut(j).iter_mut().for_each(|v| *v /= total);
        }
    }
    MisclassMatrix::new(counts)
}

/// Out-of-bag estimate: the in-bag model's predictions cross-tabulated against
/// the reference model's labels on the out-of-bag points.
pub fn estimate_misclass_oob<A, B>(reference: &A, inbag: &B, oob: &DMatrix<f64>) -> Result<MisclassMatrix>
where
    A: Classifier + ?Sized,
    B: Classifier + ?Sized,
{
    if oob.nrows() == 0 {
        return Err(Error::InvalidInput("out-of-bag set is empty".into()));
    }
    if reference.n_classes() != inbag.n_classes() {
        return Err(Error::Dimension {
            expected: reference.n_classes(),
            got: inbag.n_classes(),
        });
    }
    let truth = crate::mixture::classify_all(reference, oob)?;
    let predicted = crate::mixture::classify_all(inbag, oob)?;
    cross_tabulate(&truth, &predicted, reference.n_classes())
}
