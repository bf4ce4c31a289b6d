use crate::error::{Error, Result};
use crate::linalg::sq_dist;

/// Matches fitted components to reference components by minimizing the total
/// squared distance between paired means.
///
/// Returns `perm` with `perm[k]` the fitted component that plays the role of
/// reference component `k`; `GmmParams::permuted(&perm)` applies it.
pub fn align_labels(reference_means: &[Vec<f64>], fit_means: &[Vec<f64>]) -> Result<Vec<usize>> {
    let m = reference_means.len();
    if fit_means.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: fit_means.len(),
        });
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let p = reference_means[0].len();
    if reference_means.iter().chain(fit_means).any(|v| v.len() != p) {
        return Err(Error::InvalidInput("means differ in dimension".into()));
    }
    let cost: Vec<Vec<f64>> = reference_means
        .iter()
        .map(|r| fit_means.iter().map(|f| sq_dist(r, f)).collect())
        .collect();
    Ok(hungarian(&cost))
}

/// Minimum-cost perfect matching on a square cost matrix (rows to columns),
/// O(m^3) shortest augmenting path formulation.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let m = cost.len();
    let inf = f64::INFINITY;
    // 1-based potentials; column 0 is a sentinel
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut matched_row = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; m];
    for j in 1..=m {
        perm[matched_row[j] - 1] = j - 1;
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_swap() {
        let r = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(align_labels(&r, &r).unwrap(), vec![0, 1]);
        let swapped = vec![r[1].clone(), r[0].clone()];
        assert_eq!(align_labels(&r, &swapped).unwrap(), vec![1, 0]);
    }

    #[test]
    fn count_mismatch_fails() {
        let r = vec![vec![0.0], vec![1.0]];
        assert!(align_labels(&r, &r[..1]).is_err());
    }
}
