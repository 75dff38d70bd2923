//! Linear assignment (Hungarian method with potentials), O(rows^2 cols).

use nalgebra::DMatrix;

use crate::error::{domain, Result};

/// Assignment of every row to a distinct column minimizing total cost.
/// Requires `rows <= cols`; returns the column of each row.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, m) = (cost.nrows(), cost.ncols());
    if n > m {
        return domain(format!("assignment needs rows <= cols, got {n}x{m}"));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return domain("assignment costs must be finite");
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based potentials; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=m {
                if used[col] {
                    continue;
                }
                let cur = cost[(r0 - 1, col - 1)] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=m {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for col in 1..=m {
        if owner[col] != 0 {
            out[owner[col] - 1] = col - 1;
        }
    }
    Ok(out)
}

/// Assignment maximizing total score.
pub fn max_score_assignment(score: &DMatrix<f64>) -> Result<Vec<usize>> {
    let top = score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    min_cost_assignment(&score.map(|s| top - s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(score: &DMatrix<f64>) -> f64 {
        fn rec(score: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == score.nrows() {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            for c in 0..score.ncols() {
                if !used[c] {
                    used[c] = true;
                    best = best.max(score[(row, c)] + rec(score, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        rec(score, 0, &mut vec![false; score.ncols()])
    }

    #[test]
    fn matches_brute_force() {
        for seed in 0..30u64 {
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64) / ((1u64 << 53) as f64)
            };
            let rows = 1 + (seed % 6) as usize;
            let cols = rows + (seed % 2) as usize;
            let score = DMatrix::from_fn(rows, cols, |_, _| (next() * 10.0).round());
            let a = max_score_assignment(&score).unwrap();
            let total: f64 = a.iter().enumerate().map(|(r, &c)| score[(r, c)]).sum();
            assert!((total - brute_force(&score)).abs() < 1e-9);
            let mut cols_used = a.clone();
            cols_used.sort();
            cols_used.dedup();
            assert_eq!(cols_used.len(), rows);
        }
    }

    #[test]
    fn rejects_tall_matrices() {
        assert!(min_cost_assignment(&DMatrix::zeros(3, 2)).is_err());
    }
}
