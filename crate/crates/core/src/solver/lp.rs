//! Dense two-phase simplex method for small standard-form linear programs.

use nalgebra::DMatrix;

const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// Minimizes `c^T x` subject to `A x = b`, `x >= 0`, with `b >= 0`.
///
/// Bland's rule is used for both entering and leaving variables, so the method
/// terminates on degenerate problems.
pub fn solve_standard_lp(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> LpOutcome {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m, "rhs length");
    assert_eq!(c.len(), n, "cost length");
    assert!(b.iter().all(|v| *v >= 0.0), "rhs must be nonnegative");
    let width = n + m + 1;
    let rhs = n + m;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        for j in 0..n {
            t[i][j] = a[(i, j)];
        }
        t[i][n + i] = 1.0;
        t[i][rhs] = b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let mut z = vec![0.0; width];
    for row in &t {
        for j in 0..n {
            z[j] -= row[j];
        }
        z[rhs] -= row[rhs];
    }
    if !pivot_loop(&mut t, &mut z, &mut basis, n + m) {
        return LpOutcome::Unbounded;
    }
    let scale = 1.0 + b.iter().fold(0.0f64, |a, v| a.max(*v));
    if -z[rhs] > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }

    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > PIVOT_TOL) {
                pivot(&mut t, &mut z, &mut basis, i, j);
            }
        }
    }

    let mut z = vec![0.0; width];
    z[..n].copy_from_slice(c);
    for i in 0..m {
        let cb = if basis[i] < n { c[basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                z[j] -= cb * t[i][j];
            }
        }
    }
    if !pivot_loop(&mut t, &mut z, &mut basis, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][rhs].max(0.0);
        }
    }
    let value = x.iter().zip(c).map(|(x, c)| x * c).sum();
    LpOutcome::Optimal { x, value }
}

/// Runs pivots until no column below `allowed` has a negative reduced cost.
/// Returns false when the problem is unbounded.
fn pivot_loop(t: &mut [Vec<f64>], z: &mut [f64], basis: &mut [usize], allowed: usize) -> bool {
    let rhs = z.len() - 1;
    loop {
        let Some(enter) = (0..allowed).find(|&j| z[j] < -PIVOT_TOL) else {
            return true;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            let p = t[i][enter];
            if p > PIVOT_TOL {
                let ratio = t[i][rhs] / p;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-14 || (ratio <= lr + 1e-14 && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return false;
        };
        pivot(t, z, basis, row, enter);
    }
}

fn pivot(t: &mut [Vec<f64>], z: &mut [f64], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                for (v, pr) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
    }
    let f = z[col];
    if f != 0.0 {
        for (v, pr) in z.iter_mut().zip(&pivot_row) {
            *v -= f * pr;
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_vertex_selection() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        match solve_standard_lp(&a, &[1.0], &[3.0, -1.0, 2.0]) {
            LpOutcome::Optimal { x, value } => {
                assert_eq!(x, vec![0.0, 1.0, 0.0]);
                assert_eq!(value, -1.0);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn constrained_mixture() {
        // x1 + x2 = 1, 2 x1 + 0.5 x2 - s = 1, minimize x1.
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 0.5, -1.0]);
        match solve_standard_lp(&a, &[1.0, 1.0], &[1.0, 0.0, 0.0]) {
            LpOutcome::Optimal { x, .. } => {
                assert!((x[0] - 1.0 / 3.0).abs() < 1e-12);
                assert!((x[1] - 2.0 / 3.0).abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 3.0, 3.0]);
        assert_eq!(solve_standard_lp(&a, &[1.0, 5.0], &[0.0, 0.0]), LpOutcome::Infeasible);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert_eq!(solve_standard_lp(&a, &[0.0], &[0.0, -1.0]), LpOutcome::Unbounded);
    }
}
