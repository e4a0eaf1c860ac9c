//! Dense LU solves with an explicit residual contract.
//!
//! Every solve is verified a posteriori: `‖Ax − b‖_∞ < RESIDUAL_TOL · (1 + ‖b‖_∞)`
//! or the solve is reported as failed. The systems solved here are all of the
//! form `I − γP` with `P` row-stochastic and `γ < 1`, so failures indicate a
//! malformed input rather than an ill-conditioned problem.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

/// Acceptance threshold for the relative solve residual.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("singular linear system (zero pivot at column {col})")]
    Singular { col: usize },
    #[error("solve residual {residual:.3e} exceeds bound {bound:.3e}")]
    Residual { residual: f64, bound: f64 },
    #[error("dimension mismatch: matrix is {rows}x{cols}, rhs has length {rhs}")]
    Shape { rows: usize, cols: usize, rhs: usize },
}

/// LU factorization with partial pivoting (Doolittle form, unit lower triangle).
pub struct LuFactor {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

impl LuFactor {
    pub fn new(a: &Array2<f64>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU factorization requires a square matrix");
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            // Pivot on the largest remaining entry in this column.
            let mut pivot_row = col;
            let mut pivot_mag = lu[[col, col]].abs();
            for row in col + 1..n {
                let mag = lu[[row, col]].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = row;
                }
            }
            if pivot_mag == 0.0 {
                return Err(LinalgError::Singular { col });
            }
            if pivot_row != col {
                perm.swap(col, pivot_row);
                for j in 0..n {
                    let tmp = lu[[col, j]];
                    lu[[col, j]] = lu[[pivot_row, j]];
                    lu[[pivot_row, j]] = tmp;
                }
            }
            let pivot = lu[[col, col]];
            for row in col + 1..n {
                let factor = lu[[row, col]] / pivot;
                lu[[row, col]] = factor;
                for j in col + 1..n {
                    lu[[row, j]] -= factor * lu[[col, j]];
                }
            }
        }
        Ok(Self { lu, perm })
    }

    /// Forward/backward substitution without the residual check.
    fn solve_raw(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        let mut x = Array1::zeros(n);
        for i in 0..n {
            let mut sum = b[self.perm[i]];
            for j in 0..i {
                sum -= self.lu[[i, j]] * x[j];
            }
            x[i] = sum;
        }
        for i in (0..n).rev() {
            let mut sum = x[i];
            for j in i + 1..n {
                sum -= self.lu[[i, j]] * x[j];
            }
            x[i] = sum / self.lu[[i, i]];
        }
        x
    }
}

fn check_residual(
    a: &Array2<f64>,
    x: &Array1<f64>,
    b: ArrayView1<f64>,
) -> Result<(), LinalgError> {
    let mut residual = 0.0f64;
    let mut b_norm = 0.0f64;
    for i in 0..a.nrows() {
        let mut ax = 0.0;
        for j in 0..a.ncols() {
            ax += a[[i, j]] * x[j];
        }
        residual = residual.max((ax - b[i]).abs());
        b_norm = b_norm.max(b[i].abs());
    }
    let bound = RESIDUAL_TOL * (1.0 + b_norm);
    if residual < bound {
        Ok(())
    } else {
        Err(LinalgError::Residual { residual, bound })
    }
}

/// Solve `A x = b` with the residual contract.
pub fn solve(a: &Array2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>, LinalgError> {
    if a.nrows() != b.len() {
        return Err(LinalgError::Shape {
            rows: a.nrows(),
            cols: a.ncols(),
            rhs: b.len(),
        });
    }
    let factor = LuFactor::new(a)?;
    let x = factor.solve_raw(b);
    check_residual(a, &x, b)?;
    Ok(x)
}

/// Solve `A X = B` column by column, re-using one factorization.
pub fn solve_columns(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>, LinalgError> {
    if a.nrows() != b.nrows() {
        return Err(LinalgError::Shape {
            rows: a.nrows(),
            cols: a.ncols(),
            rhs: b.nrows(),
        });
    }
    let factor = LuFactor::new(a)?;
    let mut x = Array2::zeros(b.raw_dim());
    for col in 0..b.ncols() {
        let rhs = b.column(col);
        let sol = factor.solve_raw(rhs);
        check_residual(a, &sol, rhs)?;
        x.column_mut(col).assign(&sol);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};

    #[test]
    fn solves_a_small_system() {
        let a = arr2(&[[2.0, 1.0], [1.0, 3.0]]);
        let b = arr1(&[5.0, 10.0]);
        let x = solve(&a, b.view()).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let a = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let b = arr1(&[2.0, 3.0]);
        let x = solve(&a, b.view()).unwrap();
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = arr2(&[[1.0, 2.0], [2.0, 4.0]]);
        let b = arr1(&[1.0, 2.0]);
        assert!(matches!(
            solve(&a, b.view()),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn multi_rhs_matches_single_solves() {
        let a = arr2(&[[3.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 5.0]]);
        let b = arr2(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]);
        let x = solve_columns(&a, &b).unwrap();
        for col in 0..2 {
            let single = solve(&a, b.column(col)).unwrap();
            for row in 0..3 {
                assert_abs_diff_eq!(x[[row, col]], single[row], epsilon = 1e-14);
            }
        }
    }
}
