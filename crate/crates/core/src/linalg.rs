//! Dense LU with partial pivoting and a few small matrix helpers.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a matrix is reported singular.
const PIVOT_RTOL: f64 = 1e-14;

/// A factored square matrix.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Pivot failure; `column` is the unknown whose pivot vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularAt {
    pub column: usize,
}

impl DenseLu {
    pub fn factor(m: DMatrix<f64>) -> std::result::Result<Self, SingularAt> {
        assert!(m.is_square(), "LU of a non-square matrix");
        let scale = m.amax();
        let lu = m.lu();
        let u = lu.u();
        for i in 0..u.nrows() {
            let piv = u[(i, i)].abs();
            if !piv.is_finite() || piv <= PIVOT_RTOL * scale || scale == 0.0 {
                return Err(SingularAt { column: i });
            }
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.lu
            .solve(rhs)
            .expect("pivots were checked at factorization")
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu
            .solve(rhs)
            .expect("pivots were checked at factorization")
    }
}

/// Factor, naming the offending unknown through `name` on failure.
pub fn factor_named(m: DMatrix<f64>, name: impl Fn(usize) -> String) -> Result<DenseLu> {
    DenseLu::factor(m).map_err(|s| Error::SingularMatrix {
        unknown: name(s.column),
    })
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `A ⊗ I_n`.
pub fn kron_identity(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(r * n, c * n);
    for i in 0..r {
        for j in 0..c {
            let v = a[(i, j)];
            if v != 0.0 {
                for d in 0..n {
                    out[(i * n + d, j * n + d)] = v;
                }
            }
        }
    }
    out
}

/// Block diagonal matrix from equally sized square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, total);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), b.shape()).copy_from(b);
        off += b.nrows();
    }
    out
}

/// Apply `A ⊗ I_n` to a stacked vector with blocks of length `n`.
pub fn kron_apply(a: &DMatrix<f64>, n: usize, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.nrows() * n);
    for i in 0..a.nrows() {
        let mut dst = out.rows_mut(i * n, n);
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v != 0.0 {
                dst.axpy(v, &x.rows(j * n, n), 1.0);
            }
        }
    }
    out
}

/// Apply `A ⊗ I_n` to every column of a stacked matrix.
pub fn kron_apply_mat(a: &DMatrix<f64>, n: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() * n, x.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v != 0.0 {
                let src = x.rows(j * n, n) * v;
                let mut dst = out.rows_mut(i * n, n);
                dst += src;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_matrix_reports_column() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(DenseLu::factor(m).unwrap_err().column, 1);
    }

    #[test]
    fn kron_apply_matches_explicit_product() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let x = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0, 3.0, 0.0]);
        let full = kron_identity(&a, 3) * &x;
        assert!((kron_apply(&a, 3, &x) - full).amax() < 1e-15);
    }
}
