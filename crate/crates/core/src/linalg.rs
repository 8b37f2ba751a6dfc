//! Small dense linear-algebra helpers used throughout the crate.
//!
//! Everything here targets desk-scale problems (dimensions in the tens),
//! so robustness wins over sparsity: SVD for rank and kernel questions,
//! full-pivot LU for solves.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Max absolute entry. Returns 0 for empty inputs.
pub fn mat_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Singular values of a possibly rectangular matrix, descending.
/// Empty matrices yield an empty vector.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// (sigma_min, sigma_max) over the full set of min(nrows, ncols) values.
pub fn sigma_extrema(m: &DMatrix<f64>) -> (f64, f64) {
    let s = singular_values(m);
    match (s.last(), s.first()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (f64::INFINITY, 0.0),
    }
}

/// Numerical rank with a tolerance relative to the largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let cutoff = s.first().copied().unwrap_or(0.0) * rel_tol;
    s.iter().filter(|&&v| v > cutoff).count()
}

/// Smallest singular value of a row stack whose rows must be linearly
/// independent. Zero rows pass vacuously (plus infinity); more rows than
/// columns can never have full row rank, so that returns 0.
pub fn row_independence_margin(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    if m.nrows() > m.ncols() {
        return 0.0;
    }
    sigma_extrema(m).0
}

/// Orthonormal basis of the kernel of `a` (columns of the result).
///
/// Rows of `a` may be rank deficient; the rank cut uses `rel_tol` times the
/// largest singular value. An empty row set returns the identity.
pub fn kernel_basis(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad with zero rows to square so the thin SVD carries all n right
    // singular vectors.
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = smax * rel_tol;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for i in 0..v_t.nrows() {
        let sv = if i < s.len() { s[i] } else { 0.0 };
        if sv <= cutoff {
            cols.push(v_t.row(i).transpose());
        }
    }
    let mut z = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        z.set_column(j, c);
    }
    z
}

/// Solve `m x = b` by full-pivot LU, rejecting matrices whose singular-value
/// ratio falls below `rel_gate`.
pub fn solve_gated(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    rel_gate: f64,
    what: &str,
) -> Result<DVector<f64>> {
    let (lo, hi) = sigma_extrema(m);
    if !(lo > rel_gate * hi) || hi == 0.0 {
        return Err(Error::SingularMatrix {
            what: what.to_string(),
            sigma_min: lo,
            sigma_max: hi,
        });
    }
    let lu = m.clone().full_piv_lu();
    lu.solve(b).ok_or_else(|| Error::SingularMatrix {
        what: what.to_string(),
        sigma_min: lo,
        sigma_max: hi,
    })
}

/// Solve `m X = B` column by column with the gate of [`solve_gated`].
pub fn solve_matrix(m: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let (lo, hi) = sigma_extrema(m);
    if !(lo > 1e-14 * hi) || hi == 0.0 {
        return Err(Error::SingularMatrix {
            what: what.to_string(),
            sigma_min: lo,
            sigma_max: hi,
        });
    }
    let lu = m.clone().full_piv_lu();
    let mut out = DMatrix::zeros(m.ncols(), b.ncols());
    for j in 0..b.ncols() {
        let col = b.column(j).into_owned();
        let x = lu.solve(&col).ok_or_else(|| Error::SingularMatrix {
            what: what.to_string(),
            sigma_min: lo,
            sigma_max: hi,
        })?;
        out.set_column(j, &x);
    }
    Ok(out)
}

/// Dense inverse with the same singular-value gate as [`solve_gated`].
pub fn invert_gated(m: &DMatrix<f64>, rel_gate: f64, what: &str) -> Result<DMatrix<f64>> {
    let (lo, hi) = sigma_extrema(m);
    if !(lo > rel_gate * hi) || hi == 0.0 {
        return Err(Error::SingularMatrix {
            what: what.to_string(),
            sigma_min: lo,
            sigma_max: hi,
        });
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix {
            what: what.to_string(),
            sigma_min: lo,
            sigma_max: hi,
        })
}

/// Eigenvalue range of a symmetric matrix. Empty input is reported as
/// (inf, -inf) so that vacuous min/max comparisons behave.
pub fn symmetric_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in eig.eigenvalues.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    (lo, hi)
}

pub fn determinant(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.determinant()
}

/// Copy `block` into `target` with its top-left corner at (r, c).
pub fn insert_block(target: &mut DMatrix<f64>, r: usize, c: usize, block: &DMatrix<f64>) {
    if block.nrows() == 0 || block.ncols() == 0 {
        return;
    }
    target
        .view_mut((r, c), (block.nrows(), block.ncols()))
        .copy_from(block);
}

/// Select the listed rows of `m`, in the given order.
pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(idx.len(), m.ncols());
    for (k, &i) in idx.iter().enumerate() {
        out.set_row(k, &m.row(i));
    }
    out
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_of_empty_stack_is_identity() {
        let a = DMatrix::<f64>::zeros(0, 3);
        let z = kernel_basis(&a, 1e-10);
        assert_eq!(z, DMatrix::identity(3, 3));
    }

    #[test]
    fn kernel_is_orthonormal_and_annihilated() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let z = kernel_basis(&a, 1e-10);
        assert_eq!(z.ncols(), 2);
        let ztz = z.transpose() * &z;
        assert!(mat_inf_norm(&(ztz - DMatrix::identity(2, 2))) < 1e-12);
        assert!(mat_inf_norm(&(&a * &z)) < 1e-12);
    }

    #[test]
    fn row_margin_flags_dependence() {
        let ind = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(row_independence_margin(&ind) > 0.9);
        let dep = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(row_independence_margin(&dep) < 1e-12);
    }

    #[test]
    fn gated_solve_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_column_slice(&[1.0, 2.0]);
        assert!(solve_gated(&m, &b, 1e-12, "test").is_err());
    }
}
