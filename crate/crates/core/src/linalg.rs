//! Dense kernels on nalgebra storage, computed with faer.

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn view(m: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

/// Rows `start..start + len` of `m`, without copying.
pub(crate) fn rows(m: &DMatrix<f64>, start: usize, len: usize) -> MatRef<'_, f64> {
    let n = m.nrows();
    if len == 0 || m.ncols() == 0 {
        return MatRef::from_column_major_slice(&[], len, m.ncols());
    }
    let end = (m.ncols() - 1) * n + start + len;
    MatRef::from_column_major_slice_with_stride(&m.as_slice()[start..end], len, m.ncols(), n)
}

fn product(rows: usize, cols: usize, f: impl FnOnce(MatMut<'_, f64>)) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    f(MatMut::from_column_major_slice_mut(out.as_mut_slice(), rows, cols));
    out
}

pub(crate) fn mul_ref(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> DMatrix<f64> {
    product(a.nrows(), b.ncols(), |dst| matmul(dst, Accum::Replace, a, b, 1.0, Par::Seq))
}

/// `a · b`
pub(crate) fn mul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    mul_ref(view(a), view(b))
}

/// `a · b` in single precision.
pub(crate) fn mul_f32(a: &DMatrix<f32>, b: &DMatrix<f32>) -> DMatrix<f32> {
    let (m, n) = (a.nrows(), b.ncols());
    let mut out = DMatrix::from_element(m, n, 0.0f32);
    matmul(
        MatMut::from_column_major_slice_mut(out.as_mut_slice(), m, n),
        Accum::Replace,
        MatRef::from_column_major_slice(a.as_slice(), m, a.ncols()),
        MatRef::from_column_major_slice(b.as_slice(), b.nrows(), n),
        1.0f32,
        Par::Seq,
    );
    out
}

/// `aᵀ · b`
pub(crate) fn mul_tn(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    mul_ref(view(a).transpose(), view(b))
}

/// `aᵀ · bᵀ`
pub(crate) fn mul_tt(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    mul_ref(view(a).transpose(), view(b).transpose())
}

/// `a · bᵀ`
pub(crate) fn mul_nt(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    mul_ref(view(a), view(b).transpose())
}

/// Eigenvectors (columns) and eigenvalues of a symmetric matrix, with
/// round-off negatives clamped to zero.
pub(crate) fn eigh(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let evd = view(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let u = evd.U();
    let s = evd.S().column_vector();
    let vectors = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]);
    let values = DVector::from_fn(s.nrows(), |i, _| s[i].max(0.0));
    Ok((vectors, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_nalgebra() {
        let a = DMatrix::from_fn(7, 5, |i, j| (i as f64 - 2.0) * 0.5 + j as f64);
        let b = DMatrix::from_fn(5, 3, |i, j| (i * j) as f64 - 1.5);
        let c = DMatrix::from_fn(7, 3, |i, j| (i + 2 * j) as f64);
        assert!((mul(&a, &b) - &a * &b).abs().max() < 1e-12);
        let (a32, b32) = (a.map(|v| v as f32), b.map(|v| v as f32));
        assert!((mul_f32(&a32, &b32) - &a32 * &b32).abs().max() < 1e-4);
        assert!((mul_tn(&a, &c) - a.transpose() * &c).abs().max() < 1e-12);
        assert!((mul_nt(&b, &b) - &b * b.transpose()).abs().max() < 1e-12);
        assert!((mul_tt(&b, &a) - b.transpose() * a.transpose()).abs().max() < 1e-12);
        let r = mul_ref(rows(&a, 2, 3), view(&b));
        assert!((r - a.rows(2, 3) * &b).abs().max() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs() {
        let a = DMatrix::from_fn(6, 4, |i, j| ((i * 3 + j * 5) % 7) as f64);
        let g = a.transpose() * &a;
        let (v, e) = eigh(&g).unwrap();
        let back = &v * DMatrix::from_diagonal(&e) * v.transpose();
        assert!((back - &g).abs().max() < 1e-9);
    }
}
