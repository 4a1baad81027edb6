//! Dense linear algebra helpers shared by the transform and retrieval code.
//!
//! Matrices are `ndarray::Array2<f64>` throughout the crate. The SVD itself is
//! delegated to `nalgebra`; this module converts in and out and normalizes the
//! decomposition so that callers always see a thin SVD with non-increasing
//! singular values and a fixed sign convention.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Thin singular value decomposition `a = u · diag(s) · vt`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m × r` left singular vectors, `r = min(m, n)`.
    pub u: Array2<f64>,
    /// `r` singular values, non-increasing.
    pub s: Array1<f64>,
    /// `r × n` right singular vectors (transposed).
    pub vt: Array2<f64>,
}

fn to_nalgebra(a: ArrayView2<f64>) -> DMatrix<f64> {
    let (m, n) = a.dim();
    DMatrix::from_fn(m, n, |i, j| a[[i, j]])
}

/// Thin SVD with singular values sorted in non-increasing order.
///
/// Sign ambiguity is resolved by making the largest-magnitude entry of each
/// left singular vector non-negative (the matching right vector is flipped
/// with it, so the product is unchanged).
pub fn svd(a: ArrayView2<f64>) -> Svd {
    let (m, n) = a.dim();
    let r = m.min(n);
    if r == 0 {
        return Svd {
            u: Array2::zeros((m, 0)),
            s: Array1::zeros(0),
            vt: Array2::zeros((0, n)),
        };
    }
    let dec = to_nalgebra(a).svd(true, true);
    let u = dec.u.expect("u requested");
    let vt = dec.v_t.expect("v_t requested");
    let s = dec.singular_values;

    let mut order: Vec<usize> = (0..r).collect();
    // total order; ties keep the original column order
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));

    let mut u_out = Array2::zeros((m, r));
    let mut vt_out = Array2::zeros((r, n));
    let mut s_out = Array1::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        let col = u.column(src);
        let mut pivot = 0.0f64;
        for v in col.iter() {
            if v.abs() > pivot.abs() {
                pivot = *v;
            }
        }
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            u_out[[i, dst]] = sign * col[i];
        }
        for j in 0..n {
            vt_out[[dst, j]] = sign * vt[(src, j)];
        }
        s_out[dst] = s[src].max(0.0);
    }
    Svd {
        u: u_out,
        s: s_out,
        vt: vt_out,
    }
}

/// Full `n × n` right-singular basis of an `m × n` matrix together with the
/// `n` singular values (zero-padded when `m < n`).
///
/// Rows of zeros are appended when the matrix is wide so that the thin SVD
/// still returns a complete basis of the column space.
pub fn right_singular_basis(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let (m, n) = a.dim();
    if m >= n {
        let dec = svd(a);
        (dec.s, dec.vt.t().to_owned())
    } else {
        let mut padded = Array2::zeros((n, n));
        padded.slice_mut(ndarray::s![..m, ..]).assign(&a);
        let dec = svd(padded.view());
        (dec.s, dec.vt.t().to_owned())
    }
}

/// `max |a - b|` over all entries. Panics on shape mismatch.
pub fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// `max |aᵀa − I|`.
pub fn orthogonality_error(a: ArrayView2<f64>) -> f64 {
    let gram = a.t().dot(&a);
    let eye = Array2::<f64>::eye(gram.nrows());
    max_abs_diff(gram.view(), eye.view())
}

/// Uncentered second-moment matrix `aᵀa`, the quantity whitening drives to the identity.
pub fn second_moment(a: ArrayView2<f64>) -> Array2<f64> {
    a.t().dot(&a)
}

/// Euclidean norms of the rows.
pub fn row_norms(a: ArrayView2<f64>) -> Array1<f64> {
    a.map_axis(Axis(1), |row| row.dot(&row).sqrt())
}

/// Scale every row to unit length in place. Zero rows are left untouched and
/// counted.
pub fn normalize_rows(a: &mut Array2<f64>) -> usize {
    let mut zeros = 0;
    for mut row in a.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 && norm.is_finite() {
            row.mapv_inplace(|v| v / norm);
        } else {
            row.fill(0.0);
            zeros += 1;
        }
    }
    zeros
}

/// Row-normalized copy of `a`.
pub fn normalized_rows(a: ArrayView2<f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    normalize_rows(&mut out);
    out
}

/// Gather rows of `a` in the given order.
pub fn gather_rows(a: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn svd_reconstructs_and_sorts() {
        let a = array![[1.0, 2.0, 0.5], [0.0, -1.0, 3.0], [4.0, 0.0, 1.0], [2.0, 2.0, 2.0]];
        let dec = svd(a.view());
        assert_eq!(dec.u.dim(), (4, 3));
        assert_eq!(dec.vt.dim(), (3, 3));
        for w in dec.s.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let rebuilt = dec.u.dot(&Array2::from_diag(&dec.s)).dot(&dec.vt);
        assert!(max_abs_diff(rebuilt.view(), a.view()) < 1e-12);
        assert!(orthogonality_error(dec.u.view()) < 1e-12);
        assert!(orthogonality_error(dec.vt.t()) < 1e-12);
    }

    #[test]
    fn svd_sign_convention() {
        let a = array![[-3.0, 0.0], [0.0, -1.0]];
        let dec = svd(a.view());
        for col in dec.u.columns() {
            let pivot = col.iter().cloned().fold(0.0f64, |p, v| if v.abs() > p.abs() { v } else { p });
            assert!(pivot >= 0.0);
        }
    }

    #[test]
    fn wide_matrix_basis_is_complete() {
        let a = array![[1.0, 2.0, 3.0]];
        let (s, v) = right_singular_basis(a.view());
        assert_eq!(s.len(), 3);
        assert_eq!(v.dim(), (3, 3));
        assert!(orthogonality_error(v.view()) < 1e-12);
        assert!((s[0] - 14f64.sqrt()).abs() < 1e-12);
        assert!(s[1].abs() < 1e-12 && s[2].abs() < 1e-12);
    }

    #[test]
    fn normalize_counts_zero_rows() {
        let mut a = array![[3.0, 4.0], [0.0, 0.0]];
        assert_eq!(normalize_rows(&mut a), 1);
        assert_eq!(a, array![[0.6, 0.8], [0.0, 0.0]]);
    }
}
