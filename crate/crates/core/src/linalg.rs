//! Rank and span helpers for degree-graded coordinate spaces.

use nalgebra::linalg::SVD;
use nalgebra::{DMatrix, Dyn};
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;

/// Columns with norm below `drop_rel · max norm` are treated as zero.
pub const DROP_REL: f64 = 1e-11;
/// Relative singular-value threshold for ranks of normalized columns.
pub const RANK_REL: f64 = 1e-8;

/// Thin SVD with `U` and `Vᴴ`, checked by reconstruction.
///
/// The complex bidiagonal iteration can converge to a factorization that
/// does not reproduce `m` when some singular values vanish exactly. On a
/// failed check the factorization is retried on the triangular factor of a
/// QR decomposition, then on the adjoint.
pub fn svd_checked(m: &DMatrix<C64>) -> SVD<C64, Dyn, Dyn> {
    let tol = 1e-11 * (1.0 + m.norm()) * (m.nrows().max(m.ncols()) as f64).sqrt();
    let ok = |s: &SVD<C64, Dyn, Dyn>, m: &DMatrix<C64>| recompose(s).map(|r| (r - m).norm() <= tol).unwrap_or(false);
    let direct = m.clone().svd(true, true);
    if ok(&direct, m) {
        return direct;
    }
    if m.nrows() >= m.ncols() {
        let qr = m.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        let mut s = r.svd(true, true);
        s.u = s.u.map(|u| q * u);
        if ok(&s, m) {
            return s;
        }
    }
    let t = m.adjoint().svd(true, true);
    let s = SVD { u: t.v_t.map(|v| v.adjoint()), v_t: t.u.map(|u| u.adjoint()), singular_values: t.singular_values };
    if ok(&s, m) {
        return s;
    }
    direct
}

fn recompose(s: &SVD<C64, Dyn, Dyn>) -> Option<DMatrix<C64>> {
    let (u, vt) = (s.u.as_ref()?, s.v_t.as_ref()?);
    let mut us = u.clone();
    for (k, sv) in s.singular_values.iter().enumerate() {
        us.column_mut(k).scale_mut(*sv);
    }
    Some(us * vt)
}

/// Orthonormal basis of the span of the columns of `m`.
pub fn orthonormal_span(m: &DMatrix<C64>, drop_rel: f64, rank_rel: f64) -> DMatrix<C64> {
    let rows = m.nrows();
    let norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return DMatrix::zeros(rows, 0);
    }
    let keep: Vec<usize> = (0..m.ncols()).filter(|&j| norms[j] > drop_rel * max).collect();
    let mut a = DMatrix::zeros(rows, keep.len());
    for (k, &j) in keep.iter().enumerate() {
        a.set_column(k, &(m.column(j) / C64::new(norms[j], 0.0)));
    }
    let tol = 100.0 * rank_rel.max(1e-11) * (1.0 + a.norm()) * (a.ncols() as f64).sqrt();
    let fast = leading_u(&a.clone().svd(true, false), rank_rel);
    if residual_norm(&fast, &a) <= tol {
        return fast;
    }
    leading_u(&svd_checked(&a), rank_rel)
}

fn leading_u(svd: &SVD<C64, Dyn, Dyn>, rank_rel: f64) -> DMatrix<C64> {
    let u = svd.u.as_ref().unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > rank_rel * smax).collect();
    idx.sort_by(|x, y| svd.singular_values[*y].partial_cmp(&svd.singular_values[*x]).unwrap());
    DMatrix::from_fn(u.nrows(), idx.len(), |i, k| u[(i, idx[k])])
}

/// Numerical rank of the rows `rows` of a matrix with orthonormal columns.
pub fn row_rank(u: &DMatrix<C64>, rows: &[usize], tol: f64) -> usize {
    if rows.is_empty() || u.ncols() == 0 {
        return 0;
    }
    let sub = u.select_rows(rows);
    sub.svd(false, false).singular_values.iter().filter(|s| **s > tol).count()
}

/// `gr_d = rank(rows of degree < d+1) − rank(rows of degree < d)` for a basis `u`
/// whose row `r` has degree `degree_of(r)`.
pub fn graded_dims(u: &DMatrix<C64>, degree_of: impl Fn(usize) -> i32, degrees: &[i32]) -> BTreeMap<i32, usize> {
    let below = |d: i32| -> Vec<usize> { (0..u.nrows()).filter(|&r| degree_of(r) < d).collect() };
    let tol = 1e-7;
    let mut memo: BTreeMap<i32, usize> = BTreeMap::new();
    let mut rank_below = |d: i32| *memo.entry(d).or_insert_with(|| row_rank(u, &below(d), tol));
    degrees
        .iter()
        .map(|&d| {
            let hi = rank_below(d + 1);
            (d, hi - rank_below(d))
        })
        .collect()
}

/// Orthogonal projection residual `‖(I − UUᴴ) v‖`.
pub fn residual_norm(u: &DMatrix<C64>, v: &DMatrix<C64>) -> f64 {
    (v - u * (u.adjoint() * v)).norm()
}
