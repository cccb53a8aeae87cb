//! Small SVD-based helpers over `nalgebra` dense matrices. The
//! decompositions themselves are delegated to `faer`.

use faer::Mat;
use nalgebra::{DMatrix, DVector};

/// Singular values with optional singular vectors, sorted by decreasing
/// singular value. Thin factors: `U` is `m × p`, `Vᵀ` is `p × n`, `p = min(m, n)`.
struct SortedSvd {
    values: Vec<f64>,
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    if p == 0 {
        return SortedSvd {
            values: Vec::new(),
            u: DMatrix::zeros(rows, 0),
            v_t: DMatrix::zeros(0, cols),
        };
    }
    let svd = to_faer(m).thin_svd().expect("svd converges on finite input");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    SortedSvd {
        values: order.iter().map(|&i| s[i]).collect(),
        u: DMatrix::from_fn(rows, p, |r, c| u[(r, order[c])]),
        v_t: DMatrix::from_fn(p, cols, |r, c| v[(c, order[r])]),
    }
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = to_faer(m)
        .singular_values()
        .expect("svd converges on finite input");
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Count of singular values `>= tol * σ_max`. A zero matrix has rank 0.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    rank_of(&singular_values(m), tol)
}

fn rank_of(values: &[f64], tol: f64) -> usize {
    match values.first() {
        Some(&max) if max > 0.0 => values.iter().filter(|&&s| s >= tol * max).count(),
        _ => 0,
    }
}

/// Orthonormal basis (as columns) of the numerical column space of `m`.
pub fn column_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let svd = sorted_svd(m);
    let rank = rank_of(&svd.values, tol);
    svd.u.columns(0, rank).into_owned()
}

/// Singular values with left and right singular vectors, sorted by
/// decreasing singular value. Returns `(U, σ, Vᵀ)` in thin form.
pub fn svd_sorted(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = sorted_svd(m);
    (svd.u, svd.values, svd.v_t)
}

/// Least-squares solution of `a x = b` for `a` with full column rank at
/// relative tolerance `tol`. Returns `None` when `a` is rank deficient.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    if a.ncols() == 0 {
        return Some(DVector::zeros(0));
    }
    if a.nrows() < a.ncols() {
        return None;
    }
    let svd = sorted_svd(a);
    let max = svd.values[0];
    let min = svd.values[svd.values.len() - 1];
    if max <= 0.0 || min < tol * max {
        return None;
    }
    let mut coeffs = svd.u.transpose() * b;
    for (c, s) in coeffs.iter_mut().zip(&svd.values) {
        *c /= s;
    }
    Some(svd.v_t.transpose() * coeffs)
}

/// A unit vector `c` minimizing `|m c|`, with the smallest singular value
/// (zero when `m` has fewer rows than columns).
pub fn smallest_right_singular(m: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let (rows, cols) = m.shape();
    // Pad with zero rows so the SVD exposes the full right singular basis.
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.rows_mut(0, rows).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = sorted_svd(&padded);
    let last = svd.values.len() - 1;
    (svd.v_t.row(last).transpose(), svd.values[last])
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute error when `b` is zero.
pub fn relative_frobenius_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Angle in `[0, π/2]` between the lines spanned by two nonzero vectors.
pub fn line_angle(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let xn = x / x.norm();
    let mut yn = y / y.norm();
    if xn.dot(&yn) < 0.0 {
        yn.neg_mut();
    }
    2.0 * (&xn - &yn).norm().atan2((&xn + &yn).norm())
}
