//! Small dense helpers for the low-dimensional states used here (n <= 6).

use crate::scalar::Real;

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn norm_sq<R: Real>(a: &[R]) -> R {
    dot(a, a)
}

pub fn norm<R: Real>(a: &[R]) -> R {
    norm_sq(a).sqrt()
}

pub fn sub<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

pub fn dist_sq<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

/// y += c * x
pub fn axpy<R: Real>(y: &mut [R], c: R, x: &[R]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * *xi;
    }
}

pub fn scale<R: Real>(a: &[R], c: R) -> Vec<R> {
    a.iter().map(|x| *x * c).collect()
}

/// Row-major matrix-vector product for an n x m matrix stored flat.
pub fn mat_vec<R: Real>(m: &[R], rows: usize, cols: usize, v: &[R]) -> Vec<R> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(v.len(), cols);
    (0..rows).map(|i| dot(&m[i * cols..(i + 1) * cols], v)).collect()
}

/// Cholesky factor (lower triangular, row-major) of a symmetric PSD matrix.
/// Zero pivots are tolerated so rank-deficient process covariances work.
pub fn cholesky_psd<R: Real>(a: &[R], n: usize) -> Option<Vec<R>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![R::zero(); n * n];
    let tol = R::from_f64_c(1e-12);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s < -tol {
                    return None;
                }
                l[i * n + j] = s.max(R::zero()).sqrt();
            } else {
                let d = l[j * n + j];
                l[i * n + j] = if d > tol { s / d } else { R::zero() };
            }
        }
    }
    Some(l)
}

/// Projects `u` onto the Euclidean ball of radius `r`.
pub fn project_ball<R: Real>(u: &[R], r: R) -> Vec<R> {
    let n = norm(u);
    if n <= r || n == R::zero() {
        u.to_vec()
    } else {
        scale(u, r / n)
    }
}
