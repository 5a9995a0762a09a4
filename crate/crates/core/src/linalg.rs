//! Small dense vector and matrix helpers. Matrices are row-major `n*n` slices.

use crate::scalar::{lit, Real};

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

pub fn scale<T: Real>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// `a + s * b`
pub fn axpy<T: Real>(a: &[T], s: T, b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

pub fn mat_vec<T: Real>(m: &[T], v: &[T]) -> Vec<T> {
    let n = v.len();
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// Quadratic form `vᵀ M v`.
pub fn quad_form<T: Real>(m: &[T], v: &[T]) -> T {
    dot(v, &mat_vec(m, v))
}

/// Cholesky factor `L` (row-major lower triangle) of a symmetric positive-definite matrix.
/// Returns `None` when the matrix is not numerically positive-definite.
pub fn cholesky<T: Real>(m: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `M x = b` given the Cholesky factor of `M`.
pub fn cholesky_solve<T: Real>(l: &[T], b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Real>(m: &[T], n: usize) -> Vec<T> {
    let mut a = m.to_vec();
    let tol = T::epsilon() * lit(4.0);
    for _sweep in 0..64 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let diag: T = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= tol * tol * diag.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (lit::<T>(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse<T: Real>(m: &[T], n: usize) -> Option<Vec<T>> {
    let l = cholesky(m, n)?;
    let mut inv = vec![T::zero(); n * n];
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solve_recovers_rhs() {
        let m = [4.0f64, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let l = cholesky(&m, 3).unwrap();
        let x = cholesky_solve(&l, &[1.0, 2.0, 3.0]);
        let back = mat_vec(&m, &x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - e).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_has_no_cholesky() {
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn jacobi_eigenvalues_match_closed_form() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let ev = symmetric_eigenvalues(&[2.0f64, 1.0, 1.0, 2.0], 2);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        let ev3 = symmetric_eigenvalues(&[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0], 3);
        let expected = [2.0 - 2f64.sqrt(), 2.0, 2.0 + 2f64.sqrt()];
        for (a, b) in ev3.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
