//! Small dense helpers. The problems here are at most a few dozen unknowns.

use num_complex::Complex;

use crate::scalar::Scalar;

/// sum_n conj(a_n) * b_n
pub fn hermitian_dot<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sq<T: Scalar>(a: &[Complex<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`. Returns `None` for a numerically singular system.
pub fn solve_complex<T: Scalar>(mut a: Vec<Complex<T>>, mut b: Vec<Complex<T>>) -> Option<Vec<Complex<T>>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let scale = a.iter().map(|z| z.norm()).fold(T::zero(), T::max);
    if scale == T::zero() {
        return None;
    }
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].norm().partial_cmp(&a[j * n + col].norm()).unwrap())
            .unwrap();
        if a[pivot * n + col].norm() <= tiny {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        let inv = Complex::new(T::one(), T::zero()) / a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            if f.norm_sqr() == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] = a[row * n + k] - f * v;
            }
            let v = b[col];
            b[row] = b[row] - f * v;
        }
    }
    let mut x = vec![Complex::new(T::zero(), T::zero()); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}
