//! Small dense linear-algebra helpers over complex matrices.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::scalar::{cabs, cconj, czero, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Largest `|A_ij - conj(A_ji)|` together with its location.
pub fn hermiticity_defect<T: Real>(m: &CMatrix<T>) -> (T, usize, usize) {
    let mut worst = (T::zero(), 0, 0);
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let d = cabs(m[(i, j)] - cconj(m[(j, i)]));
            if d > worst.0 {
                worst = (d, i, j);
            }
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix in ascending order. Only the Hermitian
/// part `(A + A†)/2` is used.
pub fn hermitian_eigenvalues<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let half = T::one() / (T::one() + T::one());
    let h = (m + m.adjoint()).map(|z| Complex::new(z.re * half, z.im * half));
    let mut ev: Vec<T> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn hermitian_min_eigenvalue<T: Real>(m: &CMatrix<T>) -> T {
    hermitian_eigenvalues(m).first().copied().unwrap_or_else(T::zero)
}

pub fn max_abs_diff<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| {
        let d = cabs(*x - *y);
        if d > acc {
            d
        } else {
            acc
        }
    })
}

pub fn trace<T: Real>(m: &CMatrix<T>) -> Complex<T> {
    (0..m.nrows().min(m.ncols())).fold(czero(), |acc, k| acc + m[(k, k)])
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `Tr[A B]` without forming the product.
pub fn trace_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    let mut acc = czero();
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
