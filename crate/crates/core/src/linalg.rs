//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

/// Condition-number ceiling for channel inversions.
pub const COND_LIMIT: f64 = 1e12;

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMat) -> DVector<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    DVector::from_vec(ev)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Condition number of a Hermitian PSD matrix (infinite if singular).
pub fn condition_number(m: &CMat) -> f64 {
    let ev = hermitian_eigenvalues(m);
    let lo = ev[0];
    let hi = ev[ev.len() - 1];
    if lo <= 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve `g x = b` for Hermitian positive definite `g`, refusing
/// ill-conditioned systems. One step of iterative refinement is applied.
pub fn guarded_solve(g: &CMat, b: &CMat, device: usize) -> Result<CMat> {
    let cond = condition_number(g);
    if cond > COND_LIMIT {
        return Err(Error::SingularChannel { device, cond });
    }
    let chol = g
        .clone()
        .cholesky()
        .ok_or(Error::SingularChannel { device, cond })?;
    let mut x = chol.solve(b);
    let r = b - g * &x;
    x += chol.solve(&r);
    Ok(x)
}

/// Real-composite form of a complex vector: `(Re v, Im v)`.
pub fn realify(v: &CVec) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`realify`].
pub fn complexify(x: &DVector<f64>) -> CVec {
    let n = x.len() / 2;
    CVec::from_fn(n, |i, _| Complex64::new(x[i], x[i + n]))
}

/// Real-composite form of a Hermitian matrix, so that
/// `realify(p)ᵀ · out · realify(p) = pᴴ g p`.
pub fn realify_hermitian(g: &CMat) -> DMatrix<f64> {
    let n = g.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = g[(i, j)];
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i, j + n)] = -v.im;
            out[(i + n, j)] = v.im;
        }
    }
    out
}

/// `aᴴ b`.
pub fn inner(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Squared Euclidean norm of a complex vector.
pub fn norm2(v: &CVec) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}
