//! Dense complex linear algebra used by both hops.
//!
//! Everything here works on small Hermitian positive definite matrices
//! (covariances, MSE matrices, weights), so Cholesky is the workhorse.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense complex matrix.
pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `rows x cols` matrix built from real entries given row by row.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, entries.iter().map(|&x| c(x, 0.0)))
}

pub fn scalar(x: Complex64) -> CMatrix {
    CMatrix::from_element(1, 1, x)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `(M + M*) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest entry-wise deviation of `m` from its conjugate transpose.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Adds `a a*` to `acc` in place.
pub fn add_outer(acc: &mut CMatrix, a: &CMatrix) {
    acc.gemm(ONE, a, &a.adjoint(), ONE);
}

/// Cholesky factor of a Hermitian positive definite matrix, after symmetrization.
pub fn cholesky(m: &CMatrix) -> Result<Cholesky<Complex64, Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NotPositiveDefinite("non-finite entry"));
    }
    let chol = Cholesky::new(hermitian_part(m)).ok_or(Error::NotPositiveDefinite("cholesky failed"))?;
    // The complex square root never fails, so a non-positive pivot shows up as
    // a diagonal entry that is not real and positive.
    let l = chol.l_dirty();
    let ok = (0..m.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    if ok {
        Ok(chol)
    } else {
        Err(Error::NotPositiveDefinite("non-positive pivot"))
    }
}

/// `ln det` of a Hermitian positive definite matrix.
pub fn ln_det_pd(m: &CMatrix) -> Result<f64> {
    let chol = cholesky(m)?;
    Ok(ln_det_from_cholesky(&chol))
}

pub fn ln_det_from_cholesky(chol: &Cholesky<Complex64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
}

pub fn inverse_pd(m: &CMatrix) -> Result<CMatrix> {
    let inv = cholesky(m)?.inverse();
    Ok(hermitian_part(&inv))
}

/// Solves `M X = B` for Hermitian positive definite `M`.
pub fn solve_pd(m: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if m.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve: {}x{} system with {} right-hand rows",
            m.nrows(),
            m.ncols(),
            b.nrows()
        )));
    }
    Ok(cholesky(m)?.solve(b))
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigen(m).0.first().copied().unwrap_or(0.0)
}

/// Matrix of i.i.d. CN(0, 1) entries: real and imaginary parts each N(0, 1/2).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(s * re, s * im)
    })
}
