//! Dense complex helpers built on `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Cholesky factor of a Hermitian positive-definite matrix.
///
/// On failure a diagonal jitter of `1e-12·trace/n` is added and the
/// factorization retried once.
pub fn hermitian_cholesky(a: &CMatrix, context: &'static str) -> Result<Cholesky<Complex64, Dyn>> {
    if let Some(ch) = checked_cholesky(a.clone()) {
        return Ok(ch);
    }
    let n = a.nrows();
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let jitter = 1e-12 * trace.abs().max(f64::MIN_POSITIVE) / n.max(1) as f64;
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] += c(jitter);
    }
    checked_cholesky(b).ok_or_else(|| {
        Error::numerical(
            context,
            format!("{n}x{n} system not positive definite (trace {trace:.3e}) after jitter {jitter:.3e}"),
        )
    })
}

// nalgebra takes complex square roots of the pivots, so a non-positive pivot
// yields an imaginary diagonal instead of a failure.
fn checked_cholesky(a: CMatrix) -> Option<Cholesky<Complex64, Dyn>> {
    let ch = Cholesky::new(a)?;
    let l = ch.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    ok.then_some(ch)
}

/// Cholesky factor without the jitter retry.
pub fn strict_cholesky(a: &CMatrix, context: &'static str) -> Result<Cholesky<Complex64, Dyn>> {
    let n = a.nrows();
    checked_cholesky(a.clone()).ok_or_else(|| Error::numerical(context, format!("{n}x{n} system is singular")))
}

/// `log det A` from a Cholesky factor.
pub fn log_det(ch: &Cholesky<Complex64, Dyn>) -> f64 {
    let l = ch.l_dirty();
    (0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum()
}

/// Solve `L X = B` in place for the lower factor `L` of `ch`.
pub fn solve_lower_in_place(ch: &Cholesky<Complex64, Dyn>, b: &mut CMatrix) {
    // l_dirty's upper triangle is garbage; the triangular solver never reads it.
    let ok = ch.l_dirty().solve_lower_triangular_mut(b);
    debug_assert!(ok);
}

/// Inverse of a Hermitian positive-definite matrix.
pub fn hpd_inverse(a: &CMatrix, context: &'static str) -> Result<CMatrix> {
    Ok(hermitian_cholesky(a, context)?.inverse())
}

/// Squared Euclidean norm of each column.
pub fn column_norms_sqr(m: &CMatrix) -> Vec<f64> {
    m.column_iter().map(|col| col.iter().map(|z| z.norm_sqr()).sum()).collect()
}

/// Largest entry of `|A - A^H|` relative to the largest entry of `|A|`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let h = (a + a.adjoint()) * c(0.5);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}
