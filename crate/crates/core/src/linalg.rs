//! Dense complex linear-algebra helpers shared by the solvers.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, RowDVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type CRow = RowDVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn complexify(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn complexify_vec(v: &DVector<f64>) -> CVec {
    v.map(|x| Complex64::new(x, 0.0))
}

pub fn complexify_row(v: &RowDVector<f64>) -> CRow {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Lexicographic order on complex numbers: real part, then imaginary part.
pub fn cmp_lex(a: &Complex64, b: &Complex64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

pub fn sort_lex(values: &mut [Complex64]) {
    values.sort_by(cmp_lex);
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_imag(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.im.abs()))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn real_part(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.re)
}

fn schur_iterations(n: usize) -> usize {
    1000 + 200 * n
}

/// Eigenvalues of a real square matrix via the real Schur form.
///
/// Complex eigenvalues come out in exact conjugate pairs.
pub fn eigenvalues_real(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::PencilFailure("non-finite matrix entry".into()));
    }
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, schur_iterations(n))
        .ok_or_else(|| Error::PencilFailure(format!("real Schur iteration did not converge (n={n})")))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Complex Schur decomposition `m = U T U^H` with `T` upper triangular.
pub fn complex_schur(m: &CMat) -> Result<(CMat, CMat)> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::PencilFailure("non-finite matrix entry".into()));
    }
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, schur_iterations(n))
        .ok_or_else(|| Error::PencilFailure(format!("complex Schur iteration did not converge (n={n})")))?;
    let (u, mut t) = schur.unpack();
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = ZERO;
        }
    }
    Ok((u, t))
}

pub fn eigenvalues_complex(m: &CMat) -> Result<Vec<Complex64>> {
    let (_, t) = complex_schur(m)?;
    Ok(t.diagonal().iter().copied().collect())
}

/// Complex Schur form of `A`, kept around to solve several Lyapunov
/// equations `A X + X A^H + G = 0` with the same `A` (Bartels–Stewart).
pub struct LyapunovSchur {
    u: CMat,
    t: CMat,
}

impl LyapunovSchur {
    pub fn new(a: &CMat) -> Result<Self> {
        let (u, t) = complex_schur(a)?;
        Ok(Self { u, t })
    }

    /// Requires `λ_i + conj(λ_j) ≠ 0` for all eigenvalue pairs of `A`.
    pub fn solve(&self, g: &CMat) -> Result<CMat> {
        let (u, t) = (&self.u, &self.t);
        let n = t.nrows();
        let g_hat = u.adjoint() * g * u;
        let mut y = CMat::zeros(n, n);
        for j in (0..n).rev() {
            for i in (0..n).rev() {
                let mut acc = -g_hat[(i, j)];
                for k in (i + 1)..n {
                    acc -= t[(i, k)] * y[(k, j)];
                }
                for k in (j + 1)..n {
                    acc -= y[(i, k)] * t[(j, k)].conj();
                }
                let denom = t[(i, i)] + t[(j, j)].conj();
                if denom.norm() == 0.0 {
                    return Err(Error::UnstableSystem(t[(i, i)].re.max(t[(j, j)].re)));
                }
                y[(i, j)] = acc / denom;
            }
        }
        Ok(u * y * u.adjoint())
    }
}

/// Solves `A X + X A^H + G = 0`.
pub fn solve_continuous_lyapunov(a: &CMat, g: &CMat) -> Result<CMat> {
    LyapunovSchur::new(a)?.solve(g)
}

/// Hermitian part `(M + M^H)/2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest singular value over smallest; infinity when rank deficient.
pub fn condition_number(m: &CMat) -> f64 {
    if m.ncols() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}
