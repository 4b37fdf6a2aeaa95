//! Reachability and observability Gramians from the generalized Lyapunov
//! equations
//!
//! ```text
//! A P Eᵀ + E P Aᵀ + B Bᵀ = 0
//! Aᵀ Q E + Eᵀ Q A + Cᵀ C = 0
//! ```
//!
//! and their square-root factors. Both equations are reduced to the
//! standard form `Ã X + X Ãᴴ + G = 0` with `E` inverted into the data, solved
//! by Bartels–Stewart, then polished with a couple of refinement sweeps
//! against the generalized residual.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, LyapunovSchur};
use crate::lti::{self, LtiSystem, ReducedModel, StateSpaceModel};

/// Relative residual target for the generalized Lyapunov solves.
pub const RESIDUAL_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-12;
const REFINEMENT_SWEEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramianKind {
    /// `P`.
    Reachability,
    /// `Q`; the observability Gramian proper is `Eᵀ Q E`.
    ObservabilityCore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gramian {
    matrix: DMatrix<f64>,
    kind: GramianKind,
}

impl Gramian {
    /// Validates symmetry and semidefiniteness.
    pub fn new(matrix: DMatrix<f64>, kind: GramianKind) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidModel("Gramian must be square".into()));
        }
        let norm = matrix.norm();
        let asym = (&matrix - matrix.transpose()).norm();
        if asym > SYMMETRY_TOL * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidModel(format!("Gramian is not symmetric (‖M - Mᵀ‖ = {asym:e})")));
        }
        let eigs = matrix.clone().symmetric_eigenvalues();
        let (min_eig, two_norm) = (eigs.min(), eigs.amax());
        if min_eig < -PSD_TOL * two_norm {
            return Err(Error::NotPsd(min_eig));
        }
        Ok(Self { matrix, kind })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> GramianKind {
        self.kind
    }
}

/// `F` with `F Fᵀ = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianFactor {
    pub f: DMatrix<f64>,
}

impl GramianFactor {
    pub fn rank(&self) -> usize {
        self.f.ncols()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.f * self.f.transpose()
    }
}

/// Solves `A X Eᴴ + E X Aᴴ + B Bᴴ = 0`; returns `X` and the relative residual.
pub(crate) fn generalized_lyapunov(e: &CMat, a: &CMat, bbh: &CMat) -> Result<(CMat, f64)> {
    let e_lu = e.clone().lu();
    let singular = || Error::InvalidModel("E is singular".into());
    let a_tilde = e_lu.solve(a).ok_or_else(singular)?;
    let schur = LyapunovSchur::new(&a_tilde)?;
    // E^{-1} R E^{-H}
    let reduce = |r: &CMat| -> Result<CMat> {
        let left = e_lu.solve(r).ok_or_else(singular)?;
        let both = e_lu.solve(&left.adjoint()).ok_or_else(singular)?;
        Ok(linalg::hermitian_part(&both))
    };
    let residual = |x: &CMat| a * x * e.adjoint() + e * x * a.adjoint() + bbh;

    let scale = linalg::frobenius(bbh).max(f64::MIN_POSITIVE);
    let mut x = linalg::hermitian_part(&schur.solve(&reduce(bbh)?)?);
    let mut rel = linalg::frobenius(&residual(&x)) / scale;
    for _ in 0..REFINEMENT_SWEEPS {
        if rel <= 0.01 * RESIDUAL_TOL {
            break;
        }
        let r = residual(&x);
        let dx = schur.solve(&reduce(&r)?)?;
        let candidate = linalg::hermitian_part(&(&x + dx));
        let cand_rel = linalg::frobenius(&residual(&candidate)) / scale;
        if cand_rel >= rel {
            break;
        }
        x = candidate;
        rel = cand_rel;
    }
    Ok((x, rel))
}

/// Reachability Gramian of a (possibly complex) realization, used by the H2 norm.
pub(crate) fn reachability_gramian_complex(rm: &ReducedModel) -> Result<CMat> {
    let b = CMat::from_column_slice(rm.r(), 1, rm.b.as_slice());
    let (x, rel) = generalized_lyapunov(&rm.e, &rm.a, &(&b * b.adjoint()))?;
    if rel > RESIDUAL_TOL {
        return Err(Error::IllConditioned(rel));
    }
    Ok(x)
}

fn require_stable(model: &StateSpaceModel) -> Result<()> {
    let alpha = lti::spectral_abscissa(model)?;
    if alpha < -lti::STABILITY_MARGIN {
        Ok(())
    } else {
        Err(Error::UnstableSystem(alpha))
    }
}

fn real_gramian(x: CMat, rel: f64, kind: GramianKind) -> Result<Gramian> {
    if rel > RESIDUAL_TOL {
        return Err(Error::IllConditioned(rel));
    }
    let re = linalg::real_part(&x);
    Gramian::new((&re + re.transpose()) * 0.5, kind)
}

/// `P` from `A P Eᵀ + E P Aᵀ + B Bᵀ = 0`.
pub fn solve_lyapunov_p(model: &StateSpaceModel) -> Result<Gramian> {
    require_stable(model)?;
    let rm = model.to_complex();
    let b = CMat::from_column_slice(rm.r(), 1, rm.b.as_slice());
    let (x, rel) = generalized_lyapunov(&rm.e, &rm.a, &(&b * b.adjoint()))?;
    real_gramian(x, rel, GramianKind::Reachability)
}

/// `Q` from `Aᵀ Q E + Eᵀ Q A + Cᵀ C = 0`.
pub fn solve_lyapunov_q(model: &StateSpaceModel) -> Result<Gramian> {
    require_stable(model)?;
    let rm = model.transposed().to_complex();
    let b = CMat::from_column_slice(rm.r(), 1, rm.b.as_slice());
    let (x, rel) = generalized_lyapunov(&rm.e, &rm.a, &(&b * b.adjoint()))?;
    real_gramian(x, rel, GramianKind::ObservabilityCore)
}

/// Relative Frobenius residual of a Gramian against its defining equation.
pub fn lyapunov_residual(model: &StateSpaceModel, gramian: &Gramian) -> f64 {
    let (e, a, m) = (model.e(), model.a(), gramian.matrix());
    let (res, rhs) = match gramian.kind() {
        GramianKind::Reachability => {
            let bb = model.b() * model.b().transpose();
            (a * m * e.transpose() + e * m * a.transpose() + &bb, bb)
        }
        GramianKind::ObservabilityCore => {
            let cc = model.c().transpose() * model.c();
            (a.transpose() * m * e + e.transpose() * m * a + &cc, cc)
        }
    };
    res.norm() / rhs.norm().max(f64::MIN_POSITIVE)
}

/// Square-root factor via symmetric eigendecomposition, dropping eigenvalues
/// below `1e-12 ‖M‖₂`.
pub fn factor(gramian: &Gramian) -> Result<GramianFactor> {
    let eig = gramian.matrix().clone().symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let n = gramian.matrix().nrows();
    let mut cols = Vec::new();
    for k in 0..n {
        let lambda = eig.eigenvalues[k];
        if lambda < -PSD_TOL * top {
            return Err(Error::NotPsd(lambda));
        }
        if lambda > RANK_TOL * top {
            cols.push(eig.eigenvectors.column(k) * lambda.sqrt());
        }
    }
    let f = if cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&cols) };
    Ok(GramianFactor { f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DVector, RowDVector};

    fn scalar(e: f64, a: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, e),
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, 1.0),
            RowDVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn scalar_gramians() {
        assert!((solve_lyapunov_p(&scalar(1.0, -1.0)).unwrap().matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((solve_lyapunov_p(&scalar(2.0, -1.0)).unwrap().matrix()[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((solve_lyapunov_q(&scalar(1.0, -1.0)).unwrap().matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((solve_lyapunov_q(&scalar(2.0, -1.0)).unwrap().matrix()[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unstable_rejected() {
        assert!(matches!(solve_lyapunov_p(&scalar(1.0, 1.0)), Err(Error::UnstableSystem(_))));
        assert!(matches!(solve_lyapunov_q(&scalar(1.0, 0.0)), Err(Error::UnstableSystem(_))));
    }

    #[test]
    fn factor_examples() {
        let g = Gramian::new(DMatrix::from_element(1, 1, 0.25), GramianKind::ObservabilityCore).unwrap();
        let f = factor(&g).unwrap();
        assert!((f.f[(0, 0)].abs() - 0.5).abs() < 1e-15);

        let g = Gramian::new(DMatrix::identity(3, 3), GramianKind::ObservabilityCore).unwrap();
        let f = factor(&g).unwrap();
        assert!((f.reconstruct() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn indefinite_rejected() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(matches!(Gramian::new(m, GramianKind::Reachability), Err(Error::NotPsd(_))));
    }

    #[test]
    fn rank_truncation() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let m = &v * v.transpose();
        let f = factor(&Gramian::new(m.clone(), GramianKind::Reachability).unwrap()).unwrap();
        assert_eq!(f.rank(), 1);
        assert!((f.reconstruct() - m).norm() < 1e-13);
    }
}
