//! Quadrature rules on the imaginary axis for the observability Gramian
//! integral, and the intrusive quadrature Gramian / factor they induce.
//!
//! The intrusive quantities ([`approx_gramian_q`], [`approx_factor_rows`])
//! need the state-space matrices and exist for verification only; the
//! data-driven reduction never touches them.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::lti::StateSpaceModel;

const CONJUGATE_TOL: f64 = 1e-12;

/// Purely imaginary nodes `iω_k` with positive weights `φ_k`, closed under
/// conjugation. The integral `(1/2π)∫ f(ω) dω` is approximated by
/// `Σ φ_k² f(ω_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    omegas: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds a rule from frequencies `ω_k` (nodes `iω_k`) and weights `φ_k`.
    pub fn new(omegas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if omegas.len() != weights.len() {
            return Err(Error::SizeMismatch { expected: omegas.len(), got: weights.len() });
        }
        if omegas.is_empty() {
            return Err(Error::InvalidRange("rule has no nodes".into()));
        }
        if omegas.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidRange("non-finite node".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidRange("weights must be finite and strictly positive".into()));
        }
        let mut sorted = omegas.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::InvalidRange("nodes must be distinct".into()));
        }
        for (k, &w) in omegas.iter().enumerate() {
            let partner = omegas
                .iter()
                .position(|&v| (v + w).abs() <= CONJUGATE_TOL * w.abs().max(1.0))
                .ok_or_else(|| Error::InvalidRange(format!("node {w}i has no conjugate partner")))?;
            let (a, b) = (weights[k], weights[partner]);
            if (a - b).abs() > CONJUGATE_TOL * a.max(b) {
                return Err(Error::InvalidRange(format!("conjugate nodes ±{}i carry different weights", w.abs())));
            }
        }
        Ok(Self { omegas, weights })
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, k: usize) -> Complex64 {
        Complex64::new(0.0, self.omegas[k])
    }

    pub fn nodes(&self) -> Vec<Complex64> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Index of the node `-iω_k`.
    pub fn conjugate_index(&self, k: usize) -> usize {
        let w = self.omegas[k];
        self.omegas
            .iter()
            .position(|&v| (v + w).abs() <= CONJUGATE_TOL * w.abs().max(1.0))
            .expect("rule is conjugate-closed by construction")
    }

    /// Copy with every weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.omegas.clone(), self.weights.iter().map(|w| w * c).collect())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for (&omega, &weight) in self.omegas.iter().zip(&self.weights) {
            w.serialize(RuleRow { omega, weight })?;
        }
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv_from(std::fs::File::open(path)?)
    }

    pub fn read_csv_from<R: std::io::Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut omegas = Vec::new();
        let mut weights = Vec::new();
        for row in reader.deserialize() {
            let row: RuleRow = row?;
            omegas.push(row.omega);
            weights.push(row.weight);
        }
        Self::new(omegas, weights)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleRow {
    omega: f64,
    weight: f64,
}

/// Composite trapezoid on `half_count` logarithmically spaced frequencies in
/// `[omega_min, omega_max]`, mirrored to negative frequencies. Node order is
/// the positive half ascending, then the conjugates in the same order.
pub fn trapezoid_rule(omega_min: f64, omega_max: f64, half_count: usize) -> Result<QuadratureRule> {
    if !(omega_min > 0.0 && omega_max > omega_min && omega_max.is_finite()) {
        return Err(Error::InvalidRange(format!("need 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]")));
    }
    if half_count < 2 {
        return Err(Error::InvalidRange(format!("half_count must be at least 2, got {half_count}")));
    }
    let (l0, l1) = (omega_min.ln(), omega_max.ln());
    let h = half_count;
    let mut omega: Vec<f64> = (0..h).map(|k| (l0 + (l1 - l0) * k as f64 / (h - 1) as f64).exp()).collect();
    omega[0] = omega_min;
    omega[h - 1] = omega_max;

    let widths: Vec<f64> = (0..h)
        .map(|k| match k {
            0 => 0.5 * (omega[1] - omega[0]),
            k if k == h - 1 => 0.5 * (omega[h - 1] - omega[h - 2]),
            k => 0.5 * (omega[k + 1] - omega[k - 1]),
        })
        .collect();
    let phi: Vec<f64> = widths.iter().map(|d| (d / (2.0 * PI)).sqrt()).collect();

    let mut omegas = omega.clone();
    omegas.extend(omega.iter().map(|w| -w));
    let mut weights = phi.clone();
    weights.extend(phi);
    QuadratureRule::new(omegas, weights)
}

/// Rows `φ_k C (iω_k E - A)^{-1}` of `L̃*` (an `Nq × n` matrix). Verification only.
pub fn approx_factor_rows(model: &StateSpaceModel, rule: &QuadratureRule) -> Result<CMat> {
    let n = model.n();
    let ct = CMat::from_iterator(n, 1, model.c().iter().map(|&x| Complex64::new(x, 0.0)));
    let rows: Vec<CMat> = (0..rule.len())
        .into_par_iter()
        .map(|k| {
            let y = model.solve_shifted_transposed(rule.node(k), &ct)?;
            Ok(y.transpose() * Complex64::new(rule.weights()[k], 0.0))
        })
        .collect::<Result<_>>()?;
    let mut out = CMat::zeros(rule.len(), n);
    for (k, row) in rows.iter().enumerate() {
        out.row_mut(k).copy_from(row);
    }
    Ok(out)
}

/// `Q̃ = L̃ L̃*` summed in node order. The imaginary part cancels for
/// conjugate-closed rules; the real symmetric part is returned. Verification only.
pub fn approx_gramian_q(model: &StateSpaceModel, rule: &QuadratureRule) -> Result<DMatrix<f64>> {
    let rows = approx_factor_rows(model, rule)?;
    let n = model.n();
    let mut q = CMat::zeros(n, n);
    for k in 0..rule.len() {
        let row = rows.row(k);
        q += row.adjoint() * row;
    }
    let scale = linalg::max_abs(&q).max(f64::MIN_POSITIVE);
    let imag = linalg::max_abs_imag(&linalg::hermitian_part(&q));
    if imag > 1e-10 * scale {
        return Err(Error::InvalidRange(format!("quadrature Gramian has imaginary part {imag:e}")));
    }
    let re = linalg::real_part(&q);
    Ok((&re + re.transpose()) * 0.5)
}
