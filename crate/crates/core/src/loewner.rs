//! Sample-built data matrices and the reduced models assembled from them.
//!
//! For quadrature nodes `iω_i` with weights `φ_i` and shifts `η_j`:
//!
//! ```text
//! L[i,j] = -φ_i (H(iω_i) - H(η_j)) / (iω_i - η_j)
//! M[i,j] = -φ_i (iω_i H(iω_i) - η_j H(η_j)) / (iω_i - η_j)
//! V[i]   =  φ_i H(iω_i)
//! W[j]   =  H(η_j)
//! ```
//!
//! These equal `L̃* E V_r`, `L̃* A V_r`, `L̃* B` and `C V_r`, where `L̃*` stacks
//! the rows `φ_i C (iω_i E - A)^{-1}` and `V_r` is the primitive rational
//! Krylov matrix. The reduced model `(LᴴL, LᴴM, LᴴV, W)` is therefore the
//! Petrov–Galerkin projection with `W̃ = Q̃ E V_r`, built from samples alone.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CRow, CVec};
use crate::lti::{ReducedModel, StateSpaceModel};
use crate::quadrature::{self, QuadratureRule};
use crate::reduction::rational_krylov_basis;
use crate::sampling::FrequencyResponseOracle;
use crate::shifts::ShiftSet;

/// Minimum admissible distance between a shift and a quadrature node.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Largest accepted condition number of `Lᴴ L`.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Relative imaginary residue below which a realified model is stored as real.
pub const REAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LoewnerDataBlock {
    /// `Nq × r`.
    pub l: CMat,
    /// `Nq × r`.
    pub m: CMat,
    /// length `Nq`.
    pub v: CVec,
    /// length `r`.
    pub w: CRow,
    pub rule: QuadratureRule,
    pub shifts: ShiftSet,
}

fn check_degeneracy(rule: &QuadratureRule, shifts: &ShiftSet) -> Result<()> {
    for k in 0..rule.len() {
        let node = rule.node(k);
        for &shift in shifts.as_slice() {
            if (node - shift).norm() <= DEGENERACY_TOL {
                return Err(Error::DegenerateShift { shift, node });
            }
        }
    }
    Ok(())
}

/// Queries `H` at every node, then at every shift, and assembles the block.
pub fn build_data_block<O: FrequencyResponseOracle + ?Sized>(
    oracle: &O,
    rule: &QuadratureRule,
    shifts: &ShiftSet,
) -> Result<LoewnerDataBlock> {
    check_degeneracy(rule, shifts)?;
    let node_values: Vec<Complex64> = rule.nodes().into_iter().map(|s| oracle.sample(s)).collect::<Result<_>>()?;
    let shift_values: Vec<Complex64> = shifts.as_slice().iter().map(|&s| oracle.sample(s)).collect::<Result<_>>()?;
    data_block_from_samples(rule, shifts, &node_values, &shift_values)
}

/// Assembles the block from already collected samples `H(iω_i)` and `H(η_j)`.
pub fn data_block_from_samples(
    rule: &QuadratureRule,
    shifts: &ShiftSet,
    node_values: &[Complex64],
    shift_values: &[Complex64],
) -> Result<LoewnerDataBlock> {
    let nq = rule.len();
    let r = shifts.len();
    if node_values.len() != nq {
        return Err(Error::SizeMismatch { expected: nq, got: node_values.len() });
    }
    if shift_values.len() != r {
        return Err(Error::SizeMismatch { expected: r, got: shift_values.len() });
    }
    check_degeneracy(rule, shifts)?;
    let eta = shifts.as_slice();
    let mut l = CMat::zeros(nq, r);
    let mut m = CMat::zeros(nq, r);
    for i in 0..nq {
        let x = rule.node(i);
        let phi = rule.weights()[i];
        let hx = node_values[i];
        for j in 0..r {
            let y = eta[j];
            let hy = shift_values[j];
            let d = x - y;
            l[(i, j)] = -phi * (hx - hy) / d;
            m[(i, j)] = -phi * (x * hx - y * hy) / d;
        }
    }
    let v = CVec::from_iterator(nq, (0..nq).map(|i| node_values[i] * rule.weights()[i]));
    let w = CRow::from_row_slice(shift_values);
    Ok(LoewnerDataBlock { l, m, v, w, rule: rule.clone(), shifts: shifts.clone() })
}

/// `L̃* E V_r`, `L̃* A V_r`, `L̃* B`, `C V_r` from the state-space matrices.
/// Verification only.
pub fn intrusive_data_block(model: &StateSpaceModel, rule: &QuadratureRule, shifts: &ShiftSet) -> Result<LoewnerDataBlock> {
    let lstar = quadrature::approx_factor_rows(model, rule)?;
    let vr = rational_krylov_basis(model, shifts.as_slice())?;
    let e = linalg::complexify(model.e());
    let a = linalg::complexify(model.a());
    let b = linalg::complexify_vec(model.b());
    let c = linalg::complexify_row(model.c());
    Ok(LoewnerDataBlock {
        l: &lstar * &e * &vr,
        m: &lstar * &a * &vr,
        v: &lstar * b,
        w: c * &vr,
        rule: rule.clone(),
        shifts: shifts.clone(),
    })
}

impl LoewnerDataBlock {
    pub fn nq(&self) -> usize {
        self.l.nrows()
    }

    pub fn r(&self) -> usize {
        self.l.ncols()
    }

    /// Largest entrywise deviation of `L` and `M` from the sample formulas,
    /// with the samples recovered from `V` and `W`, relative to the largest entry.
    pub fn sample_formula_residual(&self) -> f64 {
        let node_values: Vec<Complex64> =
            (0..self.nq()).map(|i| self.v[i] / self.rule.weights()[i]).collect();
        let shift_values: Vec<Complex64> = self.w.iter().copied().collect();
        match data_block_from_samples(&self.rule, &self.shifts, &node_values, &shift_values) {
            Ok(fresh) => {
                let diff = linalg::max_abs(&(&fresh.l - &self.l)).max(linalg::max_abs(&(&fresh.m - &self.m)));
                let scale = linalg::max_abs(&self.l).max(linalg::max_abs(&self.m)).max(f64::MIN_POSITIVE);
                diff / scale
            }
            Err(_) => f64::INFINITY,
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(BlockFile::from_block(self)).expect("block serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: BlockFile = serde_json::from_str(text)?;
        file.into_block()
    }

    /// Long-format CSV: `matrix,row,col,re,im` for `L`, `M`, `V` and `W`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["matrix", "row", "col", "re", "im"])?;
        let mut put = |name: &str, i: usize, j: usize, z: Complex64| -> Result<()> {
            w.write_record([name.to_string(), i.to_string(), j.to_string(), z.re.to_string(), z.im.to_string()])?;
            Ok(())
        };
        for (name, mat) in [("L", &self.l), ("M", &self.m)] {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    put(name, i, j, mat[(i, j)])?;
                }
            }
        }
        for i in 0..self.v.len() {
            put("V", i, 0, self.v[i])?;
        }
        for j in 0..self.w.len() {
            put("W", 0, j, self.w[j])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ComplexMatrixFile {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl ComplexMatrixFile {
    fn from_matrix(m: &CMat) -> Self {
        let grab = |f: fn(&Complex64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
        Self { re: grab(|z| z.re), im: grab(|z| z.im) }
    }

    fn into_matrix(self, rows: usize, cols: usize) -> Result<CMat> {
        let ok = self.re.len() == rows
            && self.im.len() == rows
            && self.re.iter().chain(self.im.iter()).all(|r| r.len() == cols);
        if !ok {
            return Err(Error::InvalidConfig(format!("data matrix payload is not {rows}x{cols}")));
        }
        Ok(CMat::from_fn(rows, cols, |i, j| Complex64::new(self.re[i][j], self.im[i][j])))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockFile {
    nq: usize,
    r: usize,
    omegas: Vec<f64>,
    weights: Vec<f64>,
    shifts: Vec<[f64; 2]>,
    #[serde(rename = "L")]
    l: ComplexMatrixFile,
    #[serde(rename = "M")]
    m: ComplexMatrixFile,
    #[serde(rename = "V")]
    v: ComplexMatrixFile,
    #[serde(rename = "W")]
    w: ComplexMatrixFile,
}

impl BlockFile {
    fn from_block(b: &LoewnerDataBlock) -> Self {
        Self {
            nq: b.nq(),
            r: b.r(),
            omegas: b.rule.omegas().to_vec(),
            weights: b.rule.weights().to_vec(),
            shifts: b.shifts.as_slice().iter().map(|z| [z.re, z.im]).collect(),
            l: ComplexMatrixFile::from_matrix(&b.l),
            m: ComplexMatrixFile::from_matrix(&b.m),
            v: ComplexMatrixFile::from_matrix(&CMat::from_column_slice(b.nq(), 1, b.v.as_slice())),
            w: ComplexMatrixFile::from_matrix(&CMat::from_row_slice(1, b.r(), b.w.transpose().as_slice())),
        }
    }

    fn into_block(self) -> Result<LoewnerDataBlock> {
        let rule = QuadratureRule::new(self.omegas, self.weights)?;
        let shifts = ShiftSet::new(self.shifts.iter().map(|p| Complex64::new(p[0], p[1])).collect())?;
        if rule.len() != self.nq || shifts.len() != self.r {
            return Err(Error::InvalidConfig("data block header disagrees with payload".into()));
        }
        let v = self.v.into_matrix(self.nq, 1)?;
        let w = self.w.into_matrix(1, self.r)?;
        Ok(LoewnerDataBlock {
            l: self.l.into_matrix(self.nq, self.r)?,
            m: self.m.into_matrix(self.nq, self.r)?,
            v: CVec::from_column_slice(v.as_slice()),
            w: CRow::from_row_slice(w.as_slice()),
            rule,
            shifts,
        })
    }
}

/// Applies the conjugate-pair basis change of `shifts` to both sides of a
/// reduced model. Returns the transformed model and its relative imaginary
/// residue; when the residue is below [`REAL_TOL`] the imaginary parts are
/// dropped. Models for non-closed shift sets are returned unchanged.
pub fn realify(rom: &ReducedModel, shifts: &ShiftSet) -> (ReducedModel, f64) {
    match shifts.realification_basis() {
        Some(t) if t.nrows() == rom.r() => {
            let out = rom.congruence(&t);
            let residue = out.imag_residue();
            if residue <= REAL_TOL {
                (out.to_real(), residue)
            } else {
                (out, residue)
            }
        }
        _ => (rom.clone(), rom.imag_residue()),
    }
}

fn check_condition(l: &CMat) -> Result<()> {
    let cond = linalg::condition_number(l);
    let cond_gram = cond * cond;
    if !(cond_gram <= CONDITION_LIMIT) {
        return Err(Error::RankDeficientData(cond_gram));
    }
    Ok(())
}

/// `(LᴴL, LᴴM, LᴴV, W)` without the realifying basis change.
pub fn assemble_rom_complex(block: &LoewnerDataBlock) -> Result<ReducedModel> {
    check_condition(&block.l)?;
    let lh = block.l.adjoint();
    ReducedModel::new(&lh * &block.l, &lh * &block.m, &lh * &block.v, block.w.clone())
}

/// Reduced model `(LᴴL, LᴴM, LᴴV, W)`, made real when the shifts are
/// conjugate-closed (the rule always is).
pub fn assemble_rom(block: &LoewnerDataBlock) -> Result<ReducedModel> {
    let rom = assemble_rom_complex(block)?;
    Ok(realify(&rom, &block.shifts).0)
}

/// The reduced model of [`assemble_rom`] in the basis that makes `E_r = I`.
///
/// With `L T = Q̂ R` (`T` the realifying basis, `R` real upper triangular from
/// the QR factorization of `[Re(LT); Im(LT)]`) this returns
/// `(I, Q̂ᴴ M T R⁻¹, Q̂ᴴ V, W T R⁻¹)`. Only `cond(L)`, not its square, enters;
/// the guard is `cond(L) ≤ 1e12`.
pub fn assemble_rom_orthonormal(block: &LoewnerDataBlock) -> Result<(ReducedModel, f64)> {
    let r = block.r();
    let t = block.shifts.realification_basis().unwrap_or_else(|| CMat::identity(r, r));
    let lt = &block.l * &t;
    let cond = linalg::condition_number(&lt);
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::RankDeficientData(cond * cond));
    }
    let nq = block.nq();
    let mut stacked = nalgebra::DMatrix::<f64>::zeros(2 * nq, r);
    for i in 0..nq {
        for j in 0..r {
            stacked[(i, j)] = lt[(i, j)].re;
            stacked[(nq + i, j)] = lt[(i, j)].im;
        }
    }
    let rfac = linalg::complexify(&stacked.qr().r());
    let singular = || Error::RankDeficientData(f64::INFINITY);
    // X R = Y  <=>  Rᴴ Xᴴ = Yᴴ
    let right_solve = |y: &CMat| -> Result<CMat> {
        Ok(rfac.adjoint().solve_lower_triangular(&y.adjoint()).ok_or_else(singular)?.adjoint())
    };
    let qhat = right_solve(&lt)?;
    let qh = qhat.adjoint();
    let a = right_solve(&(&qh * (&block.m * &t)))?;
    let b = &qh * &block.v;
    let w = &block.w * &t;
    let c = right_solve(&CMat::from_row_slice(1, r, w.transpose().as_slice()))?;
    let rom = ReducedModel::new(CMat::identity(r, r), a, b, CRow::from_row_slice(c.as_slice()))?;
    let residue = rom.imag_residue();
    Ok(if residue <= REAL_TOL && block.shifts.is_conjugate_closed() { (rom.to_real(), residue) } else { (rom, residue) })
}

/// Loewner-style realization. For `r = Nq` this is `(L, M, V, W)`; for
/// `r < Nq` the state equation is multiplied by the left inverse of `L`
/// (least squares), giving `(I, L⁺M, L⁺V, W)`. Both have the transfer
/// function of [`assemble_rom`].
pub fn loewner_realization(block: &LoewnerDataBlock) -> Result<ReducedModel> {
    let (nq, r) = (block.nq(), block.r());
    if r > nq {
        return Err(Error::RankDeficientData(f64::INFINITY));
    }
    check_condition(&block.l)?;
    if r == nq {
        return ReducedModel::new(block.l.clone(), block.m.clone(), block.v.clone(), block.w.clone());
    }
    let qr = block.l.clone().qr();
    let q = qr.q();
    let rfac = qr.r();
    let singular = || Error::RankDeficientData(f64::INFINITY);
    let a = rfac.solve_upper_triangular(&(q.adjoint() * &block.m)).ok_or_else(singular)?;
    let bv = rfac.solve_upper_triangular(&(q.adjoint() * &block.v)).ok_or_else(singular)?;
    let rom = ReducedModel::new(CMat::identity(r, r), a, CVec::from_column_slice(bv.as_slice()), block.w.clone())?;
    Ok(realify(&rom, &block.shifts).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{eval_transfer, LtiSystem};
    use crate::sampling::state_space_oracle;
    use nalgebra::{DMatrix, DVector, RowDVector};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn first_order() -> StateSpaceModel {
        StateSpaceModel::standard(
            DMatrix::from_element(1, 1, -1.0),
            DVector::from_element(1, 1.0),
            RowDVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    fn diag2() -> StateSpaceModel {
        StateSpaceModel::standard(
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0])),
            DVector::from_vec(vec![1.0, 1.0]),
            RowDVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap()
    }

    fn unit_rule() -> QuadratureRule {
        QuadratureRule::new(vec![1.0, -1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn scalar_entries() {
        let oracle = state_space_oracle(&first_order());
        let shifts = ShiftSet::from_real(&[2.0]).unwrap();
        let block = build_data_block(&oracle, &unit_rule(), &shifts).unwrap();
        let sixth = 1.0 / 6.0;
        assert!((block.l[(0, 0)] - c(sixth, -sixth)).norm() < 1e-15);
        assert!((block.m[(0, 0)] - c(-sixth, sixth)).norm() < 1e-15);
        assert!((block.w[0] - c(1.0 / 3.0, 0.0)).norm() < 1e-15);

        let rule2 = QuadratureRule::new(vec![1.0, -1.0], vec![2.0, 2.0]).unwrap();
        let block = build_data_block(&oracle, &rule2, &shifts).unwrap();
        assert!((block.v[0] - c(1.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn scalar_intrusive_matches() {
        let shifts = ShiftSet::from_real(&[2.0]).unwrap();
        let block = intrusive_data_block(&first_order(), &unit_rule(), &shifts).unwrap();
        let expected = c(0.5, -0.5) / 3.0;
        assert!((block.l[(0, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn degenerate_shift_rejected() {
        let oracle = state_space_oracle(&first_order());
        let shifts = ShiftSet::new(vec![c(0.0, 1.0), c(0.0, -1.0)]).unwrap();
        assert!(matches!(build_data_block(&oracle, &unit_rule(), &shifts), Err(Error::DegenerateShift { .. })));
    }

    #[test]
    fn duplicated_shift_is_rank_deficient() {
        let oracle = state_space_oracle(&diag2());
        let rule = quadrature::trapezoid_rule(0.1, 10.0, 8).unwrap();
        let shifts = ShiftSet::from_real(&[1.5, 1.5]).unwrap();
        let block = build_data_block(&oracle, &rule, &shifts).unwrap();
        assert!(matches!(assemble_rom(&block), Err(Error::RankDeficientData(_))));
        assert!(matches!(loewner_realization(&block), Err(Error::RankDeficientData(_))));
    }

    #[test]
    fn square_loewner_realization_interpolates() {
        let model = diag2();
        let oracle = state_space_oracle(&model);
        let shifts = ShiftSet::from_real(&[1.0, 2.0]).unwrap();
        let block = build_data_block(&oracle, &unit_rule(), &shifts).unwrap();
        let rom = loewner_realization(&block).unwrap();
        for s in [c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0), c(2.0, 0.0)] {
            let h = eval_transfer(&model, s).unwrap();
            let hr = eval_transfer(&rom, s).unwrap();
            assert!((h - hr).norm() <= 1e-8 * h.norm(), "{s}: {h} vs {hr}");
        }
    }

    #[test]
    fn scalar_realizations_agree() {
        let oracle = state_space_oracle(&first_order());
        let rule = QuadratureRule::new(vec![0.0], vec![1.0]).unwrap();
        let shifts = ShiftSet::from_real(&[2.0]).unwrap();
        let block = build_data_block(&oracle, &rule, &shifts).unwrap();
        let a = assemble_rom(&block).unwrap();
        let b = loewner_realization(&block).unwrap();
        assert_eq!(b.e[(0, 0)], block.l[(0, 0)]);
        for s in [c(0.3, 0.0), c(0.0, 5.0), c(-3.0, 1.0)] {
            let (x, y) = (a.transfer(s).unwrap(), b.transfer(s).unwrap());
            assert!((x - y).norm() <= 1e-12 * x.norm());
        }
    }

    #[test]
    fn complex_shifts_yield_real_rom() {
        let model = diag2();
        let oracle = state_space_oracle(&model);
        let rule = quadrature::trapezoid_rule(0.1, 10.0, 20).unwrap();
        let shifts = ShiftSet::new(vec![c(1.0, 1.0), c(1.0, -1.0)]).unwrap();
        let block = build_data_block(&oracle, &rule, &shifts).unwrap();
        let raw = assemble_rom_complex(&block).unwrap();
        let (real, residue) = realify(&raw, &shifts);
        assert!(residue <= 1e-10, "{residue}");
        assert!(real.is_real());
        assert!(block.sample_formula_residual() < 1e-14);
        let (ortho, res) = assemble_rom_orthonormal(&block).unwrap();
        assert!(ortho.is_real() && res <= 1e-10);
        for w in [0.0, 0.5, 3.0] {
            let s = c(0.0, w);
            let (x, y) = (real.transfer(s).unwrap(), ortho.transfer(s).unwrap());
            assert!((x - y).norm() <= 1e-10 * x.norm());
        }
    }

    #[test]
    fn json_and_csv_payloads() {
        let oracle = state_space_oracle(&diag2());
        let rule = quadrature::trapezoid_rule(0.1, 10.0, 3).unwrap();
        let shifts = ShiftSet::new(vec![c(1.0, 1.0), c(1.0, -1.0)]).unwrap();
        let block = build_data_block(&oracle, &rule, &shifts).unwrap();
        let back = LoewnerDataBlock::from_json_str(&block.to_json_value().to_string()).unwrap();
        assert_eq!(back, block);
        let mut buf = Vec::new();
        block.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("matrix,row,col,re,im\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 6 * 2 + 6 + 2);
    }
}
