#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, RowDVector};
use quadisrk::benchmark::{generate_model, ModelKind};
use quadisrk::linalg::{self, CMat};
use quadisrk::loewner::realify;
use quadisrk::quadrature::{approx_gramian_q, trapezoid_rule};
use quadisrk::reduction::{petrov_galerkin, rational_krylov_basis};
use quadisrk::{Complex64, QuadratureRule, ReducedModel, ShiftSet, StateSpaceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn first_order() -> StateSpaceModel {
    StateSpaceModel::standard(
        DMatrix::from_element(1, 1, -1.0),
        DVector::from_element(1, 1.0),
        RowDVector::from_element(1, 1.0),
    )
    .unwrap()
}

pub fn random_model(n: usize, seed: u64) -> StateSpaceModel {
    generate_model(ModelKind::RandomStable, n, seed).unwrap()
}

/// `r` shifts in the right half-plane: conjugate pairs first, a real one
/// when `r` is odd or on a coin flip.
pub fn random_shifts(r: usize, rng: &mut ChaCha8Rng) -> ShiftSet {
    let mut v = Vec::with_capacity(r);
    while v.len() < r {
        let re = rng.gen_range(0.1..5.0);
        if r - v.len() >= 2 && rng.gen_bool(0.5) {
            let im = rng.gen_range(0.3..5.0);
            v.push(c(re, im));
            v.push(c(re, -im));
        } else {
            v.push(c(re, 0.0));
        }
    }
    ShiftSet::new(v).unwrap()
}

/// Log-trapezoid rule with `half` nodes per half axis over a randomly placed range.
pub fn random_rule(half: usize, rng: &mut ChaCha8Rng) -> QuadratureRule {
    let lo = 10f64.powf(rng.gen_range(-3.0..-1.0));
    let hi = 10f64.powf(rng.gen_range(1.0..3.0));
    trapezoid_rule(lo, hi, half).unwrap()
}

/// Petrov–Galerkin ROM with `V` the primitive rational Krylov matrix and
/// `W = Q̃ E V`, realified with the shift basis.
pub fn intrusive_quadrature_rom(model: &StateSpaceModel, rule: &QuadratureRule, shifts: &ShiftSet) -> ReducedModel {
    let v = rational_krylov_basis(model, shifts.as_slice()).unwrap();
    let q = approx_gramian_q(model, rule).unwrap();
    let w = linalg::complexify(&(q * model.e())) * &v;
    let rom = petrov_galerkin(model, &w, &v).unwrap();
    realify(&rom, shifts).0
}

pub fn rel_fro(a: &CMat, b: &CMat) -> f64 {
    linalg::frobenius(&(a - b)) / linalg::frobenius(b).max(f64::MIN_POSITIVE)
}

pub fn col(v: &quadisrk::linalg::CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}

pub fn row(v: &quadisrk::linalg::CRow) -> CMat {
    CMat::from_row_slice(1, v.len(), v.transpose().as_slice())
}

/// Largest relative matrix deviation over `(E, A, B, C)`.
pub fn rom_distance(a: &ReducedModel, b: &ReducedModel) -> f64 {
    rel_fro(&a.e, &b.e).max(rel_fro(&a.a, &b.a)).max(rel_fro(&col(&a.b), &col(&b.b))).max(rel_fro(&row(&a.c), &row(&b.c)))
}

/// Largest entrywise deviation relative to the largest entry of `b`.
pub fn rel_max(a: &CMat, b: &CMat) -> f64 {
    linalg::max_abs(&(a - b)) / linalg::max_abs(b).max(f64::MIN_POSITIVE)
}
