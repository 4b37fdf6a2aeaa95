//! SISO LTI systems in generalized state-space form `E x' = A x + B u`,
//! `y = C x`, and the system-level quantities built on them: transfer
//! function samples, poles, stability and the H2 / H∞ norms.

use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CRow, CVec};
use crate::lyapunov;

/// Condition number of `E` above which a model is rejected as singular.
pub const E_CONDITION_LIMIT: f64 = 1e12;

/// Poles with real part at or above `-STABILITY_MARGIN` count as unstable.
pub const STABILITY_MARGIN: f64 = 1e-12;

/// A real SISO descriptor system with nonsingular `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    e: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: RowDVector<f64>,
}

impl StateSpaceModel {
    pub fn new(e: DMatrix<f64>, a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        if a.ncols() != n || e.nrows() != n || e.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "E is {}x{}, A is {}x{}; both must be {n}x{n}",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != n || c.len() != n {
            return Err(Error::InvalidModel(format!(
                "B has {} rows and C has {} columns, expected {n}",
                b.len(),
                c.len()
            )));
        }
        let finite = e.iter().chain(a.iter()).chain(b.iter()).chain(c.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidModel("non-finite entry".into()));
        }
        let cond = linalg::condition_number(&linalg::complexify(&e));
        if !(cond <= E_CONDITION_LIMIT) {
            return Err(Error::InvalidModel(format!("E is numerically singular (condition {cond:e})")));
        }
        Ok(Self { e, a, b, c })
    }

    /// Model with `E = I`.
    pub fn standard(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(DMatrix::identity(n, n), a, b, c)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &RowDVector<f64> {
        &self.c
    }

    /// The same system with `(E, A, B, C)` replaced by `(Eᵀ, Aᵀ, Cᵀ, Bᵀ)`.
    pub fn transposed(&self) -> Self {
        Self {
            e: self.e.transpose(),
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
        }
    }

    /// `(sE - A)` as a complex matrix.
    pub fn resolvent_matrix(&self, s: Complex64) -> CMat {
        let n = self.n();
        CMat::from_fn(n, n, |i, j| s * self.e[(i, j)] - self.a[(i, j)])
    }

    /// Solves `(sE - A) x = rhs`.
    pub fn solve_shifted(&self, s: Complex64, rhs: &CMat) -> Result<CMat> {
        solve_checked(self.resolvent_matrix(s), rhs, s)
    }

    /// Solves `(sE - A)ᵀ x = rhs`.
    pub fn solve_shifted_transposed(&self, s: Complex64, rhs: &CMat) -> Result<CMat> {
        solve_checked(self.resolvent_matrix(s).transpose(), rhs, s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_model()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from_model(self))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

fn solve_checked(m: CMat, rhs: &CMat, s: Complex64) -> Result<CMat> {
    let scale = linalg::max_abs(&m).max(f64::MIN_POSITIVE);
    let lu = m.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |acc, z| acc.min(z.norm()));
    if !(min_pivot > 1e-14 * scale) {
        return Err(Error::SingularShift(s));
    }
    let x = lu.solve(rhs).ok_or(Error::SingularShift(s))?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularShift(s));
    }
    Ok(x)
}

/// On-disk model layout: row-major dense matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidModel(format!("{name} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelFile {
    pub fn into_model(self) -> Result<StateSpaceModel> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidModel("n must be positive".into()));
        }
        let e = matrix_from_rows("E", &self.e, n)?;
        let a = matrix_from_rows("A", &self.a, n)?;
        if self.b.len() != n || self.c.len() != n {
            return Err(Error::InvalidModel(format!("B and C must have length {n}")));
        }
        StateSpaceModel::new(e, a, DVector::from_vec(self.b), RowDVector::from_vec(self.c))
    }

    pub fn from_model(m: &StateSpaceModel) -> Self {
        Self {
            n: m.n(),
            e: matrix_to_rows(&m.e),
            a: matrix_to_rows(&m.a),
            b: m.b.iter().copied().collect(),
            c: m.c.iter().copied().collect(),
        }
    }
}

/// A reduced (or generally complex) descriptor realization `(E_r, A_r, B_r, C_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub e: CMat,
    pub a: CMat,
    pub b: CVec,
    pub c: CRow,
}

impl ReducedModel {
    pub fn new(e: CMat, a: CMat, b: CVec, c: CRow) -> Result<Self> {
        let r = a.nrows();
        if r == 0 {
            return Err(Error::InvalidModel("reduced order must be at least 1".into()));
        }
        if a.ncols() != r || e.nrows() != r || e.ncols() != r || b.len() != r || c.len() != r {
            return Err(Error::InvalidModel(format!("inconsistent reduced model shapes for r={r}")));
        }
        Ok(Self { e, a, b, c })
    }

    pub fn r(&self) -> usize {
        self.a.nrows()
    }

    /// All four matrices have exactly zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.e.iter().chain(self.a.iter()).chain(self.b.iter()).chain(self.c.iter()).all(|z| z.im == 0.0)
    }

    /// Largest imaginary magnitude relative to the largest entry magnitude.
    pub fn imag_residue(&self) -> f64 {
        let mut imag = 0.0_f64;
        let mut scale = 0.0_f64;
        for z in self.e.iter().chain(self.a.iter()).chain(self.b.iter()).chain(self.c.iter()) {
            imag = imag.max(z.im.abs());
            scale = scale.max(z.norm());
        }
        if scale == 0.0 {
            0.0
        } else {
            imag / scale
        }
    }

    /// Drops imaginary parts.
    pub fn to_real(&self) -> Self {
        let re = |z: &Complex64| Complex64::new(z.re, 0.0);
        Self { e: self.e.map(|z| re(&z)), a: self.a.map(|z| re(&z)), b: self.b.map(|z| re(&z)), c: self.c.map(|z| re(&z)) }
    }

    /// `T^H (E, A, B) T`, `C T` for a change of basis `T` applied on both sides.
    pub fn congruence(&self, t: &CMat) -> Self {
        let th = t.adjoint();
        Self { e: &th * &self.e * t, a: &th * &self.a * t, b: &th * &self.b, c: &self.c * t }
    }

    pub fn resolvent_matrix(&self, s: Complex64) -> CMat {
        &self.e * s - &self.a
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let rows = |m: &CMat, f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        let vec = |v: &[Complex64], f: fn(&Complex64) -> f64| -> Vec<f64> { v.iter().map(f).collect() };
        let re = |z: &Complex64| z.re;
        let im = |z: &Complex64| z.im;
        let mut obj = serde_json::json!({
            "n": self.r(),
            "r": self.r(),
            "E": rows(&self.e, re),
            "A": rows(&self.a, re),
            "B": vec(self.b.as_slice(), re),
            "C": vec(self.c.transpose().as_slice(), re),
        });
        if !self.is_real() {
            obj["E_im"] = serde_json::json!(rows(&self.e, im));
            obj["A_im"] = serde_json::json!(rows(&self.a, im));
            obj["B_im"] = serde_json::json!(vec(self.b.as_slice(), im));
            obj["C_im"] = serde_json::json!(vec(self.c.transpose().as_slice(), im));
        }
        obj
    }
}

impl From<&StateSpaceModel> for ReducedModel {
    /// The order-n realization obtained with `V = W = I`.
    fn from(m: &StateSpaceModel) -> Self {
        Self {
            e: linalg::complexify(&m.e),
            a: linalg::complexify(&m.a),
            b: linalg::complexify_vec(&m.b),
            c: linalg::complexify_row(&m.c),
        }
    }
}

/// Common surface of full and reduced models.
pub trait LtiSystem {
    fn order(&self) -> usize;

    /// `C (sE - A)^{-1} B` via one linear solve.
    fn transfer(&self, s: Complex64) -> Result<Complex64>;

    /// Unsorted generalized eigenvalues of `(A, E)`.
    fn raw_poles(&self) -> Result<Vec<Complex64>>;

    fn to_complex(&self) -> ReducedModel;
}

impl LtiSystem for StateSpaceModel {
    fn order(&self) -> usize {
        self.n()
    }

    fn transfer(&self, s: Complex64) -> Result<Complex64> {
        let rhs = CMat::from_iterator(self.n(), 1, self.b.iter().map(|&x| Complex64::new(x, 0.0)));
        let x = self.solve_shifted(s, &rhs)?;
        Ok(self.c.iter().zip(x.iter()).map(|(&ci, xi)| xi * ci).sum())
    }

    fn raw_poles(&self) -> Result<Vec<Complex64>> {
        let lu = self.e.clone().lu();
        let m = lu.solve(&self.a).ok_or_else(|| Error::PencilFailure("E is singular".into()))?;
        linalg::eigenvalues_real(&m)
    }

    fn to_complex(&self) -> ReducedModel {
        ReducedModel::from(self)
    }
}

impl LtiSystem for ReducedModel {
    fn order(&self) -> usize {
        self.r()
    }

    fn transfer(&self, s: Complex64) -> Result<Complex64> {
        let rhs = CMat::from_column_slice(self.r(), 1, self.b.as_slice());
        let x = solve_checked(self.resolvent_matrix(s), &rhs, s)?;
        Ok((&self.c * x)[(0, 0)])
    }

    fn raw_poles(&self) -> Result<Vec<Complex64>> {
        let singular = || Error::PencilFailure("E_r is singular".into());
        if linalg::condition_number(&self.e) > 1e14 {
            return Err(singular());
        }
        if self.is_real() {
            let e = linalg::real_part(&self.e);
            let a = linalg::real_part(&self.a);
            let m = e.lu().solve(&a).ok_or_else(singular)?;
            linalg::eigenvalues_real(&m)
        } else {
            let m = self.e.clone().lu().solve(&self.a).ok_or_else(singular)?;
            linalg::eigenvalues_complex(&m)
        }
    }

    fn to_complex(&self) -> ReducedModel {
        self.clone()
    }
}

pub fn eval_transfer<S: LtiSystem + ?Sized>(sys: &S, s: Complex64) -> Result<Complex64> {
    sys.transfer(s)
}

/// Generalized eigenvalues of `(A, E)` sorted by real part, then imaginary part.
pub fn poles<S: LtiSystem + ?Sized>(sys: &S) -> Result<Vec<Complex64>> {
    let mut p = sys.raw_poles()?;
    linalg::sort_lex(&mut p);
    Ok(p)
}

pub fn spectral_abscissa<S: LtiSystem + ?Sized>(sys: &S) -> Result<f64> {
    Ok(sys.raw_poles()?.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_asymptotically_stable<S: LtiSystem + ?Sized>(sys: &S) -> Result<bool> {
    Ok(spectral_abscissa(sys)? < -STABILITY_MARGIN)
}

fn require_stable<S: LtiSystem + ?Sized>(sys: &S) -> Result<()> {
    let alpha = spectral_abscissa(sys)?;
    if alpha < -STABILITY_MARGIN {
        Ok(())
    } else {
        Err(Error::UnstableSystem(alpha))
    }
}

/// `sqrt(C P C^H)` with `P` the reachability Gramian.
pub fn h2_norm<S: LtiSystem + ?Sized>(sys: &S) -> Result<f64> {
    require_stable(sys)?;
    let rm = sys.to_complex();
    let p = lyapunov::reachability_gramian_complex(&rm)?;
    let v = (&rm.c * p * rm.c.adjoint())[(0, 0)].re;
    Ok(v.max(0.0).sqrt())
}

/// Frequency grid used by [`hinf_norm`]. `None` bounds are derived from the
/// pole magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfOptions {
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub points: usize,
    pub refine_candidates: usize,
}

impl Default for HinfOptions {
    fn default() -> Self {
        Self { omega_min: None, omega_max: None, points: 2000, refine_candidates: 8 }
    }
}

/// Peak gain over a logarithmic grid (plus `ω = 0` and the pole
/// frequencies), refined by golden-section search around the best local maxima.
pub fn hinf_norm<S: LtiSystem + ?Sized>(sys: &S) -> Result<f64> {
    hinf_norm_with(sys, &HinfOptions::default())
}

pub fn hinf_norm_with<S: LtiSystem + ?Sized>(sys: &S, opts: &HinfOptions) -> Result<f64> {
    let pole_list = sys.raw_poles()?;
    let alpha = pole_list.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max);
    if !(alpha < -STABILITY_MARGIN) {
        return Err(Error::UnstableSystem(alpha));
    }
    let mags: Vec<f64> = pole_list.iter().map(|p| p.norm()).filter(|m| *m > 0.0).collect();
    let lo_pole = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_pole = mags.iter().cloned().fold(0.0_f64, f64::max);
    let w_lo = opts.omega_min.unwrap_or(if lo_pole.is_finite() { lo_pole * 1e-3 } else { 1e-6 });
    let w_hi = opts.omega_max.unwrap_or((hi_pole * 1e3).max(w_lo * 10.0));
    let points = opts.points.max(2);

    let mut grid: Vec<f64> = Vec::with_capacity(points + pole_list.len() + 1);
    grid.push(0.0);
    let (l0, l1) = (w_lo.ln(), w_hi.ln());
    for k in 0..points {
        grid.push((l0 + (l1 - l0) * k as f64 / (points - 1) as f64).exp());
    }
    grid.extend(pole_list.iter().map(|p| p.im.abs()).filter(|w| *w > 0.0 && *w <= w_hi));
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();

    let gain = |w: f64| -> Result<f64> { Ok(sys.transfer(Complex64::new(0.0, w))?.norm()) };
    let values: Vec<f64> = grid.iter().map(|&w| gain(w)).collect::<Result<_>>()?;
    let mut best = values.iter().cloned().fold(0.0_f64, f64::max);

    let mut maxima: Vec<usize> = (0..grid.len())
        .filter(|&k| {
            let left = k == 0 || values[k] >= values[k - 1];
            let right = k + 1 == grid.len() || values[k] >= values[k + 1];
            left && right
        })
        .collect();
    maxima.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    maxima.truncate(opts.refine_candidates.max(1));

    for k in maxima {
        let a = grid[k.saturating_sub(1)];
        let b = grid[(k + 1).min(grid.len() - 1)];
        if b > a {
            best = best.max(golden_section_max(&gain, a, b)?);
        }
    }
    Ok(best)
}

fn golden_section_max(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<f64> {
    let ratio = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..100 {
        if (b - a) <= 1e-12 * b.abs().max(1e-300) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(f1.max(f2))
}

/// Relative H2 and H∞ errors of a reduced model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub h2_rel: f64,
    pub hinf_rel: f64,
}

/// Block-diagonal error system with output `[C, -C_r]`.
pub fn error_system(full: &StateSpaceModel, rom: &ReducedModel) -> ReducedModel {
    let n = full.n();
    let r = rom.r();
    let f = full.to_complex();
    let mut e = CMat::zeros(n + r, n + r);
    let mut a = CMat::zeros(n + r, n + r);
    e.view_mut((0, 0), (n, n)).copy_from(&f.e);
    e.view_mut((n, n), (r, r)).copy_from(&rom.e);
    a.view_mut((0, 0), (n, n)).copy_from(&f.a);
    a.view_mut((n, n), (r, r)).copy_from(&rom.a);
    let mut b = CVec::zeros(n + r);
    b.rows_mut(0, n).copy_from(&f.b);
    b.rows_mut(n, r).copy_from(&rom.b);
    let mut c = CRow::zeros(n + r);
    c.columns_mut(0, n).copy_from(&f.c);
    c.columns_mut(n, r).copy_from(&(-&rom.c));
    ReducedModel { e, a, b, c }
}

/// Below this relative size the Gramian-based error norm is dominated by
/// cancellation and the frequency integral is used instead.
const H2_CANCELLATION_LIMIT: f64 = 1e-3;

/// `‖H - H_r‖₂` from `(1/2π) ∫ |H(iω) - H_r(iω)|² dω`, with the two transfer
/// functions evaluated separately so small errors are not lost to
/// cancellation. Globally adaptive Gauss–Kronrod on segments split around
/// the pole frequencies, plus a mapped tail.
pub fn h2_distance_by_integration<S, T>(a: &S, b: &T) -> Result<f64>
where
    S: LtiSystem + ?Sized,
    T: LtiSystem + ?Sized,
{
    let mut breaks = vec![0.0];
    for p in a.raw_poles()?.into_iter().chain(b.raw_poles()?) {
        let (w, d) = (p.im.abs(), p.re.abs());
        breaks.extend([w, w - d, w + d, w - 10.0 * d, w + 10.0 * d, d]);
    }
    breaks.retain(|w| w.is_finite() && *w >= 0.0);
    breaks.sort_by(|x, y| x.total_cmp(y));
    breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs().max(1e-300));
    let top = breaks.last().copied().unwrap_or(0.0).max(1.0);
    if top > *breaks.last().unwrap() {
        breaks.push(top);
    }

    // (|H - H_r|², |H|² + |H_r|²) summed over ±ω; on the tail the variable is
    // t ∈ (0, 1] with ω = top/t.
    let integrand = |x: f64, tail: bool| -> Result<[f64; 2]> {
        let (w, jac) = if tail {
            if x <= 0.0 {
                return Ok([0.0; 2]);
            }
            (top / x, top / (x * x))
        } else {
            (x, 1.0)
        };
        let mut out = [0.0; 2];
        for s in [Complex64::new(0.0, w), Complex64::new(0.0, -w)] {
            let (ha, hb) = (a.transfer(s)?, b.transfer(s)?);
            out[0] += (ha - hb).norm_sqr() * jac;
            out[1] += (ha.norm_sqr() + hb.norm_sqr()) * jac;
        }
        Ok(out)
    };
    let mut pieces: Vec<(f64, f64, bool)> = breaks.windows(2).map(|p| (p[0], p[1], false)).collect();
    pieces.push((0.0, 1.0, true));
    let total = adaptive_integral(&integrand, pieces)?;
    Ok((total / (2.0 * std::f64::consts::PI)).max(0.0).sqrt())
}

#[allow(clippy::excessive_precision)]
const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
/// Weights of the embedded 7-point Gauss rule, matched to `GK_NODES[1], [3], [5], [7]`.
#[allow(clippy::excessive_precision)]
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];
const GK_REL_TOL: f64 = 1e-10;
const GK_MAX_PIECES: usize = 4000;

struct Piece {
    a: f64,
    b: f64,
    tail: bool,
    value: f64,
    reference: f64,
    error: f64,
}

fn gk15(f: &dyn Fn(f64, bool) -> Result<[f64; 2]>, a: f64, b: f64, tail: bool) -> Result<Piece> {
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    let (mut kronrod, mut gauss, mut reference) = (0.0, 0.0, 0.0);
    for (k, (&x, &wk)) in GK_NODES.iter().zip(GK_WEIGHTS.iter()).enumerate() {
        let (v, r) = if x == 0.0 {
            let m = f(mid, tail)?;
            (m[0], m[1])
        } else {
            let (l, u) = (f(mid - half * x, tail)?, f(mid + half * x, tail)?);
            (l[0] + u[0], l[1] + u[1])
        };
        kronrod += wk * v;
        reference += wk * r;
        if k % 2 == 1 {
            gauss += GAUSS_WEIGHTS[k / 2] * v;
        }
    }
    Ok(Piece { a, b, tail, value: kronrod * half, reference: reference * half, error: ((kronrod - gauss) * half).abs() })
}

/// Integrates the first component of `f` over the pieces, bisecting the
/// piece with the largest error estimate until the total error falls below
/// the relative tolerance or the rounding floor set by the second component.
fn adaptive_integral(f: &dyn Fn(f64, bool) -> Result<[f64; 2]>, pieces: Vec<(f64, f64, bool)>) -> Result<f64> {
    let mut work: Vec<Piece> =
        pieces.into_iter().filter(|p| p.1 > p.0).map(|(a, b, tail)| gk15(f, a, b, tail)).collect::<Result<_>>()?;
    loop {
        let value: f64 = work.iter().map(|p| p.value).sum();
        let reference: f64 = work.iter().map(|p| p.reference).sum();
        let error: f64 = work.iter().map(|p| p.error).sum();
        // rounding in H - H_r is about eps·|H|, which perturbs |H - H_r|² by
        // roughly eps·|H - H_r|·|H|
        let floor = 1e-13 * (value.abs() * reference).sqrt() + 1e-28 * reference;
        if error <= (GK_REL_TOL * value.abs()).max(floor) || work.len() >= GK_MAX_PIECES {
            return Ok(value);
        }
        let worst = (0..work.len()).max_by(|&i, &j| work[i].error.total_cmp(&work[j].error)).expect("non-empty");
        let p = work.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // cannot split further; freeze this piece
            work.push(Piece { error: 0.0, ..p });
            continue;
        }
        work.push(gk15(f, p.a, mid, p.tail)?);
        work.push(gk15(f, mid, p.b, p.tail)?);
    }
}

pub fn relative_errors(full: &StateSpaceModel, rom: &ReducedModel) -> Result<ErrorNorms> {
    require_stable(full)?;
    require_stable(rom)?;
    let err = error_system(full, rom);
    let opts = HinfOptions::default();
    let h2_full = h2_norm(full)?;
    let mut h2_rel = h2_norm(&err)? / h2_full;
    if h2_rel < H2_CANCELLATION_LIMIT {
        h2_rel = h2_distance_by_integration(full, rom)? / h2_full;
    }
    Ok(ErrorNorms { h2_rel, hinf_rel: hinf_norm_with(&err, &opts)? / hinf_norm_with(full, &opts)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn scalar(e: f64, a: f64, b: f64, cc: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, e),
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, b),
            RowDVector::from_element(1, cc),
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

    #[test]
    fn transfer_examples() {
        let m = scalar(1.0, -1.0, 1.0, 1.0);
        assert!((eval_transfer(&m, c(0.0, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!((eval_transfer(&m, c(1.0, 0.0)).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
        assert!((eval_transfer(&diag2(), c(0.0, 0.0)).unwrap() - c(1.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn transfer_at_pole_is_singular_shift() {
        let m = scalar(1.0, -1.0, 1.0, 1.0);
        assert!(matches!(eval_transfer(&m, c(-1.0, 0.0)), Err(Error::SingularShift(_))));
    }

    #[test]
    fn pole_examples() {
        assert_eq!(poles(&diag2()).unwrap(), vec![c(-2.0, 0.0), c(-1.0, 0.0)]);
        let p = poles(&scalar(2.0, -1.0, 1.0, 1.0)).unwrap();
        assert!((p[0] - c(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn stability_examples() {
        assert!(is_asymptotically_stable(&scalar(1.0, -1.0, 1.0, 1.0)).unwrap());
        assert!(!is_asymptotically_stable(&scalar(1.0, 1.0, 1.0, 1.0)).unwrap());
        let border = StateSpaceModel::standard(
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1e-13])),
            DVector::from_vec(vec![1.0, 1.0]),
            RowDVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        assert!(!is_asymptotically_stable(&border).unwrap());
    }

    #[test]
    fn h2_examples() {
        let h = h2_norm(&scalar(1.0, -1.0, 1.0, 1.0)).unwrap();
        assert!((h - 0.5_f64.sqrt()).abs() < 1e-14);
        let h = h2_norm(&scalar(1.0, -2.0, 1.0, 1.0)).unwrap();
        assert!((h - 0.5).abs() < 1e-14);
        assert!(matches!(h2_norm(&scalar(1.0, 1.0, 1.0, 1.0)), Err(Error::UnstableSystem(_))));
    }

    #[test]
    fn hinf_examples() {
        let h = hinf_norm(&scalar(1.0, -1.0, 1.0, 1.0)).unwrap();
        assert!((h - 1.0).abs() < 1e-12);
        let h = hinf_norm(&scalar(1.0, -2.0, 1.0, 1.0)).unwrap();
        assert!((h - 0.5).abs() < 1e-12);
        assert!(matches!(hinf_norm(&scalar(1.0, 0.5, 1.0, 1.0)), Err(Error::UnstableSystem(_))));
    }

    #[test]
    fn singular_e_rejected() {
        let r = StateSpaceModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DVector::from_element(2, 1.0),
            RowDVector::from_element(2, 1.0),
        );
        assert!(matches!(r, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn json_shapes_validated() {
        let good = r#"{"n":1,"E":[[1.0]],"A":[[-1.0]],"B":[1.0],"C":[1.0]}"#;
        assert_eq!(StateSpaceModel::from_json_str(good).unwrap(), scalar(1.0, -1.0, 1.0, 1.0));
        let bad = r#"{"n":2,"E":[[1.0]],"A":[[-1.0]],"B":[1.0],"C":[1.0]}"#;
        assert!(matches!(StateSpaceModel::from_json_str(bad), Err(Error::InvalidModel(_))));
        let m = diag2();
        assert_eq!(StateSpaceModel::from_json_str(&m.to_json_string().unwrap()).unwrap(), m);
    }

    #[test]
    fn identity_rom_has_zero_error() {
        let m = diag2();
        let rom = ReducedModel::from(&m);
        let err = relative_errors(&m, &rom).unwrap();
        assert!(err.h2_rel <= 1e-10 && err.hinf_rel <= 1e-10, "{err:?}");
    }

    #[test]
    fn integrated_h2_matches_gramian() {
        let m = diag2();
        let zero = ReducedModel::new(
            CMat::from_element(1, 1, c(1.0, 0.0)),
            CMat::from_element(1, 1, c(-3.0, 0.0)),
            CVec::zeros(1),
            CRow::from_element(1, c(1.0, 0.0)),
        )
        .unwrap();
        let by_gramian = h2_norm(&m).unwrap();
        let by_integral = h2_distance_by_integration(&m, &zero).unwrap();
        assert!((by_gramian - by_integral).abs() <= 1e-9 * by_gramian, "{by_gramian} {by_integral}");
    }

    #[test]
    fn zero_rom_has_unit_h2_error() {
        let m = diag2();
        let rom = ReducedModel::new(
            CMat::from_element(1, 1, c(1.0, 0.0)),
            CMat::from_element(1, 1, c(-3.0, 0.0)),
            CVec::zeros(1),
            CRow::from_element(1, c(1.0, 0.0)),
        )
        .unwrap();
        let err = relative_errors(&m, &rom).unwrap();
        assert_eq!(err.h2_rel, 1.0);
    }

    #[test]
    fn rom_json_mirrors_model_format() {
        let rom = ReducedModel::from(&diag2());
        let v = rom.to_json_value();
        assert_eq!(v["r"], 2);
        assert_eq!(v["n"], 2);
        assert!(v.get("E_im").is_none());
        let reparsed = StateSpaceModel::from_json_str(&v.to_string()).unwrap();
        assert_eq!(reparsed, diag2());
    }
}
