//! Iterative shift-selection reduction: intrusive ISRK, data-driven
//! Quad-ISRK and two-sided IRKA.
//!
//! All three share the same loop. Build a ROM at the current shifts, mirror
//! its poles into new shifts, stop when the sorted shift sets agree to `tau`.
//! The ROM returned is the one built from the final shifts of the trace.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::loewner;
use crate::lti::{self, LtiSystem, ReducedModel, StateSpaceModel};
use crate::lyapunov;
use crate::quadrature::QuadratureRule;
use crate::sampling::FrequencyResponseOracle;
use crate::shifts::ShiftSet;

/// Relative distance under which two mirrored poles count as the same shift.
const REPEAT_TOL: f64 = 1e-12;
const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionConfig {
    pub r: usize,
    pub tau: f64,
    pub max_iter: usize,
    /// `None` uses `r` log-spaced reals in `[0.1, 10]`.
    pub initial_shifts: Option<ShiftSet>,
    /// Orthonormalize the (realified) projection bases; for Quad-ISRK, assemble
    /// in the basis with `E_r = I`. On by default; the primitive Krylov columns
    /// lose several digits once shifts cluster.
    pub orthonormalize: bool,
}

impl ReductionConfig {
    pub fn new(r: usize) -> Self {
        Self { r, tau: 1e-4, max_iter: 100, initial_shifts: None, orthonormalize: true }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_initial_shifts(mut self, shifts: ShiftSet) -> Self {
        self.initial_shifts = Some(shifts);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidConfig("r must be at least 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    fn start_shifts(&self) -> Result<ShiftSet> {
        let shifts = match &self.initial_shifts {
            Some(s) => s.clone(),
            None => ShiftSet::log_spaced(self.r, 0.1, 10.0)?,
        };
        if shifts.len() != self.r {
            return Err(Error::SizeMismatch { expected: self.r, got: shifts.len() });
        }
        if !shifts.is_conjugate_closed() {
            return Err(Error::InvalidShifts("initial shifts are not closed under conjugation".into()));
        }
        Ok(shifts.with_iteration(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Shifts the ROM of this iteration was built from.
    pub shifts: Vec<Complex64>,
    /// `shift_change` between these shifts and the mirrored ROM poles.
    pub rel_change: f64,
    pub poles: Vec<Complex64>,
    /// Oracle queries issued during this iteration.
    pub queries: usize,
    /// Set when the mirrored poles contained repeats that were jittered apart.
    pub jittered: bool,
    /// Relative imaginary residue left by the realifying basis change.
    pub imag_residue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub status: Status,
    /// Index into `records` of the returned ROM.
    pub selected: usize,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn final_shifts(&self) -> &[Complex64] {
        &self.records[self.selected].shifts
    }

    pub fn total_queries(&self) -> usize {
        self.records.iter().map(|r| r.queries).sum()
    }

    /// Columns `iteration,shifts,rel_change,poles,queries,total_queries`;
    /// complex lists are `;`-separated `a+bi` strings.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "shifts", "rel_change", "poles", "queries", "total_queries"])?;
        let mut total = 0;
        for rec in &self.records {
            total += rec.queries;
            w.write_record([
                rec.iteration.to_string(),
                format_complex_list(&rec.shifts),
                format!("{:e}", rec.rel_change),
                format_complex_list(&rec.poles),
                rec.queries.to_string(),
                total.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_complex_list(values: &[Complex64]) -> String {
    // adding 0.0 folds -0.0 into 0.0
    values.iter().map(|z| format!("{}{:+}i", z.re + 0.0, z.im + 0.0)).collect::<Vec<_>>().join(";")
}

/// Columns `(η_j E - A)^{-1} B`.
pub fn rational_krylov_basis(model: &StateSpaceModel, shifts: &[Complex64]) -> Result<CMat> {
    let b = CMat::from_column_slice(model.n(), 1, linalg::complexify_vec(model.b()).as_slice());
    let cols = shifts.iter().map(|&s| model.solve_shifted(s, &b).map(|x| x.column(0).into_owned())).collect::<Result<Vec<_>>>()?;
    Ok(CMat::from_columns(&cols))
}

/// `(Wᴴ E V, Wᴴ A V, Wᴴ B, C V)`.
pub fn petrov_galerkin(model: &StateSpaceModel, w: &CMat, v: &CMat) -> Result<ReducedModel> {
    let full = model.to_complex();
    let wh = w.adjoint();
    ReducedModel::new(&wh * &full.e * v, &wh * &full.a * v, &wh * &full.b, &full.c * v)
}

/// Mirrored reduced poles, reflected into the right half-plane, with exact
/// repeats jittered apart. The flag reports whether jitter was applied.
pub fn update_shifts(rom: &ReducedModel) -> Result<ShiftSet> {
    Ok(mirrored_shifts(rom)?.0)
}

fn mirrored_shifts(rom: &ReducedModel) -> Result<(ShiftSet, bool)> {
    let p = rom.raw_poles()?;
    if p.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::PencilFailure("non-finite reduced pole".into()));
    }
    let mirrored: Vec<Complex64> = p
        .iter()
        .map(|&l| {
            let s = -l;
            if s.re <= 0.0 {
                Complex64::new(-s.re, s.im)
            } else {
                s
            }
        })
        .collect();
    let set = ShiftSet::new(mirrored)?;
    let (values, jittered) = separate_repeats(set.as_slice());
    Ok((if jittered { ShiftSet::new(values)? } else { set }, jittered))
}

/// Scales the k-th repeat of a value by `1 + k·1e-8`. Works on the closed
/// upper half and real axis so conjugate pairs stay paired.
fn separate_repeats(values: &[Complex64]) -> (Vec<Complex64>, bool) {
    let mut kept: Vec<Complex64> = Vec::with_capacity(values.len());
    let mut jittered = false;
    for &z in values.iter().filter(|z| z.im >= 0.0) {
        let repeats = kept.iter().filter(|k| (**k - z).norm() <= REPEAT_TOL * z.norm().max(1.0)).count();
        if repeats > 0 {
            jittered = true;
            kept.push(z * (1.0 + JITTER * repeats as f64));
        } else {
            kept.push(z);
        }
    }
    let lower: Vec<Complex64> = kept.iter().filter(|z| z.im > 0.0).map(|z| z.conj()).collect();
    kept.extend(lower);
    if kept.len() != values.len() {
        // not conjugate-closed; leave untouched
        return (values.to_vec(), false);
    }
    (kept, jittered)
}

/// Largest entrywise relative change between the sorted sets.
pub fn shift_change(old: &ShiftSet, new: &ShiftSet) -> Result<f64> {
    if old.len() != new.len() {
        return Err(Error::SizeMismatch { expected: old.len(), got: new.len() });
    }
    let mut a = old.as_slice().to_vec();
    let mut b = new.as_slice().to_vec();
    linalg::sort_lex(&mut a);
    linalg::sort_lex(&mut b);
    Ok(a.iter().zip(&b).map(|(o, n)| (n - o).norm() / o.norm().max(1e-14)).fold(0.0, f64::max))
}

/// One step's output: the ROM plus bookkeeping for the trace.
struct Step {
    rom: ReducedModel,
    queries: usize,
    imag_residue: f64,
}

/// The shared fixed-point loop.
fn iterate<F>(config: &ReductionConfig, mut step: F) -> Result<(ReducedModel, IterationTrace)>
where
    F: FnMut(&ShiftSet) -> Result<Step>,
{
    config.validate()?;
    let mut shifts = config.start_shifts()?;
    let mut records = Vec::new();
    let mut best: Option<(usize, ReducedModel)> = None;
    let mut jittered = false;
    for k in 1..=config.max_iter {
        let out = step(&shifts)?;
        let (next, jitter_next) = mirrored_shifts(&out.rom)?;
        let change = shift_change(&shifts, &next)?;
        records.push(IterationRecord {
            iteration: k,
            shifts: shifts.as_slice().to_vec(),
            rel_change: change,
            poles: lti::poles(&out.rom)?,
            queries: out.queries,
            jittered,
            imag_residue: out.imag_residue,
        });
        let idx = records.len() - 1;
        if change < config.tau {
            let trace = IterationTrace { records, status: Status::Converged, selected: idx };
            return Ok((out.rom, trace));
        }
        let improves = best.as_ref().is_none_or(|(b, _)| change < records[*b].rel_change);
        if improves {
            best = Some((idx, out.rom));
        }
        shifts = next.with_iteration(k);
        jittered = jitter_next;
    }
    let (selected, rom) = best.expect("max_iter >= 1");
    Ok((rom, IterationTrace { records, status: Status::MaxIterations, selected }))
}

fn check_order(model: &StateSpaceModel, config: &ReductionConfig) -> Result<()> {
    if config.r > model.n() {
        return Err(Error::InvalidConfig(format!("r = {} exceeds the model order {}", config.r, model.n())));
    }
    Ok(())
}

/// Applies the conjugate-pair basis change to the columns of `k`, returning
/// the real part and the relative imaginary residue it discarded.
fn realified_columns(k: &CMat, shifts: &ShiftSet, orthonormalize: bool) -> Result<(DMatrix<f64>, f64)> {
    let t = shifts
        .realification_basis()
        .ok_or_else(|| Error::InvalidShifts("shifts are not closed under conjugation".into()))?;
    let kt = k * t;
    let scale = linalg::max_abs(&kt).max(f64::MIN_POSITIVE);
    let residue = linalg::max_abs_imag(&kt) / scale;
    let re = linalg::real_part(&kt);
    let basis = if orthonormalize { re.qr().q() } else { re };
    Ok((basis, residue))
}

/// Intrusive ISRK with the exact observability Gramian: `V` from the
/// rational Krylov matrix, `W = Q E V`.
pub fn isrk(model: &StateSpaceModel, config: &ReductionConfig) -> Result<(ReducedModel, IterationTrace)> {
    config.validate()?;
    check_order(model, config)?;
    let q = lyapunov::solve_lyapunov_q(model)?;
    let qe = q.matrix() * model.e();
    iterate(config, |shifts| {
        let k = rational_krylov_basis(model, shifts.as_slice())?;
        let (v, imag_residue) = realified_columns(&k, shifts, config.orthonormalize)?;
        let w = &qe * &v;
        let rom = petrov_galerkin(model, &linalg::complexify(&w), &linalg::complexify(&v))?;
        Ok(Step { rom, queries: 0, imag_residue })
    })
}

/// Two-sided IRKA: right and left rational Krylov bases at the same shifts.
pub fn irka(model: &StateSpaceModel, config: &ReductionConfig) -> Result<(ReducedModel, IterationTrace)> {
    config.validate()?;
    check_order(model, config)?;
    let dual = model.transposed();
    iterate(config, |shifts| {
        let kv = rational_krylov_basis(model, shifts.as_slice())?;
        let kw = rational_krylov_basis(&dual, shifts.as_slice())?;
        let (v, rv) = realified_columns(&kv, shifts, config.orthonormalize)?;
        let (w, rw) = realified_columns(&kw, shifts, config.orthonormalize)?;
        let rom = petrov_galerkin(model, &linalg::complexify(&w), &linalg::complexify(&v))?;
        Ok(Step { rom, queries: 0, imag_residue: rv.max(rw) })
    })
}

/// Data-driven ISRK. Node samples are taken once and reused; each iteration
/// then costs `r` fresh samples at the current shifts.
pub fn quad_isrk(
    oracle: &dyn FrequencyResponseOracle,
    rule: &QuadratureRule,
    config: &ReductionConfig,
) -> Result<(ReducedModel, IterationTrace)> {
    config.validate()?;
    if config.r > rule.len() {
        return Err(Error::InvalidConfig(format!("r = {} exceeds the number of nodes {}", config.r, rule.len())));
    }
    let mut node_values: Option<Vec<Complex64>> = None;
    iterate(config, |shifts| {
        let mut queries = 0;
        if node_values.is_none() {
            let samples = rule.nodes().into_iter().map(|s| oracle.sample(s)).collect::<Result<Vec<_>>>()?;
            queries += samples.len();
            node_values = Some(samples);
        }
        let shift_values = shifts.as_slice().iter().map(|&s| oracle.sample(s)).collect::<Result<Vec<_>>>()?;
        queries += shift_values.len();
        let nodes = node_values.as_deref().expect("sampled above");
        let block = loewner::data_block_from_samples(rule, shifts, nodes, &shift_values)?;
        let (rom, imag_residue) = if config.orthonormalize {
            loewner::assemble_rom_orthonormal(&block)?
        } else {
            loewner::realify(&loewner::assemble_rom_complex(&block)?, shifts)
        };
        Ok(Step { rom, queries, imag_residue })
    })
}

/// Transfer-function values of `sys` at `points`.
pub fn sample_transfer<S: LtiSystem + ?Sized>(sys: &S, points: &[Complex64]) -> Result<CVec> {
    Ok(CVec::from_vec(points.iter().map(|&s| sys.transfer(s)).collect::<Result<_>>()?))
}
