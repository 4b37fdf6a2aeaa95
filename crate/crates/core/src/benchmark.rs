//! Synthetic benchmark models and error-vs-order sweeps.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{self, StateSpaceModel};
use crate::quadrature::{self, QuadratureRule};
use crate::reduction::{self, IterationTrace, ReductionConfig};
use crate::sampling::{caching_oracle, state_space_oracle};
use crate::ReducedModel;

/// Environment variable capping the number of concurrently running sweep cells.
pub const THREADS_ENV: &str = "QUADISRK_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ModalBeam,
    RcLadder,
    RandomStable,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modal-beam" | "modal" => Ok(Self::ModalBeam),
            "rc-ladder" => Ok(Self::RcLadder),
            "random-stable" => Ok(Self::RandomStable),
            other => Err(Error::InvalidSpec(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Irka,
    Isrk,
    QuadIsrk,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Irka, Method::Isrk, Method::QuadIsrk];

    pub fn name(self) -> &'static str {
        match self {
            Method::Irka => "irka",
            Method::Isrk => "isrk",
            Method::QuadIsrk => "quad-isrk",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown method '{s}' (expected irka, isrk or quad-isrk)")))
    }
}

/// Trapezoid rule parameters: `half_count` log-spaced nodes on
/// `[omega_min, omega_max]`, mirrored to the negative axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub half_count: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { omega_min: 1e-2, omega_max: 1e2, half_count: 200 }
    }
}

impl QuadratureSpec {
    pub fn rule(&self) -> Result<QuadratureRule> {
        quadrature::trapezoid_rule(self.omega_min, self.omega_max, self.half_count)
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_tau() -> f64 {
    1e-4
}

fn default_max_iter() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub model: ModelKind,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    pub r_list: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl BenchmarkSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_list.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidSpec("r_list and methods must be non-empty".into()));
        }
        if let Some(&r) = self.r_list.iter().find(|&&r| r == 0 || r > self.n) {
            return Err(Error::InvalidSpec(format!("r = {r} outside 1..={}", self.n)));
        }
        if !(self.tau > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidSpec("tau must be positive and max_iter at least 1".into()));
        }
        check_dimension(self.model, self.n)?;
        self.quadrature.rule().map_err(|e| Error::InvalidSpec(format!("quadrature: {e}")))?;
        Ok(())
    }

    fn config(&self, r: usize) -> ReductionConfig {
        ReductionConfig::new(r).with_tau(self.tau).with_max_iter(self.max_iter)
    }
}

fn check_dimension(kind: ModelKind, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidSpec(format!("n must be at least 2, got {n}")));
    }
    if kind == ModelKind::ModalBeam && !n.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!("modal-beam models need even n, got {n}")));
    }
    Ok(())
}

/// Deterministic synthetic model of the given kind; stability is checked
/// before returning.
pub fn generate_model(kind: ModelKind, n: usize, seed: u64) -> Result<StateSpaceModel> {
    check_dimension(kind, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = match kind {
        ModelKind::ModalBeam => modal_beam(n, &mut rng)?,
        ModelKind::RcLadder => rc_ladder(n, &mut rng)?,
        ModelKind::RandomStable => random_stable(n, &mut rng)?,
    };
    if !lti::is_asymptotically_stable(&model)? {
        return Err(Error::InvalidSpec(format!("generated {kind:?} model is not stable")));
    }
    Ok(model)
}

fn log_space(lo: f64, hi: f64, k: usize, count: usize) -> f64 {
    if count == 1 {
        return (lo * hi).sqrt();
    }
    (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (count - 1) as f64).exp()
}

/// Decoupled oscillators `[[0, ω], [-ω, -2ζω]]` with natural frequencies
/// log-spaced in `[0.1, 100]` and damping ratios log-spaced from 0.1 down to
/// 0.001 (lowest mode most damped). The output picks up the displacement-like
/// state scaled by `1/ω`, so the gain rolls off at high frequency.
fn modal_beam(n: usize, rng: &mut ChaCha8Rng) -> Result<StateSpaceModel> {
    let modes = n / 2;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut c = RowDVector::zeros(n);
    for k in 0..modes {
        let w = log_space(0.1, 100.0, k, modes);
        let zeta = log_space(1e-1, 1e-3, k, modes);
        let i = 2 * k;
        a[(i, i + 1)] = w;
        a[(i + 1, i)] = -w;
        a[(i + 1, i + 1)] = -2.0 * zeta * w;
        b[i + 1] = rng.gen_range(0.5..1.5);
        c[i] = rng.gen_range(0.5..1.5) / w;
    }
    StateSpaceModel::standard(a, b, c)
}

/// Grounded RC ladder with unit capacitances and random conductances; input
/// current and output voltage at the first node.
fn rc_ladder(n: usize, rng: &mut ChaCha8Rng) -> Result<StateSpaceModel> {
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mut a = DMatrix::zeros(n, n);
    // g[0] ties node 0 to ground, g[k] joins nodes k-1 and k
    a[(0, 0)] -= g[0];
    for k in 1..n {
        a[(k - 1, k - 1)] -= g[k];
        a[(k, k)] -= g[k];
        a[(k - 1, k)] += g[k];
        a[(k, k - 1)] += g[k];
    }
    let mut b = DVector::zeros(n);
    b[0] = 1.0;
    let mut c = RowDVector::zeros(n);
    c[0] = 1.0;
    StateSpaceModel::standard(a, b, c)
}

/// Random `A` shifted so the spectral abscissa of `E⁻¹A` is `-0.1`, with
/// `E = I + 0.1·R/√n`.
fn random_stable(n: usize, rng: &mut ChaCha8Rng) -> Result<StateSpaceModel> {
    let scale = 1.0 / (n as f64).sqrt();
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * scale * 2.0);
    let e = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * scale * 0.1);
    let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let c = RowDVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let probe = StateSpaceModel::new(e.clone(), a.clone(), b.clone(), c.clone())?;
    let alpha = lti::spectral_abscissa(&probe)?;
    let a = a - &e * (alpha + 0.1);
    StateSpaceModel::new(e, a, b, c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub r: usize,
    pub h2_rel: f64,
    pub hinf_rel: f64,
    pub iterations: usize,
    pub converged: bool,
    pub oracle_queries: usize,
    pub wall_time_s: f64,
    /// Diagnostic for a failed cell; not part of the CSV.
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: [&str; 8] =
    ["method", "r", "h2_rel", "hinf_rel", "iterations", "converged", "oracle_queries", "wall_time_s"];

impl SweepResult {
    pub fn row(&self, method: Method, r: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|row| row.method == method && row.r == r)
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SWEEP_HEADER)?;
        for row in &self.rows {
            w.write_record([
                row.method.name().to_string(),
                row.r.to_string(),
                format!("{:e}", row.h2_rel),
                format!("{:e}", row.hinf_rel),
                row.iterations.to_string(),
                row.converged.to_string(),
                row.oracle_queries.to_string(),
                format!("{:.6}", row.wall_time_s),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path)?)
    }
}

/// Outcome of one reduction on a generated model.
pub struct RunOutcome {
    pub rom: ReducedModel,
    pub trace: IterationTrace,
    pub oracle_queries: usize,
}

/// Runs one method. Quad-ISRK only sees a cached sampling oracle of `model`.
pub fn run_method(model: &StateSpaceModel, method: Method, rule: &QuadratureRule, config: &ReductionConfig) -> Result<RunOutcome> {
    match method {
        Method::Irka => reduction::irka(model, config).map(|(rom, trace)| RunOutcome { rom, trace, oracle_queries: 0 }),
        Method::Isrk => reduction::isrk(model, config).map(|(rom, trace)| RunOutcome { rom, trace, oracle_queries: 0 }),
        Method::QuadIsrk => {
            let oracle = caching_oracle(state_space_oracle(model));
            let (rom, trace) = reduction::quad_isrk(&oracle, rule, config)?;
            Ok(RunOutcome { rom, trace, oracle_queries: oracle.backend_calls() })
        }
    }
}

fn run_cell(model: &StateSpaceModel, rule: &QuadratureRule, spec: &BenchmarkSpec, method: Method, r: usize) -> SweepRow {
    let start = Instant::now();
    let outcome = run_method(model, method, rule, &spec.config(r))
        .and_then(|run| lti::relative_errors(model, &run.rom).map(|err| (run, err)));
    let wall_time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok((run, err)) => SweepRow {
            method,
            r,
            h2_rel: err.h2_rel,
            hinf_rel: err.hinf_rel,
            iterations: run.trace.iterations(),
            converged: run.trace.converged(),
            oracle_queries: run.oracle_queries,
            wall_time_s,
            error: None,
        },
        Err(e) => SweepRow {
            method,
            r,
            h2_rel: f64::NAN,
            hinf_rel: f64::NAN,
            iterations: 0,
            converged: false,
            oracle_queries: 0,
            wall_time_s,
            error: Some(e.to_string()),
        },
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&t: &usize| t > 0)
}

/// One row per requested `(method, r)`, sorted by method then `r`. Cells run
/// concurrently; a failing cell is recorded with `converged = false`.
pub fn run_sweep(spec: &BenchmarkSpec) -> Result<SweepResult> {
    spec.validate()?;
    let model = generate_model(spec.model, spec.n, spec.seed)?;
    let rule = spec.quadrature.rule()?;
    let mut cells: Vec<(Method, usize)> =
        spec.methods.iter().flat_map(|&m| spec.r_list.iter().map(move |&r| (m, r))).collect();
    cells.sort();
    cells.dedup();
    let work = || -> Vec<SweepRow> {
        cells.par_iter().map(|&(m, r)| run_cell(&model, &rule, spec, m, r)).collect()
    };
    let rows = match thread_cap() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(SweepResult { rows })
}
