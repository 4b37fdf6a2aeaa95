//! Frequency-response oracles: the only channel through which the
//! data-driven reduction sees a system.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{LtiSystem, StateSpaceModel};

/// Matching tolerance for replayed sample points, relative to `max(1, |s|)`.
pub const REPLAY_TOL: f64 = 1e-12;

/// `s ↦ H(s)`. Implementations must be callable from several threads.
pub trait FrequencyResponseOracle: Send + Sync {
    fn sample(&self, s: Complex64) -> Result<Complex64>;
}

impl<T: FrequencyResponseOracle + ?Sized> FrequencyResponseOracle for &T {
    fn sample(&self, s: Complex64) -> Result<Complex64> {
        (**self).sample(s)
    }
}

impl<T: FrequencyResponseOracle + ?Sized> FrequencyResponseOracle for Box<T> {
    fn sample(&self, s: Complex64) -> Result<Complex64> {
        (**self).sample(s)
    }
}

impl<T: FrequencyResponseOracle + ?Sized> FrequencyResponseOracle for Arc<T> {
    fn sample(&self, s: Complex64) -> Result<Complex64> {
        (**self).sample(s)
    }
}

/// Evaluates the transfer function of a state-space model.
#[derive(Debug, Clone)]
pub struct StateSpaceOracle {
    model: StateSpaceModel,
}

impl FrequencyResponseOracle for StateSpaceOracle {
    fn sample(&self, s: Complex64) -> Result<Complex64> {
        self.model.transfer(s)
    }
}

pub fn state_space_oracle(model: &StateSpaceModel) -> StateSpaceOracle {
    StateSpaceOracle { model: model.clone() }
}

/// Serves a fixed set of recorded samples.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    records: Vec<(Complex64, Complex64)>,
}

fn within_tol(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= REPLAY_TOL * a.norm().max(1.0)
}

pub fn replay_oracle(records: Vec<(Complex64, Complex64)>) -> Result<ReplayOracle> {
    let mut kept: Vec<(Complex64, Complex64)> = Vec::with_capacity(records.len());
    for (s, h) in records {
        if !(s.re.is_finite() && s.im.is_finite() && h.re.is_finite() && h.im.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite sample record at s = {s}")));
        }
        match kept.iter().find(|(t, _)| within_tol(*t, s)) {
            Some((_, g)) if *g == h => {}
            Some(_) => return Err(Error::InvalidConfig(format!("conflicting samples recorded near s = {s}"))),
            None => kept.push((s, h)),
        }
    }
    Ok(ReplayOracle { records: kept })
}

impl ReplayOracle {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl FrequencyResponseOracle for ReplayOracle {
    fn sample(&self, s: Complex64) -> Result<Complex64> {
        self.records
            .iter()
            .filter(|(t, _)| within_tol(s, *t))
            .min_by(|a, b| (a.0 - s).norm().total_cmp(&(b.0 - s).norm()))
            .map(|(_, h)| *h)
            .ok_or(Error::MissingSample(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleSource {
    Backend,
    Cache,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub s: Complex64,
    pub h: Complex64,
    pub source: SampleSource,
    /// Seconds since the Unix epoch at completion.
    pub timestamp: f64,
}

/// Append-only record of answered queries.
#[derive(Debug, Clone, Default)]
pub struct SampleLog {
    entries: Vec<SampleRecord>,
    cache_hits: usize,
    backend_calls: usize,
}

impl SampleLog {
    pub fn push(&mut self, s: Complex64, h: Complex64, source: SampleSource) {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        match source {
            SampleSource::Backend => self.backend_calls += 1,
            SampleSource::Cache => self.cache_hits += 1,
        }
        self.entries.push(SampleRecord { s, h, source, timestamp });
    }

    pub fn entries(&self) -> &[SampleRecord] {
        &self.entries
    }

    pub fn queries(&self) -> usize {
        self.entries.len()
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits
    }

    pub fn backend_calls(&self) -> usize {
        self.backend_calls
    }

    /// Backend-answered `(s, H(s))` pairs in completion order.
    pub fn backend_records(&self) -> Vec<(Complex64, Complex64)> {
        self.entries.iter().filter(|e| e.source == SampleSource::Backend).map(|e| (e.s, e.h)).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_samples_csv(path, &self.backend_records())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheOptions {
    pub enabled: bool,
    /// Key on the upper-half-plane representative and answer `s̄` with the
    /// conjugate value. Valid only for real-coefficient systems.
    pub conjugate_canonical: bool,
}

#[derive(Debug, Default)]
struct CacheState {
    map: HashMap<(u64, u64), Complex64>,
    log: SampleLog,
}

/// Memoizes an inner oracle by the exact bit pattern of `s` and logs every query.
#[derive(Debug)]
pub struct CachingOracle<O> {
    inner: O,
    options: CacheOptions,
    state: Mutex<CacheState>,
}

pub fn caching_oracle<O: FrequencyResponseOracle>(inner: O) -> CachingOracle<O> {
    CachingOracle::with_options(inner, CacheOptions { enabled: true, conjugate_canonical: false })
}

impl<O: FrequencyResponseOracle> CachingOracle<O> {
    pub fn with_options(inner: O, options: CacheOptions) -> Self {
        Self { inner, options, state: Mutex::new(CacheState::default()) }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    /// Snapshot of the query log.
    pub fn log(&self) -> SampleLog {
        self.state.lock().expect("sample cache poisoned").log.clone()
    }

    pub fn backend_calls(&self) -> usize {
        self.state.lock().expect("sample cache poisoned").log.backend_calls()
    }

    pub fn cache_hits(&self) -> usize {
        self.state.lock().expect("sample cache poisoned").log.cache_hits()
    }

    fn key(&self, s: Complex64) -> ((u64, u64), bool) {
        // -0.0 and 0.0 are the same point
        let norm = |x: f64| if x == 0.0 { 0.0_f64 } else { x };
        if self.options.conjugate_canonical && s.im < 0.0 {
            ((norm(s.re).to_bits(), norm(-s.im).to_bits()), true)
        } else {
            ((norm(s.re).to_bits(), norm(s.im).to_bits()), false)
        }
    }
}

impl<O: FrequencyResponseOracle> FrequencyResponseOracle for CachingOracle<O> {
    fn sample(&self, s: Complex64) -> Result<Complex64> {
        if !self.options.enabled {
            let h = self.inner.sample(s)?;
            self.state.lock().expect("sample cache poisoned").log.push(s, h, SampleSource::Backend);
            return Ok(h);
        }
        let (key, flipped) = self.key(s);
        {
            let mut st = self.state.lock().expect("sample cache poisoned");
            if let Some(&v) = st.map.get(&key) {
                let h = if flipped { v.conj() } else { v };
                st.log.push(s, h, SampleSource::Cache);
                return Ok(h);
            }
        }
        let h = self.inner.sample(s)?;
        let mut st = self.state.lock().expect("sample cache poisoned");
        st.map.insert(key, if flipped { h.conj() } else { h });
        st.log.push(s, h, SampleSource::Backend);
        Ok(h)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    s_re: f64,
    s_im: f64,
    #[serde(rename = "H_re")]
    h_re: f64,
    #[serde(rename = "H_im")]
    h_im: f64,
}

pub fn write_samples_to<W: std::io::Write>(w: W, records: &[(Complex64, Complex64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    if records.is_empty() {
        w.write_record(["s_re", "s_im", "H_re", "H_im"])?;
    }
    for (s, h) in records {
        w.serialize(SampleRow { s_re: s.re, s_im: s.im, h_re: h.re, h_im: h.im })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples_csv(path: impl AsRef<Path>, records: &[(Complex64, Complex64)]) -> Result<()> {
    write_samples_to(std::fs::File::create(path)?, records)
}

pub fn read_samples_from<R: std::io::Read>(r: R) -> Result<Vec<(Complex64, Complex64)>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: SampleRow = row?;
        out.push((Complex64::new(row.s_re, row.s_im), Complex64::new(row.h_re, row.h_im)));
    }
    Ok(out)
}

pub fn read_samples_csv(path: impl AsRef<Path>) -> Result<Vec<(Complex64, Complex64)>> {
    read_samples_from(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn state_space_examples() {
        let o = state_space_oracle(&first_order());
        assert_eq!(o.sample(c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
        assert!((o.sample(c(0.0, 1.0)).unwrap() - c(0.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn replay_examples() {
        let o = replay_oracle(vec![(c(0.0, 0.0), c(1.0, 0.0)), (c(1.0, 0.0), c(0.5, 0.0))]).unwrap();
        assert_eq!(o.sample(c(1.0, 0.0)).unwrap(), c(0.5, 0.0));
        assert!(matches!(o.sample(c(2.0, 0.0)), Err(Error::MissingSample(_))));
        assert_eq!(o.sample(c(1.0 + 1e-13, 0.0)).unwrap(), c(0.5, 0.0));
    }

    #[test]
    fn replay_rejects_conflicts() {
        let r = replay_oracle(vec![(c(1.0, 0.0), c(0.5, 0.0)), (c(1.0, 0.0), c(0.6, 0.0))]);
        assert!(r.is_err());
        let r = replay_oracle(vec![(c(1.0, 0.0), c(0.5, 0.0)), (c(1.0, 0.0), c(0.5, 0.0))]).unwrap();
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn cache_counts_hits() {
        let o = caching_oracle(state_space_oracle(&first_order()));
        o.sample(c(0.0, 1.0)).unwrap();
        o.sample(c(0.0, 1.0)).unwrap();
        assert_eq!(o.backend_calls(), 1);
        assert_eq!(o.cache_hits(), 1);
        let log = o.log();
        assert_eq!(log.queries(), log.cache_hits() + log.backend_calls());
    }

    #[test]
    fn repeated_node_sweeps_hit_cache() {
        let o = caching_oracle(state_space_oracle(&first_order()));
        let nodes: Vec<Complex64> = (1..=400).map(|k| c(0.0, k as f64 * 0.01)).collect();
        for _ in 0..10 {
            for &s in &nodes {
                o.sample(s).unwrap();
            }
        }
        assert!(o.backend_calls() <= 400);
        assert_eq!(o.log().queries(), 4000);
    }

    #[test]
    fn disabled_cache_forwards_everything() {
        let o = CachingOracle::with_options(state_space_oracle(&first_order()), CacheOptions::default());
        for _ in 0..3 {
            o.sample(c(0.0, 1.0)).unwrap();
        }
        assert_eq!(o.backend_calls(), 3);
        assert_eq!(o.cache_hits(), 0);
    }

    #[test]
    fn conjugate_canonical_cache() {
        let o = CachingOracle::with_options(
            state_space_oracle(&first_order()),
            CacheOptions { enabled: true, conjugate_canonical: true },
        );
        let h = o.sample(c(0.0, 2.0)).unwrap();
        let g = o.sample(c(0.0, -2.0)).unwrap();
        assert_eq!(g, h.conj());
        assert_eq!(o.backend_calls(), 1);
    }

    #[test]
    fn csv_header_and_round_trip() {
        let recs = vec![(c(0.0, 1.0), c(0.5, -0.5)), (c(2.0, 0.0), c(1.0 / 3.0, 0.0))];
        let mut buf = Vec::new();
        write_samples_to(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("s_re,s_im,H_re,H_im\n"));
        assert_eq!(read_samples_from(buf.as_slice()).unwrap(), recs);
    }
}
