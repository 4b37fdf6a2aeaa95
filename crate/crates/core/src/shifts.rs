//! Interpolation-point sets and the conjugate-pair change of basis that
//! turns complex projections into real reduced models.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Near-conjugate values closer than this (relative) are snapped to exact pairs.
const SNAP_TOL: f64 = 1e-10;

/// A set of shifts `η_1 … η_r`, stored in lexicographic order (real part,
/// then imaginary part), tagged with the iteration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSet {
    values: Vec<Complex64>,
    iteration: usize,
}

impl ShiftSet {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidShifts("empty shift set".into()));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidShifts("non-finite shift".into()));
        }
        let mut values = values;
        snap_conjugates(&mut values);
        linalg::sort_lex(&mut values);
        Ok(Self { values, iteration: 0 })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// `r` logarithmically spaced positive reals in `[lo, hi]` (the geometric
    /// mean when `r = 1`).
    pub fn log_spaced(r: usize, lo: f64, hi: f64) -> Result<Self> {
        if r == 0 || !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidShifts(format!("cannot place {r} shifts in [{lo}, {hi}]")));
        }
        let (l0, l1) = (lo.ln(), hi.ln());
        let vals: Vec<f64> = if r == 1 {
            vec![(lo * hi).sqrt()]
        } else {
            (0..r).map(|k| (l0 + (l1 - l0) * k as f64 / (r - 1) as f64).exp()).collect()
        };
        Self::from_real(&vals)
    }

    pub fn with_iteration(mut self, k: usize) -> Self {
        self.iteration = k;
        self
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_conjugate_closed(&self) -> bool {
        self.pairing().is_some()
    }

    /// Smallest distance from any shift to any of `points`.
    pub fn min_distance_to(&self, points: &[Complex64]) -> f64 {
        self.values
            .iter()
            .flat_map(|s| points.iter().map(move |p| (s - p).norm()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Groups indices into real singletons and `(upper, lower)` conjugate pairs.
    fn pairing(&self) -> Option<Vec<Slot>> {
        let mut used = vec![false; self.values.len()];
        let mut slots = Vec::new();
        for (j, z) in self.values.iter().enumerate() {
            if used[j] {
                continue;
            }
            if z.im == 0.0 {
                used[j] = true;
                slots.push(Slot::Real(j));
                continue;
            }
            let partner = (0..self.values.len()).find(|&k| !used[k] && k != j && self.values[k] == z.conj())?;
            used[j] = true;
            used[partner] = true;
            let (upper, lower) = if z.im > 0.0 { (j, partner) } else { (partner, j) };
            slots.push(Slot::Pair { upper, lower });
        }
        Some(slots)
    }

    /// Unitary `T` such that `K T` is real whenever column `j` of `K` depends
    /// on `η_j` through real-coefficient resolvents. `None` if the set is not
    /// conjugate-closed.
    pub fn realification_basis(&self) -> Option<CMat> {
        let slots = self.pairing()?;
        let r = self.values.len();
        let mut t = CMat::zeros(r, r);
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let ih = Complex64::new(0.0, FRAC_1_SQRT_2);
        for slot in slots {
            match slot {
                Slot::Real(j) => t[(j, j)] = linalg::ONE,
                Slot::Pair { upper, lower } => {
                    t[(upper, upper)] = h;
                    t[(lower, upper)] = h;
                    t[(upper, lower)] = ih;
                    t[(lower, lower)] = -ih;
                }
            }
        }
        Some(t)
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Real(usize),
    Pair { upper: usize, lower: usize },
}

fn snap_conjugates(values: &mut [Complex64]) {
    let n = values.len();
    let mut used = vec![false; n];
    for j in 0..n {
        if used[j] || values[j].im <= 0.0 {
            continue;
        }
        let target = values[j].conj();
        let best = (0..n)
            .filter(|&k| !used[k] && k != j && values[k].im < 0.0)
            .min_by(|&a, &b| (values[a] - target).norm().total_cmp(&(values[b] - target).norm()));
        if let Some(k) = best {
            if (values[k] - target).norm() <= SNAP_TOL * target.norm() {
                values[k] = target;
                used[k] = true;
                used[j] = true;
            }
        }
    }
}
