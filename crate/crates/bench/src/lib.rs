//! Shared fixtures for the criterion benches.

use quadisrk::benchmark::{generate_model, ModelKind, QuadratureSpec};
use quadisrk::{QuadratureRule, ShiftSet, StateSpaceModel};

/// Modal-beam model of order `n` with the default seed.
pub fn modal(n: usize) -> StateSpaceModel {
    generate_model(ModelKind::ModalBeam, n, 0).expect("modal fixture")
}

/// The default 400-node rule on `[1e-2, 1e2]`.
pub fn default_rule() -> QuadratureRule {
    QuadratureSpec::default().rule().expect("default rule")
}

pub fn shifts(r: usize) -> ShiftSet {
    ShiftSet::log_spaced(r, 0.1, 10.0).expect("shift fixture")
}
