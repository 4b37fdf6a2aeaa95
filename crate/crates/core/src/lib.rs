//! Model-order reduction of SISO LTI systems by the iterative SVD-rational
//! Krylov method (ISRK), its data-driven quadrature reformulation
//! (Quad-ISRK) that works from transfer-function samples only, and IRKA as a
//! baseline.
//!
//! The data-driven path is [`reduction::quad_isrk`]: it receives a
//! [`sampling::FrequencyResponseOracle`] and a [`quadrature::QuadratureRule`]
//! and never sees a state-space realization. Each iteration samples `H` at
//! the quadrature nodes and the current shifts, assembles scaled Loewner
//! matrices ([`loewner::build_data_block`]) and forms the reduced model
//! ([`loewner::assemble_rom`]); the next shifts are the mirrored reduced poles.

// `!(x <= limit)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod error;
pub mod linalg;
pub mod loewner;
pub mod lti;
pub mod lyapunov;
pub mod quadrature;
pub mod reduction;
pub mod sampling;
pub mod shifts;

pub use error::{Error, Result};
pub use loewner::{assemble_rom, build_data_block, intrusive_data_block, loewner_realization, LoewnerDataBlock};

pub use lti::{
    eval_transfer, h2_norm, hinf_norm, is_asymptotically_stable, poles, relative_errors, ErrorNorms, LtiSystem,
    ReducedModel, StateSpaceModel,
};
pub use num_complex::Complex64;
pub use quadrature::{trapezoid_rule, QuadratureRule};
pub use reduction::{irka, isrk, quad_isrk, IterationTrace, ReductionConfig, Status};

pub use sampling::{caching_oracle, replay_oracle, state_space_oracle, FrequencyResponseOracle};
pub use shifts::ShiftSet;
