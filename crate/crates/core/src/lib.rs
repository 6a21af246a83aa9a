//! Influence-function estimation of treatment effects on survey data.
//!
//! The crate covers the whole estimation pipeline: survey ingestion and
//! analytic-sample construction ([`ingest`]), nuisance fitting with GLMs,
//! boosted trees and stacking ([`nuisance`]), one-step estimators for mean
//! potential outcomes and risk contrasts ([`effects`]), interventional
//! mediation with two mediators ([`mediation`]), incremental propensity
//! interventions ([`incremental`]), sensitivity bounds ([`sensitivity`]),
//! DR-learner subgroup discovery ([`hte`]) and synthetic data-generating
//! processes with exactly enumerated truth ([`sim`]).

pub mod design;
pub mod effects;
pub mod error;
pub mod hte;
pub mod incremental;
pub mod ingest;
pub mod mediation;
pub mod nuisance;
pub mod rng;
pub mod sensitivity;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};

/// Number of joint mediator cells (4 levels of M1 times 4 levels of M2).
pub const MEDIATOR_CELLS: usize = 16;
/// Number of ordinal levels per mediator.
pub const MEDIATOR_LEVELS: usize = 4;

/// Joint mediator code `4 * m1 + m2`.
#[inline]
pub fn encode_mediators(m1: u8, m2: u8) -> usize {
    debug_assert!((m1 as usize) < MEDIATOR_LEVELS && (m2 as usize) < MEDIATOR_LEVELS);
    MEDIATOR_LEVELS * m1 as usize + m2 as usize
}

/// Inverse of [`encode_mediators`].
#[inline]
pub fn decode_mediators(code: usize) -> (u8, u8) {
    debug_assert!(code < MEDIATOR_CELLS);
    ((code / MEDIATOR_LEVELS) as u8, (code % MEDIATOR_LEVELS) as u8)
}
