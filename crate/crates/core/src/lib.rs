//! Verification laboratory for limit theorems of additive functionals of
//! exponentially mixing Markov processes.
//!
//! The crate works on two exactly solvable models, the Ornstein–Uhlenbeck
//! process and finite continuous-time Markov chains, and provides:
//!
//! - Wasserstein-1 distances and certifiers for Dirac contraction, moment
//!   boundedness, exponential ergodicity and Cesàro convergence ([`transport`]);
//! - the corrector `χ_g = ∫₀^∞ P_t g dt` and the pairing form of the
//!   asymptotic variance ([`corrector`]);
//! - path simulation, additive functionals, the martingale decomposition and
//!   Heyde–Scott diagnostics ([`functionals`]);
//! - the headline experiments: three-way variance consistency, the LIL
//!   envelope, the integer-skeleton discretization gap and a CLT proxy
//!   ([`lil`]);
//! - a JSON-configured experiment runner used by the `lillab` binary
//!   ([`runner`]).
// `!(a <= b)` is used on purpose so NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]


pub mod config;
pub mod corrector;
pub mod error;
pub mod functionals;
pub mod lil;
pub mod models;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod runner;
pub mod space;
pub mod stats;
pub mod transport;

pub use error::{LabError, Result};
pub use models::{CtmcModel, Model, OuModel};
pub use space::{EmpiricalMeasure, ExactMeasure, LyapunovConfig, Metric, Observable, StatePoint};
