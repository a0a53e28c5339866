//! Exactly solvable continuous-time Markov models.

mod ctmc;
mod ou;

pub use ctmc::CtmcModel;
pub use ou::{KernelMoments, OuModel};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::space::{Domain, ExactMeasure, Metric, Observable, StatePoint};

/// Controls how `P_t f(x)` is evaluated on the continuous model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupOptions {
    /// Gauss–Hermite nodes for smooth observables.
    pub gh_nodes: usize,
    /// Monte Carlo draws for non-smooth observables; zero selects piecewise
    /// deterministic quadrature instead.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for SemigroupOptions {
    fn default() -> Self {
        SemigroupOptions { gh_nodes: crate::space::DEFAULT_GH_NODES, mc_samples: 0, seed: 0 }
    }
}

/// `P_t f(x)` with a Monte Carlo standard error when sampling was used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemigroupValue {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// Either built-in model.
#[derive(Debug, Clone)]
pub enum Model {
    Ou(OuModel),
    Ctmc(CtmcModel),
}

impl Model {
    pub fn domain(&self) -> Domain {
        match self {
            Model::Ou(_) => Domain::Real,
            Model::Ctmc(m) => Domain::Finite { states: m.states() },
        }
    }

    pub fn metric(&self) -> &Metric {
        match self {
            Model::Ou(_) => &Metric::Euclidean1d,
            Model::Ctmc(m) => m.metric(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Ou(_) => "ou",
            Model::Ctmc(_) => "ctmc",
        }
    }

    /// Declared contraction rate: `γ` for OU, the optional declared rate for
    /// a chain.
    pub fn nominal_gamma(&self) -> Option<f64> {
        match self {
            Model::Ou(m) => Some(m.gamma),
            Model::Ctmc(m) => m.declared_gamma(),
        }
    }

    /// One exact transition of length `dt` from `x`.
    pub fn sample_step<R: Rng + ?Sized>(&self, x: &StatePoint, dt: f64, rng: &mut R) -> Result<StatePoint> {
        if !(dt >= 0.0) {
            return Err(LabError::InvalidArgument(format!("time step must be nonnegative, got {dt}")));
        }
        self.domain().check(x)?;
        match self {
            Model::Ou(m) => Ok(StatePoint::Real(m.sample_step(x.as_real()?, dt, rng))),
            Model::Ctmc(m) => Ok(StatePoint::Index(m.sample_step(x.as_index()?, dt, rng))),
        }
    }

    pub fn invariant_measure(&self) -> Result<ExactMeasure> {
        match self {
            Model::Ou(m) => Ok(m.invariant_measure()),
            Model::Ctmc(m) => Ok(ExactMeasure::Discrete { probabilities: m.invariant_measure()? }),
        }
    }

    /// `P_t f(x)`.
    pub fn apply_semigroup(
        &self,
        f: &Observable,
        t: f64,
        x: &StatePoint,
        opts: &SemigroupOptions,
    ) -> Result<SemigroupValue> {
        if !(t >= 0.0) {
            return Err(LabError::InvalidArgument(format!("time must be nonnegative, got {t}")));
        }
        self.domain().check(x)?;
        if f.domain() != self.domain() {
            return Err(LabError::KindMismatch {
                expected: format!("{:?}", self.domain()),
                found: format!("{:?}", f.domain()),
            });
        }
        match self {
            Model::Ou(m) => Ok(m.apply_semigroup(f, t, x.as_real()?, opts)),
            Model::Ctmc(m) => Ok(SemigroupValue { value: m.apply_semigroup(f, t, x.as_index()?), std_error: None }),
        }
    }
}

/// `P_t f(x)`; see [`Model::apply_semigroup`].
pub fn apply_semigroup(model: &Model, f: &Observable, t: f64, x: &StatePoint, mc_samples: usize) -> Result<SemigroupValue> {
    let opts = SemigroupOptions { mc_samples, ..SemigroupOptions::default() };
    model.apply_semigroup(f, t, x, &opts)
}

/// Exact sample of one transition; see [`Model::sample_step`].
pub fn sample_step<R: Rng + ?Sized>(model: &Model, x: &StatePoint, dt: f64, rng: &mut R) -> Result<StatePoint> {
    model.sample_step(x, dt, rng)
}
