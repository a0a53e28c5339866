//! State points, metrics, observables, Lyapunov data and measures.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quadrature::GaussHermite;

/// A point of the state space: a real coordinate (OU) or a state index (CTMC).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatePoint {
    Index(usize),
    Real(f64),
}

impl StatePoint {
    pub fn real(x: f64) -> Result<StatePoint> {
        if x.is_finite() {
            Ok(StatePoint::Real(x))
        } else {
            Err(LabError::NonFiniteState)
        }
    }

    pub fn index(i: usize) -> StatePoint {
        StatePoint::Index(i)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StatePoint::Real(_) => "real",
            StatePoint::Index(_) => "index",
        }
    }

    pub fn as_real(&self) -> Result<f64> {
        match *self {
            StatePoint::Real(x) => Ok(x),
            StatePoint::Index(_) => Err(kind_mismatch("real", self)),
        }
    }

    pub fn as_index(&self) -> Result<usize> {
        match *self {
            StatePoint::Index(i) => Ok(i),
            StatePoint::Real(_) => Err(kind_mismatch("index", self)),
        }
    }

    /// Plain numeric value, for traces and CSV output.
    pub fn value(&self) -> f64 {
        match *self {
            StatePoint::Real(x) => x,
            StatePoint::Index(i) => i as f64,
        }
    }
}

impl fmt::Display for StatePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatePoint::Real(x) => write!(f, "{x}"),
            StatePoint::Index(i) => write!(f, "{i}"),
        }
    }
}

fn kind_mismatch(expected: &str, found: &StatePoint) -> LabError {
    LabError::KindMismatch { expected: expected.to_string(), found: found.kind().to_string() }
}

/// The kind of state space an object lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Domain {
    Real,
    Finite { states: usize },
}

impl Domain {
    pub fn check(&self, x: &StatePoint) -> Result<()> {
        match (self, x) {
            (Domain::Real, StatePoint::Real(v)) => {
                if v.is_finite() {
                    Ok(())
                } else {
                    Err(LabError::NonFiniteState)
                }
            }
            (Domain::Finite { states }, StatePoint::Index(i)) => {
                if i < states {
                    Ok(())
                } else {
                    Err(LabError::StateOutOfRange { index: *i, states: *states })
                }
            }
            (Domain::Real, _) => Err(kind_mismatch("real", x)),
            (Domain::Finite { .. }, _) => Err(kind_mismatch("index", x)),
        }
    }
}

/// Ground metric `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Metric {
    Euclidean1d,
    DiscreteUniform { states: usize },
    ExplicitMatrix { rho: Vec<Vec<f64>> },
}

#[derive(Deserialize)]
struct MetricFile {
    states: usize,
    rho: Vec<Vec<f64>>,
}

impl Metric {
    /// Validates symmetry, zero diagonal, nonnegativity and the triangle
    /// inequality (exhaustively over all triples).
    pub fn explicit(rho: Vec<Vec<f64>>) -> Result<Metric> {
        let n = rho.len();
        if n == 0 {
            return Err(LabError::InvalidMetric("empty matrix".into()));
        }
        for (i, row) in rho.iter().enumerate() {
            if row.len() != n {
                return Err(LabError::InvalidMetric(format!("row {i} has length {}, expected {n}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(LabError::InvalidMetric(format!("entry ({i},{j}) = {v} is not a finite nonnegative number")));
                }
                if i == j && v != 0.0 {
                    return Err(LabError::InvalidMetric(format!("diagonal entry ({i},{i}) = {v} is nonzero")));
                }
                if i != j && v == 0.0 {
                    return Err(LabError::InvalidMetric(format!("distinct states {i},{j} at distance zero")));
                }
                if (v - rho[j][i]).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(LabError::InvalidMetric(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if rho[i][k] > rho[i][j] + rho[j][k] + 1e-12 {
                        return Err(LabError::InvalidMetric(format!("triangle inequality fails for ({i},{j},{k})")));
                    }
                }
            }
        }
        Ok(Metric::ExplicitMatrix { rho })
    }

    /// Parses `{"states": N, "rho": [[...]]}`.
    pub fn from_json(text: &str) -> Result<Metric> {
        let file: MetricFile = serde_json::from_str(text)?;
        if file.rho.len() != file.states {
            return Err(LabError::InvalidMetric(format!(
                "declared {} states but matrix has {} rows",
                file.states,
                file.rho.len()
            )));
        }
        Metric::explicit(file.rho)
    }

    pub fn states(&self) -> Option<usize> {
        match self {
            Metric::Euclidean1d => None,
            Metric::DiscreteUniform { states } => Some(*states),
            Metric::ExplicitMatrix { rho } => Some(rho.len()),
        }
    }

    pub fn domain(&self) -> Domain {
        match self.states() {
            None => Domain::Real,
            Some(states) => Domain::Finite { states },
        }
    }

    pub fn distance(&self, x: &StatePoint, y: &StatePoint) -> Result<f64> {
        match self {
            Metric::Euclidean1d => Ok((x.as_real()? - y.as_real()?).abs()),
            _ => {
                let d = self.domain();
                d.check(x)?;
                d.check(y)?;
                Ok(self.index_distance(x.as_index()?, y.as_index()?))
            }
        }
    }

    /// Distance between state indices; the caller guarantees range.
    pub fn index_distance(&self, i: usize, j: usize) -> f64 {
        match self {
            Metric::Euclidean1d => (i as f64 - j as f64).abs(),
            Metric::DiscreteUniform { .. } => {
                if i == j {
                    0.0
                } else {
                    1.0
                }
            }
            Metric::ExplicitMatrix { rho } => rho[i][j],
        }
    }

    /// Dense matrix for finite metrics.
    pub fn matrix(&self) -> Option<Vec<Vec<f64>>> {
        let n = self.states()?;
        Some((0..n).map(|i| (0..n).map(|j| self.index_distance(i, j)).collect()).collect())
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Evaluator {
    Constant(f64),
    Table(Vec<f64>),
    ClippedIdentity { bound: f64 },
    Tanh { scale: f64 },
    Custom(RealFn),
    Affine { inner: Box<Evaluator>, scale: f64, shift: f64 },
}

impl Evaluator {
    fn eval_real(&self, x: f64) -> f64 {
        match self {
            Evaluator::Constant(c) => *c,
            Evaluator::Table(_) => f64::NAN,
            Evaluator::ClippedIdentity { bound } => x.clamp(-bound, *bound),
            Evaluator::Tanh { scale } => (scale * x).tanh(),
            Evaluator::Custom(f) => f(x),
            Evaluator::Affine { inner, scale, shift } => scale * inner.eval_real(x) + shift,
        }
    }

    fn eval_index(&self, i: usize) -> f64 {
        match self {
            Evaluator::Constant(c) => *c,
            Evaluator::Table(v) => v[i],
            Evaluator::Affine { inner, scale, shift } => scale * inner.eval_index(i) + shift,
            Evaluator::ClippedIdentity { .. } | Evaluator::Tanh { .. } | Evaluator::Custom(_) => f64::NAN,
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            Evaluator::ClippedIdentity { bound } => vec![-bound, *bound],
            Evaluator::Affine { inner, .. } => inner.kinks(),
            _ => Vec::new(),
        }
    }

    /// `E[f(mean + sd·Z)]` when a closed form is known.
    fn gaussian_closed_form(&self, mean: f64, sd: f64) -> Option<f64> {
        match self {
            Evaluator::Constant(c) => Some(*c),
            Evaluator::ClippedIdentity { bound } => {
                let b = *bound;
                let lo = (-b - mean) / sd;
                let hi = (b - mean) / sd;
                let (cl, ch) = (crate::stats::normal_cdf(lo), crate::stats::normal_cdf(hi));
                let (pl, ph) = (crate::stats::normal_pdf(lo), crate::stats::normal_pdf(hi));
                Some(-b * cl + b * (1.0 - ch) + mean * (ch - cl) + sd * (pl - ph))
            }
            Evaluator::Affine { inner, scale, shift } => inner.gaussian_closed_form(mean, sd).map(|v| scale * v + shift),
            _ => None,
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Evaluator::Constant(c) => *c == 0.0,
            Evaluator::Table(v) => v.iter().all(|&x| x == 0.0),
            Evaluator::Affine { inner, scale, shift } => *shift == 0.0 && (*scale == 0.0 || inner.is_zero()),
            _ => false,
        }
    }
}

/// A bounded Lipschitz test function with declared `‖g‖_∞` and `Lip g`.
#[derive(Clone)]
pub struct Observable {
    eval: Evaluator,
    domain: Domain,
    pub sup_norm: f64,
    pub lip_const: f64,
    pub is_centered: bool,
    pub smooth: bool,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("domain", &self.domain)
            .field("sup_norm", &self.sup_norm)
            .field("lip_const", &self.lip_const)
            .field("is_centered", &self.is_centered)
            .finish()
    }
}

impl Observable {
    pub fn constant(c: f64, domain: Domain) -> Observable {
        Observable {
            eval: Evaluator::Constant(c),
            domain,
            sup_norm: c.abs(),
            lip_const: 0.0,
            is_centered: c == 0.0,
            smooth: true,
        }
    }

    pub fn zero(domain: Domain) -> Observable {
        Observable::constant(0.0, domain)
    }

    /// Value vector on a finite space; `‖g‖_∞` and `Lip g` are computed
    /// exactly against `metric`.
    pub fn table(values: Vec<f64>, metric: &Metric) -> Result<Observable> {
        let n = metric
            .states()
            .ok_or_else(|| LabError::DimensionMismatch("table observable needs a finite metric".into()))?;
        if values.len() != n {
            return Err(LabError::DimensionMismatch(format!("{} values for {n} states", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidArgument("observable values must be finite".into()));
        }
        let sup_norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut lip = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    lip = lip.max((values[i] - values[j]).abs() / metric.index_distance(i, j));
                }
            }
        }
        Ok(Observable {
            eval: Evaluator::Table(values),
            domain: Domain::Finite { states: n },
            sup_norm,
            lip_const: lip,
            is_centered: false,
            smooth: true,
        })
    }

    /// `x ↦ min(max(x, −b), b)`.
    pub fn clipped_identity(bound: f64) -> Observable {
        Observable {
            eval: Evaluator::ClippedIdentity { bound },
            domain: Domain::Real,
            sup_norm: bound,
            lip_const: 1.0,
            is_centered: false,
            smooth: false,
        }
    }

    /// `x ↦ tanh(scale·x)`.
    pub fn tanh(scale: f64) -> Observable {
        Observable {
            eval: Evaluator::Tanh { scale },
            domain: Domain::Real,
            sup_norm: 1.0,
            lip_const: scale.abs(),
            is_centered: false,
            smooth: true,
        }
    }

    /// Arbitrary real function with declared constants.
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sup_norm: f64,
        lip_const: f64,
        smooth: bool,
    ) -> Observable {
        Observable {
            eval: Evaluator::Custom(Arc::new(f)),
            domain: Domain::Real,
            sup_norm,
            lip_const,
            is_centered: false,
            smooth,
        }
    }

    /// Replaces the declared constants.
    pub fn with_declared(mut self, sup_norm: f64, lip_const: f64) -> Observable {
        self.sup_norm = sup_norm;
        self.lip_const = lip_const;
        self
    }

    /// Marks the observable as centered against the invariant law without
    /// shifting it (e.g. odd functions under a symmetric law).
    pub fn assume_centered(mut self) -> Observable {
        self.is_centered = true;
        self
    }

    /// `factor · g`.
    pub fn scaled(&self, factor: f64) -> Observable {
        Observable {
            eval: Evaluator::Affine { inner: Box::new(self.eval.clone()), scale: factor, shift: 0.0 },
            domain: self.domain,
            sup_norm: self.sup_norm * factor.abs(),
            lip_const: self.lip_const * factor.abs(),
            is_centered: self.is_centered,
            smooth: self.smooth,
        }
    }

    fn shifted(&self, shift: f64) -> Observable {
        Observable {
            eval: Evaluator::Affine { inner: Box::new(self.eval.clone()), scale: 1.0, shift },
            domain: self.domain,
            sup_norm: self.sup_norm + shift.abs(),
            lip_const: self.lip_const,
            is_centered: self.is_centered,
            smooth: self.smooth,
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Breakpoints where the function is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        self.eval.kinks()
    }

    /// `E[g(mean + sd·Z)]` in closed form, for the observables that have one.
    pub fn gaussian_closed_form(&self, mean: f64, sd: f64) -> Option<f64> {
        if sd > 0.0 {
            self.eval.gaussian_closed_form(mean, sd)
        } else {
            None
        }
    }

    /// True when the observable is identically zero by construction.
    pub fn is_identically_zero(&self) -> bool {
        self.eval.is_zero()
    }

    pub fn eval(&self, x: &StatePoint) -> Result<f64> {
        self.domain.check(x)?;
        Ok(match *x {
            StatePoint::Real(v) => self.eval.eval_real(v),
            StatePoint::Index(i) => self.eval.eval_index(i),
        })
    }

    /// Unchecked evaluation on the real line.
    pub fn eval_real(&self, x: f64) -> f64 {
        self.eval.eval_real(x)
    }

    /// Unchecked evaluation at a state index.
    pub fn eval_index(&self, i: usize) -> f64 {
        self.eval.eval_index(i)
    }

    /// Values at every state of a finite domain.
    pub fn values(&self) -> Option<Vec<f64>> {
        match self.domain {
            Domain::Finite { states } => Some((0..states).map(|i| self.eval_index(i)).collect()),
            Domain::Real => None,
        }
    }

    /// Checks the declared bounds on every point and pair of `grid`.
    pub fn validate(&self, metric: &Metric, grid: &[StatePoint]) -> Result<DeclarationCheck> {
        let vals: Vec<f64> = grid.iter().map(|x| self.eval(x)).collect::<Result<_>>()?;
        let observed_sup = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut observed_lip = 0.0f64;
        for i in 0..grid.len() {
            for j in (i + 1)..grid.len() {
                let d = metric.distance(&grid[i], &grid[j])?;
                if d > 0.0 {
                    observed_lip = observed_lip.max((vals[i] - vals[j]).abs() / d);
                }
            }
        }
        let tol = 1e-12;
        Ok(DeclarationCheck {
            observed_sup,
            observed_lip,
            sup_ok: observed_sup <= self.sup_norm * (1.0 + tol) + tol,
            lip_ok: observed_lip <= self.lip_const * (1.0 + tol) + tol,
        })
    }
}

/// Result of [`Observable::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeclarationCheck {
    pub observed_sup: f64,
    pub observed_lip: f64,
    pub sup_ok: bool,
    pub lip_ok: bool,
}

/// `g(x)`, with a kind check.
pub fn eval_observable(obs: &Observable, x: &StatePoint) -> Result<f64> {
    obs.eval(x)
}

/// Anchor `x₀` and exponent `ζ > 2` of the moment condition; `V = ρ(x₀, ·)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub anchor: StatePoint,
    pub zeta: f64,
}

impl LyapunovConfig {
    pub fn new(anchor: StatePoint, zeta: f64) -> Result<LyapunovConfig> {
        if !(zeta > 2.0) || !zeta.is_finite() {
            return Err(LabError::InvalidArgument(format!("zeta must lie in (2, ∞), got {zeta}")));
        }
        Ok(LyapunovConfig { anchor, zeta })
    }

    pub fn v(&self, metric: &Metric, x: &StatePoint) -> Result<f64> {
        metric.distance(&self.anchor, x)
    }
}

/// Weighted point cloud; weights are positive and normalized on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    atoms: Vec<(StatePoint, f64)>,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<(StatePoint, f64)>) -> Result<EmpiricalMeasure> {
        if atoms.is_empty() {
            return Err(LabError::InvalidMeasure("no atoms".into()));
        }
        let first_kind = atoms[0].0.kind();
        let mut total = 0.0;
        for (x, w) in &atoms {
            if let StatePoint::Real(v) = x {
                if !v.is_finite() {
                    return Err(LabError::NonFiniteState);
                }
            }
            if x.kind() != first_kind {
                return Err(LabError::InvalidMeasure("atoms of mixed kinds".into()));
            }
            if !(*w > 0.0) || !w.is_finite() {
                return Err(LabError::InvalidMeasure(format!("weight {w} is not positive")));
            }
            total += w;
        }
        let atoms = atoms.into_iter().map(|(x, w)| (x, w / total)).collect();
        Ok(EmpiricalMeasure { atoms })
    }

    pub fn dirac(x: StatePoint) -> EmpiricalMeasure {
        EmpiricalMeasure { atoms: vec![(x, 1.0)] }
    }

    /// Equal-weight measure on the samples.
    pub fn from_samples(xs: &[f64]) -> Result<EmpiricalMeasure> {
        let pts = xs.iter().map(|&x| StatePoint::real(x).map(|p| (p, 1.0))).collect::<Result<Vec<_>>>()?;
        EmpiricalMeasure::new(pts)
    }

    /// Probability vector on `states` points.
    pub fn from_probabilities(p: &[f64]) -> Result<EmpiricalMeasure> {
        let atoms: Vec<_> = p.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, &w)| (StatePoint::Index(i), w)).collect();
        EmpiricalMeasure::new(atoms)
    }

    pub fn atoms(&self) -> &[(StatePoint, f64)] {
        &self.atoms
    }

    pub fn integrate(&self, mut f: impl FnMut(&StatePoint) -> Result<f64>) -> Result<f64> {
        let mut s = 0.0;
        for (x, w) in &self.atoms {
            s += w * f(x)?;
        }
        Ok(s)
    }

    /// Dense probability vector on a finite space.
    pub fn to_probabilities(&self, states: usize) -> Result<Vec<f64>> {
        let mut p = vec![0.0; states];
        for (x, w) in &self.atoms {
            let i = x.as_index()?;
            if i >= states {
                return Err(LabError::StateOutOfRange { index: i, states });
            }
            p[i] += w;
        }
        Ok(p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StatePoint {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (x, w) in &self.atoms {
            acc += w;
            if u < acc {
                return *x;
            }
        }
        self.atoms[self.atoms.len() - 1].0
    }
}

/// Invariant laws that are known in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExactMeasure {
    Discrete { probabilities: Vec<f64> },
    Gaussian { mean: f64, variance: f64 },
}

/// Number of Gauss–Hermite nodes used for smooth Gaussian expectations.
pub const DEFAULT_GH_NODES: usize = 64;

impl ExactMeasure {
    /// `⟨f, measure⟩` for smooth `f`.
    pub fn expect(&self, f: impl Fn(&StatePoint) -> f64) -> f64 {
        match self {
            ExactMeasure::Discrete { probabilities } => {
                probabilities.iter().enumerate().map(|(i, p)| p * f(&StatePoint::Index(i))).sum()
            }
            ExactMeasure::Gaussian { mean, variance } => {
                let gh = GaussHermite::cached(DEFAULT_GH_NODES);
                gh.gaussian_expectation(*mean, variance.sqrt(), |x| f(&StatePoint::Real(x)))
            }
        }
    }

    /// `⟨f, measure⟩` for a real function with known kinks (Gaussian case
    /// integrated piecewise).
    pub fn expect_real_kinked(&self, f: impl Fn(f64) -> f64, kinks: &[f64]) -> f64 {
        match self {
            ExactMeasure::Gaussian { mean, variance } => gaussian_expectation_kinked(*mean, variance.sqrt(), f, kinks),
            ExactMeasure::Discrete { probabilities } => {
                probabilities.iter().enumerate().map(|(i, p)| p * f(i as f64)).sum()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StatePoint {
        match self {
            ExactMeasure::Discrete { probabilities } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in probabilities.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return StatePoint::Index(i);
                    }
                }
                StatePoint::Index(probabilities.len() - 1)
            }
            ExactMeasure::Gaussian { mean, variance } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                StatePoint::Real(mean + variance.sqrt() * z)
            }
        }
    }
}

/// `E[f(mean + sd·Z)]` by composite Simpson on `z ∈ [−12, 12]`, with the
/// images of `kinks` inserted as panel breakpoints.
pub fn gaussian_expectation_kinked(mean: f64, sd: f64, f: impl Fn(f64) -> f64, kinks: &[f64]) -> f64 {
    if sd == 0.0 {
        return f(mean);
    }
    const L: f64 = 12.0;
    const PANELS_PER_UNIT: f64 = 160.0;
    let mut cuts = vec![-L, L];
    for &k in kinks {
        let z = (k - mean) / sd;
        if z > -L && z < L {
            cuts.push(z);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let m = (((b - a) * PANELS_PER_UNIT).ceil() as usize).max(2);
        let h = (b - a) / m as f64;
        let g = |z: f64| phi(z) * f(mean + sd * z);
        let mut s = g(a) + g(b);
        for k in 1..m {
            let z = a + k as f64 * h;
            s += 2.0 * g(z);
        }
        for k in 0..m {
            let z = a + (k as f64 + 0.5) * h;
            s += 4.0 * g(z);
        }
        total += s * h / 6.0;
    }
    total
}

/// Either kind of measure, borrowed.
#[derive(Debug, Clone, Copy)]
pub enum MeasureRef<'a> {
    Empirical(&'a EmpiricalMeasure),
    Exact(&'a ExactMeasure),
}

/// Output of [`center_observable`].
#[derive(Debug, Clone)]
pub struct Centered {
    pub observable: Observable,
    pub mean: f64,
    /// Monte Carlo standard error of the subtracted mean (empirical measures).
    pub mc_error: Option<f64>,
}

/// Subtracts `⟨g, μ*⟩` so the centering hypothesis holds.
pub fn center_observable(obs: &Observable, mu_star: MeasureRef<'_>) -> Result<Centered> {
    let (mean, mc_error) = match mu_star {
        MeasureRef::Exact(m) => {
            match (m, obs.domain()) {
                (ExactMeasure::Discrete { probabilities }, Domain::Finite { states }) if probabilities.len() == states => {}
                (ExactMeasure::Gaussian { .. }, Domain::Real) => {}
                _ => {
                    return Err(LabError::KindMismatch {
                        expected: format!("{:?}", obs.domain()),
                        found: "incompatible exact measure".into(),
                    })
                }
            }
            let mean = match m {
                ExactMeasure::Discrete { .. } => m.expect(|x| obs.eval(x).unwrap_or(f64::NAN)),
                ExactMeasure::Gaussian { .. } => m.expect_real_kinked(|x| obs.eval_real(x), &obs.kinks()),
            };
            (mean, None)
        }
        MeasureRef::Empirical(e) => {
            let mean = e.integrate(|x| obs.eval(x))?;
            let var = e.integrate(|x| obs.eval(x).map(|v| (v - mean).powi(2)))?;
            let sum_w2: f64 = e.atoms().iter().map(|(_, w)| w * w).sum();
            (mean, Some((var * sum_w2).sqrt()))
        }
    };
    let mut observable = obs.shifted(-mean);
    observable.is_centered = true;
    Ok(Centered { observable, mean, mc_error })
}

/// `⟨ρ(x₀, ·)^r, ν⟩`.
pub fn moment(measure: MeasureRef<'_>, cfg: &LyapunovConfig, metric: &Metric, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(LabError::InvalidArgument(format!("moment order must be positive, got {r}")));
    }
    match measure {
        MeasureRef::Empirical(e) => e.integrate(|x| Ok(cfg.v(metric, x)?.powf(r))),
        MeasureRef::Exact(ExactMeasure::Discrete { probabilities }) => {
            let mut s = 0.0;
            for (i, p) in probabilities.iter().enumerate() {
                s += p * cfg.v(metric, &StatePoint::Index(i))?.powf(r);
            }
            Ok(s)
        }
        MeasureRef::Exact(m @ ExactMeasure::Gaussian { .. }) => {
            let a = cfg.anchor.as_real()?;
            Ok(m.expect_real_kinked(|x| (x - a).abs().powf(r), &[a]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Metric {
        Metric::DiscreteUniform { states: 2 }
    }

    #[test]
    fn nan_state_is_rejected() {
        assert_eq!(StatePoint::real(f64::NAN), Err(LabError::NonFiniteState));
        assert_eq!(StatePoint::real(f64::INFINITY), Err(LabError::NonFiniteState));
    }

    #[test]
    fn eval_examples() {
        let zero = Observable::zero(Domain::Real);
        assert_eq!(zero.eval(&StatePoint::Real(3.7)).unwrap(), 0.0);
        let clip = Observable::clipped_identity(1.0);
        assert_eq!(clip.eval(&StatePoint::Real(0.5)).unwrap(), 0.5);
        let g = Observable::table(vec![1.0, -1.0], &two_state()).unwrap();
        assert_eq!(g.eval(&StatePoint::Index(1)).unwrap(), -1.0);
        assert_eq!(g.lip_const, 2.0);
        assert!(matches!(g.eval(&StatePoint::Real(0.0)), Err(LabError::KindMismatch { .. })));
        assert!(matches!(clip.eval(&StatePoint::Index(0)), Err(LabError::KindMismatch { .. })));
        assert!(matches!(g.eval(&StatePoint::Index(2)), Err(LabError::StateOutOfRange { .. })));
    }

    #[test]
    fn centering_examples() {
        let pi = ExactMeasure::Discrete { probabilities: vec![0.5, 0.5] };
        let g = Observable::table(vec![1.0, -1.0], &two_state()).unwrap();
        let c = center_observable(&g, MeasureRef::Exact(&pi)).unwrap();
        assert_eq!(c.mean, 0.0);
        assert_eq!(c.observable.values().unwrap(), vec![1.0, -1.0]);

        let h = Observable::table(vec![1.0, 0.0], &two_state()).unwrap();
        let c = center_observable(&h, MeasureRef::Exact(&pi)).unwrap();
        assert_eq!(c.observable.values().unwrap(), vec![0.5, -0.5]);
        assert_eq!(c.observable.sup_norm, 1.5);
        assert_eq!(c.observable.lip_const, h.lip_const);
        assert!(c.observable.is_centered);

        let k = Observable::constant(3.0, Domain::Finite { states: 2 });
        let c = center_observable(&k, MeasureRef::Exact(&pi)).unwrap();
        assert_eq!(c.observable.values().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn centering_is_idempotent_for_gaussian() {
        let mu = ExactMeasure::Gaussian { mean: 0.3, variance: 1.7 };
        let g = Observable::tanh(1.3);
        let once = center_observable(&g, MeasureRef::Exact(&mu)).unwrap();
        let twice = center_observable(&once.observable, MeasureRef::Exact(&mu)).unwrap();
        assert!(twice.mean.abs() < 1e-12);
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            assert!((once.observable.eval_real(x) - twice.observable.eval_real(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_examples() {
        let cfg = LyapunovConfig::new(StatePoint::Real(0.0), 3.0).unwrap();
        let m = Metric::Euclidean1d;
        let dirac0 = EmpiricalMeasure::dirac(StatePoint::Real(0.0));
        assert_eq!(moment(MeasureRef::Empirical(&dirac0), &cfg, &m, 2.5).unwrap(), 0.0);
        let dirac2 = EmpiricalMeasure::dirac(StatePoint::Real(2.0));
        assert_eq!(moment(MeasureRef::Empirical(&dirac2), &cfg, &m, 3.0).unwrap(), 8.0);
        let uni = EmpiricalMeasure::from_samples(&[0.0, 2.0]).unwrap();
        assert_eq!(moment(MeasureRef::Empirical(&uni), &cfg, &m, 2.0).unwrap(), 2.0);
        assert!(moment(MeasureRef::Empirical(&uni), &cfg, &m, 0.0).is_err());
    }

    #[test]
    fn gaussian_absolute_moments_match_closed_form() {
        // E|Z|^3 = 2·sqrt(2/π) and E|Z| = sqrt(2/π).
        let cfg = LyapunovConfig::new(StatePoint::Real(0.0), 3.0).unwrap();
        let mu = ExactMeasure::Gaussian { mean: 0.0, variance: 1.0 };
        let m3 = moment(MeasureRef::Exact(&mu), &cfg, &Metric::Euclidean1d, 3.0).unwrap();
        let m1 = moment(MeasureRef::Exact(&mu), &cfg, &Metric::Euclidean1d, 1.0).unwrap();
        let c = (2.0 / std::f64::consts::PI).sqrt();
        assert!((m3 - 2.0 * c).abs() < 1e-10);
        assert!((m1 - c).abs() < 1e-10);
    }

    #[test]
    fn zeta_must_exceed_two() {
        assert!(LyapunovConfig::new(StatePoint::Real(0.0), 2.0).is_err());
        assert!(LyapunovConfig::new(StatePoint::Real(0.0), 2.0001).is_ok());
    }

    #[test]
    fn empirical_measure_normalizes_and_rejects_bad_weights() {
        let m = EmpiricalMeasure::new(vec![(StatePoint::Real(0.0), 2.0), (StatePoint::Real(1.0), 6.0)]).unwrap();
        let total: f64 = m.atoms().iter().map(|a| a.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(m.atoms()[0].1, 0.25);
        assert!(EmpiricalMeasure::new(vec![]).is_err());
        assert!(EmpiricalMeasure::new(vec![(StatePoint::Real(0.0), 0.0)]).is_err());
        assert!(EmpiricalMeasure::new(vec![(StatePoint::Real(0.0), -1.0)]).is_err());
        assert!(EmpiricalMeasure::new(vec![(StatePoint::Real(0.0), 1.0), (StatePoint::Index(0), 1.0)]).is_err());
    }

    #[test]
    fn explicit_metric_validation() {
        assert!(Metric::explicit(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
        assert!(Metric::explicit(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(Metric::explicit(vec![vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        let bad_triangle = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        assert!(Metric::explicit(bad_triangle).is_err());
        let m = Metric::from_json(r#"{"states": 3, "rho": [[0,1,2],[1,0,1],[2,1,0]]}"#).unwrap();
        assert_eq!(m.distance(&StatePoint::Index(0), &StatePoint::Index(2)).unwrap(), 2.0);
        assert!(Metric::from_json(r#"{"states": 2, "rho": [[0,1,2],[1,0,1],[2,1,0]]}"#).is_err());
    }

    #[test]
    fn declaration_check_flags_understated_lipschitz() {
        let g = Observable::tanh(2.0).with_declared(1.0, 1.0);
        let grid: Vec<StatePoint> = (-20..=20).map(|k| StatePoint::Real(k as f64 * 0.05)).collect();
        let chk = g.validate(&Metric::Euclidean1d, &grid).unwrap();
        assert!(chk.sup_ok);
        assert!(!chk.lip_ok);
    }
}
