//! Paths, additive functionals `I_t(g) = ∫₀^t g(Φ_s) ds`, the martingale
//! decomposition `M_t = χ(Φ_t) − χ(Φ₀) + I_t` and Heyde–Scott diagnostics
//! for the integer-skeleton increments `Z_n = M_n − M_{n−1}`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::corrector::Corrector;
use crate::error::{LabError, Result};
use crate::models::{CtmcModel, Model, OuModel};
use crate::rng::{path_stream, PathRng, Purpose};
use crate::space::{EmpiricalMeasure, ExactMeasure, Observable, StatePoint};
use crate::stats::{quantile, Estimate};

/// Initial law `μ` of a path.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    Point(StatePoint),
    Empirical(EmpiricalMeasure),
    Exact(ExactMeasure),
}

impl InitialLaw {
    pub fn sample(&self, rng: &mut PathRng) -> StatePoint {
        match self {
            InitialLaw::Point(x) => *x,
            InitialLaw::Empirical(m) => m.sample(rng),
            InitialLaw::Exact(m) => m.sample(rng),
        }
    }

    /// Probability vector on `states` states, for exact oracles.
    pub fn probabilities(&self, states: usize) -> Result<Vec<f64>> {
        match self {
            InitialLaw::Point(x) => {
                let i = x.as_index()?;
                if i >= states {
                    return Err(LabError::StateOutOfRange { index: i, states });
                }
                let mut p = vec![0.0; states];
                p[i] = 1.0;
                Ok(p)
            }
            InitialLaw::Empirical(m) => m.to_probabilities(states),
            InitialLaw::Exact(ExactMeasure::Discrete { probabilities }) if probabilities.len() == states => {
                Ok(probabilities.clone())
            }
            InitialLaw::Exact(_) => Err(LabError::DimensionMismatch("initial law is not on the chain's states".into())),
        }
    }
}

/// Uniform time grid with integer nodes: `steps_per_unit` cells per unit
/// interval and `steps` cells in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathGrid {
    pub steps_per_unit: usize,
    pub steps: usize,
}

impl PathGrid {
    pub fn new(horizon: f64, mesh: f64) -> Result<PathGrid> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(LabError::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if !(mesh > 0.0) || mesh > 1.0 {
            return Err(LabError::InvalidArgument(format!("mesh must lie in (0, 1], got {mesh}")));
        }
        let k = (1.0 / mesh).round();
        if (k * mesh - 1.0).abs() > 1e-9 {
            return Err(LabError::InvalidArgument(format!("mesh {mesh} does not divide the unit interval")));
        }
        let steps = (horizon * k).round();
        if (steps - horizon * k).abs() > 1e-9 * steps.max(1.0) {
            return Err(LabError::InvalidArgument(format!("horizon {horizon} is not a multiple of mesh {mesh}")));
        }
        Ok(PathGrid { steps_per_unit: k as usize, steps: steps as usize })
    }

    pub fn mesh(&self) -> f64 {
        1.0 / self.steps_per_unit as f64
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 / self.steps_per_unit as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 / self.steps_per_unit as f64
    }

    /// Number of complete unit intervals.
    pub fn whole_units(&self) -> usize {
        self.steps / self.steps_per_unit
    }
}

/// A jump of a chain: time and post-jump state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub state: usize,
}

/// One simulated trajectory on a [`PathGrid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub model_kind: &'static str,
    pub grid: PathGrid,
    pub states: Vec<StatePoint>,
    /// Chain jumps in `(0, horizon]`; empty for OU.
    pub events: Vec<JumpEvent>,
    pub seed: u64,
    pub path_index: u64,
    #[serde(skip)]
    ou: Option<OuModel>,
}

impl PathRecord {
    pub fn grid_times(&self) -> Vec<f64> {
        (0..=self.grid.steps).map(|j| self.grid.time(j)).collect()
    }

    /// `Φ_n` for `n = 0..=⌊horizon⌋`.
    pub fn skeleton(&self) -> Vec<StatePoint> {
        let k = self.grid.steps_per_unit;
        (0..=self.grid.whole_units()).map(|n| self.states[n * k]).collect()
    }
}

/// Simulates one path of `model` from a draw of `init`, using the stream
/// `(seed, purpose, path_index)` for both the initial draw and the dynamics.
/// OU is sampled grid to grid from the exact kernel; chains are simulated
/// event by event and read off at grid times.
pub fn simulate_path(
    model: &Model,
    init: &InitialLaw,
    grid: PathGrid,
    seed: u64,
    purpose: Purpose,
    path_index: u64,
) -> Result<PathRecord> {
    let mut rng = path_stream(seed, purpose, path_index);
    let x0 = init.sample(&mut rng);
    model.domain().check(&x0)?;
    let (states, events, ou) = match model {
        Model::Ou(m) => (simulate_ou(m, x0.as_real()?, grid, &mut rng), Vec::new(), Some(*m)),
        Model::Ctmc(m) => {
            let (s, e) = simulate_ctmc(m, x0.as_index()?, grid, &mut rng);
            (s, e, None)
        }
    };
    Ok(PathRecord { model_kind: model.kind(), grid, states, events, seed, path_index, ou })
}

fn simulate_ou(m: &OuModel, x0: f64, grid: PathGrid, rng: &mut PathRng) -> Vec<StatePoint> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let h = grid.mesh();
    let a = (-m.gamma * h).exp();
    let s = m.kernel_variance(h).sqrt();
    let mut x = x0;
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(StatePoint::Real(x));
    for _ in 0..grid.steps {
        let z: f64 = rng.sample(StandardNormal);
        x = a * x + s * z;
        out.push(StatePoint::Real(x));
    }
    out
}

fn simulate_ctmc(m: &CtmcModel, x0: usize, grid: PathGrid, rng: &mut PathRng) -> (Vec<StatePoint>, Vec<JumpEvent>) {
    let horizon = grid.horizon();
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut state = x0;
    while let Some(h) = m.holding_time(state, rng) {
        t += h;
        if t > horizon {
            break;
        }
        state = m.jump(state, rng);
        events.push(JumpEvent { time: t, state });
    }
    let mut states = Vec::with_capacity(grid.steps + 1);
    let mut cur = x0;
    let mut e = 0;
    for j in 0..=grid.steps {
        let tj = grid.time(j);
        while e < events.len() && events[e].time <= tj {
            cur = events[e].state;
            e += 1;
        }
        states.push(StatePoint::Index(cur));
    }
    (states, events)
}

/// `I_t(g)` on the path grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditiveFunctional {
    pub values: Vec<f64>,
    /// True when the integral is computed exactly from jump times.
    pub exact: bool,
    /// Bound on `E_x|Riemann − ∫ g(Φ_s) ds|²` over one unit interval,
    /// zero when exact. Over `[0, t]` the bound scales by `t²`.
    pub unit_mse_bound: f64,
}

impl AdditiveFunctional {
    pub fn mse_bound(&self, t: f64) -> f64 {
        t * t * self.unit_mse_bound
    }
}

/// `I_t(g)` at every grid time. Chains: exact sojourn sums. OU: left-endpoint
/// Riemann sums with the mean-square bound
/// `Lip(g)²·[(1−e^{−γh})²·max(x₀², v) + v(1−e^{−2γh})]` (capped by `4‖g‖²`)
/// for `sup_{|s−t|≤h} E|g(Φ_s) − g(Φ_t)|²`, `v = σ²/(2γ)`.
pub fn additive_functional(path: &PathRecord, g: &Observable) -> Result<AdditiveFunctional> {
    match path.ou {
        Some(m) => {
            let values = riemann_functional(path, g)?;
            let h = path.grid.mesh();
            let v = m.stationary_variance();
            let x0 = path.states[0].as_real()?;
            let drift = -(-m.gamma * h).exp_m1();
            let incr = drift * drift * (x0 * x0).max(v) + m.kernel_variance(h);
            let bound = (g.lip_const * g.lip_const * incr).min(4.0 * g.sup_norm * g.sup_norm);
            Ok(AdditiveFunctional { values, exact: false, unit_mse_bound: bound })
        }
        None => Ok(AdditiveFunctional { values: exact_chain_functional(path, g)?, exact: true, unit_mse_bound: 0.0 }),
    }
}

fn exact_chain_functional(path: &PathRecord, g: &Observable) -> Result<Vec<f64>> {
    let x0 = path.states[0];
    g.eval(&x0)?;
    let mut out = Vec::with_capacity(path.grid.steps + 1);
    let mut acc = 0.0;
    let mut last_t = 0.0;
    let mut cur = x0.as_index()?;
    let mut e = 0;
    out.push(0.0);
    for j in 1..=path.grid.steps {
        let tj = path.grid.time(j);
        while e < path.events.len() && path.events[e].time <= tj {
            let ev = path.events[e];
            acc += g.eval_index(cur) * (ev.time - last_t);
            last_t = ev.time;
            cur = ev.state;
            e += 1;
        }
        out.push(acc + g.eval_index(cur) * (tj - last_t));
    }
    Ok(out)
}

/// Left-endpoint Riemann sums `Σ g(Φ_{s_{j−1}})·h` on the grid.
pub fn riemann_functional(path: &PathRecord, g: &Observable) -> Result<Vec<f64>> {
    let h = path.grid.mesh();
    let mut out = Vec::with_capacity(path.states.len());
    let mut acc = 0.0;
    out.push(0.0);
    for x in &path.states[..path.states.len() - 1] {
        acc += g.eval(x)? * h;
        out.push(acc);
    }
    Ok(out)
}

/// `|Riemann − exact|` bound on a chain path over `[0, t]`: every jump
/// inside a cell misattributes at most `osc(g)·h`.
pub fn chain_riemann_bound(path: &PathRecord, g: &Observable, t: f64) -> f64 {
    let osc = match g.values() {
        Some(v) => v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min),
        None => 2.0 * g.sup_norm,
    };
    let jumps = path.events.iter().filter(|e| e.time <= t).count();
    osc * jumps as f64 * path.grid.mesh()
}

/// `√(2t ln ln t)`, defined for `t > e`.
pub fn lil_scale(t: f64) -> Option<f64> {
    if t > std::f64::consts::E {
        Some((2.0 * t * t.ln().ln()).sqrt())
    } else {
        None
    }
}

/// Decomposition `I_t = M_t − (χ(Φ_t) − χ(Φ₀))` along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleTrace {
    pub grid: PathGrid,
    pub i_values: Vec<f64>,
    pub m_values: Vec<f64>,
    /// `R_t = (χ(Φ₀) − χ(Φ_t))/√(2t ln ln t)`, absent for `t ≤ e`.
    pub r_values: Vec<Option<f64>>,
    /// `Z_n = M_n − M_{n−1}`, `n = 1..=⌊horizon⌋`.
    pub z: Vec<f64>,
    /// Per-unit-interval mean-square quadrature bound.
    pub quadrature_error_bound: f64,
    pub skeleton: Vec<StatePoint>,
}

pub fn martingale_decompose(path: &PathRecord, g: &Observable, chi: &Corrector) -> Result<MartingaleTrace> {
    let af = additive_functional(path, g)?;
    let chi0 = chi.eval(&path.states[0])?;
    let mut m_values = Vec::with_capacity(af.values.len());
    let mut r_values = Vec::with_capacity(af.values.len());
    for (j, (x, i_t)) in path.states.iter().zip(&af.values).enumerate() {
        let c = chi.eval(x)?;
        m_values.push(c - chi0 + i_t);
        r_values.push(lil_scale(path.grid.time(j)).map(|s| (chi0 - c) / s));
    }
    let k = path.grid.steps_per_unit;
    let z = (1..=path.grid.whole_units()).map(|n| m_values[n * k] - m_values[(n - 1) * k]).collect();
    Ok(MartingaleTrace {
        grid: path.grid,
        i_values: af.values,
        m_values,
        r_values,
        z,
        quadrature_error_bound: af.unit_mse_bound,
        skeleton: path.skeleton(),
    })
}

impl MartingaleTrace {
    /// Largest `|I_t/s_t − M_t/s_t − R_t|` over grid times `t > e`.
    pub fn decomposition_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.i_values.len() {
            if let (Some(s), Some(r)) = (lil_scale(self.grid.time(j)), self.r_values[j]) {
                worst = worst.max((self.i_values[j] / s - self.m_values[j] / s - r).abs());
            }
        }
        worst
    }

    /// `M_n` for `n = 0..=⌊horizon⌋`.
    pub fn integer_m(&self) -> Vec<f64> {
        let k = self.grid.steps_per_unit;
        (0..=self.grid.whole_units()).map(|n| self.m_values[n * k]).collect()
    }
}

/// Bounded test function `h(Φ_n)`.
#[derive(Clone)]
pub struct FeatureMap {
    pub name: String,
    f: Arc<dyn Fn(&StatePoint) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureMap").field("name", &self.name).finish()
    }
}

impl FeatureMap {
    pub fn new(name: &str, f: impl Fn(&StatePoint) -> f64 + Send + Sync + 'static) -> FeatureMap {
        FeatureMap { name: name.to_string(), f: Arc::new(f) }
    }

    pub fn eval(&self, x: &StatePoint) -> f64 {
        (self.f)(x)
    }
}

/// Four bounded features: the constant, two indicators and an oscillating
/// map.
pub fn default_feature_maps(model: &Model) -> Vec<FeatureMap> {
    match model {
        Model::Ctmc(m) => {
            let last = m.states() - 1;
            let scale = std::f64::consts::PI / last.max(1) as f64;
            vec![
                FeatureMap::new("one", |_| 1.0),
                FeatureMap::new("state_first", |x| (x.value() == 0.0) as u8 as f64),
                FeatureMap::new("state_last", move |x| (x.value() == last as f64) as u8 as f64),
                FeatureMap::new("cosine", move |x| (scale * x.value()).cos()),
            ]
        }
        Model::Ou(_) => vec![
            FeatureMap::new("one", |_| 1.0),
            FeatureMap::new("positive", |x| (x.value() > 0.0) as u8 as f64),
            FeatureMap::new("tanh", |x| x.value().tanh()),
            FeatureMap::new("cosine", |x| x.value().cos()),
        ],
    }
}

/// Integer-skeleton data needed by the martingale diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonTrace {
    pub z: Vec<f64>,
    pub skeleton: Vec<StatePoint>,
}

impl From<&MartingaleTrace> for SkeletonTrace {
    fn from(t: &MartingaleTrace) -> Self {
        SkeletonTrace { z: t.z.clone(), skeleton: t.skeleton.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureEstimate {
    pub feature: String,
    /// Estimates `E[Z_{n+1}·h(Φ_n)]`.
    pub n: usize,
    pub mean: f64,
    pub std_error: f64,
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingalePropertyReport {
    pub n_paths: usize,
    pub threshold_se: f64,
    pub estimates: Vec<FeatureEstimate>,
    pub max_abs_z: f64,
    pub passed: bool,
}

pub const MIN_MARTINGALE_PATHS: usize = 1000;

/// Checks `E[Z_{n+1}·h(Φ_n)] = 0` for every `n` and feature; passes iff all
/// estimates lie within `threshold_se` standard errors of zero.
pub fn martingale_property_test(
    traces: &[SkeletonTrace],
    features: &[FeatureMap],
    threshold_se: f64,
) -> Result<MartingalePropertyReport> {
    if traces.len() < MIN_MARTINGALE_PATHS {
        return Err(LabError::TooFewPaths { needed: MIN_MARTINGALE_PATHS, got: traces.len() });
    }
    let n_max = traces.iter().map(|t| t.z.len()).min().unwrap_or(0);
    let mut estimates = Vec::new();
    for n in 0..n_max {
        for h in features {
            let xs: Vec<f64> = traces.iter().map(|t| t.z[n] * h.eval(&t.skeleton[n])).collect();
            let e = Estimate::from_samples(&xs);
            let z_score = if e.std_error > 0.0 {
                e.mean / e.std_error
            } else if e.mean == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            estimates.push(FeatureEstimate { feature: h.name.clone(), n, mean: e.mean, std_error: e.std_error, z_score });
        }
    }
    let max_abs_z = estimates.iter().map(|e| e.z_score.abs()).fold(0.0, f64::max);
    Ok(MartingalePropertyReport {
        n_paths: traces.len(),
        threshold_se,
        estimates,
        max_abs_z,
        passed: max_abs_z <= threshold_se,
    })
}

/// Settings for [`heyde_scott_diagnostics`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeydeScottOptions {
    /// Truncation level `δ` of the `Σ s_n^{-4} E[Z⁴; |Z| ≤ δ s_n]` series (`b3`).
    pub delta: f64,
    /// Truncation levels `ε` of the `Σ s_n^{-1} E[|Z|; |Z| > ε s_n]` series (`b4`).
    pub epsilons: Vec<f64>,
    /// Moment order `ζ` of the Lyapunov condition; the majorants use
    /// `ζ̂ = min(ζ, 4)`.
    pub zeta: f64,
    /// `b2` passes when `|s_n²/n − σ²|` is within this many standard errors.
    pub se_multiplier: f64,
    /// Largest allowed share of a partial sum contributed by its last quarter.
    pub cauchy_fraction: f64,
}

impl Default for HeydeScottOptions {
    fn default() -> Self {
        HeydeScottOptions { delta: 1.0, epsilons: vec![0.5, 1.0], zeta: 4.0, se_multiplier: 3.0, cauchy_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandPoint {
    pub n: usize,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub n: usize,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedSeries {
    pub level: f64,
    pub partial_sums: Vec<f64>,
    /// truncation majorant `level^{p}·sup_k E|Z_k|^{ζ̂}·Σ s_n^{−ζ̂}`, term by term.
    pub majorant: Vec<f64>,
    pub last_quarter_share: f64,
    pub within_majorant: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    DegenerateVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeydeScottReport {
    pub n_paths: usize,
    pub sigma_sq_ref: f64,
    /// Cross-path band of the running averages `(1/n)Σ_{k≤n} Z_k²`.
    pub b1_series: Vec<BandPoint>,
    /// `s_n²/n`, with `s_n² = Σ_{k≤n} E[Z_k²]`.
    pub b2_series: Vec<SeriesPoint>,
    /// `s_n²`, nondecreasing by construction.
    pub s_n_sq: Vec<f64>,
    /// Direct cross-path mean of `M_n²`, for comparison with `s_n²`.
    pub m_n_sq: Vec<f64>,
    pub b3: TruncatedSeries,
    pub b4: Vec<TruncatedSeries>,
    pub zeta_hat: f64,
    pub sup_abs_z_moment: f64,
    pub verdict_b1: Verdict,
    pub verdict_b2: Verdict,
    pub verdict_b3: Verdict,
    pub verdict_b4: Verdict,
    pub status: String,
}

impl HeydeScottReport {
    pub fn passed(&self) -> bool {
        [self.verdict_b1, self.verdict_b2, self.verdict_b3, self.verdict_b4].iter().all(|v| *v == Verdict::Pass)
    }
}

fn truncated_series(
    level: f64,
    s_n: &[f64],
    term: impl Fn(usize, f64) -> f64,
    majorant_power: f64,
    sup_moment: f64,
    zeta_hat: f64,
    cauchy_fraction: f64,
) -> TruncatedSeries {
    let mut partial_sums = Vec::with_capacity(s_n.len());
    let mut majorant = Vec::with_capacity(s_n.len());
    let (mut acc, mut macc) = (0.0, 0.0);
    for (k, &s) in s_n.iter().enumerate() {
        if s > 0.0 {
            acc += term(k, s);
            macc += level.powf(majorant_power) * sup_moment * s.powf(-zeta_hat);
        }
        partial_sums.push(acc);
        majorant.push(macc);
    }
    let total = acc;
    let q = s_n.len() - s_n.len() / 4;
    let before = if q == 0 { 0.0 } else { partial_sums[q - 1] };
    let last_quarter_share = if total > 0.0 { (total - before) / total } else { 0.0 };
    let within_majorant = partial_sums.iter().zip(&majorant).all(|(p, m)| *p <= m * (1.0 + 1e-12) + 1e-300);
    TruncatedSeries {
        level,
        passed: within_majorant && last_quarter_share < cauchy_fraction,
        partial_sums,
        majorant,
        last_quarter_share,
        within_majorant,
    }
}

/// Heyde–Scott conditions on `Z_n` sampled across paths.
///
/// - `b1`: the cross-path 10–90% band of `(1/n)ΣZ_k²` at the terminal `n`
///   contains `σ²` and is narrower than at `n/10`.
/// - `b2`: `s_n²/n` at the terminal `n` within `se_multiplier` standard
///   errors of `σ²`.
/// - `b3`, `b4`: the truncated partial sums stay below the truncation majorant and their
///   last quarter adds less than `cauchy_fraction` of the total.
pub fn heyde_scott_diagnostics(z_paths: &[Vec<f64>], sigma_sq_ref: f64, opts: &HeydeScottOptions) -> Result<HeydeScottReport> {
    if z_paths.is_empty() {
        return Err(LabError::TooFewPaths { needed: 1, got: 0 });
    }
    if !(sigma_sq_ref >= 0.0) {
        return Err(LabError::InvalidArgument(format!("reference variance must be nonnegative, got {sigma_sq_ref}")));
    }
    if !(opts.zeta > 2.0) || !(opts.delta > 0.0) || opts.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(LabError::InvalidArgument("need zeta > 2 and positive truncation levels".into()));
    }
    let n_max = z_paths.iter().map(|z| z.len()).min().unwrap_or(0);
    if n_max == 0 {
        return Err(LabError::InvalidArgument("no increments: horizon must be at least 1".into()));
    }
    let n_paths = z_paths.len();
    let zeta_hat = opts.zeta.min(4.0);

    // Per-path running sums of Z².
    let mut running: Vec<f64> = vec![0.0; n_paths];
    let mut b1_series = Vec::with_capacity(n_max);
    let mut b2_series = Vec::with_capacity(n_max);
    let mut s_n_sq = Vec::with_capacity(n_max);
    let mut m_n_sq = Vec::with_capacity(n_max);
    let mut m_paths: Vec<f64> = vec![0.0; n_paths];
    let mut bands_at = Vec::with_capacity(n_max);
    let mut sup_moment = 0.0f64;
    let mut s_prev = 0.0;
    for k in 0..n_max {
        let n = k + 1;
        let mut avgs = Vec::with_capacity(n_paths);
        let mut z2 = 0.0;
        let mut zpow = 0.0;
        for (p, z) in z_paths.iter().enumerate() {
            running[p] += z[k] * z[k];
            m_paths[p] += z[k];
            avgs.push(running[p] / n as f64);
            z2 += z[k] * z[k];
            zpow += z[k].abs().powf(zeta_hat);
        }
        let s = s_prev + z2 / n_paths as f64;
        s_prev = s;
        s_n_sq.push(s);
        m_n_sq.push(m_paths.iter().map(|m| m * m).sum::<f64>() / n_paths as f64);
        sup_moment = sup_moment.max(zpow / n_paths as f64);
        let e = Estimate::from_samples(&avgs);
        b2_series.push(SeriesPoint { n, value: s / n as f64, std_error: e.std_error });
        let band = BandPoint { n, q10: quantile(&avgs, 0.1), median: quantile(&avgs, 0.5), q90: quantile(&avgs, 0.9) };
        bands_at.push(band);
        b1_series.push(band);
    }

    let s_n: Vec<f64> = s_n_sq.iter().map(|v| v.sqrt()).collect();
    let degenerate = s_n_sq[n_max - 1] == 0.0;

    let delta = opts.delta;
    let b3 = truncated_series(
        delta,
        &s_n,
        |k, s| {
            let m: f64 = z_paths.iter().map(|z| if z[k].abs() < delta * s { z[k].powi(4) } else { 0.0 }).sum();
            m / n_paths as f64 / s.powi(4)
        },
        4.0 - zeta_hat,
        sup_moment,
        zeta_hat,
        opts.cauchy_fraction,
    );
    let b4: Vec<TruncatedSeries> = opts
        .epsilons
        .iter()
        .map(|&eps| {
            truncated_series(
                eps,
                &s_n,
                |k, s| {
                    let m: f64 = z_paths.iter().map(|z| if z[k].abs() >= eps * s { z[k].abs() } else { 0.0 }).sum();
                    m / n_paths as f64 / s
                },
                1.0 - zeta_hat,
                sup_moment,
                zeta_hat,
                opts.cauchy_fraction,
            )
        })
        .collect();

    let (verdict_b1, verdict_b2, verdict_b3, verdict_b4, status);
    if degenerate || sigma_sq_ref == 0.0 {
        verdict_b1 = Verdict::DegenerateVariance;
        verdict_b2 = Verdict::DegenerateVariance;
        verdict_b3 = Verdict::DegenerateVariance;
        verdict_b4 = Verdict::DegenerateVariance;
        status = "degenerate variance".to_string();
    } else {
        let last = bands_at[n_max - 1];
        let early = bands_at[(n_max / 10).max(1) - 1];
        let b1_ok = last.q10 <= sigma_sq_ref && sigma_sq_ref <= last.q90 && (last.q90 - last.q10) < (early.q90 - early.q10);
        let b2 = b2_series[n_max - 1];
        let b2_ok = (b2.value - sigma_sq_ref).abs() <= opts.se_multiplier * b2.std_error;
        let pick = |ok: bool| if ok { Verdict::Pass } else { Verdict::Fail };
        verdict_b1 = pick(b1_ok);
        verdict_b2 = pick(b2_ok);
        verdict_b3 = pick(b3.passed);
        verdict_b4 = pick(b4.iter().all(|s| s.passed));
        status = if [verdict_b1, verdict_b2, verdict_b3, verdict_b4].iter().all(|v| *v == Verdict::Pass) {
            "pass".to_string()
        } else {
            "fail".to_string()
        };
    }
    Ok(HeydeScottReport {
        n_paths,
        sigma_sq_ref,
        b1_series,
        b2_series,
        s_n_sq,
        m_n_sq,
        b3,
        b4,
        zeta_hat,
        sup_abs_z_moment: sup_moment,
        verdict_b1,
        verdict_b2,
        verdict_b3,
        verdict_b4,
        status,
    })
}

/// `E_μ[I_t(g)²] = 2∫₀^t∫₀^s μP_u(g·P_{s−u}g) du ds` on a chain.
///
/// The double integral is read off the corner block of
/// `exp(t·[[Q, D, 0], [0, Q, D], [0, 0, 0]])`, `D = diag(g)`, applied to the
/// constant vector.
pub fn exact_second_moment_ctmc(model: &CtmcModel, g: &Observable, mu: &InitialLaw, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(LabError::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    let n = model.states();
    let gv = g
        .values()
        .filter(|v| v.len() == n)
        .ok_or_else(|| LabError::DimensionMismatch(format!("observable does not live on {n} states")))?;
    let p = mu.probabilities(n)?;
    if t == 0.0 || gv.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let q = model.generator_matrix();
    let mut a = DMatrix::<f64>::zeros(3 * n, 3 * n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = q[(i, j)] * t;
            a[(n + i, n + j)] = q[(i, j)] * t;
        }
        a[(i, n + i)] = gv[i] * t;
        a[(n + i, 2 * n + i)] = gv[i] * t;
    }
    let e = a.exp();
    let mut total = 0.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| e[(i, 2 * n + j)]).sum();
        total += p[i] * row;
    }
    Ok(2.0 * total)
}
