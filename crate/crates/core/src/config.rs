//! JSON experiment configuration.
//!
//! Every field is optional. Missing fields take model-dependent defaults,
//! and [`ExperimentConfig::resolve`] turns the file into a [`Resolved`]
//! configuration after checking every constraint and collecting every
//! violation.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::functionals::{HeydeScottOptions, InitialLaw, PathGrid};
use crate::lil::{LilOptions, SigmaOptions};
use crate::models::{CtmcModel, Model, OuModel};
use crate::space::{center_observable, Domain, EmpiricalMeasure, MeasureRef, Metric, Observable, StatePoint};

/// Model section: `{"kind":"ou","gamma":..,"sigma":..}` or
/// `{"kind":"ctmc","q":[[..]],"rho":[[..]],"gamma":..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDef {
    Ou {
        gamma: f64,
        sigma: f64,
    },
    Ctmc {
        q: Vec<Vec<f64>>,
        /// Ground metric; `ρ ≡ 1` off the diagonal when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<Vec<Vec<f64>>>,
        /// Declared contraction rate, used as the nominal `γ`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

impl Default for ModelDef {
    fn default() -> Self {
        ModelDef::Ou { gamma: 1.0, sigma: std::f64::consts::SQRT_2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableDef {
    Zero,
    Constant { value: f64 },
    /// Values per state of a chain.
    Table { values: Vec<f64> },
    Tanh { scale: f64 },
    ClippedIdentity { bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDef {
    Stationary,
    /// A state index for chains, a real number for OU.
    Point { state: f64 },
    /// Weighted atoms `[[state, weight], ...]`.
    Weights { atoms: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingSection {
    pub x_grid: Option<Vec<f64>>,
    pub y_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsSection {
    pub zeta: Option<f64>,
    pub anchor: Option<f64>,
    pub t_grid: Option<Vec<f64>>,
    pub samples_per_t: Option<usize>,
    pub burn_in: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicitySection {
    pub t_grid: Option<Vec<f64>>,
    pub samples_per_t: Option<usize>,
    /// Relative tolerance on the fitted decay rate.
    pub rate_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectorSection {
    pub table_points: Option<usize>,
    pub width_sd: Option<f64>,
    pub truncation_t: Option<f64>,
    pub mesh: Option<f64>,
    /// Largest accepted certified error for the OU table.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaSection {
    pub n_paths: Option<usize>,
    pub n_paths_growth: Option<usize>,
    pub growth_times: Option<Vec<f64>>,
    pub mesh: Option<f64>,
    pub growth_mesh: Option<f64>,
    pub joint_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MartingaleSection {
    pub n_paths: Option<usize>,
    pub horizon: Option<f64>,
    pub mesh: Option<f64>,
    pub threshold_se: Option<f64>,
    pub corruption_amplitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeydeScottSection {
    pub n_paths: Option<usize>,
    pub horizon: Option<f64>,
    pub mesh: Option<f64>,
    pub delta: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub zeta: Option<f64>,
    pub se_multiplier: Option<f64>,
    pub cauchy_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LilSection {
    pub n_paths: Option<usize>,
    pub horizon: Option<f64>,
    pub mesh: Option<f64>,
    pub delta: Option<f64>,
    pub envelope_start: Option<usize>,
    pub extra_window_starts: Option<Vec<usize>>,
    pub max_exceedance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltSection {
    pub n_paths: Option<usize>,
    pub t_eval: Option<f64>,
    pub mesh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSection {
    pub n_paths: Option<usize>,
    pub horizon: Option<f64>,
    pub mesh: Option<f64>,
}

/// Configuration file as written by the user.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelDef>,
    pub observable: Option<ObservableDef>,
    pub initial: Option<InitialDef>,
    pub seed: Option<u64>,
    /// Subtract `⟨g, μ*⟩` before use (default true).
    pub center: Option<bool>,
    /// Overrides for the path count, horizon and mesh of the command being
    /// run.
    pub n_paths: Option<usize>,
    pub horizon: Option<f64>,
    pub mesh: Option<f64>,
    pub mixing: MixingSection,
    pub moments: MomentsSection,
    pub ergodicity: ErgodicitySection,
    pub corrector: CorrectorSection,
    pub sigma: SigmaSection,
    pub martingale: MartingaleSection,
    pub heyde_scott: HeydeScottSection,
    pub lil: LilSection,
    pub clt: CltSection,
    pub discretization: DiscretizationSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }
}

/// Fully resolved settings; this is what reports embed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSettings {
    pub model: ModelDef,
    pub observable: ObservableDef,
    pub initial: Option<InitialDef>,
    pub seed: u64,
    pub center: bool,
    pub observable_shift: f64,
    pub mixing: MixingSettings,
    pub moments: MomentSettings,
    pub ergodicity: ErgodicitySettings,
    pub corrector: CorrectorSettings,
    pub sigma: SigmaOptions,
    pub martingale: MartingaleSettings,
    pub heyde_scott: HeydeScottSettings,
    pub lil: LilOptions,
    pub clt: CltSettings,
    pub discretization: DiscretizationSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingSettings {
    pub x_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSettings {
    pub zeta: f64,
    pub anchor: f64,
    pub t_grid: Vec<f64>,
    pub samples_per_t: usize,
    pub burn_in: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicitySettings {
    pub t_grid: Vec<f64>,
    pub samples_per_t: usize,
    pub rate_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectorSettings {
    pub table_points: usize,
    pub width_sd: f64,
    pub truncation_t: Option<f64>,
    pub mesh: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleSettings {
    pub n_paths: usize,
    pub horizon: f64,
    pub mesh: f64,
    pub threshold_se: f64,
    pub corruption_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeydeScottSettings {
    pub n_paths: usize,
    pub horizon: f64,
    pub mesh: f64,
    pub options: HeydeScottOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltSettings {
    pub n_paths: usize,
    pub t_eval: f64,
    pub mesh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizationSettings {
    pub n_paths: usize,
    pub horizon: f64,
    pub mesh: f64,
}

/// Built objects plus the settings they came from.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub settings: ResolvedSettings,
    pub model: Model,
    /// Observable after optional centering.
    pub observable: Observable,
}

impl Resolved {
    /// Initial law for path experiments: the configured one, else `μ*`.
    pub fn path_law(&self) -> Result<InitialLaw> {
        match &self.settings.initial {
            None | Some(InitialDef::Stationary) => Ok(InitialLaw::Exact(self.model.invariant_measure()?)),
            Some(def) => Ok(InitialLaw::Empirical(self.initial_measure(def)?)),
        }
    }

    /// Initial measure for the deterministic certifiers: the configured one,
    /// else a Dirac mass at `3` (OU) or state `0` (chains).
    pub fn start_measure(&self) -> Result<EmpiricalMeasure> {
        match &self.settings.initial {
            None => Ok(EmpiricalMeasure::dirac(default_start(&self.model))),
            Some(InitialDef::Stationary) => Err(LabError::Config(
                "this command needs a point or weighted initial law, not the stationary one".into(),
            )),
            Some(def) => self.initial_measure(def),
        }
    }

    fn initial_measure(&self, def: &InitialDef) -> Result<EmpiricalMeasure> {
        let point = |v: f64| state_point(&self.model, v);
        match def {
            InitialDef::Stationary => unreachable!("handled by callers"),
            InitialDef::Point { state } => Ok(EmpiricalMeasure::dirac(point(*state)?)),
            InitialDef::Weights { atoms } => {
                EmpiricalMeasure::new(atoms.iter().map(|(x, w)| point(*x).map(|p| (p, *w))).collect::<Result<_>>()?)
            }
        }
    }

    pub fn state_points(&self, xs: &[f64]) -> Result<Vec<StatePoint>> {
        xs.iter().map(|&x| state_point(&self.model, x)).collect()
    }
}

fn default_start(model: &Model) -> StatePoint {
    match model {
        Model::Ou(_) => StatePoint::Real(3.0),
        Model::Ctmc(_) => StatePoint::Index(0),
    }
}

/// Reads a number as a state of `model`: a nonnegative integer index for a
/// chain, any finite real for OU.
pub fn state_point(model: &Model, v: f64) -> Result<StatePoint> {
    match model {
        Model::Ou(_) => StatePoint::real(v),
        Model::Ctmc(m) => {
            if v < 0.0 || v.fract() != 0.0 || v >= m.states() as f64 {
                return Err(LabError::Config(format!("{v} is not a state index of a {}-state chain", m.states())));
            }
            Ok(StatePoint::Index(v as usize))
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn build_model(def: &ModelDef) -> Result<Model> {
    match def {
        ModelDef::Ou { gamma, sigma } => Ok(Model::Ou(OuModel::new(*gamma, *sigma)?)),
        ModelDef::Ctmc { q, rho, gamma } => {
            let metric = match rho {
                Some(r) => Metric::explicit(r.clone())?,
                None => Metric::DiscreteUniform { states: q.len() },
            };
            let mut m = CtmcModel::new(q.clone(), metric)?;
            if let Some(g) = gamma {
                m = m.with_gamma(*g)?;
            }
            Ok(Model::Ctmc(m))
        }
    }
}

fn default_observable(model: &Model) -> ObservableDef {
    match model {
        Model::Ou(_) => ObservableDef::Tanh { scale: 1.0 },
        Model::Ctmc(m) => {
            ObservableDef::Table { values: (0..m.states()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect() }
        }
    }
}

fn build_observable(def: &ObservableDef, model: &Model) -> Result<Observable> {
    let domain = model.domain();
    let real_only = |name: &str| {
        if domain != Domain::Real {
            Err(LabError::Config(format!("observable '{name}' needs a real state space")))
        } else {
            Ok(())
        }
    };
    match def {
        ObservableDef::Zero => Ok(Observable::zero(domain)),
        ObservableDef::Constant { value } => {
            if !value.is_finite() {
                return Err(LabError::Config("constant observable must be finite".into()));
            }
            Ok(Observable::constant(*value, domain))
        }
        ObservableDef::Table { values } => match model {
            Model::Ctmc(m) => Observable::table(values.clone(), m.metric()),
            Model::Ou(_) => Err(LabError::Config("table observables need a chain".into())),
        },
        ObservableDef::Tanh { scale } => {
            real_only("tanh")?;
            if !(*scale > 0.0) || !scale.is_finite() {
                return Err(LabError::Config(format!("tanh scale must be positive, got {scale}")));
            }
            Ok(Observable::tanh(*scale))
        }
        ObservableDef::ClippedIdentity { bound } => {
            real_only("clipped_identity")?;
            if !(*bound > 0.0) || !bound.is_finite() {
                return Err(LabError::Config(format!("clip bound must be positive, got {bound}")));
            }
            Ok(Observable::clipped_identity(*bound))
        }
    }
}

struct Issues(Vec<String>);

impl Issues {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    fn positive(&mut self, name: &str, v: f64) {
        self.check(v > 0.0 && v.is_finite(), || format!("{name} must be positive and finite, got {v}"));
    }

    fn grid(&mut self, name: &str, g: &[f64], strictly_increasing: bool) {
        self.check(!g.is_empty(), || format!("{name} must not be empty"));
        self.check(g.iter().all(|v| v.is_finite()), || format!("{name} must contain finite numbers"));
        if strictly_increasing {
            self.check(g.windows(2).all(|w| w[1] > w[0]), || format!("{name} must be strictly increasing"));
            self.check(g.first().map_or(true, |v| *v >= 0.0), || format!("{name} must be nonnegative"));
        }
    }

    fn path_grid(&mut self, name: &str, horizon: f64, mesh: f64) {
        if let Err(e) = PathGrid::new(horizon, mesh) {
            self.0.push(format!("{name}: {e}"));
        }
    }

    fn paths(&mut self, name: &str, n: usize, min: usize) {
        self.check(n >= min, || format!("{name}.n_paths must be at least {min}, got {n}"));
    }
}

impl ExperimentConfig {
    /// Applies defaults and validates everything; errors list every issue.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<Resolved> {
        let mut issues = Issues(Vec::new());
        let model_def = self.model.clone().unwrap_or_default();
        let model = match build_model(&model_def) {
            Ok(m) => m,
            Err(e) => return Err(LabError::Config(format!("model: {e}"))),
        };
        let is_ou = matches!(model, Model::Ou(_));
        let seed = seed_override.or(self.seed).unwrap_or(0);
        let center = self.center.unwrap_or(true);

        let obs_def = self.observable.clone().unwrap_or_else(|| default_observable(&model));
        let raw = match build_observable(&obs_def, &model) {
            Ok(o) => Some(o),
            Err(e) => {
                issues.0.push(format!("observable: {e}"));
                None
            }
        };
        if let Some(init) = &self.initial {
            let check = |v: f64| state_point(&model, v).map(|_| ());
            match init {
                InitialDef::Stationary => {}
                InitialDef::Point { state } => {
                    if let Err(e) = check(*state) {
                        issues.0.push(format!("initial: {e}"));
                    }
                }
                InitialDef::Weights { atoms } => {
                    issues.check(!atoms.is_empty(), || "initial: weights need at least one atom".into());
                    for (x, w) in atoms {
                        if let Err(e) = check(*x) {
                            issues.0.push(format!("initial: {e}"));
                        }
                        issues.check(*w > 0.0 && w.is_finite(), || format!("initial: weight {w} must be positive"));
                    }
                }
            }
        }

        let over_paths = self.n_paths;
        let over_h = self.horizon;
        let over_m = self.mesh;

        let states_grid = |model: &Model| -> Vec<f64> {
            match model {
                Model::Ctmc(m) => (0..m.states()).map(|i| i as f64).collect(),
                Model::Ou(_) => Vec::new(),
            }
        };
        let mixing = MixingSettings {
            x_grid: self.mixing.x_grid.clone().unwrap_or_else(|| if is_ou { linspace(-3.0, 3.0, 10) } else { states_grid(&model) }),
            y_grid: self.mixing.y_grid.clone().unwrap_or_else(|| if is_ou { linspace(-2.5, 4.0, 10) } else { states_grid(&model) }),
            t_grid: self.mixing.t_grid.clone().unwrap_or_else(|| linspace(0.1, 2.0, 10)),
            tolerance: self.mixing.tolerance.unwrap_or(1e-9),
        };
        issues.grid("mixing.x_grid", &mixing.x_grid, false);
        issues.grid("mixing.y_grid", &mixing.y_grid, false);
        issues.grid("mixing.t_grid", &mixing.t_grid, true);
        issues.positive("mixing.tolerance", mixing.tolerance);
        for (name, g) in [("mixing.x_grid", &mixing.x_grid), ("mixing.y_grid", &mixing.y_grid)] {
            for &v in g.iter() {
                if let Err(e) = state_point(&model, v) {
                    issues.0.push(format!("{name}: {e}"));
                }
            }
        }

        let moments = MomentSettings {
            zeta: self.moments.zeta.unwrap_or(4.0),
            anchor: self.moments.anchor.unwrap_or(0.0),
            t_grid: self.moments.t_grid.clone().unwrap_or_else(|| linspace(0.0, 10.0, 21)),
            samples_per_t: self.moments.samples_per_t.unwrap_or(0),
            burn_in: self.moments.burn_in.unwrap_or(0.0),
        };
        issues.check(moments.zeta > 2.0 && moments.zeta.is_finite(), || format!("moments.zeta must exceed 2, got {}", moments.zeta));
        issues.grid("moments.t_grid", &moments.t_grid, true);
        issues.check(moments.burn_in >= 0.0, || "moments.burn_in must be nonnegative".into());
        if let Err(e) = state_point(&model, moments.anchor) {
            issues.0.push(format!("moments.anchor: {e}"));
        }

        let ergodicity = ErgodicitySettings {
            t_grid: self.ergodicity.t_grid.clone().unwrap_or_else(|| linspace(0.5, 5.0, 10)),
            samples_per_t: self.ergodicity.samples_per_t.unwrap_or(100_000),
            rate_tolerance: self.ergodicity.rate_tolerance.unwrap_or(0.1),
        };
        issues.grid("ergodicity.t_grid", &ergodicity.t_grid, true);
        issues.check(ergodicity.t_grid.len() >= 2, || "ergodicity.t_grid needs at least two times".into());
        issues.check(ergodicity.samples_per_t >= 2, || "ergodicity.samples_per_t must be at least 2".into());
        issues.positive("ergodicity.rate_tolerance", ergodicity.rate_tolerance);

        let corrector = CorrectorSettings {
            table_points: self.corrector.table_points.unwrap_or(321),
            width_sd: self.corrector.width_sd.unwrap_or(8.0),
            truncation_t: self.corrector.truncation_t,
            mesh: self.corrector.mesh,
            tolerance: self.corrector.tolerance.unwrap_or(1e-6),
        };
        issues.check(corrector.table_points >= 4, || "corrector.table_points must be at least 4".into());
        issues.positive("corrector.width_sd", corrector.width_sd);
        if let Some(t) = corrector.truncation_t {
            issues.positive("corrector.truncation_t", t);
        }
        if let Some(m) = corrector.mesh {
            issues.positive("corrector.mesh", m);
        }
        issues.positive("corrector.tolerance", corrector.tolerance);

        let d = SigmaOptions::for_model(&model, seed);
        let sigma = SigmaOptions {
            n_paths: self.sigma.n_paths.or(over_paths).unwrap_or(d.n_paths),
            n_paths_growth: self.sigma.n_paths_growth.or(over_paths).unwrap_or(d.n_paths_growth),
            growth_times: self.sigma.growth_times.clone().unwrap_or(d.growth_times),
            mesh: self.sigma.mesh.unwrap_or(d.mesh),
            growth_mesh: self.sigma.growth_mesh.or(over_m).unwrap_or(d.growth_mesh),
            seed,
            joint_se: self.sigma.joint_se.unwrap_or(d.joint_se),
        };
        issues.paths("sigma", sigma.n_paths, 2);
        issues.paths("sigma (growth)", sigma.n_paths_growth, 2);
        issues.grid("sigma.growth_times", &sigma.growth_times, true);
        issues.positive("sigma.joint_se", sigma.joint_se);
        issues.path_grid("sigma", 1.0, sigma.mesh);
        if let Some(&t) = sigma.growth_times.last() {
            issues.path_grid("sigma (growth)", t, sigma.growth_mesh);
            for &s in &sigma.growth_times {
                issues.check(s > 0.0 && (s / sigma.growth_mesh - (s / sigma.growth_mesh).round()).abs() < 1e-9, || {
                    format!("sigma.growth_times: {s} is not a positive multiple of the growth mesh")
                });
            }
        }

        let martingale = MartingaleSettings {
            n_paths: self.martingale.n_paths.or(over_paths).unwrap_or(10_000),
            horizon: self.martingale.horizon.or(over_h).unwrap_or(10.0),
            mesh: self.martingale.mesh.or(over_m).unwrap_or(if is_ou { 0.01 } else { 1.0 }),
            threshold_se: self.martingale.threshold_se.unwrap_or(4.0),
            corruption_amplitude: self.martingale.corruption_amplitude.unwrap_or(0.5),
        };
        issues.paths("martingale", martingale.n_paths, crate::functionals::MIN_MARTINGALE_PATHS);
        issues.path_grid("martingale", martingale.horizon, martingale.mesh);
        issues.check(martingale.horizon >= 2.0, || "martingale.horizon must be at least 2".into());
        issues.positive("martingale.threshold_se", martingale.threshold_se);
        issues.positive("martingale.corruption_amplitude", martingale.corruption_amplitude);

        let hd = HeydeScottOptions::default();
        let heyde_scott = HeydeScottSettings {
            n_paths: self.heyde_scott.n_paths.or(over_paths).unwrap_or(if is_ou { 2000 } else { 10_000 }),
            horizon: self.heyde_scott.horizon.or(over_h).unwrap_or(if is_ou { 200.0 } else { 1000.0 }),
            mesh: self.heyde_scott.mesh.or(over_m).unwrap_or(if is_ou { 0.005 } else { 1.0 }),
            options: HeydeScottOptions {
                delta: self.heyde_scott.delta.unwrap_or(hd.delta),
                epsilons: self.heyde_scott.epsilons.clone().unwrap_or(hd.epsilons),
                zeta: self.heyde_scott.zeta.unwrap_or(hd.zeta),
                se_multiplier: self.heyde_scott.se_multiplier.unwrap_or(hd.se_multiplier),
                cauchy_fraction: self.heyde_scott.cauchy_fraction.unwrap_or(hd.cauchy_fraction),
            },
        };
        issues.paths("heyde_scott", heyde_scott.n_paths, 2);
        issues.path_grid("heyde_scott", heyde_scott.horizon, heyde_scott.mesh);
        issues.check(heyde_scott.horizon >= 4.0, || "heyde_scott.horizon must be at least 4".into());
        issues.positive("heyde_scott.delta", heyde_scott.options.delta);
        issues.check(!heyde_scott.options.epsilons.is_empty(), || "heyde_scott.epsilons must not be empty".into());
        for &e in &heyde_scott.options.epsilons {
            issues.positive("heyde_scott.epsilons", e);
        }
        issues.check(heyde_scott.options.zeta > 2.0, || "heyde_scott.zeta must exceed 2".into());
        issues.positive("heyde_scott.se_multiplier", heyde_scott.options.se_multiplier);
        issues.positive("heyde_scott.cauchy_fraction", heyde_scott.options.cauchy_fraction);

        let ld = LilOptions::default();
        let lil = LilOptions {
            n_paths: self.lil.n_paths.or(over_paths).unwrap_or(ld.n_paths),
            horizon: self.lil.horizon.or(over_h).unwrap_or(ld.horizon),
            mesh: self.lil.mesh.or(over_m).unwrap_or(ld.mesh),
            delta: self.lil.delta.unwrap_or(ld.delta),
            envelope_start: self.lil.envelope_start.unwrap_or(ld.envelope_start),
            extra_window_starts: self.lil.extra_window_starts.clone().unwrap_or(ld.extra_window_starts),
            max_exceedance: self.lil.max_exceedance.unwrap_or(ld.max_exceedance),
            seed,
        };
        issues.paths("lil", lil.n_paths, 1);
        issues.path_grid("lil", lil.horizon, lil.mesh);
        issues.check(lil.horizon >= std::f64::consts::E.exp(), || "lil.horizon must be at least e^e".into());
        issues.positive("lil.delta", lil.delta);
        issues.check(lil.envelope_start >= 3, || "lil.envelope_start must be at least 3".into());
        issues.check(lil.envelope_start as f64 <= lil.horizon, || "lil.envelope_start lies beyond the horizon".into());
        issues.check((0.0..=1.0).contains(&lil.max_exceedance), || "lil.max_exceedance must lie in [0, 1]".into());

        let clt = CltSettings {
            n_paths: self.clt.n_paths.or(over_paths).unwrap_or(10_000),
            t_eval: self.clt.t_eval.or(over_h).unwrap_or(50.0),
            mesh: self.clt.mesh.or(over_m).unwrap_or(if is_ou { 0.01 } else { 0.1 }),
        };
        issues.paths("clt", clt.n_paths, 2);
        issues.path_grid("clt", clt.t_eval, clt.mesh);

        let discretization = DiscretizationSettings {
            n_paths: self.discretization.n_paths.or(over_paths).unwrap_or(1000),
            horizon: self.discretization.horizon.or(over_h).unwrap_or(1000.0),
            mesh: self.discretization.mesh.or(over_m).unwrap_or(0.1),
        };
        issues.paths("discretization", discretization.n_paths, 1);
        issues.path_grid("discretization", discretization.horizon, discretization.mesh);
        issues.check(discretization.horizon >= 11.0, || "discretization.horizon must be at least 11".into());

        if !issues.0.is_empty() {
            return Err(LabError::Config(issues.0.join("\n")));
        }
        let raw = raw.expect("observable built when no issues were found");
        let (observable, observable_shift) = if center {
            let mu_star = model.invariant_measure()?;
            let c = center_observable(&raw, MeasureRef::Exact(&mu_star))?;
            (c.observable, c.mean)
        } else {
            (raw, 0.0)
        };
        Ok(Resolved {
            settings: ResolvedSettings {
                model: model_def,
                observable: obs_def,
                initial: self.initial.clone(),
                seed,
                center,
                observable_shift,
                mixing,
                moments,
                ergodicity,
                corrector,
                sigma,
                martingale,
                heyde_scott,
                lil,
                clt,
                discretization,
            },
            model,
            observable,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_ou_defaults() {
        let r = ExperimentConfig::default().resolve(None).unwrap();
        assert!(matches!(r.model, Model::Ou(m) if m.gamma == 1.0));
        assert_eq!(r.settings.mixing.x_grid.len(), 10);
        assert_eq!(r.settings.seed, 0);
        assert!(r.settings.observable_shift.abs() < 1e-14);
    }

    #[test]
    fn chain_config_parses() {
        let text = r#"{"model":{"kind":"ctmc","q":[[-1,1],[1,-1]]},"observable":{"kind":"table","values":[2,0]},"seed":9}"#;
        let r = ExperimentConfig::from_json(text).unwrap().resolve(None).unwrap();
        assert_eq!(r.settings.seed, 9);
        assert_eq!(r.settings.observable_shift, 1.0);
        assert_eq!(r.observable.values().unwrap(), vec![1.0, -1.0]);
        assert_eq!(r.settings.mixing.x_grid, vec![0.0, 1.0]);
        let r = ExperimentConfig::from_json(text).unwrap().resolve(Some(4)).unwrap();
        assert_eq!(r.settings.seed, 4);
    }

    #[test]
    fn issues_are_itemized() {
        let text = r#"{"mixing":{"t_grid":[1,0.5]},"lil":{"delta":-1,"horizon":5},"martingale":{"n_paths":10}}"#;
        let err = ExperimentConfig::from_json(text).unwrap().resolve(None).unwrap_err();
        let LabError::Config(msg) = err else { panic!("{err:?}") };
        assert!(msg.lines().count() >= 4, "{msg}");
        assert!(msg.contains("mixing.t_grid") && msg.contains("lil.delta") && msg.contains("martingale.n_paths"));
    }

    #[test]
    fn unknown_fields_and_bad_models_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"modle":{}}"#).is_err());
        let bad = r#"{"model":{"kind":"ctmc","q":[[-1,2],[1,-1]]}}"#;
        assert!(ExperimentConfig::from_json(bad).unwrap().resolve(None).is_err());
        let tbl = r#"{"observable":{"kind":"table","values":[1,-1]}}"#;
        assert!(ExperimentConfig::from_json(tbl).unwrap().resolve(None).is_err());
    }
}
