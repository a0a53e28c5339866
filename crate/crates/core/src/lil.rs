//! Headline experiments: the three representations of `σ_g²`, the
//! integer-skeleton discretization gap, the LIL envelope and a CLT proxy.
//!
//! The `±1` LIL limit is out of reach at desk horizons (`ln ln 10⁴ ≈ 2.22`),
//! so the envelope experiment reports containment and trend statistics
//! rather than the limit itself.

use serde::Serialize;

use crate::corrector::{sigma_pairing, Corrector};
use crate::error::{LabError, Result};
use crate::functionals::{
    additive_functional, exact_second_moment_ctmc, martingale_decompose, simulate_path, InitialLaw, PathGrid,
};
use crate::models::Model;
use crate::rng::{map_paths, Purpose};
use crate::space::Observable;
use crate::stats::{fit_line, ks_critical_value, ks_p_value, ks_statistic, normal_cdf, quantile, slope_weights, Estimate};

/// Variances below this are treated as zero.
pub const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaOptions {
    /// Stationary unit-time paths for `E_{μ*}[M₁²]`.
    pub n_paths: usize,
    /// Paths for the growth estimate `E_μ[I_t²]/t`.
    pub n_paths_growth: usize,
    /// Times at which `E_μ[I_t²]/t` is recorded; the largest one gives the
    /// estimate.
    pub growth_times: Vec<f64>,
    pub mesh: f64,
    pub growth_mesh: f64,
    pub seed: u64,
    /// Pairwise agreement threshold in joint standard errors.
    pub joint_se: f64,
}

impl SigmaOptions {
    pub fn for_model(model: &Model, seed: u64) -> SigmaOptions {
        match model {
            Model::Ctmc(_) => SigmaOptions {
                n_paths: 100_000,
                n_paths_growth: 100_000,
                growth_times: vec![25.0, 50.0, 100.0, 200.0],
                mesh: 1.0,
                growth_mesh: 1.0,
                seed,
                joint_se: 4.0,
            },
            Model::Ou(_) => SigmaOptions {
                n_paths: 20_000,
                n_paths_growth: 20_000,
                growth_times: vec![25.0, 50.0, 100.0, 200.0],
                mesh: 0.001,
                growth_mesh: 0.02,
                seed,
                joint_se: 4.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueWithError {
    pub value: f64,
    pub std_error: f64,
}

impl From<Estimate> for ValueWithError {
    fn from(e: Estimate) -> Self {
        ValueWithError { value: e.mean, std_error: e.std_error }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthPoint {
    pub t: f64,
    /// Cross-path mean of `I_t²/t`.
    pub ratio: f64,
    pub std_error: f64,
    /// `E_μ[I_t²]/t` in closed form when the model is a chain.
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairGap {
    pub pair: (&'static str, &'static str),
    pub difference: f64,
    pub joint_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    /// `E_{μ*}[M₁²]` by Monte Carlo.
    pub sigma_mart: ValueWithError,
    /// `2⟨gχ, μ*⟩`.
    pub sigma_pair: f64,
    pub sigma_pair_negative: bool,
    /// `E_μ[I_T²]/T` at the largest recorded `T`.
    pub sigma_growth: ValueWithError,
    pub growth_curve: Vec<GrowthPoint>,
    /// Least-squares line `E_μ[I_t²] ≈ intercept + slope·t` through the
    /// growth curve; the intercept is the finite-time correction.
    pub growth_slope: ValueWithError,
    pub growth_intercept: f64,
    pub gaps: Vec<PairGap>,
    pub joint_se_threshold: f64,
    pub degenerate: bool,
    pub status: String,
    pub passed: bool,
}

fn stationary_law(model: &Model) -> Result<InitialLaw> {
    Ok(InitialLaw::Exact(model.invariant_measure()?))
}

fn grid_index(grid: &PathGrid, t: f64) -> Result<usize> {
    let j = (t * grid.steps_per_unit as f64).round();
    if (j / grid.steps_per_unit as f64 - t).abs() > 1e-9 || j as usize > grid.steps {
        return Err(LabError::InvalidArgument(format!("time {t} is not a grid node")));
    }
    Ok(j as usize)
}

/// The three representations of the asymptotic variance, on independent
/// path sets.
pub fn sigma_triple(model: &Model, g: &Observable, chi: &Corrector, mu: &InitialLaw, opts: &SigmaOptions) -> Result<VarianceReport> {
    if opts.n_paths < 2 || opts.n_paths_growth < 2 || opts.growth_times.is_empty() {
        return Err(LabError::InvalidArgument("need at least two paths per estimate and one growth time".into()));
    }
    if opts.growth_times.iter().any(|t| !(*t > 0.0)) {
        return Err(LabError::InvalidArgument("growth times must be positive".into()));
    }
    let mu_star = model.invariant_measure()?;
    let pair = sigma_pairing(g, chi, &mu_star)?;

    let stationary = stationary_law(model)?;
    let unit = PathGrid::new(1.0, opts.mesh)?;
    let m1_sq: Vec<f64> = map_paths(opts.n_paths, |i| -> Result<f64> {
        let p = simulate_path(model, &stationary, unit, opts.seed, Purpose::StationaryUnit, i as u64)?;
        let tr = martingale_decompose(&p, g, chi)?;
        Ok(tr.z[0] * tr.z[0])
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let sigma_mart: ValueWithError = Estimate::from_samples(&m1_sq).into();

    let mut times = opts.growth_times.clone();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let t_max = *times.last().unwrap();
    let grid = PathGrid::new(t_max, opts.growth_mesh)?;
    let idx: Vec<usize> = times.iter().map(|&t| grid_index(&grid, t)).collect::<Result<_>>()?;
    let per_path: Vec<Vec<f64>> = map_paths(opts.n_paths_growth, |i| -> Result<Vec<f64>> {
        let p = simulate_path(model, mu, grid, opts.seed, Purpose::Growth, i as u64)?;
        let af = additive_functional(&p, g)?;
        Ok(idx.iter().map(|&j| af.values[j] * af.values[j]).collect())
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let exact_curve: Option<Vec<f64>> = match model {
        Model::Ctmc(c) => Some(
            times
                .iter()
                .map(|&t| exact_second_moment_ctmc(c, g, mu, t).map(|v| v / t))
                .collect::<Result<_>>()?,
        ),
        Model::Ou(_) => None,
    };
    let growth_curve: Vec<GrowthPoint> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let xs: Vec<f64> = per_path.iter().map(|v| v[k] / t).collect();
            let e = Estimate::from_samples(&xs);
            GrowthPoint { t, ratio: e.mean, std_error: e.std_error, exact: exact_curve.as_ref().map(|c| c[k]) }
        })
        .collect();
    let last = growth_curve[growth_curve.len() - 1];
    let sigma_growth = ValueWithError { value: last.ratio, std_error: last.std_error };

    let (growth_slope, growth_intercept) = if times.len() >= 2 {
        let w = slope_weights(&times);
        let slopes: Vec<f64> = per_path.iter().map(|v| v.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
        let means: Vec<f64> = growth_curve.iter().map(|p| p.ratio * p.t).collect();
        let fit = fit_line(&times, &means).expect("distinct growth times");
        (Estimate::from_samples(&slopes).into(), fit.intercept)
    } else {
        (sigma_growth, 0.0)
    };

    let pair_v = ValueWithError { value: pair.value, std_error: 0.0 };
    let entries = [("mart", sigma_mart), ("pair", pair_v), ("growth", sigma_growth)];
    let mut gaps = Vec::new();
    for a in 0..3 {
        for b in (a + 1)..3 {
            let (na, va) = entries[a];
            let (nb, vb) = entries[b];
            let difference = (va.value - vb.value).abs();
            let joint_se = va.std_error.hypot(vb.std_error);
            let z = if joint_se > 0.0 {
                difference / joint_se
            } else if difference == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            gaps.push(PairGap { pair: (na, nb), difference, joint_se, z });
        }
    }
    let degenerate = entries.iter().all(|(_, v)| v.value.abs() <= DEGENERATE_TOL);
    let agree = gaps.iter().all(|g| g.z <= opts.joint_se);
    let (status, passed) = if degenerate {
        ("degenerate variance".to_string(), false)
    } else if pair.negative {
        ("inconsistent corrector: negative pairing".to_string(), false)
    } else if agree {
        ("pass".to_string(), true)
    } else {
        ("fail".to_string(), false)
    };
    Ok(VarianceReport {
        sigma_mart,
        sigma_pair: pair.value,
        sigma_pair_negative: pair.negative,
        sigma_growth,
        growth_curve,
        growth_slope,
        growth_intercept,
        gaps,
        joint_se_threshold: opts.joint_se,
        degenerate,
        status,
        passed,
    })
}

/// `√(t ln ln t)`.
fn gap_scale(t: f64) -> f64 {
    (t * t.ln().ln()).sqrt()
}

/// Integers `3..=10`, then about twenty log-spaced values per decade, up to
/// `n_max`.
pub fn checkpoints(n_max: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (3..=n_max.min(10)).collect();
    let mut k = 0;
    loop {
        let n = (10f64 * 10f64.powf(k as f64 / 20.0)).round() as usize;
        if n > n_max {
            break;
        }
        if out.last().map_or(true, |&l| n > l) {
            out.push(n);
        }
        k += 1;
    }
    if n_max >= 3 && out.last() != Some(&n_max) {
        out.push(n_max);
    }
    out
}

/// `G_n = sup_{grid t∈[n,n+1)} |I_t/√(t ln ln t) − I_n/√(n ln ln n)|` at each
/// checkpoint `n`, from `I` on the grid.
pub fn gap_profile(i_values: &[f64], grid: &PathGrid, ns: &[usize]) -> Vec<f64> {
    let k = grid.steps_per_unit;
    ns.iter()
        .map(|&n| {
            let base = i_values[n * k] / gap_scale(n as f64);
            (n * k..(n + 1) * k)
                .map(|j| (i_values[j] / gap_scale(grid.time(j)) - base).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Pathwise ceiling `‖g‖/a_n + ‖g‖·n·(1/a_n − 1/a_{n+1})`, `a_t = √(t ln ln t)`,
/// from `|I_t − I_n| ≤ ‖g‖(t − n)` and `|I_n| ≤ ‖g‖n`.
pub fn gap_ceiling(sup_norm: f64, n: usize) -> f64 {
    let a = gap_scale(n as f64);
    let b = gap_scale(n as f64 + 1.0);
    sup_norm / a + sup_norm * n as f64 * (1.0 / a - 1.0 / b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint {
    pub n: usize,
    pub median: f64,
    pub max: f64,
    pub ceiling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizationReport {
    pub n_paths: usize,
    pub series: Vec<GapPoint>,
    pub reference_n: usize,
    pub terminal_n: usize,
    /// Least-squares slope of `ln median G_n` against `ln n` from the
    /// reference checkpoint on.
    pub log_slope: f64,
    pub within_ceiling: bool,
    pub passed: bool,
}

/// Reference checkpoint for trend statistics.
pub const TREND_REFERENCE_N: usize = 10;

/// Aggregates per-path gap profiles. Passes iff every gap respects the
/// ceiling, the median decays (negative log-log slope from `n = 10`) and the
/// terminal median is below the `n = 10` median, by a factor two once the
/// last checkpoint reaches `10³`.
pub fn discretization_gap(profiles: &[Vec<f64>], ns: &[usize], sup_norm: f64) -> Result<DiscretizationReport> {
    if profiles.is_empty() || ns.is_empty() {
        return Err(LabError::InvalidArgument("discretization gap needs paths and checkpoints".into()));
    }
    let series: Vec<GapPoint> = ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let xs: Vec<f64> = profiles.iter().map(|p| p[k]).collect();
            GapPoint { n, median: quantile(&xs, 0.5), max: xs.iter().cloned().fold(0.0, f64::max), ceiling: gap_ceiling(sup_norm, n) }
        })
        .collect();
    let within_ceiling = series.iter().all(|p| p.max <= p.ceiling * (1.0 + 1e-12));
    let r = series.iter().position(|p| p.n >= TREND_REFERENCE_N).unwrap_or(0);
    let tail = &series[r..];
    let terminal = series[series.len() - 1];
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        tail.iter().filter(|p| p.median > 0.0).map(|p| ((p.n as f64).ln(), p.median.ln())).unzip();
    let log_slope = fit_line(&xs, &ys).map_or(0.0, |f| f.slope);
    let reference = series[r].median;
    let factor = if terminal.n >= 1000 { 0.5 } else { 1.0 };
    let all_zero = series.iter().all(|p| p.max == 0.0);
    let passed = within_ceiling && (all_zero || (log_slope < 0.0 && terminal.median < factor * reference));
    let reference_n = series[r].n;
    Ok(DiscretizationReport {
        n_paths: profiles.len(),
        series,
        reference_n,
        terminal_n: terminal.n,
        log_slope,
        within_ceiling,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilOptions {
    pub n_paths: usize,
    pub horizon: f64,
    pub mesh: f64,
    pub delta: f64,
    /// First integer time at which the envelope is enforced (`> e`).
    pub envelope_start: usize,
    /// Additional window starts reported alongside the primary one.
    pub extra_window_starts: Vec<usize>,
    /// Largest acceptable share of paths exceeding `1 + δ`.
    pub max_exceedance: f64,
    pub seed: u64,
}

impl Default for LilOptions {
    fn default() -> Self {
        LilOptions {
            n_paths: 1000,
            horizon: 1e4,
            mesh: 0.1,
            delta: 0.5,
            envelope_start: 3,
            extra_window_starts: vec![16, 100, 1000],
            max_exceedance: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantilePoint {
    pub n: usize,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exceedance {
    pub window_start: usize,
    /// Share of paths with `sup M_n/√(2σ²n ln ln n) > 1 + δ` on the window.
    pub martingale_upper: f64,
    /// Same for `−inf`.
    pub martingale_lower: f64,
    pub functional_upper: f64,
    pub functional_lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilReport {
    pub sigma_sq_used: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub delta: f64,
    pub envelope_start: usize,
    /// Running sup of the normalized martingale, across-path quantiles.
    pub martingale_sup: Vec<QuantilePoint>,
    /// Running `−inf` of the normalized martingale.
    pub martingale_neg_inf: Vec<QuantilePoint>,
    pub functional_sup: Vec<QuantilePoint>,
    pub functional_neg_inf: Vec<QuantilePoint>,
    /// Primary statistic: `martingale_upper` on the window starting at
    /// `envelope_start`.
    pub envelope_exceedance_fraction: f64,
    pub exceedance: Vec<Exceedance>,
    pub median_sup_reference: f64,
    pub median_sup_terminal: f64,
    pub upward_trend: bool,
    pub discretization: DiscretizationReport,
    pub note: String,
    pub passed: bool,
}

struct PathSummary {
    m_sup: Vec<f64>,
    m_inf: Vec<f64>,
    i_sup: Vec<f64>,
    i_inf: Vec<f64>,
    /// Per window start: (m upper, m lower, i upper, i lower).
    exceed: Vec<[bool; 4]>,
    gaps: Vec<f64>,
}

fn summarize(
    m_int: &[f64],
    i_values: &[f64],
    grid: &PathGrid,
    scale: f64,
    opts: &LilOptions,
    starts: &[usize],
    ns: &[usize],
    gap_ns: &[usize],
) -> PathSummary {
    let env = 1.0 + opts.delta;
    let k = grid.steps_per_unit;
    let n_max = grid.whole_units();
    // Normalized martingale on integers n ≥ 3.
    let sm: Vec<f64> = (0..=n_max)
        .map(|n| if n >= 3 { m_int[n] / (scale * (2.0 * n as f64 * (n as f64).ln().ln()).sqrt()) } else { f64::NAN })
        .collect();
    // Normalized functional at grid times t ≥ 3.
    let first = 3 * k;
    let si = |j: usize| {
        let t = grid.time(j);
        i_values[j] / (scale * (2.0 * t * t.ln().ln()).sqrt())
    };
    let mut exceed = Vec::with_capacity(starts.len());
    for &s in starts {
        let mut flags = [false; 4];
        for v in &sm[s.min(n_max + 1)..] {
            flags[0] |= *v > env;
            flags[1] |= -*v > env;
        }
        for j in (s * k).max(first)..=grid.steps {
            let v = si(j);
            flags[2] |= v > env;
            flags[3] |= -v > env;
        }
        exceed.push(flags);
    }
    let s0 = opts.envelope_start;
    let mut m_sup = Vec::with_capacity(ns.len());
    let mut m_inf = Vec::with_capacity(ns.len());
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut c = 0;
    for n in s0..=n_max {
        hi = hi.max(sm[n]);
        lo = lo.min(sm[n]);
        while c < ns.len() && ns[c] == n {
            m_sup.push(hi);
            m_inf.push(-lo);
            c += 1;
        }
    }
    let mut i_sup = Vec::with_capacity(ns.len());
    let mut i_inf = Vec::with_capacity(ns.len());
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut c = 0;
    for j in (s0 * k).max(first)..=grid.steps {
        let v = si(j);
        hi = hi.max(v);
        lo = lo.min(v);
        if j % k == 0 {
            while c < ns.len() && ns[c] == j / k {
                i_sup.push(hi);
                i_inf.push(-lo);
                c += 1;
            }
        }
    }
    PathSummary { m_sup, m_inf, i_sup, i_inf, exceed, gaps: gap_profile(i_values, grid, gap_ns) }
}

fn quantile_series(ns: &[usize], per_path: &[&Vec<f64>]) -> Vec<QuantilePoint> {
    ns.iter()
        .enumerate()
        .map(|(k, &n)| {
            let xs: Vec<f64> = per_path.iter().map(|p| p[k]).collect();
            QuantilePoint { n, q10: quantile(&xs, 0.1), median: quantile(&xs, 0.5), q90: quantile(&xs, 0.9) }
        })
        .collect()
}

/// Running extrema of `M_n/√(2σ²n ln ln n)` and `I_t/√(2σ²t ln ln t)`
/// across paths started from `mu`, plus the discretization gap on the
/// same paths.
///
/// Passes iff the primary exceedance share is at most `max_exceedance`,
/// the median running sup at the horizon exceeds its value at `n = 10`,
/// and the discretization report passes.
pub fn lil_envelope(
    model: &Model,
    g: &Observable,
    chi: &Corrector,
    sigma_sq: f64,
    mu: &InitialLaw,
    opts: &LilOptions,
) -> Result<LilReport> {
    if !(sigma_sq > DEGENERATE_TOL) || !sigma_sq.is_finite() {
        return Err(LabError::DegenerateVariance);
    }
    let e_e = std::f64::consts::E.exp();
    if !(opts.horizon >= e_e) {
        return Err(LabError::InvalidArgument(format!("horizon must be at least e^e ≈ {e_e:.3}")));
    }
    if opts.envelope_start < 3 || !(opts.delta > 0.0) || opts.n_paths == 0 {
        return Err(LabError::InvalidArgument("need envelope_start ≥ 3, delta > 0 and at least one path".into()));
    }
    let grid = PathGrid::new(opts.horizon, opts.mesh)?;
    let n_max = grid.whole_units();
    if opts.envelope_start > n_max {
        return Err(LabError::InvalidArgument("envelope_start lies beyond the horizon".into()));
    }
    let ns: Vec<usize> = checkpoints(n_max).into_iter().filter(|&n| n >= opts.envelope_start).collect();
    let gap_ns = checkpoints(n_max - 1);
    let mut starts = vec![opts.envelope_start];
    starts.extend(opts.extra_window_starts.iter().filter(|&&s| s >= 3 && s <= n_max && s != opts.envelope_start));
    let scale = sigma_sq.sqrt();

    let summaries: Vec<PathSummary> = map_paths(opts.n_paths, |i| -> Result<PathSummary> {
        let p = simulate_path(model, mu, grid, opts.seed, Purpose::Paths, i as u64)?;
        let tr = martingale_decompose(&p, g, chi)?;
        Ok(summarize(&tr.integer_m(), &tr.i_values, &grid, scale, opts, &starts, &ns, &gap_ns))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let share = |w: usize, c: usize| summaries.iter().filter(|s| s.exceed[w][c]).count() as f64 / summaries.len() as f64;
    let exceedance: Vec<Exceedance> = starts
        .iter()
        .enumerate()
        .map(|(w, &window_start)| Exceedance {
            window_start,
            martingale_upper: share(w, 0),
            martingale_lower: share(w, 1),
            functional_upper: share(w, 2),
            functional_lower: share(w, 3),
        })
        .collect();
    let pick = |f: fn(&PathSummary) -> &Vec<f64>| summaries.iter().map(f).collect::<Vec<_>>();
    let martingale_sup = quantile_series(&ns, &pick(|s| &s.m_sup));
    let martingale_neg_inf = quantile_series(&ns, &pick(|s| &s.m_inf));
    let functional_sup = quantile_series(&ns, &pick(|s| &s.i_sup));
    let functional_neg_inf = quantile_series(&ns, &pick(|s| &s.i_inf));

    let reference = martingale_sup.iter().find(|p| p.n >= TREND_REFERENCE_N).unwrap_or(&martingale_sup[0]).median;
    let terminal = martingale_sup[martingale_sup.len() - 1].median;
    let upward_trend = terminal > reference;

    let profiles: Vec<Vec<f64>> = summaries.iter().map(|s| s.gaps.clone()).collect();
    let discretization = discretization_gap(&profiles, &gap_ns, g.sup_norm)?;
    let fraction = exceedance[0].martingale_upper;
    let passed = fraction <= opts.max_exceedance && upward_trend && discretization.passed;
    Ok(LilReport {
        sigma_sq_used: sigma_sq,
        horizon: grid.horizon(),
        n_paths: opts.n_paths,
        delta: opts.delta,
        envelope_start: opts.envelope_start,
        martingale_sup,
        martingale_neg_inf,
        functional_sup,
        functional_neg_inf,
        envelope_exceedance_fraction: fraction,
        exceedance,
        median_sup_reference: reference,
        median_sup_terminal: terminal,
        upward_trend,
        discretization,
        note: "the ±1 limit is not reachable at finite horizons; containment and trend statistics are reported instead"
            .to_string(),
        passed,
    })
}

/// Discretization gap experiment on its own.
pub fn discretization_experiment(
    model: &Model,
    g: &Observable,
    mu: &InitialLaw,
    n_paths: usize,
    horizon: f64,
    mesh: f64,
    seed: u64,
) -> Result<DiscretizationReport> {
    let grid = PathGrid::new(horizon, mesh)?;
    if grid.whole_units() < 10 {
        return Err(LabError::InvalidArgument("discretization gap needs a horizon of at least 10".into()));
    }
    let ns = checkpoints(grid.whole_units() - 1);
    let profiles: Vec<Vec<f64>> = map_paths(n_paths, |i| -> Result<Vec<f64>> {
        let p = simulate_path(model, mu, grid, seed, Purpose::Paths, i as u64)?;
        Ok(gap_profile(&additive_functional(&p, g)?.values, &grid, &ns))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    discretization_gap(&profiles, &ns, g.sup_norm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub n_paths: usize,
    pub t_eval: f64,
    pub ks_statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub passed: bool,
}

pub const CLT_ALPHA: f64 = 0.01;

/// One-sample KS test of `I_t/√(σ² t)` against the standard normal.
pub fn clt_proxy(i_values: &[f64], sigma_sq: f64, t_eval: f64) -> Result<CltReport> {
    if !(sigma_sq > DEGENERATE_TOL) {
        return Err(LabError::DegenerateVariance);
    }
    if !(t_eval > 0.0) || i_values.is_empty() {
        return Err(LabError::InvalidArgument("need t_eval > 0 and at least one path".into()));
    }
    let s = (sigma_sq * t_eval).sqrt();
    let xs: Vec<f64> = i_values.iter().map(|v| v / s).collect();
    let d = ks_statistic(&xs, normal_cdf);
    let n = xs.len();
    let critical_value = ks_critical_value(n, CLT_ALPHA);
    Ok(CltReport {
        n_paths: n,
        t_eval,
        ks_statistic: d,
        critical_value,
        p_value: ks_p_value(d, n),
        alpha: CLT_ALPHA,
        passed: d < critical_value,
    })
}

/// Simulates `I_{t_eval}` on `n_paths` independent paths and runs
/// [`clt_proxy`].
pub fn clt_experiment(
    model: &Model,
    g: &Observable,
    sigma_sq: f64,
    mu: &InitialLaw,
    n_paths: usize,
    t_eval: f64,
    mesh: f64,
    seed: u64,
) -> Result<CltReport> {
    if !(sigma_sq > DEGENERATE_TOL) {
        return Err(LabError::DegenerateVariance);
    }
    let grid = PathGrid::new(t_eval, mesh)?;
    let values: Vec<f64> = map_paths(n_paths, |i| -> Result<f64> {
        let p = simulate_path(model, mu, grid, seed, Purpose::Paths, i as u64)?;
        Ok(*additive_functional(&p, g)?.values.last().unwrap())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    clt_proxy(&values, sigma_sq, t_eval)
}

/// Stationary law as an initial-law value, for callers that default `μ`.
pub fn stationary_initial_law(model: &Model) -> Result<InitialLaw> {
    stationary_law(model)
}
