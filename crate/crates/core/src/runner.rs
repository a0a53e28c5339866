//! Command dispatch: resolved configuration in, report out.

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{state_point, Resolved};
use crate::corrector::{
    corrector_ctmc, corrector_lipschitz_bound, corrector_slope, sigma_pairing, Corrector, OuCorrectorTable,
    OuTableOptions, SigmaPairing,
};
use crate::csv_row;
use crate::error::{LabError, Result};
use crate::functionals::{
    default_feature_maps, heyde_scott_diagnostics, martingale_decompose, martingale_property_test, simulate_path,
    PathGrid, SkeletonTrace,
};
use crate::lil::{clt_experiment, discretization_experiment, lil_envelope, sigma_triple, DEGENERATE_TOL};
use crate::models::Model;
use crate::report::{CsvSeries, Envelope, TOOL, VERSION};
use crate::rng::{map_paths, Purpose};
use crate::space::LyapunovConfig;
use crate::transport::{
    certify_contraction, certify_ergodicity, certify_moments, ContractionOptions, ErgodicityOptions, MomentOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    CertifyMixing,
    CertifyMoments,
    Ergodicity,
    Corrector,
    Sigma,
    MartingaleCheck,
    HeydeScott,
    Lil,
    CltProxy,
    Discretization,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::CertifyMixing,
        Command::CertifyMoments,
        Command::Ergodicity,
        Command::Corrector,
        Command::Sigma,
        Command::MartingaleCheck,
        Command::HeydeScott,
        Command::Lil,
        Command::CltProxy,
        Command::Discretization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::CertifyMixing => "certify-mixing",
            Command::CertifyMoments => "certify-moments",
            Command::Ergodicity => "ergodicity",
            Command::Corrector => "corrector",
            Command::Sigma => "sigma",
            Command::MartingaleCheck => "martingale-check",
            Command::HeydeScott => "heyde-scott",
            Command::Lil => "lil",
            Command::CltProxy => "clt-proxy",
            Command::Discretization => "discretization",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Command> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LabError::InvalidArgument(format!("unknown command '{s}'")))
    }
}

pub const STATUS_DEGENERATE: &str = "degenerate variance";

/// Result of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub command: Command,
    pub status: String,
    pub passed: bool,
    pub report: Value,
    pub series: CsvSeries,
}

impl Outcome {
    /// 0 on pass, 2 on a certified failure or a degenerate variance.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }

    /// Report envelope embedding the resolved configuration.
    pub fn to_json(&self, resolved: &Resolved, generated_at_unix: Option<u64>) -> Result<String> {
        let config = serde_json::to_value(&resolved.settings)?;
        Envelope {
            tool: TOOL,
            version: VERSION,
            command: self.command.name(),
            status: &self.status,
            passed: self.passed,
            config: &config,
            report: &self.report,
            generated_at_unix,
        }
        .to_json()
    }

    fn from_report<T: Serialize>(command: Command, passed: bool, status: Option<&str>, report: &T, series: CsvSeries) -> Result<Outcome> {
        Ok(Outcome {
            command,
            status: status.map_or_else(|| pass_fail(passed).to_string(), str::to_string),
            passed,
            report: serde_json::to_value(report)?,
            series,
        })
    }

    fn degenerate(command: Command, sigma_sq: f64) -> Outcome {
        Outcome {
            command,
            status: STATUS_DEGENERATE.into(),
            passed: false,
            report: json!({
                "status": STATUS_DEGENERATE,
                "sigma_sq": sigma_sq,
                "threshold": DEGENERATE_TOL,
                "note": "the asymptotic variance vanishes, so the normalization is undefined",
            }),
            series: CsvSeries::new(&["sigma_sq"]),
        }
    }
}

fn pass_fail(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "fail"
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`. Results do not depend on the choice.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(LabError::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn run(command: Command, r: &Resolved) -> Result<Outcome> {
    match command {
        Command::CertifyMixing => certify_mixing(r),
        Command::CertifyMoments => moments(r),
        Command::Ergodicity => ergodicity(r),
        Command::Corrector => corrector(r),
        Command::Sigma => sigma(r),
        Command::MartingaleCheck => martingale(r),
        Command::HeydeScott => heyde_scott(r),
        Command::Lil => lil(r),
        Command::CltProxy => clt(r),
        Command::Discretization => discretization(r),
    }
}

/// Rate used as the reference `γ`: the declared one, else the rate fitted
/// by the contraction certifier on every pair of states. The flag tells
/// whether the rate is certified.
fn reference_rate(model: &Model) -> Result<(f64, bool)> {
    if let Some(g) = model.nominal_gamma() {
        return Ok((g, true));
    }
    let Model::Ctmc(m) = model else { unreachable!("OU always declares its rate") };
    let states: Vec<_> = (0..m.states()).map(crate::space::StatePoint::Index).collect();
    let ts: Vec<f64> = (1..=10).map(|k| 0.2 * k as f64).collect();
    let cert = certify_contraction(model, &states, &states, &ts, &ContractionOptions { tolerance: 1e-9, measure_checks: false })?;
    Ok((cert.gamma_used, cert.passed))
}

fn certify_mixing(r: &Resolved) -> Result<Outcome> {
    let s = &r.settings.mixing;
    let cert = certify_contraction(
        &r.model,
        &r.state_points(&s.x_grid)?,
        &r.state_points(&s.y_grid)?,
        &s.t_grid,
        &ContractionOptions { tolerance: s.tolerance, measure_checks: true },
    )?;
    let mut series = CsvSeries::new(&["x", "y", "t", "rho", "distance", "ratio"]);
    for p in &cert.grid {
        series.push(csv_row![p.x.to_string().as_str(), p.y.to_string().as_str(), p.t, p.rho, p.distance, p.ratio]);
    }
    Outcome::from_report(Command::CertifyMixing, cert.passed, None, &cert, series)
}

fn moments(r: &Resolved) -> Result<Outcome> {
    let s = &r.settings.moments;
    let cfg = LyapunovConfig::new(state_point(&r.model, s.anchor)?, s.zeta)?;
    let rep = certify_moments(
        &r.model,
        &r.start_measure()?,
        &cfg,
        &s.t_grid,
        &MomentOptions { samples_per_t: s.samples_per_t, seed: r.settings.seed, burn_in: s.burn_in, rel_tol: 1e-3 },
    )?;
    let mut series = CsvSeries::new(&["t", "value", "std_error"]);
    for ((t, v), e) in rep.times.iter().zip(&rep.values).zip(&rep.std_errors) {
        series.push(csv_row![*t, *v, *e]);
    }
    Outcome::from_report(Command::CertifyMoments, rep.passed, None, &rep, series)
}

#[derive(Serialize)]
struct ErgodicityOutput {
    certificate: crate::transport::ErgodicityReport,
    reference_rate: f64,
    reference_rate_certified: bool,
    fitted_rate: f64,
    rate_relative_error: f64,
    rate_tolerance: f64,
    passed: bool,
}

fn ergodicity(r: &Resolved) -> Result<Outcome> {
    let s = &r.settings.ergodicity;
    let rep = certify_ergodicity(
        &r.model,
        &r.start_measure()?,
        &s.t_grid,
        &ErgodicityOptions { samples_per_t: s.samples_per_t, seed: r.settings.seed, anchor: None },
    )?;
    let (gamma, certified) = reference_rate(&r.model)?;
    let fitted = -rep.fitted_slope;
    let rel = (fitted - gamma).abs() / gamma;
    let passed = rep.bound_holds && rel <= s.rate_tolerance;
    let mut series = CsvSeries::new(&["t", "distance", "exact_distance"]);
    for (k, (t, d)) in rep.times.iter().zip(&rep.distances).enumerate() {
        series.push(csv_row![*t, *d, rep.exact_distances.as_ref().map(|e| e[k])]);
    }
    let out = ErgodicityOutput {
        certificate: rep,
        reference_rate: gamma,
        reference_rate_certified: certified,
        fitted_rate: fitted,
        rate_relative_error: rel,
        rate_tolerance: s.rate_tolerance,
        passed,
    };
    Outcome::from_report(Command::Ergodicity, passed, None, &out, series)
}

/// Corrector for the configured model and observable, plus its report.
pub fn build_corrector(r: &Resolved) -> Result<(Corrector, Value)> {
    let c = &r.settings.corrector;
    match &r.model {
        Model::Ctmc(m) => {
            let k = corrector_ctmc(m, &r.observable)?;
            let rep = serde_json::to_value(&k)?;
            Ok((Corrector::Ctmc(k), rep))
        }
        Model::Ou(m) => {
            let opts = OuTableOptions { width_sd: c.width_sd, points: c.table_points, truncation_t: c.truncation_t, mesh: c.mesh };
            let t = OuCorrectorTable::build(m, &r.observable, &opts)?;
            let rep = json!({
                "range": t.range(),
                "points": c.table_points,
                "truncation_t": t.truncation_t,
                "mesh": t.mesh,
                "max_tail_bound": t.max_tail_bound,
                "max_quadrature_error": t.max_quadrature_error,
                "interpolation_error": t.interpolation_error,
                "certified_error": t.max_tail_bound + t.max_quadrature_error + t.interpolation_error,
            });
            Ok((Corrector::Ou(t), rep))
        }
    }
}

fn pairing(r: &Resolved, chi: &Corrector) -> Result<SigmaPairing> {
    sigma_pairing(&r.observable, chi, &r.model.invariant_measure()?)
}

fn corrector(r: &Resolved) -> Result<Outcome> {
    let tol = r.settings.corrector.tolerance;
    let (chi, mut rep) = build_corrector(r)?;
    let sp = pairing(r, &chi)?;
    let (gamma, certified) = reference_rate(&r.model)?;
    let lip_bound = corrector_lipschitz_bound(&r.observable, gamma)?;
    let mut series;
    let (slope, accurate) = match &chi {
        Corrector::Ctmc(k) => {
            series = CsvSeries::new(&["state", "chi"]);
            for (i, v) in k.chi.iter().enumerate() {
                series.push(csv_row![i, *v]);
            }
            (corrector_slope(&k.chi, r.model.metric()), k.residual <= tol)
        }
        Corrector::Ou(t) => {
            series = CsvSeries::new(&["x", "chi"]);
            let nodes = t.nodes();
            for (x, v) in &nodes {
                series.push(csv_row![*x, *v]);
            }
            let slope = nodes.windows(2).map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()).fold(0.0, f64::max);
            (slope, t.max_tail_bound + t.max_quadrature_error + t.interpolation_error <= tol)
        }
    };
    let slope_ok = !certified || slope <= lip_bound * (1.0 + 1e-6) + 1e-12;
    let passed = accurate && !sp.negative && slope_ok;
    if let Value::Object(map) = &mut rep {
        map.insert("tolerance".into(), json!(tol));
        map.insert("sigma_pairing".into(), serde_json::to_value(sp)?);
        map.insert("reference_rate".into(), json!(gamma));
        map.insert("reference_rate_certified".into(), json!(certified));
        map.insert("lipschitz_bound".into(), json!(lip_bound));
        map.insert("observed_slope".into(), json!(slope));
        map.insert("passed".into(), json!(passed));
    }
    Ok(Outcome { command: Command::Corrector, status: pass_fail(passed).into(), passed, report: rep, series })
}

fn sigma(r: &Resolved) -> Result<Outcome> {
    let (chi, _) = build_corrector(r)?;
    let rep = sigma_triple(&r.model, &r.observable, &chi, &r.path_law()?, &r.settings.sigma)?;
    let mut series = CsvSeries::new(&["t", "ratio", "std_error", "exact"]);
    for p in &rep.growth_curve {
        series.push(csv_row![p.t, p.ratio, p.std_error, p.exact]);
    }
    Outcome::from_report(Command::Sigma, rep.passed, Some(&rep.status), &rep, series)
}

/// Martingale increments on the integer skeleton for every path, for the
/// given correctors, from one set of simulated paths.
fn skeleton_traces(r: &Resolved, grid: PathGrid, n_paths: usize, chis: &[&Corrector]) -> Result<Vec<Vec<SkeletonTrace>>> {
    let law = r.path_law()?;
    let per_path: Vec<Vec<SkeletonTrace>> = map_paths(n_paths, |i| -> Result<Vec<SkeletonTrace>> {
        let p = simulate_path(&r.model, &law, grid, r.settings.seed, Purpose::Paths, i as u64)?;
        chis.iter().map(|c| martingale_decompose(&p, &r.observable, c).map(|t| SkeletonTrace::from(&t))).collect()
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok((0..chis.len()).map(|k| per_path.iter().map(|v| v[k].clone()).collect()).collect())
}

fn martingale(r: &Resolved) -> Result<Outcome> {
    let s = &r.settings.martingale;
    let grid = PathGrid::new(s.horizon, s.mesh)?;
    let (chi, _) = build_corrector(r)?;
    let bad = chi.perturbed(s.corruption_amplitude, r.settings.seed);
    let mut sets = skeleton_traces(r, grid, s.n_paths, &[&chi, &bad])?;
    let features = default_feature_maps(&r.model);
    let corrupted = martingale_property_test(&sets.pop().unwrap(), &features, s.threshold_se)?;
    let clean = martingale_property_test(&sets.pop().unwrap(), &features, s.threshold_se)?;
    let passed = clean.passed && !corrupted.passed;
    let mut series = CsvSeries::new(&["variant", "feature", "n", "mean", "std_error", "z_score"]);
    for (label, rep) in [("clean", &clean), ("corrupted", &corrupted)] {
        for e in &rep.estimates {
            series.push(csv_row![label, e.feature.as_str(), e.n, e.mean, e.std_error, e.z_score]);
        }
    }
    let out = json!({
        "clean": clean,
        "corrupted": corrupted,
        "corruption_amplitude": s.corruption_amplitude,
        "corrupted_detected": !corrupted.passed,
        "passed": passed,
    });
    Ok(Outcome { command: Command::MartingaleCheck, status: pass_fail(passed).into(), passed, report: out, series })
}

fn heyde_scott(r: &Resolved) -> Result<Outcome> {
    let s = &r.settings.heyde_scott;
    let grid = PathGrid::new(s.horizon, s.mesh)?;
    let (chi, _) = build_corrector(r)?;
    let sp = pairing(r, &chi)?;
    let traces = skeleton_traces(r, grid, s.n_paths, &[&chi])?.pop().unwrap();
    let z: Vec<Vec<f64>> = traces.into_iter().map(|t| t.z).collect();
    let rep = heyde_scott_diagnostics(&z, sp.value, &s.options)?;
    let mut series = CsvSeries::new(&["n", "s_n_sq", "m_n_sq", "b2", "b2_std_error"]);
    for (k, p) in rep.b2_series.iter().enumerate() {
        series.push(csv_row![p.n, rep.s_n_sq[k], rep.m_n_sq[k], p.value, p.std_error]);
    }
    let passed = rep.passed();
    Outcome::from_report(Command::HeydeScott, passed, Some(&rep.status), &rep, series)
}

fn lil(r: &Resolved) -> Result<Outcome> {
    let (chi, _) = build_corrector(r)?;
    let sp = pairing(r, &chi)?;
    if !(sp.value > DEGENERATE_TOL) {
        return Ok(Outcome::degenerate(Command::Lil, sp.value));
    }
    let rep = lil_envelope(&r.model, &r.observable, &chi, sp.value, &r.path_law()?, &r.settings.lil)?;
    let mut series = CsvSeries::new(&[
        "n",
        "m_sup_q10",
        "m_sup_median",
        "m_sup_q90",
        "m_neg_inf_median",
        "i_sup_median",
        "i_neg_inf_median",
    ]);
    for (k, p) in rep.martingale_sup.iter().enumerate() {
        series.push(csv_row![
            p.n,
            p.q10,
            p.median,
            p.q90,
            rep.martingale_neg_inf[k].median,
            rep.functional_sup[k].median,
            rep.functional_neg_inf[k].median
        ]);
    }
    Outcome::from_report(Command::Lil, rep.passed, None, &rep, series)
}

fn clt(r: &Resolved) -> Result<Outcome> {
    let s = &r.settings.clt;
    let (chi, _) = build_corrector(r)?;
    let sp = pairing(r, &chi)?;
    if !(sp.value > DEGENERATE_TOL) {
        return Ok(Outcome::degenerate(Command::CltProxy, sp.value));
    }
    let rep = clt_experiment(&r.model, &r.observable, sp.value, &r.path_law()?, s.n_paths, s.t_eval, s.mesh, r.settings.seed)?;
    let mut series = CsvSeries::new(&["statistic", "value"]);
    series.push(csv_row!["ks_statistic", rep.ks_statistic]);
    series.push(csv_row!["critical_value", rep.critical_value]);
    series.push(csv_row!["p_value", rep.p_value]);
    let out = json!({ "sigma_sq_used": sp.value, "test": rep });
    Ok(Outcome { command: Command::CltProxy, status: pass_fail(rep.passed).into(), passed: rep.passed, report: out, series })
}

fn discretization(r: &Resolved) -> Result<Outcome> {
    let s = &r.settings.discretization;
    let rep = discretization_experiment(&r.model, &r.observable, &r.path_law()?, s.n_paths, s.horizon, s.mesh, r.settings.seed)?;
    let mut series = CsvSeries::new(&["n", "median", "max", "ceiling"]);
    for p in &rep.series {
        series.push(csv_row![p.n, p.median, p.max, p.ceiling]);
    }
    Outcome::from_report(Command::Discretization, rep.passed, None, &rep, series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn resolve(text: &str) -> Resolved {
        ExperimentConfig::from_json(text).unwrap().resolve(None).unwrap()
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("certify".parse::<Command>().is_err());
    }

    #[test]
    fn ou_mixing_defaults_pass_with_unit_ratios() {
        let out = run(Command::CertifyMixing, &resolve("{}")).unwrap();
        assert!(out.passed);
        assert_eq!(out.exit_code(), 0);
        let grid = out.report["grid"].as_array().unwrap();
        assert_eq!(grid.len() + out.report["skipped_pairs"].as_u64().unwrap() as usize, 1000);
        assert!(grid.iter().all(|p| (p["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_observable_is_degenerate_for_lil() {
        let out = run(Command::Lil, &resolve(r#"{"observable":{"kind":"zero"}}"#)).unwrap();
        assert_eq!(out.status, STATUS_DEGENERATE);
        assert_eq!(out.exit_code(), 2);
    }

    #[test]
    fn chain_corrector_and_ergodicity() {
        let cfg = r#"{"model":{"kind":"ctmc","q":[[-1,1],[1,-1]]},"observable":{"kind":"table","values":[1,-1]}}"#;
        let r = resolve(cfg);
        let out = run(Command::Corrector, &r).unwrap();
        assert!(out.passed, "{}", out.report);
        assert_eq!(out.report["sigma_pairing"]["value"].as_f64().unwrap(), 1.0);
        let out = run(Command::Ergodicity, &r).unwrap();
        assert!(out.passed, "{}", out.report);
        assert!((out.report["fitted_rate"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn reports_do_not_depend_on_thread_count() {
        let cfg = r#"{"model":{"kind":"ctmc","q":[[-1,1],[1,-1]]},"n_paths":1000,"seed":5}"#;
        let r = resolve(cfg);
        let one = with_threads(Some(1), || run(Command::MartingaleCheck, &r)).unwrap().unwrap();
        let four = with_threads(Some(4), || run(Command::MartingaleCheck, &r)).unwrap().unwrap();
        assert_eq!(one.to_json(&r, None).unwrap(), four.to_json(&r, None).unwrap());
        assert!(one.passed, "{}", one.report["clean"]["max_abs_z"]);
    }
}
