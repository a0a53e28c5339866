//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line to stderr,
//! bypassing the test harness's output capture, then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use lillab_core::config::ExperimentConfig;
use lillab_core::corrector::{corrector_ctmc, sigma_pairing, Corrector, OuCorrectorTable, OuTableOptions};
use lillab_core::functionals::{
    additive_functional, default_feature_maps, exact_second_moment_ctmc, heyde_scott_diagnostics, martingale_decompose,
    martingale_property_test, simulate_path, HeydeScottOptions, InitialLaw, PathGrid, SkeletonTrace,
};
use lillab_core::lil::{lil_envelope, sigma_triple, LilOptions, LilReport, SigmaOptions};
use lillab_core::rng::{map_paths, Purpose};
use lillab_core::runner::{run, with_threads, Command};
use lillab_core::transport::{
    certify_contraction, certify_ergodicity, w1_discrete, ContractionOptions, ErgodicityOptions,
};
use lillab_core::{CtmcModel, EmpiricalMeasure, ExactMeasure, Metric, Model, Observable, OuModel, StatePoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

use common::{brute_force_w1, random_instance};

const SEED: u64 = 20_251_016;

fn verdict(id: usize, name: &str, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} [{id:>2}] {name}: {detail}");
}

fn two_state() -> (CtmcModel, Observable) {
    let m = CtmcModel::two_state_symmetric();
    let g = Observable::table(vec![1.0, -1.0], m.metric()).unwrap();
    (m, g)
}

fn stationary(model: &Model) -> InitialLaw {
    InitialLaw::Exact(model.invariant_measure().unwrap())
}

fn ou_unit() -> (OuModel, Observable) {
    (OuModel::new(1.0, std::f64::consts::SQRT_2).unwrap(), Observable::tanh(1.0))
}

fn ou_corrector(m: &OuModel, g: &Observable) -> Corrector {
    Corrector::Ou(OuCorrectorTable::build(m, g, &OuTableOptions::default()).unwrap())
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn integer_increments(model: &Model, g: &Observable, chi: &Corrector, law: &InitialLaw, n_paths: usize, horizon: f64, mesh: f64, seed: u64) -> Vec<SkeletonTrace> {
    let grid = PathGrid::new(horizon, mesh).unwrap();
    map_paths(n_paths, |i| {
        let p = simulate_path(model, law, grid, seed, Purpose::Paths, i as u64).unwrap();
        SkeletonTrace::from(&martingale_decompose(&p, g, chi).unwrap())
    })
}

#[test]
fn criterion_01_poisson_equation_exactness() {
    let start = Instant::now();
    let (m, g) = two_state();
    let c = corrector_ctmc(&m, &g).unwrap();
    let pi = ExactMeasure::Discrete { probabilities: m.invariant_measure().unwrap() };
    let sp = sigma_pairing(&g, &Corrector::Ctmc(c.clone()), &pi).unwrap();
    let elapsed = start.elapsed();
    let chi_err = (c.chi[0] - 0.5).abs().max((c.chi[1] + 0.5).abs());
    let passed = chi_err < 1e-12 && c.residual < 1e-12 && sp.value == 1.0 && elapsed < Duration::from_secs(1);
    verdict(
        1,
        "Poisson equation exactness",
        passed,
        &format!("chi = {:?}, residual = {:e}, sigma_pairing = {}, {:?}", c.chi, c.residual, sp.value, elapsed),
    );
    assert!(passed);
}

#[test]
fn criterion_02_variance_triple_consistency() {
    let start = Instant::now();
    let (m, g) = two_state();
    let chain = Model::Ctmc(m.clone());
    let chi = Corrector::Ctmc(corrector_ctmc(&m, &g).unwrap());
    let rc = sigma_triple(&chain, &g, &chi, &stationary(&chain), &SigmaOptions::for_model(&chain, SEED)).unwrap();
    let chain_ok = (rc.sigma_mart.value - 1.0).abs() <= 0.02 && (rc.sigma_growth.value - 1.0).abs() <= 0.02;

    let (om, og) = ou_unit();
    let ou = Model::Ou(om);
    let ochi = ou_corrector(&om, &og);
    let ro = sigma_triple(&ou, &og, &ochi, &stationary(&ou), &SigmaOptions::for_model(&ou, SEED)).unwrap();
    let ou_ok = ro.gaps.len() == 3 && ro.gaps.iter().all(|gap| gap.z.abs() <= 4.0);
    let elapsed = start.elapsed();
    let passed = chain_ok && ou_ok && elapsed < Duration::from_secs(120);
    let zs: Vec<String> = ro.gaps.iter().map(|gap| format!("{}-{}: {:.2}", gap.pair.0, gap.pair.1, gap.z)).collect();
    verdict(
        2,
        "variance triple consistency",
        passed,
        &format!(
            "chain mart = {:.4}, growth = {:.4}; OU mart = {:.4}, pair = {:.4}, growth = {:.4}, z = [{}]; {:?}",
            rc.sigma_mart.value,
            rc.sigma_growth.value,
            ro.sigma_mart.value,
            ro.sigma_pair,
            ro.sigma_growth.value,
            zs.join(", "),
            elapsed
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_03_exact_second_moment() {
    let (m, g) = two_state();
    let chain = Model::Ctmc(m.clone());
    let law = stationary(&chain);
    let exact = exact_second_moment_ctmc(&m, &g, &law, 1.0).unwrap();
    let oracle = 1.0 - (1.0 - (-2.0f64).exp()) / 2.0;
    let grid = PathGrid::new(1.0, 1.0).unwrap();
    let squares: Vec<f64> = map_paths(100_000, |i| {
        let p = simulate_path(&chain, &law, grid, SEED, Purpose::Paths, i as u64).unwrap();
        additive_functional(&p, &g).unwrap().values[1].powi(2)
    });
    let (mc, se) = mean_se(&squares);
    let passed = (exact - oracle).abs() < 1e-9 && (mc - exact).abs() <= 4.0 * se;
    verdict(
        3,
        "exact second moment",
        passed,
        &format!("exact = {exact:.12}, oracle = {oracle:.12}, MC = {mc:.5} ± {se:.5}"),
    );
    assert!(passed);
}

#[test]
fn criterion_04_contraction_certificate() {
    let (om, _) = ou_unit();
    let lin = |a: f64, b: f64, n: usize| -> Vec<f64> { (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect() };
    let xs: Vec<StatePoint> = lin(-3.0, 3.0, 10).into_iter().map(StatePoint::Real).collect();
    let ys: Vec<StatePoint> = lin(-2.5, 4.0, 10).into_iter().map(StatePoint::Real).collect();
    let ts = lin(0.1, 2.0, 10);
    let cert = certify_contraction(&Model::Ou(om), &xs, &ys, &ts, &ContractionOptions::default()).unwrap();
    let max_dev = cert.grid.iter().map(|p| (p.ratio - 1.0).abs()).fold(0.0, f64::max);
    let ou_ok = cert.grid.len() + cert.skipped_pairs == 1000 && max_dev < 1e-12;

    let (m, _) = two_state();
    let states = [StatePoint::Index(0), StatePoint::Index(1)];
    let chain = certify_contraction(&Model::Ctmc(m), &states, &states, &ts, &ContractionOptions::default()).unwrap();
    let chain_ok = (chain.gamma_hat - 2.0).abs() < 1e-6 && chain.fit_r_squared > 0.999;
    let passed = ou_ok && chain_ok;
    verdict(
        4,
        "contraction certificate",
        passed,
        &format!(
            "OU {} ratios, max |ratio − 1| = {max_dev:e}; chain slope = {:.9}, R² = {:.9}",
            cert.grid.len(),
            -chain.gamma_hat,
            chain.fit_r_squared
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_05_ergodicity_decay() {
    let ts: Vec<f64> = (0..10).map(|k| 0.5 + 0.5 * k as f64).collect();
    let opts = ErgodicityOptions { samples_per_t: 100_000, seed: SEED, anchor: None };
    let (om, _) = ou_unit();
    let ou = certify_ergodicity(&Model::Ou(om), &EmpiricalMeasure::dirac(StatePoint::Real(3.0)), &ts, &opts).unwrap();
    let (m, _) = two_state();
    let ch = certify_ergodicity(&Model::Ctmc(m), &EmpiricalMeasure::dirac(StatePoint::Index(0)), &ts, &opts).unwrap();
    let rel_ou = (-ou.fitted_slope - 1.0).abs() / 1.0;
    let rel_ch = (-ch.fitted_slope - 2.0).abs() / 2.0;
    let passed = rel_ou <= 0.1 && rel_ch <= 0.1;
    verdict(
        5,
        "ergodicity decay",
        passed,
        &format!(
            "OU slope = {:.4} (γ = 1, {} fitted points), chain slope = {:.6} (γ = 2)",
            ou.fitted_slope, ou.fitted_points, ch.fitted_slope
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_06_transport_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut max_gap = 0.0f64;
    let mut axioms = true;
    for _ in 0..200 {
        let (mu, nu, rho) = random_instance(&mut rng);
        let metric = Metric::explicit(rho.clone()).unwrap();
        let fast = w1_discrete(&mu, &nu, &metric).unwrap();
        max_gap = max_gap.max((fast - brute_force_w1(&mu, &nu, &rho)).abs());
        // Third measure for the triangle inequality.
        let (lam, _, _) = random_instance(&mut rng);
        let lam = if lam.len() == mu.len() { lam } else { nu.clone() };
        let d = |a: &[f64], b: &[f64]| w1_discrete(a, b, &metric).unwrap();
        axioms &= fast >= 0.0
            && d(&mu, &mu) < 1e-15
            && (fast - d(&nu, &mu)).abs() < 1e-12
            && fast <= d(&mu, &lam) + d(&lam, &nu) + 1e-10;
    }
    let passed = max_gap < 1e-10 && axioms;
    verdict(6, "transport correctness", passed, &format!("200 instances, max |flow − enumeration| = {max_gap:e}, axioms hold = {axioms}"));
    assert!(passed);
}

#[test]
fn criterion_07_heyde_scott_b2() {
    let (m, g) = two_state();
    let chain = Model::Ctmc(m.clone());
    let chi = Corrector::Ctmc(corrector_ctmc(&m, &g).unwrap());
    let opts = HeydeScottOptions::default();
    let run_from = |law: &InitialLaw| {
        let z: Vec<Vec<f64>> =
            integer_increments(&chain, &g, &chi, law, 10_000, 1000.0, 1.0, SEED).into_iter().map(|t| t.z).collect();
        heyde_scott_diagnostics(&z, 1.0, &opts).unwrap()
    };
    let at = |rep: &lillab_core::functionals::HeydeScottReport, n: usize| *rep.b2_series.iter().find(|p| p.n == n).unwrap();
    let stat = run_from(&stationary(&chain));
    let dirac = run_from(&InitialLaw::Point(StatePoint::Index(0)));
    let mut details = Vec::new();
    let mut passed = true;
    for n in [10, 100, 1000] {
        let p = at(&stat, n);
        passed &= (p.value - 1.0).abs() <= 3.0 * p.std_error;
        details.push(format!("n={n}: {:.4} ± {:.4}", p.value, p.std_error));
    }
    let d = at(&dirac, 1000);
    passed &= (d.value - 1.0).abs() <= 3.0 * d.std_error;
    details.push(format!("δ₀ n=1000: {:.4} ± {:.4}", d.value, d.std_error));
    verdict(7, "Heyde–Scott variance growth", passed, &details.join(", "));
    assert!(passed);
}

#[test]
fn criterion_08_martingale_property() {
    let (m, g) = two_state();
    let chain = Model::Ctmc(m.clone());
    let chi = Corrector::Ctmc(corrector_ctmc(&m, &g).unwrap());
    let law = stationary(&chain);
    let features = default_feature_maps(&chain);
    let clean = integer_increments(&chain, &g, &chi, &law, 10_000, 10.0, 1.0, SEED);
    let bad = chi.perturbed(0.5, SEED);
    let corrupted = integer_increments(&chain, &g, &bad, &law, 10_000, 10.0, 1.0, SEED);
    let rc = martingale_property_test(&clean, &features, 4.0).unwrap();
    let rb = martingale_property_test(&corrupted, &features, 4.0).unwrap();
    let passed = features.len() == 4 && rc.passed && !rb.passed;
    verdict(
        8,
        "martingale property",
        passed,
        &format!("{} estimates, clean max |z| = {:.2}, corrupted max |z| = {:.2}", rc.estimates.len(), rc.max_abs_z, rb.max_abs_z),
    );
    assert!(passed);
}

fn lil_summary(name: &str, r: &LilReport) -> (bool, String) {
    let gap = |n: usize| r.discretization.series.iter().find(|p| p.n == n).map(|p| p.median).unwrap();
    let (g10, g1000) = (gap(10), gap(1000));
    let ok = r.envelope_exceedance_fraction <= 0.05 && r.upward_trend && g1000 < g10;
    let windows: Vec<String> = r.exceedance.iter().map(|e| format!("n≥{}: {:.3}", e.window_start, e.martingale_upper)).collect();
    (
        ok,
        format!(
            "{name}: exceedance {} (limit 0.05); median sup {:.3} at n=10 → {:.3} at n=10⁴; gap median {g10:.4} → {g1000:.4}",
            windows.join(", "),
            r.median_sup_reference,
            r.median_sup_terminal
        ),
    )
}

#[test]
fn criterion_09_lil_envelope() {
    let start = Instant::now();
    let opts = LilOptions { seed: SEED, ..LilOptions::default() };
    assert_eq!((opts.n_paths, opts.horizon, opts.delta, opts.envelope_start), (1000, 1e4, 0.5, 3));

    let (m, g) = two_state();
    let chain = Model::Ctmc(m.clone());
    let chi = Corrector::Ctmc(corrector_ctmc(&m, &g).unwrap());
    let sp = sigma_pairing(&g, &chi, &chain.invariant_measure().unwrap()).unwrap().value;
    let rc = lil_envelope(&chain, &g, &chi, sp, &stationary(&chain), &opts).unwrap();

    let (om, og) = ou_unit();
    let ou = Model::Ou(om);
    let ochi = ou_corrector(&om, &og);
    let osp = sigma_pairing(&og, &ochi, &ou.invariant_measure().unwrap()).unwrap().value;
    let ro = lil_envelope(&ou, &og, &ochi, osp, &stationary(&ou), &opts).unwrap();

    let (ok_c, dc) = lil_summary("chain", &rc);
    let (ok_o, d_o) = lil_summary("OU", &ro);
    let elapsed = start.elapsed();
    let passed = ok_c && ok_o && elapsed < Duration::from_secs(600);
    verdict(9, "LIL envelope", passed, &format!("{dc}; {d_o}; {elapsed:?}"));
    assert!(passed);
}

#[test]
fn criterion_10_determinism_across_thread_counts() {
    let configs = [
        (Command::MartingaleCheck, r#"{"model":{"kind":"ctmc","q":[[-1,1],[1,-1]]},"n_paths":2000}"#),
        (Command::HeydeScott, r#"{"heyde_scott":{"n_paths":200,"horizon":50}}"#),
        (Command::Ergodicity, r#"{"ergodicity":{"samples_per_t":20000}}"#),
        (Command::Lil, r#"{"lil":{"n_paths":100,"horizon":200}}"#),
        (Command::Sigma, r#"{"sigma":{"n_paths":2000,"n_paths_growth":500,"growth_times":[10,20]}}"#),
    ];
    let mut mismatched = Vec::new();
    for (cmd, text) in configs {
        let mut cfg = ExperimentConfig::from_json(text).unwrap();
        cfg.seed = Some(SEED);
        let r = cfg.resolve(None).unwrap();
        let reports: Vec<String> = [1, 4, 8]
            .into_iter()
            .map(|t| with_threads(Some(t), || run(cmd, &r)).unwrap().unwrap().to_json(&r, None).unwrap())
            .collect();
        if reports.windows(2).any(|w| w[0] != w[1]) {
            mismatched.push(cmd.name());
        }
    }
    let passed = mismatched.is_empty();
    verdict(
        10,
        "determinism",
        passed,
        &format!("5 commands × threads {{1, 4, 8}}, mismatched: {mismatched:?}"),
    );
    assert!(passed);
}
