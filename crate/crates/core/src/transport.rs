//! Wasserstein-1 distances and certifiers for Dirac contraction, moment
//! boundedness, exponential ergodicity and Cesàro (weak-* mean) convergence.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::models::{Model, SemigroupOptions};
use crate::quadrature::GaussHermite;
use crate::rng::{map_paths, path_stream, Purpose};
use crate::space::{gaussian_expectation_kinked, EmpiricalMeasure, ExactMeasure, LyapunovConfig, Metric, Observable, StatePoint};
use crate::stats::{fit_line, normal_cdf, normal_pdf, LineFit};

/// Masses below this are treated as exhausted by the flow solver.
const MASS_EPS: f64 = 1e-15;

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

/// Exact W1 between two equal-weight empirical measures on the line,
/// `∫|F_a − F_b| dx` over the merged breakpoints.
pub fn w1_empirical_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LabError::InvalidMeasure("empty sample".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(LabError::NonFiniteState);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = xs[0].min(ys[0]);
    let mut total = 0.0;
    while i < xs.len() || j < ys.len() {
        let next = if j >= ys.len() || (i < xs.len() && xs[i] <= ys[j]) { xs[i] } else { ys[j] };
        total += (i as f64 * nb - j as f64 * na).abs() * (next - prev);
        prev = next;
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
    }
    Ok(total / (na * nb))
}

/// Exact W1 between weighted point clouds on the line. Weights are
/// normalized separately.
pub fn w1_weighted_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LabError::InvalidMeasure("empty measure".into()));
    }
    let total_a: f64 = a.iter().map(|p| p.1).sum();
    let total_b: f64 = b.iter().map(|p| p.1).sum();
    if !(total_a > 0.0 && total_b > 0.0) {
        return Err(LabError::InvalidMeasure("nonpositive total mass".into()));
    }
    // Signed events: +w for a, −w for b; the running sum is F_a − F_b.
    let mut events: Vec<(f64, f64)> = a
        .iter()
        .map(|&(x, w)| (x, w / total_a))
        .chain(b.iter().map(|&(x, w)| (x, -w / total_b)))
        .collect();
    if events.iter().any(|e| !e.0.is_finite()) {
        return Err(LabError::NonFiniteState);
    }
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut diff = 0.0f64;
    let mut total = 0.0;
    let mut prev = events[0].0;
    for (x, w) in events {
        total += diff.abs() * (x - prev);
        diff += w;
        prev = x;
    }
    Ok(total)
}

/// `E|a + Z|` for standard normal `Z`.
pub fn expected_abs_shifted_normal(a: f64) -> f64 {
    a * (2.0 * normal_cdf(a) - 1.0) + 2.0 * normal_pdf(a)
}

/// Closed-form W1 between `N(m1, v1)` and `N(m2, v2)`: the quantile
/// coupling gives `E|Δm + Δs·Z|`.
pub fn w1_gaussian(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let dm = m1 - m2;
    let ds = v1.max(0.0).sqrt() - v2.max(0.0).sqrt();
    if ds == 0.0 {
        return dm.abs();
    }
    ds.abs() * expected_abs_shifted_normal(dm / ds)
}

/// Gaussian mixture component `(mean, sd, weight)`.
pub type MixtureComponent = (f64, f64, f64);

/// W1 between two Gaussian mixtures on the line by Simpson integration of
/// `|F_a − F_b|`. Degenerate (zero-sd) components are handled exactly when
/// every component is degenerate.
pub fn w1_gaussian_mixtures(a: &[MixtureComponent], b: &[MixtureComponent]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LabError::InvalidMeasure("empty mixture".into()));
    }
    if a.iter().chain(b).all(|c| c.1 == 0.0) {
        let da: Vec<_> = a.iter().map(|c| (c.0, c.2)).collect();
        let db: Vec<_> = b.iter().map(|c| (c.0, c.2)).collect();
        return w1_weighted_1d(&da, &db);
    }
    if a.len() == 1 && b.len() == 1 {
        return Ok(w1_gaussian(a[0].0, a[0].1 * a[0].1, b[0].0, b[0].1 * b[0].1));
    }
    let total_a: f64 = a.iter().map(|c| c.2).sum();
    let total_b: f64 = b.iter().map(|c| c.2).sum();
    let cdf = |comps: &[MixtureComponent], total: f64, x: f64| -> f64 {
        comps
            .iter()
            .map(|&(m, s, w)| {
                let f = if s == 0.0 {
                    if x >= m {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    normal_cdf((x - m) / s)
                };
                w * f
            })
            .sum::<f64>()
            / total
    };
    let lo = a.iter().chain(b).map(|c| c.0 - 12.0 * c.1).fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).map(|c| c.0 + 12.0 * c.1).fold(f64::NEG_INFINITY, f64::max);
    let panels = 20_000usize;
    let h = (hi - lo) / panels as f64;
    let g = |x: f64| (cdf(a, total_a, x) - cdf(b, total_b, x)).abs();
    let mut s = g(lo) + g(hi);
    for k in 1..panels {
        s += 2.0 * g(lo + k as f64 * h);
    }
    for k in 0..panels {
        s += 4.0 * g(lo + (k as f64 + 0.5) * h);
    }
    Ok(s * h / 6.0)
}

fn check_probability_vector(p: &[f64], n: usize, name: &str) -> Result<()> {
    if p.len() != n {
        return Err(LabError::DimensionMismatch(format!("{name} has {} entries, metric has {n} states", p.len())));
    }
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(LabError::InvalidMeasure(format!("{name} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(LabError::InvalidMeasure(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// An optimal coupling: `(source state, target state, mass)` triples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    pub cost: f64,
    pub flows: Vec<(usize, usize, f64)>,
}

/// Optimal transport between probability vectors by successive shortest
/// paths with Dijkstra and node potentials on the dense bipartite residual
/// graph.
pub fn optimal_plan(mu: &[f64], nu: &[f64], cost: impl Fn(usize, usize) -> f64) -> TransportPlan {
    let src: Vec<usize> = (0..mu.len()).filter(|&i| mu[i] > 0.0).collect();
    let dst: Vec<usize> = (0..nu.len()).filter(|&j| nu[j] > 0.0).collect();
    let (n, m) = (src.len(), dst.len());
    let c: Vec<Vec<f64>> = src.iter().map(|&i| dst.iter().map(|&j| cost(i, j)).collect()).collect();
    let mut rem_s: Vec<f64> = src.iter().map(|&i| mu[i]).collect();
    let mut rem_d: Vec<f64> = dst.iter().map(|&j| nu[j]).collect();
    let mut flow = vec![vec![0.0f64; m]; n];

    // Node layout: 0 = source, 1..=n supplies, n+1..=n+m demands, n+m+1 = sink.
    let sink = n + m + 1;
    let nodes = n + m + 2;
    let mut pot = vec![0.0f64; nodes];
    let max_rounds = 4 * (n + m + 2) * (n + m + 2) + 16;
    for _ in 0..max_rounds {
        if rem_s.iter().sum::<f64>() <= MASS_EPS || rem_d.iter().sum::<f64>() <= MASS_EPS {
            break;
        }
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        dist[0] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |v: usize, w: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>| {
                // Settled nodes stay settled: rounding can make reduced costs
                // slightly negative, and relaxing them would create cycles.
                let nd = dist[u] + w + pot[u] - pot[v];
                if !done[v] && nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u == 0 {
                for i in 0..n {
                    if rem_s[i] > MASS_EPS {
                        relax(1 + i, 0.0, &mut dist, &mut prev);
                    }
                }
            } else if u <= n {
                let i = u - 1;
                for j in 0..m {
                    relax(n + 1 + j, c[i][j], &mut dist, &mut prev);
                }
            } else if u < sink {
                let j = u - n - 1;
                for i in 0..n {
                    if flow[i][j] > MASS_EPS {
                        relax(1 + i, -c[i][j], &mut dist, &mut prev);
                    }
                }
                if rem_d[j] > MASS_EPS {
                    relax(sink, 0.0, &mut dist, &mut prev);
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        for v in 0..nodes {
            pot[v] += dist[v].min(dist[sink]);
        }
        // Bottleneck along the path.
        let mut amount = f64::INFINITY;
        let mut v = sink;
        while v != 0 {
            let u = prev[v];
            let cap = if u == 0 {
                rem_s[v - 1]
            } else if v == sink {
                rem_d[u - n - 1]
            } else if u > n {
                flow[v - 1][u - n - 1]
            } else {
                f64::INFINITY
            };
            amount = amount.min(cap);
            v = u;
        }
        let mut v = sink;
        while v != 0 {
            let u = prev[v];
            if u == 0 {
                rem_s[v - 1] -= amount;
                if rem_s[v - 1] <= MASS_EPS {
                    rem_s[v - 1] = 0.0;
                }
            } else if v == sink {
                rem_d[u - n - 1] -= amount;
                if rem_d[u - n - 1] <= MASS_EPS {
                    rem_d[u - n - 1] = 0.0;
                }
            } else if u > n {
                let f = &mut flow[v - 1][u - n - 1];
                *f -= amount;
                if *f <= MASS_EPS {
                    *f = 0.0;
                }
            } else {
                flow[u - 1][v - n - 1] += amount;
            }
            v = u;
        }
    }
    let mut flows = Vec::new();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            if flow[i][j] > 0.0 {
                total += flow[i][j] * c[i][j];
                flows.push((src[i], dst[j], flow[i][j]));
            }
        }
    }
    TransportPlan { cost: total, flows }
}

/// Exact W1 between probability vectors under a finite metric.
pub fn w1_discrete(mu: &[f64], nu: &[f64], metric: &Metric) -> Result<f64> {
    let n = metric
        .states()
        .ok_or_else(|| LabError::InvalidMetric("discrete transport needs a finite metric".into()))?;
    check_probability_vector(mu, n, "mu")?;
    check_probability_vector(nu, n, "nu")?;
    Ok(optimal_plan(mu, nu, |i, j| metric.index_distance(i, j)).cost)
}

/// W1 between two empirical measures on the space of `metric`.
pub fn w1_measures(metric: &Metric, a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    match metric.states() {
        None => {
            let pa = a.atoms().iter().map(|(x, w)| x.as_real().map(|v| (v, *w))).collect::<Result<Vec<_>>>()?;
            let pb = b.atoms().iter().map(|(x, w)| x.as_real().map(|v| (v, *w))).collect::<Result<Vec<_>>>()?;
            w1_weighted_1d(&pa, &pb)
        }
        Some(n) => w1_discrete(&a.to_probabilities(n)?, &b.to_probabilities(n)?, metric),
    }
}

/// Entropic transport with a certified bracket around W1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinkhornResult {
    pub epsilon: f64,
    pub iterations: usize,
    /// Cost of the rounded (exactly feasible) plan: an upper bound on W1.
    pub primal_cost: f64,
    /// Dual objective after a c-transform: a lower bound on W1.
    pub dual_value: f64,
    pub duality_gap: f64,
}

/// Approximate W1 by log-domain Sinkhorn iterations. Optional; the exact
/// flow solver is the default everywhere.
pub fn w1_sinkhorn(mu: &[f64], nu: &[f64], metric: &Metric, epsilon: f64, max_iter: usize) -> Result<SinkhornResult> {
    let n = metric
        .states()
        .ok_or_else(|| LabError::InvalidMetric("discrete transport needs a finite metric".into()))?;
    check_probability_vector(mu, n, "mu")?;
    check_probability_vector(nu, n, "nu")?;
    if !(epsilon > 0.0) {
        return Err(LabError::InvalidArgument("epsilon must be positive".into()));
    }
    let src: Vec<usize> = (0..n).filter(|&i| mu[i] > 0.0).collect();
    let dst: Vec<usize> = (0..n).filter(|&j| nu[j] > 0.0).collect();
    let c = DMatrix::from_fn(src.len(), dst.len(), |a, b| metric.index_distance(src[a], dst[b]));
    let la: Vec<f64> = src.iter().map(|&i| mu[i].ln()).collect();
    let lb: Vec<f64> = dst.iter().map(|&j| nu[j].ln()).collect();
    let mut f = vec![0.0; src.len()];
    let mut g = vec![0.0; dst.len()];
    let lse = |v: &mut dyn Iterator<Item = f64>| {
        let xs: Vec<f64> = v.collect();
        let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mx + xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
    };
    let plan = |f: &[f64], g: &[f64]| {
        DMatrix::from_fn(src.len(), dst.len(), |a, b| (la[a] + lb[b] + (f[a] + g[b] - c[(a, b)]) / epsilon).exp())
    };
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        for a in 0..src.len() {
            f[a] = -epsilon * lse(&mut (0..dst.len()).map(|b| lb[b] + (g[b] - c[(a, b)]) / epsilon));
        }
        for b in 0..dst.len() {
            g[b] = -epsilon * lse(&mut (0..src.len()).map(|a| la[a] + (f[a] - c[(a, b)]) / epsilon));
        }
        let p = plan(&f, &g);
        let err: f64 = (0..src.len()).map(|a| (p.row(a).sum() - mu[src[a]]).abs()).sum();
        if err < 1e-12 {
            break;
        }
    }
    // Round onto the transport polytope.
    let mut p = plan(&f, &g);
    for a in 0..src.len() {
        let r = p.row(a).sum();
        if r > mu[src[a]] {
            let s = mu[src[a]] / r;
            p.row_mut(a).scale_mut(s);
        }
    }
    for b in 0..dst.len() {
        let col = p.column(b).sum();
        if col > nu[dst[b]] {
            let s = nu[dst[b]] / col;
            p.column_mut(b).scale_mut(s);
        }
    }
    let da: Vec<f64> = (0..src.len()).map(|a| mu[src[a]] - p.row(a).sum()).collect();
    let db: Vec<f64> = (0..dst.len()).map(|b| nu[dst[b]] - p.column(b).sum()).collect();
    let mass: f64 = da.iter().sum();
    if mass > 0.0 {
        for a in 0..src.len() {
            for b in 0..dst.len() {
                p[(a, b)] += da[a] * db[b] / mass;
            }
        }
    }
    let primal_cost = p.component_mul(&c).sum();
    let gt: Vec<f64> = (0..dst.len())
        .map(|b| (0..src.len()).map(|a| c[(a, b)] - f[a]).fold(f64::INFINITY, f64::min))
        .collect();
    let dual_value: f64 = (0..src.len()).map(|a| mu[src[a]] * f[a]).sum::<f64>()
        + (0..dst.len()).map(|b| nu[dst[b]] * gt[b]).sum::<f64>();
    Ok(SinkhornResult { epsilon, iterations, primal_cost, dual_value, duality_gap: primal_cost - dual_value })
}

// ---------------------------------------------------------------------------
// Helpers shared by the certifiers
// ---------------------------------------------------------------------------

fn default_anchor(model: &Model) -> StatePoint {
    match model {
        Model::Ou(_) => StatePoint::Real(0.0),
        Model::Ctmc(_) => StatePoint::Index(0),
    }
}

/// Law of `ν P_t` as a Gaussian mixture (OU).
fn ou_pushforward(m: &crate::models::OuModel, nu: &EmpiricalMeasure, t: f64) -> Result<Vec<MixtureComponent>> {
    let sd = m.kernel_variance(t).sqrt();
    nu.atoms()
        .iter()
        .map(|(x, w)| x.as_real().map(|x| (m.kernel_moments(x, t).mean, sd, *w)))
        .collect()
}

/// `ν P_t` as a probability vector (CTMC).
fn ctmc_pushforward(p: &DMatrix<f64>, nu: &[f64]) -> Vec<f64> {
    let n = nu.len();
    (0..n).map(|j| (0..n).map(|i| nu[i] * p[(i, j)]).sum()).collect()
}

fn mean_v(model: &Model, nu: &EmpiricalMeasure, anchor: &StatePoint) -> Result<f64> {
    let metric = model.metric();
    nu.integrate(|x| metric.distance(anchor, x))
}

fn invariant_mean_v(model: &Model, anchor: &StatePoint) -> Result<f64> {
    let inv = model.invariant_measure()?;
    match (&inv, model) {
        (ExactMeasure::Gaussian { mean, variance }, _) => {
            let a = anchor.as_real()?;
            Ok(w1_gaussian(*mean, *variance, a, 0.0))
        }
        (ExactMeasure::Discrete { probabilities }, Model::Ctmc(m)) => {
            let i = anchor.as_index()?;
            Ok(probabilities.iter().enumerate().map(|(j, p)| p * m.metric().index_distance(i, j)).sum())
        }
        _ => Err(LabError::KindMismatch { expected: model.kind().into(), found: "invariant law".into() }),
    }
}

fn nominal_or(model: &Model, fallback: f64) -> f64 {
    model.nominal_gamma().unwrap_or(fallback)
}

// ---------------------------------------------------------------------------
// Dirac contraction
// ---------------------------------------------------------------------------

/// One `(x, y, t)` evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionTriple {
    pub x: StatePoint,
    pub y: StatePoint,
    pub t: f64,
    pub rho: f64,
    pub distance: f64,
    pub ratio: f64,
}

/// Check of `d_W(ν₁P_t, ν₂P_t) ≤ e^{−γt}⟨V, ν₁+ν₂⟩` for measure pairs built
/// from the grids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurePairCheck {
    pub pair: String,
    pub t: f64,
    pub distance: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingCertificate {
    pub method: String,
    pub gamma_nominal: Option<f64>,
    /// Rate the ratios are measured against: nominal if declared, fitted otherwise.
    pub gamma_used: f64,
    pub gamma_hat: f64,
    pub fit_r_squared: f64,
    pub max_ratio_violation: f64,
    pub tolerance: f64,
    pub skipped_pairs: usize,
    pub grid: Vec<ContractionTriple>,
    pub measure_checks: Vec<MeasurePairCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionOptions {
    pub tolerance: f64,
    pub measure_checks: bool,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        ContractionOptions { tolerance: 1e-9, measure_checks: true }
    }
}

/// Certifies `d_W(δ_x P_t, δ_y P_t) ≤ e^{−γt} ρ(x, y)` on a grid. The OU
/// distances are analytic; chain distances are exact transport costs between
/// rows of `exp(tQ)`.
pub fn certify_contraction(
    model: &Model,
    x_grid: &[StatePoint],
    y_grid: &[StatePoint],
    t_grid: &[f64],
    opts: &ContractionOptions,
) -> Result<MixingCertificate> {
    if x_grid.is_empty() || y_grid.is_empty() || t_grid.is_empty() {
        return Err(LabError::InvalidArgument("contraction grids must be nonempty".into()));
    }
    if t_grid.iter().any(|&t| !(t >= 0.0)) {
        return Err(LabError::InvalidArgument("times must be nonnegative".into()));
    }
    let domain = model.domain();
    for p in x_grid.iter().chain(y_grid) {
        domain.check(p)?;
    }
    let metric = model.metric();
    let mut raw = Vec::new();
    let mut skipped = 0usize;
    for &t in t_grid {
        let rows = match model {
            Model::Ctmc(m) => Some(m.transition(t)),
            Model::Ou(_) => None,
        };
        for x in x_grid {
            for y in y_grid {
                let rho = metric.distance(x, y)?;
                if rho == 0.0 {
                    skipped += 1;
                    continue;
                }
                let d = match model {
                    Model::Ou(m) => {
                        let kx = m.kernel_moments(x.as_real()?, t);
                        let ky = m.kernel_moments(y.as_real()?, t);
                        w1_gaussian(kx.mean, kx.variance, ky.mean, ky.variance)
                    }
                    Model::Ctmc(_) => {
                        let p = rows.as_ref().expect("chain rows");
                        let (i, j) = (x.as_index()?, y.as_index()?);
                        let n = p.nrows();
                        let ri: Vec<f64> = (0..n).map(|k| p[(i, k)]).collect();
                        let rj: Vec<f64> = (0..n).map(|k| p[(j, k)]).collect();
                        optimal_plan(&ri, &rj, |a, b| metric.index_distance(a, b)).cost
                    }
                };
                raw.push((*x, *y, t, rho, d));
            }
        }
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) =
        raw.iter().filter(|r| r.4 > 1e-300).map(|r| (r.2, (r.4 / r.3).ln())).unzip();
    let fit = fit_line(&ts, &ys);
    let gamma_hat = fit.map_or(f64::NAN, |f| -f.slope);
    let gamma_used = nominal_or(model, gamma_hat);
    let grid: Vec<ContractionTriple> = raw
        .into_iter()
        .map(|(x, y, t, rho, distance)| ContractionTriple {
            x,
            y,
            t,
            rho,
            distance,
            ratio: distance / ((-gamma_used * t).exp() * rho),
        })
        .collect();
    let max_ratio_violation = grid.iter().map(|g| g.ratio - 1.0).fold(f64::NEG_INFINITY, f64::max);

    let mut measure_checks = Vec::new();
    if opts.measure_checks {
        measure_checks = measure_pair_checks(model, x_grid, y_grid, t_grid, gamma_used)?;
    }
    let passed = gamma_used.is_finite()
        && (grid.is_empty() || max_ratio_violation <= opts.tolerance)
        && measure_checks.iter().all(|c| c.holds);
    Ok(MixingCertificate {
        method: match model {
            Model::Ou(_) => "analytic".into(),
            Model::Ctmc(_) => "exact".into(),
        },
        gamma_nominal: model.nominal_gamma(),
        gamma_used,
        gamma_hat,
        fit_r_squared: fit.map_or(f64::NAN, |f| f.r_squared),
        max_ratio_violation,
        tolerance: opts.tolerance,
        skipped_pairs: skipped,
        grid,
        measure_checks,
        passed,
    })
}

fn measure_pair_checks(
    model: &Model,
    x_grid: &[StatePoint],
    y_grid: &[StatePoint],
    t_grid: &[f64],
    gamma: f64,
) -> Result<Vec<MeasurePairCheck>> {
    let uniform = |pts: &[StatePoint]| EmpiricalMeasure::new(pts.iter().map(|p| (*p, 1.0)).collect());
    let pairs = [
        ("uniform(x_grid) vs uniform(y_grid)", uniform(x_grid)?, uniform(y_grid)?),
        ("dirac(x_grid[0]) vs uniform(y_grid)", EmpiricalMeasure::dirac(x_grid[0]), uniform(y_grid)?),
    ];
    let anchor = default_anchor(model);
    let mut out = Vec::new();
    for (label, a, b) in &pairs {
        let v_sum = mean_v(model, a, &anchor)? + mean_v(model, b, &anchor)?;
        for &t in t_grid {
            let distance = match model {
                Model::Ou(m) => w1_gaussian_mixtures(&ou_pushforward(m, a, t)?, &ou_pushforward(m, b, t)?)?,
                Model::Ctmc(m) => {
                    let p = m.transition(t);
                    let pa = ctmc_pushforward(&p, &a.to_probabilities(m.states())?);
                    let pb = ctmc_pushforward(&p, &b.to_probabilities(m.states())?);
                    optimal_plan(&pa, &pb, |i, j| m.metric().index_distance(i, j)).cost
                }
            };
            let bound = (-gamma * t).exp() * v_sum;
            out.push(MeasurePairCheck {
                pair: label.to_string(),
                t,
                distance,
                bound,
                holds: distance <= bound * (1.0 + 1e-9) + 1e-9,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exponential ergodicity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErgodicityOptions {
    /// Sample size per time for the OU empirical distances.
    pub samples_per_t: usize,
    pub seed: u64,
    pub anchor: Option<StatePoint>,
}

impl Default for ErgodicityOptions {
    fn default() -> Self {
        ErgodicityOptions { samples_per_t: 100_000, seed: 0, anchor: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityReport {
    pub method: String,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// Distances computed without sampling, when a closed form is available.
    pub exact_distances: Option<Vec<f64>>,
    pub samples_per_t: Option<usize>,
    pub noise_floor: f64,
    pub fitted_points: usize,
    pub fitted_slope: f64,
    pub fitted_intercept: f64,
    pub fit_r_squared: f64,
    /// `exp(intercept)/(⟨V,ν⟩+1)`.
    pub fitted_c: f64,
    pub gamma_nominal: Option<f64>,
    pub v_nu: f64,
    /// `⟨V,μ*⟩ + 1`, the prefactor the bound is stated with.
    pub bound_c: f64,
    pub bound_holds: bool,
}

/// Measures `d_W(νP_t, μ*)` on `t_grid` and fits the exponential decay
/// rate. Chain distances are exact; OU distances are empirical W1 between
/// samples of `νP_t` and of `μ*`, with points below three times the
/// null-distance level (two independent invariant samples) excluded from
/// the fit.
pub fn certify_ergodicity(
    model: &Model,
    nu: &EmpiricalMeasure,
    t_grid: &[f64],
    opts: &ErgodicityOptions,
) -> Result<ErgodicityReport> {
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] < 0.0 {
        return Err(LabError::InvalidArgument("t_grid must be strictly increasing, nonnegative, length ≥ 2".into()));
    }
    for (x, _) in nu.atoms() {
        model.domain().check(x)?;
    }
    let anchor = opts.anchor.unwrap_or_else(|| default_anchor(model));
    let v_nu = mean_v(model, nu, &anchor)?;
    let bound_c = invariant_mean_v(model, &anchor)? + 1.0;

    let (method, distances, exact, samples, floor) = match model {
        Model::Ctmc(m) => {
            let pi = m.invariant_measure()?;
            let p0 = nu.to_probabilities(m.states())?;
            let d = t_grid
                .iter()
                .map(|&t| {
                    let pt = ctmc_pushforward(&m.transition(t), &p0);
                    optimal_plan(&pt, &pi, |i, j| m.metric().index_distance(i, j)).cost
                })
                .collect::<Vec<_>>();
            ("exact".to_string(), d, None, None, 1e-12)
        }
        Model::Ou(m) => {
            let n = opts.samples_per_t;
            if n < 2 {
                return Err(LabError::InvalidArgument("samples_per_t must be at least 2".into()));
            }
            let inv = m.invariant_measure();
            let draw_inv = |idx: u64| {
                let mut rng = path_stream(opts.seed, Purpose::Invariant, idx);
                (0..n).map(|_| inv.sample(&mut rng).value()).collect::<Vec<f64>>()
            };
            let reference = draw_inv(0);
            let null = w1_empirical_1d(&reference, &draw_inv(1))?;
            let d = map_paths(t_grid.len(), |k| -> Result<f64> {
                let t = t_grid[k];
                let mut rng = path_stream(opts.seed, Purpose::Kernel, k as u64);
                let xs: Vec<f64> = (0..n)
                    .map(|_| {
                        let x0 = nu.sample(&mut rng).value();
                        m.sample_step(x0, t, &mut rng)
                    })
                    .collect();
                w1_empirical_1d(&xs, &reference)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let sd_inf = m.stationary_variance().sqrt();
            let exact = t_grid
                .iter()
                .map(|&t| w1_gaussian_mixtures(&ou_pushforward(m, nu, t)?, &[(0.0, sd_inf, 1.0)]))
                .collect::<Result<Vec<_>>>()?;
            ("empirical".to_string(), d, Some(exact), Some(n), 3.0 * null)
        }
    };
    let (ts, ls): (Vec<f64>, Vec<f64>) =
        t_grid.iter().zip(&distances).filter(|(_, &d)| d > floor).map(|(&t, &d)| (t, d.ln())).unzip();
    let fit: Option<LineFit> = fit_line(&ts, &ls);
    let slope = fit.map_or(f64::NAN, |f| f.slope);
    let intercept = fit.map_or(f64::NAN, |f| f.intercept);
    let gamma = nominal_or(model, -slope);
    let bound_holds = t_grid
        .iter()
        .zip(&distances)
        .all(|(&t, &d)| d <= bound_c * (-gamma * t).exp() * (v_nu + 1.0) + floor);
    Ok(ErgodicityReport {
        method,
        times: t_grid.to_vec(),
        distances,
        exact_distances: exact,
        samples_per_t: samples,
        noise_floor: floor,
        fitted_points: ts.len(),
        fitted_slope: slope,
        fitted_intercept: intercept,
        fit_r_squared: fit.map_or(f64::NAN, |f| f.r_squared),
        fitted_c: intercept.exp() / (v_nu + 1.0),
        gamma_nominal: model.nominal_gamma(),
        v_nu,
        bound_c,
        bound_holds,
    })
}

// ---------------------------------------------------------------------------
// Moment boundedness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentOptions {
    /// Zero selects deterministic quadrature on OU; otherwise Monte Carlo.
    pub samples_per_t: usize,
    pub seed: u64,
    pub burn_in: f64,
    /// Relative slack for the non-increase check on deterministic values.
    pub rel_tol: f64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions { samples_per_t: 0, seed: 0, burn_in: 0.0, rel_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub method: String,
    pub zeta: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub max_value: f64,
    pub burn_in: f64,
    pub non_increasing_after_burn_in: bool,
    pub passed: bool,
}

/// Tracks `⟨V^ζ, μP_t⟩` along `t_grid`.
pub fn certify_moments(
    model: &Model,
    mu: &EmpiricalMeasure,
    cfg: &LyapunovConfig,
    t_grid: &[f64],
    opts: &MomentOptions,
) -> Result<MomentReport> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] < 0.0 {
        return Err(LabError::InvalidArgument("t_grid must be strictly increasing and nonnegative".into()));
    }
    model.domain().check(&cfg.anchor)?;
    for (x, _) in mu.atoms() {
        model.domain().check(x)?;
    }
    let zeta = cfg.zeta;
    let (method, values, ses): (&str, Vec<f64>, Vec<f64>) = match model {
        Model::Ctmc(m) => {
            let p0 = mu.to_probabilities(m.states())?;
            let a = cfg.anchor.as_index()?;
            let v: Vec<f64> = t_grid
                .iter()
                .map(|&t| {
                    let pt = ctmc_pushforward(&m.transition(t), &p0);
                    pt.iter().enumerate().map(|(j, p)| p * m.metric().index_distance(a, j).powf(zeta)).sum()
                })
                .collect();
            let n = v.len();
            ("exact", v, vec![0.0; n])
        }
        Model::Ou(m) if opts.samples_per_t == 0 => {
            let a = cfg.anchor.as_real()?;
            let v = t_grid
                .iter()
                .map(|&t| {
                    let sd = m.kernel_variance(t).sqrt();
                    mu.integrate(|x| {
                        let mean = m.kernel_moments(x.as_real()?, t).mean;
                        Ok(gaussian_expectation_kinked(mean, sd, |y| (y - a).abs().powf(zeta), &[a]))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let n = v.len();
            ("quadrature", v, vec![0.0; n])
        }
        Model::Ou(m) => {
            let a = cfg.anchor.as_real()?;
            let n = opts.samples_per_t;
            let est = map_paths(t_grid.len(), |k| {
                let mut rng = path_stream(opts.seed, Purpose::Moments, k as u64);
                let xs: Vec<f64> = (0..n)
                    .map(|_| {
                        let x0 = mu.sample(&mut rng).value();
                        (m.sample_step(x0, t_grid[k], &mut rng) - a).abs().powf(zeta)
                    })
                    .collect();
                crate::stats::Estimate::from_samples(&xs)
            });
            ("monte_carlo", est.iter().map(|e| e.mean).collect(), est.iter().map(|e| e.std_error).collect())
        }
    };
    let max_value = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let idx: Vec<usize> = (0..t_grid.len()).filter(|&k| t_grid[k] >= opts.burn_in).collect();
    let non_increasing = idx.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        let slack = 3.0 * ses[a].hypot(ses[b]) + opts.rel_tol * max_value.abs() + 1e-12;
        values[b] <= values[a] + slack
    });
    Ok(MomentReport {
        method: method.into(),
        zeta,
        times: t_grid.to_vec(),
        values,
        std_errors: ses,
        max_value,
        burn_in: opts.burn_in,
        non_increasing_after_burn_in: non_increasing,
        passed: max_value.is_finite() && non_increasing,
    })
}

// ---------------------------------------------------------------------------
// Cesàro convergence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CesaroReport {
    pub method: String,
    pub mesh: f64,
    pub times: Vec<f64>,
    pub averages: Vec<f64>,
    pub target: f64,
    pub gaps: Vec<f64>,
    /// `max_{t ≥ 1} t·gap(t)`.
    pub c_prime: f64,
    pub passed: bool,
}

/// `(1/t)∫₀^t ⟨f, νP_s⟩ ds` by the trapezoid rule on a uniform mesh, with
/// its gap to `⟨f, μ*⟩`. Both models use deterministic semigroup
/// evaluations.
pub fn cesaro_convergence(
    model: &Model,
    nu: &EmpiricalMeasure,
    f: &Observable,
    horizon: f64,
    mesh: f64,
) -> Result<CesaroReport> {
    if !(horizon > 0.0) || !(mesh > 0.0) || mesh > horizon {
        return Err(LabError::InvalidArgument("need 0 < mesh ≤ horizon".into()));
    }
    if f.domain() != model.domain() {
        return Err(LabError::KindMismatch { expected: format!("{:?}", model.domain()), found: format!("{:?}", f.domain()) });
    }
    let steps = (horizon / mesh).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * mesh).collect();
    let (method, h, target): (&str, Vec<f64>, f64) = match model {
        Model::Ctmc(m) => {
            let pi = m.invariant_measure()?;
            let fv: Vec<f64> = (0..m.states()).map(|i| f.eval_index(i)).collect();
            let step = m.transition(mesh);
            let mut p = nu.to_probabilities(m.states())?;
            let mut h = Vec::with_capacity(times.len());
            for k in 0..times.len() {
                if k > 0 {
                    p = ctmc_pushforward(&step, &p);
                }
                h.push(p.iter().zip(&fv).map(|(a, b)| a * b).sum());
            }
            ("exact", h, pi.iter().zip(&fv).map(|(a, b)| a * b).sum())
        }
        Model::Ou(m) => {
            let opts = SemigroupOptions::default();
            let h = times
                .iter()
                .map(|&t| nu.integrate(|x| Ok(m.apply_semigroup(f, t, x.as_real()?, &opts).value)))
                .collect::<Result<Vec<f64>>>()?;
            let inv = m.invariant_measure();
            ("quadrature", h, inv.expect_real_kinked(|x| f.eval_real(x), &f.kinks()))
        }
    };
    let mut integral = 0.0;
    let mut averages = Vec::with_capacity(steps);
    for k in 1..times.len() {
        integral += 0.5 * mesh * (h[k - 1] + h[k]);
        averages.push(integral / times[k]);
    }
    let times = times[1..].to_vec();
    let gaps: Vec<f64> = averages.iter().map(|a| (a - target).abs()).collect();
    let c_prime = times.iter().zip(&gaps).filter(|(t, _)| **t >= 1.0).map(|(t, g)| t * g).fold(0.0, f64::max);
    let last = *gaps.last().expect("at least one step");
    let half = gaps[(gaps.len() - 1) / 2];
    let passed = last <= 1e-10 || last < half;
    Ok(CesaroReport { method: method.into(), mesh, times, averages, target, gaps, c_prime, passed })
}

// ---------------------------------------------------------------------------
// Lipschitz propagation
// ---------------------------------------------------------------------------

/// `f(x₁, x₂)` with declared Lipschitz constants in each argument.
pub struct TwoTimeFunction<'a> {
    pub f: &'a (dyn Fn(&StatePoint, &StatePoint) -> f64 + Sync),
    pub lip1: f64,
    pub lip2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzPropagationReport {
    pub s1: f64,
    pub s2: f64,
    pub gamma: f64,
    pub points: Vec<StatePoint>,
    pub values: Vec<f64>,
    pub estimate: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Estimates `Lip F` for `F(x) = E_x[f(Φ_{s₁}, Φ_{s₂})]` by the largest
/// divided difference over grid pairs and compares it with
/// `Lip₁ f·e^{−γs₁} + Lip₂ f·e^{−γs₂}`.
///
/// On OU the expectation uses a tensor Gauss–Hermite rule on the fixed
/// Gaussian noise of the two-time kernel, so every grid point shares the
/// same nodes and divided differences obey the bound node by node.
pub fn lipschitz_propagation_check(
    model: &Model,
    f: &TwoTimeFunction<'_>,
    s1: f64,
    s2: f64,
    x_grid: &[StatePoint],
    gh_nodes: usize,
) -> Result<LipschitzPropagationReport> {
    if !(0.0 < s1 && s1 < s2) {
        return Err(LabError::InvalidArgument(format!("need 0 < s1 < s2, got s1={s1}, s2={s2}")));
    }
    if x_grid.len() < 2 {
        return Err(LabError::InvalidArgument("need at least two grid points".into()));
    }
    let gamma = model
        .nominal_gamma()
        .ok_or_else(|| LabError::InvalidArgument("model has no declared contraction rate".into()))?;
    for x in x_grid {
        model.domain().check(x)?;
    }
    let values: Vec<f64> = match model {
        Model::Ou(m) => {
            let gh = GaussHermite::cached(gh_nodes);
            let pts: Vec<(f64, f64)> = gh.standard_normal_points().collect();
            let a1 = (-m.gamma * s1).exp();
            let a2 = (-m.gamma * s2).exp();
            let sd1 = m.kernel_variance(s1).sqrt();
            let sd21 = m.kernel_variance(s2 - s1).sqrt();
            let carry = (-m.gamma * (s2 - s1)).exp();
            x_grid
                .iter()
                .map(|x| {
                    let x = x.as_real().expect("checked");
                    let mut s = 0.0;
                    for &(z1, w1) in &pts {
                        let y1 = x * a1 + sd1 * z1;
                        let base2 = x * a2 + carry * sd1 * z1;
                        for &(z2, w2) in &pts {
                            s += w1 * w2 * (f.f)(&StatePoint::Real(y1), &StatePoint::Real(base2 + sd21 * z2));
                        }
                    }
                    s
                })
                .collect()
        }
        Model::Ctmc(m) => {
            let p1 = m.transition(s1);
            let p21 = m.transition(s2 - s1);
            let n = m.states();
            let inner: Vec<f64> = (0..n)
                .map(|j| (0..n).map(|k| p21[(j, k)] * (f.f)(&StatePoint::Index(j), &StatePoint::Index(k))).sum())
                .collect();
            x_grid
                .iter()
                .map(|x| {
                    let i = x.as_index().expect("checked");
                    (0..n).map(|j| p1[(i, j)] * inner[j]).sum()
                })
                .collect()
        }
    };
    let metric = model.metric();
    let mut estimate = 0.0f64;
    for a in 0..x_grid.len() {
        for b in (a + 1)..x_grid.len() {
            let rho = metric.distance(&x_grid[a], &x_grid[b])?;
            if rho > 0.0 {
                estimate = estimate.max((values[a] - values[b]).abs() / rho);
            }
        }
    }
    let bound = f.lip1 * (-gamma * s1).exp() + f.lip2 * (-gamma * s2).exp();
    Ok(LipschitzPropagationReport {
        s1,
        s2,
        gamma,
        points: x_grid.to_vec(),
        values,
        estimate,
        bound,
        passed: estimate <= bound * (1.0 + 1e-9) + 1e-12,
    })
}

// ---------------------------------------------------------------------------
// Stochastic continuity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityReport {
    /// Times in decreasing order.
    pub times: Vec<f64>,
    /// `max_x d_W(δ_x P_t, δ_x)`.
    pub kernel_distances: Vec<f64>,
    /// `max_x |P_t f(x) − f(x)|`.
    pub semigroup_gaps: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Kernel-level check of `P_t f(x) → f(x)` as `t → 0⁺` on a grid of states.
pub fn stochastic_continuity_check(
    model: &Model,
    f: &Observable,
    x_grid: &[StatePoint],
    t_grid: &[f64],
    tolerance: f64,
) -> Result<ContinuityReport> {
    if x_grid.is_empty() || t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(LabError::InvalidArgument("need nonempty grids and positive times".into()));
    }
    let mut times = t_grid.to_vec();
    times.sort_by(|a, b| b.total_cmp(a));
    let opts = SemigroupOptions::default();
    let mut kd = Vec::new();
    let mut sg = Vec::new();
    for &t in &times {
        let mut dmax = 0.0f64;
        let mut gmax = 0.0f64;
        for x in x_grid {
            let d = match model {
                Model::Ou(m) => {
                    let xv = x.as_real()?;
                    let k = m.kernel_moments(xv, t);
                    w1_gaussian(k.mean, k.variance, xv, 0.0)
                }
                Model::Ctmc(m) => {
                    let p = m.transition(t);
                    let i = x.as_index()?;
                    (0..m.states()).map(|j| p[(i, j)] * m.metric().index_distance(i, j)).sum()
                }
            };
            dmax = dmax.max(d);
            let pt = model.apply_semigroup(f, t, x, &opts)?.value;
            gmax = gmax.max((pt - f.eval(x)?).abs());
        }
        kd.push(dmax);
        sg.push(gmax);
    }
    let mono = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let passed = mono(&kd) && mono(&sg) && *kd.last().unwrap() <= tolerance && *sg.last().unwrap() <= tolerance;
    Ok(ContinuityReport { times, kernel_distances: kd, semigroup_gaps: sg, tolerance, passed })
}

/// Independent draws of `ν P_t` (used by callers that want raw samples).
pub fn sample_pushforward<R: Rng + ?Sized>(model: &Model, nu: &EmpiricalMeasure, t: f64, n: usize, rng: &mut R) -> Result<Vec<StatePoint>> {
    (0..n).map(|_| model.sample_step(&nu.sample(rng), t, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CtmcModel, OuModel};

    #[test]
    fn empirical_1d_examples() {
        assert_eq!(w1_empirical_1d(&[1.0, 2.0, 5.0], &[5.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(w1_empirical_1d(&[0.0], &[3.0]).unwrap(), 3.0);
        assert!((w1_empirical_1d(&[0.0, 1.0], &[2.0, 3.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(w1_empirical_1d(&[], &[1.0]).is_err());
    }

    #[test]
    fn empirical_1d_unequal_sizes_match_weighted() {
        let a = [0.3, -1.2, 2.5];
        let b = [0.0, 1.0, 4.0, -2.0, 0.5];
        let wa: Vec<_> = a.iter().map(|&x| (x, 1.0)).collect();
        let wb: Vec<_> = b.iter().map(|&x| (x, 1.0)).collect();
        let d1 = w1_empirical_1d(&a, &b).unwrap();
        let d2 = w1_weighted_1d(&wa, &wb).unwrap();
        assert!((d1 - d2).abs() < 1e-14);
        assert_eq!(d1, w1_empirical_1d(&b, &a).unwrap());
    }

    #[test]
    fn discrete_examples() {
        let m = Metric::DiscreteUniform { states: 3 };
        assert_eq!(w1_discrete(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], &m).unwrap(), 0.0);
        assert_eq!(w1_discrete(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &m).unwrap(), 1.0);
        let e = Metric::explicit(vec![vec![0.0, 2.0, 3.0], vec![2.0, 0.0, 1.5], vec![3.0, 1.5, 0.0]]).unwrap();
        assert_eq!(w1_discrete(&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &e).unwrap(), 3.0);
        assert!(w1_discrete(&[0.5, 0.5, 0.1], &[1.0, 0.0, 0.0], &m).is_err());
        assert!(w1_discrete(&[0.5, 0.5], &[1.0, 0.0, 0.0], &m).is_err());
    }

    #[test]
    fn gaussian_closed_form_matches_quadrature() {
        // ∫|F1 − F2| with fine Simpson on explicit normal CDFs.
        let (m1, s1, m2, s2) = (0.4, 1.3, -0.2, 0.7);
        let n = 200_000;
        let (lo, hi) = (-15.0, 15.0);
        let h = (hi - lo) / n as f64;
        let g = |x: f64| (normal_cdf((x - m1) / s1) - normal_cdf((x - m2) / s2)).abs();
        let mut s = 0.0;
        for k in 0..n {
            let a = lo + k as f64 * h;
            s += h / 6.0 * (g(a) + 4.0 * g(a + h / 2.0) + g(a + h));
        }
        let d = w1_gaussian(m1, s1 * s1, m2, s2 * s2);
        assert!((d - s).abs() < 1e-8, "{d} vs {s}");
        assert_eq!(w1_gaussian(1.0, 2.0, -1.0, 2.0), 2.0);
    }

    #[test]
    fn mixture_distance_reduces_to_closed_form() {
        let d = w1_gaussian_mixtures(&[(0.3, 1.0, 0.5), (0.3, 1.0, 0.5)], &[(1.0, 0.5, 1.0)]).unwrap();
        assert!((d - w1_gaussian(0.3, 1.0, 1.0, 0.25)).abs() < 1e-8);
    }

    #[test]
    fn sinkhorn_brackets_exact_value() {
        let m = Metric::explicit(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]).unwrap();
        let mu = [0.5, 0.3, 0.2];
        let nu = [0.1, 0.2, 0.7];
        let exact = w1_discrete(&mu, &nu, &m).unwrap();
        let s = w1_sinkhorn(&mu, &nu, &m, 0.05, 5000).unwrap();
        assert!(s.dual_value <= exact + 1e-9 && exact <= s.primal_cost + 1e-9);
        assert!(s.duality_gap >= -1e-12 && s.duality_gap < 0.1);
    }

    #[test]
    fn contraction_two_state_chain_has_rate_two() {
        let model = Model::Ctmc(CtmcModel::two_state_symmetric());
        let ts: Vec<f64> = (1..=10).map(|k| 0.3 * k as f64).collect();
        let c = certify_contraction(
            &model,
            &[StatePoint::Index(0)],
            &[StatePoint::Index(0), StatePoint::Index(1)],
            &ts,
            &ContractionOptions::default(),
        )
        .unwrap();
        assert_eq!(c.skipped_pairs, ts.len());
        assert!((c.gamma_hat - 2.0).abs() < 1e-9);
        for g in &c.grid {
            assert!((g.distance - (-2.0 * g.t).exp()).abs() < 1e-12);
        }
        assert!(c.passed);
    }

    #[test]
    fn ou_contraction_is_equality() {
        let model = Model::Ou(OuModel::new(0.8, 1.1).unwrap());
        let xs: Vec<StatePoint> = (0..4).map(|k| StatePoint::Real(k as f64 - 1.5)).collect();
        let ys: Vec<StatePoint> = (0..3).map(|k| StatePoint::Real(0.7 * k as f64)).collect();
        let c = certify_contraction(&model, &xs, &ys, &[0.0, 0.5, 2.0], &ContractionOptions::default()).unwrap();
        assert!(c.grid.iter().all(|g| (g.ratio - 1.0).abs() < 1e-12));
        assert!(c.measure_checks.iter().all(|m| m.holds));
        assert!(c.passed);
    }

    #[test]
    fn ergodicity_chain_from_dirac() {
        let model = Model::Ctmc(CtmcModel::two_state_symmetric());
        let nu = EmpiricalMeasure::dirac(StatePoint::Index(0));
        let ts: Vec<f64> = (0..8).map(|k| 0.5 * k as f64).collect();
        let r = certify_ergodicity(&model, &nu, &ts, &ErgodicityOptions::default()).unwrap();
        for (t, d) in r.times.iter().zip(&r.distances) {
            assert!((d - 0.5 * (-2.0 * t).exp()).abs() < 1e-12);
        }
        assert!((r.fitted_slope + 2.0).abs() < 1e-9);
        let pi = EmpiricalMeasure::from_probabilities(&[0.5, 0.5]).unwrap();
        let r = certify_ergodicity(&model, &pi, &ts, &ErgodicityOptions::default()).unwrap();
        assert!(r.distances.iter().all(|&d| d < 1e-14));
    }

    #[test]
    fn moments_examples() {
        let ou = Model::Ou(OuModel::new(1.0, std::f64::consts::SQRT_2).unwrap());
        let cfg = LyapunovConfig::new(StatePoint::Real(0.0), 3.0).unwrap();
        let r = certify_moments(&ou, &EmpiricalMeasure::dirac(StatePoint::Real(0.0)), &cfg, &[0.0, 1.0, 20.0], &MomentOptions::default())
            .unwrap();
        assert_eq!(r.values[0], 0.0);
        let oracle = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((r.values[2] - oracle).abs() < 1e-9);

        let q = vec![vec![-1.0, 0.5, 0.5], vec![1.0, -2.0, 1.0], vec![0.2, 0.3, -0.5]];
        let ctmc = Model::Ctmc(CtmcModel::new(q, Metric::DiscreteUniform { states: 3 }).unwrap());
        let cfg = LyapunovConfig::new(StatePoint::Index(0), 3.0).unwrap();
        let mu = EmpiricalMeasure::from_probabilities(&[0.0, 0.5, 0.5]).unwrap();
        let r = certify_moments(&ctmc, &mu, &cfg, &[0.0, 0.5, 1.0, 4.0], &MomentOptions::default()).unwrap();
        assert!(r.values.iter().all(|&v| v <= 1.0 + 1e-12));
    }

    #[test]
    fn cesaro_two_state_closed_form() {
        let chain = CtmcModel::two_state_symmetric();
        let g = Observable::table(vec![1.0, -1.0], chain.metric()).unwrap();
        let model = Model::Ctmc(chain);
        let r = cesaro_convergence(&model, &EmpiricalMeasure::dirac(StatePoint::Index(0)), &g, 10.0, 0.01).unwrap();
        for (t, a) in r.times.iter().zip(&r.averages) {
            let exact = (1.0 - (-2.0 * t).exp()) / (2.0 * t);
            assert!((a - exact).abs() < 1e-4, "t={t}: {a} vs {exact}");
        }
        assert!(r.passed);
        let pi = EmpiricalMeasure::from_probabilities(&[0.5, 0.5]).unwrap();
        let r = cesaro_convergence(&model, &pi, &g, 5.0, 0.1).unwrap();
        assert!(r.gaps.iter().all(|&g| g < 1e-12));
    }

    #[test]
    fn lipschitz_propagation_examples() {
        let ou = Model::Ou(OuModel::new(1.0, std::f64::consts::SQRT_2).unwrap());
        let xs: Vec<StatePoint> = (0..9).map(|k| StatePoint::Real(-0.4 + 0.1 * k as f64)).collect();
        let constant = |_: &StatePoint, _: &StatePoint| 3.0;
        let r = lipschitz_propagation_check(&ou, &TwoTimeFunction { f: &constant, lip1: 0.0, lip2: 0.0 }, 1.0, 2.0, &xs, 32)
            .unwrap();
        assert!(r.estimate.abs() < 1e-12 && r.passed);

        let clip = |a: &StatePoint, _: &StatePoint| a.value().clamp(-50.0, 50.0);
        let r = lipschitz_propagation_check(&ou, &TwoTimeFunction { f: &clip, lip1: 1.0, lip2: 0.0 }, 1.0, 2.0, &xs, 32)
            .unwrap();
        assert!((r.estimate - (-1.0f64).exp()).abs() < 1e-10);
        assert!(r.passed);

        let chain = CtmcModel::two_state_symmetric().with_gamma(2.0).unwrap();
        let model = Model::Ctmc(chain);
        let h = |a: &StatePoint, b: &StatePoint| a.value() + 2.0 * b.value();
        let r = lipschitz_propagation_check(
            &model,
            &TwoTimeFunction { f: &h, lip1: 1.0, lip2: 2.0 },
            0.3,
            0.8,
            &[StatePoint::Index(0), StatePoint::Index(1)],
            0,
        )
        .unwrap();
        let exact = (-0.6f64).exp() + 2.0 * (-1.6f64).exp();
        assert!((r.estimate - exact).abs() < 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn continuity_at_small_times() {
        let ou = Model::Ou(OuModel::new(1.0, 1.0).unwrap());
        let xs: Vec<StatePoint> = [-1.0, 0.0, 2.0].iter().map(|&x| StatePoint::Real(x)).collect();
        let r = stochastic_continuity_check(&ou, &Observable::tanh(1.0), &xs, &[1.0, 0.1, 1e-3, 1e-5], 1e-2).unwrap();
        assert!(r.passed, "{r:?}");
        let chain = Model::Ctmc(CtmcModel::two_state_symmetric());
        let g = Observable::table(vec![1.0, -1.0], chain.metric()).unwrap();
        let r = stochastic_continuity_check(&chain, &g, &[StatePoint::Index(0)], &[1.0, 1e-2, 1e-4], 1e-2).unwrap();
        assert!(r.passed);
        assert!((r.kernel_distances[2] - 0.5 * (1.0 - (-2e-4f64).exp())).abs() < 1e-15);
    }
}
