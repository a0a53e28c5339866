//! The corrector `χ_g = ∫₀^∞ P_t g dt` and the pairing form of the
//! asymptotic variance `σ_g² = 2⟨g χ_g, μ*⟩`.
//!
//! On a finite chain the corrector solves the Poisson equation `Qχ = −g`
//! with `⟨χ, π⟩ = 0`. On OU it is a truncated time integral of `P_t g(x)`,
//! with the neglected tail bounded by
//! `(C·Lip g/γ)·e^{−γT}·(V(x)+1)`, `C = ⟨V, μ*⟩ + 1`, `V = |x − x₀|`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::models::{CtmcModel, OuModel, SemigroupOptions};
use crate::quadrature::{geometric_partition, simpson_on_panels, GaussHermite};
use crate::space::{ExactMeasure, Metric, Observable, StatePoint};

/// Centering tolerance for observables handed to corrector solvers.
pub const CENTERING_TOL: f64 = 1e-10;

/// Exact Poisson-equation corrector on a finite chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtmcCorrector {
    pub chi: Vec<f64>,
    pub pi: Vec<f64>,
    /// `‖Qχ + g‖_∞`.
    pub residual: f64,
    /// `⟨χ, π⟩`.
    pub centering: f64,
}

fn pi_mean(pi: &[f64], v: &[f64]) -> f64 {
    pi.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Solves `Qχ = −g`, `⟨χ, π⟩ = 0` by LU on the rank-one completion
/// `(Q + 1πᵀ)χ = −g`, which is nonsingular for an irreducible chain and
/// whose solution automatically satisfies the normalization when `⟨g,π⟩=0`.
/// One step of iterative refinement follows.
pub fn corrector_ctmc(model: &CtmcModel, g: &Observable) -> Result<CtmcCorrector> {
    let n = model.states();
    let gv = g
        .values()
        .filter(|v| v.len() == n)
        .ok_or_else(|| LabError::DimensionMismatch(format!("observable does not live on {n} states")))?;
    let pi = model.invariant_measure()?;
    let mean = pi_mean(&pi, &gv);
    if mean.abs() > CENTERING_TOL {
        return Err(LabError::NotCentered { mean });
    }
    let q = model.generator_matrix();
    let a = DMatrix::from_fn(n, n, |i, j| q[(i, j)] + pi[j]);
    let b = DVector::from_iterator(n, gv.iter().map(|v| -v));
    let lu = a.clone().lu();
    let mut chi = lu.solve(&b).ok_or_else(|| LabError::Singular("Poisson system".into()))?;
    let r = &b - &a * &chi;
    if let Some(d) = lu.solve(&r) {
        chi += d;
    }
    let qchi = &q * &chi;
    let residual = (0..n).map(|i| (qchi[i] + gv[i]).abs()).fold(0.0, f64::max);
    let chi: Vec<f64> = chi.iter().cloned().collect();
    let centering = pi_mean(&pi, &chi);
    Ok(CtmcCorrector { chi, pi, residual, centering })
}

/// Truncated-integral estimate of `χ_g(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectorEstimate {
    pub value: f64,
    pub truncation_t: f64,
    pub tail_bound: f64,
    pub quadrature_mesh: f64,
    /// Summed Simpson–trapezoid discrepancy over the panels.
    pub quadrature_error: f64,
}

/// `‖g‖_BL`-type tail constant `C·Lip g/γ` with `C = ⟨V, μ*⟩ + 1`.
fn tail_prefactor(c: f64, lip: f64, gamma: f64) -> f64 {
    c * lip / gamma
}

/// `⟨|· − x₀|, N(0, v)⟩ + 1`.
pub fn ou_tail_constant(model: &OuModel, anchor: f64) -> f64 {
    crate::transport::w1_gaussian(0.0, model.stationary_variance(), anchor, 0.0) + 1.0
}

fn ensure_centered_ou(model: &OuModel, g: &Observable) -> Result<()> {
    let mean = model.invariant_measure().expect_real_kinked(|x| g.eval_real(x), &g.kinks());
    if mean.abs() > CENTERING_TOL {
        return Err(LabError::NotCentered { mean });
    }
    Ok(())
}

fn ou_panels(t_end: f64, mesh: f64) -> Vec<f64> {
    geometric_partition(t_end, mesh.min(1e-3), 1.25, mesh)
}

fn ou_integral(model: &OuModel, g: &Observable, x: f64, panels: &[f64], opts: &SemigroupOptions) -> (f64, f64) {
    simpson_on_panels(panels, |t| model.apply_semigroup(g, t, x, opts).value)
}

/// `∫₀^T P_t g(x) dt` on a geometric time grid (panels start small and grow
/// to `mesh`) plus the certified tail bound for `[T, ∞)`. The Lyapunov
/// anchor is `x₀ = 0`, the invariant mean.
pub fn corrector_quadrature(model: &OuModel, g: &Observable, x: f64, t_end: f64, mesh: f64) -> Result<CorrectorEstimate> {
    if !(t_end > 0.0) || !(mesh > 0.0) {
        return Err(LabError::InvalidArgument("need T > 0 and mesh > 0".into()));
    }
    if !x.is_finite() {
        return Err(LabError::NonFiniteState);
    }
    ensure_centered_ou(model, g)?;
    if g.is_identically_zero() {
        return Ok(CorrectorEstimate { value: 0.0, truncation_t: t_end, tail_bound: 0.0, quadrature_mesh: mesh, quadrature_error: 0.0 });
    }
    let (value, err) = ou_integral(model, g, x, &ou_panels(t_end, mesh), &SemigroupOptions::default());
    let c = ou_tail_constant(model, 0.0);
    let tail_bound = tail_prefactor(c, g.lip_const, model.gamma) * (-model.gamma * t_end).exp() * (x.abs() + 1.0);
    Ok(CorrectorEstimate { value, truncation_t: t_end, tail_bound, quadrature_mesh: mesh, quadrature_error: err })
}

/// Quadrature of `∫₀^T exp(tQ) g dt` for every state, used to cross-check
/// the Poisson solve. The tail bound uses the supplied contraction rate.
pub fn corrector_ctmc_quadrature(
    model: &CtmcModel,
    g: &Observable,
    gamma: f64,
    t_end: f64,
    mesh: f64,
) -> Result<Vec<CorrectorEstimate>> {
    if !(t_end > 0.0) || !(mesh > 0.0) || !(gamma > 0.0) {
        return Err(LabError::InvalidArgument("need T > 0, mesh > 0 and gamma > 0".into()));
    }
    let n = model.states();
    let gv = g
        .values()
        .filter(|v| v.len() == n)
        .ok_or_else(|| LabError::DimensionMismatch(format!("observable does not live on {n} states")))?;
    let pi = model.invariant_measure()?;
    let mean = pi_mean(&pi, &gv);
    if mean.abs() > CENTERING_TOL {
        return Err(LabError::NotCentered { mean });
    }
    let steps = (t_end / mesh).ceil() as usize;
    let h = t_end / steps as f64;
    // Simpson on a uniform grid of half-steps.
    let half = model.transition(h / 2.0);
    let gvec = DVector::from_vec(gv.clone());
    let mut vals = Vec::with_capacity(2 * steps + 1);
    let mut cur = gvec.clone();
    vals.push(cur.clone());
    for _ in 0..(2 * steps) {
        cur = &half * &cur;
        vals.push(cur.clone());
    }
    let metric = model.metric();
    let c = (0..n).map(|j| pi[j] * metric.index_distance(0, j)).sum::<f64>() + 1.0;
    (0..n)
        .map(|i| {
            let mut simpson = 0.0;
            let mut trap = 0.0;
            for k in 0..steps {
                let (a, m, b) = (vals[2 * k][i], vals[2 * k + 1][i], vals[2 * k + 2][i]);
                simpson += h / 6.0 * (a + 4.0 * m + b);
                trap += h / 4.0 * (a + 2.0 * m + b);
            }
            let v = metric.index_distance(0, i);
            Ok(CorrectorEstimate {
                value: simpson,
                truncation_t: t_end,
                tail_bound: tail_prefactor(c, g.lip_const, gamma) * (-gamma * t_end).exp() * (v + 1.0),
                quadrature_mesh: h,
                quadrature_error: (simpson - trap).abs(),
            })
        })
        .collect()
}

/// `Lip χ_g ≤ Lip g / γ`.
pub fn corrector_lipschitz_bound(g: &Observable, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(LabError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    Ok(g.lip_const / gamma)
}

/// Largest divided difference `|χ(i) − χ(j)| / ρ(i, j)` over state pairs.
pub fn corrector_slope(chi: &[f64], metric: &Metric) -> f64 {
    let mut s = 0.0f64;
    for i in 0..chi.len() {
        for j in (i + 1)..chi.len() {
            let d = metric.index_distance(i, j);
            if d > 0.0 {
                s = s.max((chi[i] - chi[j]).abs() / d);
            }
        }
    }
    s
}

/// Dense table of the OU corrector on `±width` invariant standard
/// deviations with local cubic interpolation; points outside the table are
/// integrated directly.
#[derive(Debug, Clone)]
pub struct OuCorrectorTable {
    model: OuModel,
    g: Observable,
    lo: f64,
    step: f64,
    values: Vec<f64>,
    pub truncation_t: f64,
    pub mesh: f64,
    /// Largest tail bound over the table.
    pub max_tail_bound: f64,
    pub max_quadrature_error: f64,
    /// Largest gap between interpolated and directly integrated values at
    /// the table's cell midpoints (sampled).
    pub interpolation_error: f64,
}

/// Table resolution and truncation for [`OuCorrectorTable::build`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuTableOptions {
    pub width_sd: f64,
    pub points: usize,
    pub truncation_t: Option<f64>,
    pub mesh: Option<f64>,
}

impl Default for OuTableOptions {
    fn default() -> Self {
        OuTableOptions { width_sd: 8.0, points: 321, truncation_t: None, mesh: None }
    }
}

impl OuCorrectorTable {
    /// Truncation defaults to `T = 30/γ` (tail factor `e^{−30}`), panels
    /// capped at `0.05/γ`.
    pub fn build(model: &OuModel, g: &Observable, opts: &OuTableOptions) -> Result<OuCorrectorTable> {
        ensure_centered_ou(model, g)?;
        if opts.points < 4 || !(opts.width_sd > 0.0) {
            return Err(LabError::InvalidArgument("table needs ≥ 4 points and positive width".into()));
        }
        let t_end = opts.truncation_t.unwrap_or(30.0 / model.gamma);
        let mesh = opts.mesh.unwrap_or(0.05 / model.gamma);
        let half = opts.width_sd * model.stationary_variance().sqrt();
        let lo = -half;
        let step = 2.0 * half / (opts.points - 1) as f64;
        let xs: Vec<f64> = (0..opts.points).map(|k| lo + k as f64 * step).collect();
        let est = crate::rng::map_paths(xs.len(), |k| corrector_quadrature(model, g, xs[k], t_end, mesh));
        let est = est.into_iter().collect::<Result<Vec<_>>>()?;
        let mut table = OuCorrectorTable {
            model: *model,
            g: g.clone(),
            lo,
            step,
            values: est.iter().map(|e| e.value).collect(),
            truncation_t: t_end,
            mesh,
            max_tail_bound: est.iter().map(|e| e.tail_bound).fold(0.0, f64::max),
            max_quadrature_error: est.iter().map(|e| e.quadrature_error).fold(0.0, f64::max),
            interpolation_error: 0.0,
        };
        let probes: Vec<f64> = (0..opts.points - 1).step_by(((opts.points - 1) / 16).max(1)).map(|k| xs[k] + 0.5 * step).collect();
        let gaps = crate::rng::map_paths(probes.len(), |k| -> Result<f64> {
            let direct = corrector_quadrature(model, g, probes[k], t_end, mesh)?.value;
            Ok((direct - table.interpolate(probes[k])).abs())
        });
        table.interpolation_error = gaps.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        Ok(table)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.lo + self.step * (self.values.len() - 1) as f64)
    }

    pub fn nodes(&self) -> Vec<(f64, f64)> {
        self.values.iter().enumerate().map(|(k, v)| (self.lo + k as f64 * self.step, *v)).collect()
    }

    fn interpolate(&self, x: f64) -> f64 {
        let n = self.values.len();
        let u = (x - self.lo) / self.step;
        let k = (u.floor() as isize).clamp(1, n as isize - 3) as usize;
        let s = u - k as f64;
        let (p0, p1, p2, p3) = (self.values[k - 1], self.values[k], self.values[k + 1], self.values[k + 2]);
        // Cubic Lagrange through nodes k−1..k+2, local coordinate s at node k.
        let l0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let l1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let l2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let l3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        l0 * p0 + l1 * p1 + l2 * p2 + l3 * p3
    }

    /// `χ_g(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.range();
        if x >= a && x <= b {
            self.interpolate(x)
        } else {
            corrector_quadrature(&self.model, &self.g, x, self.truncation_t, self.mesh)
                .map(|e| e.value)
                .unwrap_or(f64::NAN)
        }
    }
}

/// A corrector on either model.
#[derive(Debug, Clone)]
pub enum Corrector {
    Ctmc(CtmcCorrector),
    Ou(OuCorrectorTable),
}

impl Corrector {
    pub fn eval(&self, x: &StatePoint) -> Result<f64> {
        match (self, x) {
            (Corrector::Ctmc(c), StatePoint::Index(i)) => c
                .chi
                .get(*i)
                .copied()
                .ok_or(LabError::StateOutOfRange { index: *i, states: c.chi.len() }),
            (Corrector::Ou(t), StatePoint::Real(v)) => Ok(t.eval(*v)),
            (Corrector::Ctmc(_), _) => Err(LabError::KindMismatch { expected: "index".into(), found: x.kind().into() }),
            (Corrector::Ou(_), _) => Err(LabError::KindMismatch { expected: "real".into(), found: x.kind().into() }),
        }
    }

    /// The same corrector shifted by a constant (the Poisson equation only
    /// fixes `χ` up to constants).
    pub fn shifted(&self, c: f64) -> Result<Corrector> {
        match self {
            Corrector::Ctmc(k) => {
                let mut k = k.clone();
                k.chi.iter_mut().for_each(|v| *v += c);
                k.centering += c;
                Ok(Corrector::Ctmc(k))
            }
            Corrector::Ou(t) => {
                let mut t = t.clone();
                t.values.iter_mut().for_each(|v| *v += c);
                Ok(Corrector::Ou(t))
            }
        }
    }

    /// Adds a seeded perturbation that is never a constant shift and so
    /// breaks the Poisson equation. On a chain every state gets noise with
    /// alternating signs and magnitude in `[amplitude/2, 3·amplitude/2]`.
    /// On OU the table gets the smooth profile
    /// `amplitude·(a·tanh(x/s) + b·cos(x/s))`, `s` the invariant standard
    /// deviation and `a, b` drawn from `[1/2, 3/2]`: node-level noise would
    /// average out against smooth test functions.
    pub fn perturbed(&self, amplitude: f64, seed: u64) -> Corrector {
        use rand::Rng;
        let mut rng = crate::rng::path_stream(seed, crate::rng::Purpose::Corruption, 0);
        match self {
            Corrector::Ctmc(c) => {
                let mut c = c.clone();
                for (k, v) in c.chi.iter_mut().enumerate() {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    *v += sign * amplitude * (0.5 + rng.random::<f64>());
                }
                c.centering = pi_mean(&c.pi, &c.chi);
                Corrector::Ctmc(c)
            }
            Corrector::Ou(t) => {
                let mut t = t.clone();
                let a = 0.5 + rng.random::<f64>();
                let b = 0.5 + rng.random::<f64>();
                let s = t.model.stationary_variance().sqrt();
                let lo = t.lo;
                let step = t.step;
                for (k, v) in t.values.iter_mut().enumerate() {
                    let x = (lo + k as f64 * step) / s;
                    *v += amplitude * (a * x.tanh() + b * x.cos());
                }
                Corrector::Ou(t)
            }
        }
    }
}

/// `2⟨g χ, μ*⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaPairing {
    pub value: f64,
    /// Set when the value is negative beyond tolerance, which signals an
    /// inconsistent corrector.
    pub negative: bool,
}

pub fn sigma_pairing(g: &Observable, chi: &Corrector, mu_star: &ExactMeasure) -> Result<SigmaPairing> {
    let value = match (chi, mu_star) {
        (Corrector::Ctmc(c), ExactMeasure::Discrete { probabilities }) => {
            if probabilities.len() != c.chi.len() || g.values().map(|v| v.len()) != Some(c.chi.len()) {
                return Err(LabError::DimensionMismatch("g, χ and π must live on the same states".into()));
            }
            2.0 * probabilities.iter().enumerate().map(|(i, p)| p * g.eval_index(i) * c.chi[i]).sum::<f64>()
        }
        (Corrector::Ou(t), ExactMeasure::Gaussian { mean, variance }) => {
            if g.domain() != crate::space::Domain::Real {
                return Err(LabError::DimensionMismatch("g must live on the real line".into()));
            }
            let gh = GaussHermite::cached(crate::space::DEFAULT_GH_NODES);
            2.0 * gh.gaussian_expectation(*mean, variance.sqrt(), |x| g.eval_real(x) * t.eval(x))
        }
        _ => return Err(LabError::DimensionMismatch("corrector and invariant measure are on different spaces".into())),
    };
    Ok(SigmaPairing { value, negative: value < -1e-12 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> (CtmcModel, Observable) {
        let m = CtmcModel::two_state_symmetric();
        let g = Observable::table(vec![1.0, -1.0], m.metric()).unwrap();
        (m, g)
    }

    #[test]
    fn zero_observable_has_zero_corrector() {
        let (m, _) = two_state();
        let z = Observable::table(vec![0.0, 0.0], m.metric()).unwrap();
        let c = corrector_ctmc(&m, &z).unwrap();
        assert_eq!(c.chi, vec![0.0, 0.0]);
        let s = sigma_pairing(&z, &Corrector::Ctmc(c), &ExactMeasure::Discrete { probabilities: vec![0.5, 0.5] }).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn two_state_poisson_solution() {
        let (m, g) = two_state();
        let c = corrector_ctmc(&m, &g).unwrap();
        assert!((c.chi[0] - 0.5).abs() < 1e-15 && (c.chi[1] + 0.5).abs() < 1e-15);
        assert!(c.residual < 1e-12);
        assert!(c.centering.abs() < 1e-15);
        let pi = ExactMeasure::Discrete { probabilities: c.pi.clone() };
        let s = sigma_pairing(&g, &Corrector::Ctmc(c), &pi).unwrap();
        assert_eq!(s.value, 1.0);
        assert!(!s.negative);
    }

    #[test]
    fn uncentered_observable_is_rejected() {
        let (m, _) = two_state();
        let g = Observable::table(vec![1.0, 0.0], m.metric()).unwrap();
        assert!(matches!(corrector_ctmc(&m, &g), Err(LabError::NotCentered { .. })));
        let ou = OuModel::new(1.0, 1.0).unwrap();
        let shifted = Observable::custom(|x| x.tanh() + 0.1, 1.1, 1.0, true);
        assert!(matches!(corrector_quadrature(&ou, &shifted, 0.0, 5.0, 0.1), Err(LabError::NotCentered { .. })));
    }

    #[test]
    fn quadrature_matches_poisson_solve_on_chain() {
        let q = vec![vec![-1.5, 1.0, 0.5], vec![0.3, -0.8, 0.5], vec![2.0, 0.0, -2.0]];
        let m = CtmcModel::new(q, Metric::DiscreteUniform { states: 3 }).unwrap();
        let pi = m.invariant_measure().unwrap();
        let raw = [1.0, -0.5, 2.0];
        let mean = pi_mean(&pi, &raw);
        let g = Observable::table(raw.iter().map(|v| v - mean).collect(), m.metric()).unwrap();
        let c = corrector_ctmc(&m, &g).unwrap();
        assert!(c.residual < 1e-12);
        assert!(c.centering.abs() < 1e-12);
        // Spectral gap of this generator bounds the contraction rate from
        // below; 0.5 is a safe declared rate for the tail term.
        let est = corrector_ctmc_quadrature(&m, &g, 0.5, 60.0, 0.01).unwrap();
        for (e, chi) in est.iter().zip(&c.chi) {
            assert!((e.value - chi).abs() <= e.tail_bound + e.quadrature_error + 1e-10, "{} vs {chi}", e.value);
        }
    }

    #[test]
    fn two_state_quadrature_cross_check_at_t20() {
        let (m, g) = two_state();
        let c = corrector_ctmc(&m, &g).unwrap();
        let est = corrector_ctmc_quadrature(&m, &g, 2.0, 20.0, 0.01).unwrap();
        for (e, chi) in est.iter().zip(&c.chi) {
            assert!((e.value - chi).abs() <= (-40.0f64).exp() + e.quadrature_error + 1e-12);
        }
    }

    #[test]
    fn shifting_the_corrector_leaves_sigma_unchanged() {
        let (m, g) = two_state();
        let c = Corrector::Ctmc(corrector_ctmc(&m, &g).unwrap());
        let pi = ExactMeasure::Discrete { probabilities: vec![0.5, 0.5] };
        let s0 = sigma_pairing(&g, &c, &pi).unwrap().value;
        for shift in [-3.0, 0.25, 10.0] {
            let s = sigma_pairing(&g, &c.shifted(shift).unwrap(), &pi).unwrap().value;
            assert!((s - s0).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_bound_examples() {
        let (m, g) = two_state();
        assert_eq!(corrector_lipschitz_bound(&Observable::zero(crate::space::Domain::Real), 1.0).unwrap(), 0.0);
        assert_eq!(corrector_lipschitz_bound(&Observable::tanh(1.0), 1.0).unwrap(), 1.0);
        assert!(corrector_lipschitz_bound(&g, 0.0).is_err());
        let c = corrector_ctmc(&m, &g).unwrap();
        assert_eq!(g.lip_const, 2.0);
        let slope = corrector_slope(&c.chi, m.metric());
        assert!((slope - 1.0).abs() < 1e-15);
        assert!(slope <= corrector_lipschitz_bound(&g, 2.0).unwrap() + 1e-9);
    }

    #[test]
    fn ou_corrector_of_odd_function_vanishes_at_origin() {
        let m = OuModel::new(1.0, std::f64::consts::SQRT_2).unwrap();
        let g = Observable::tanh(1.0);
        let e = corrector_quadrature(&m, &g, 0.0, 20.0, 0.05).unwrap();
        assert!(e.value.abs() < 1e-14);
        let z = corrector_quadrature(&m, &Observable::zero(crate::space::Domain::Real), 1.0, 20.0, 0.05).unwrap();
        assert_eq!((z.value, z.tail_bound), (0.0, 0.0));
    }

    #[test]
    fn ou_corrector_of_identity_like_observable() {
        // For g = clip_b with a huge bound, P_t g(x) ≈ x e^{−γt} and χ ≈ x/γ.
        let m = OuModel::new(0.5, 1.0).unwrap();
        let g = Observable::clipped_identity(1e3);
        let e = corrector_quadrature(&m, &g, 1.3, 80.0, 0.05).unwrap();
        assert!((e.value - 1.3 / 0.5).abs() < 1e-8, "{}", e.value);
    }

    #[test]
    fn ou_refinement_is_self_consistent() {
        let m = OuModel::new(1.0, std::f64::consts::SQRT_2).unwrap();
        let g = Observable::clipped_identity(1.0);
        let coarse = corrector_quadrature(&m, &g, 0.7, 8.0, 0.1).unwrap();
        let fine = corrector_quadrature(&m, &g, 0.7, 16.0, 0.05).unwrap();
        let gap = (fine.value - coarse.value).abs();
        assert!(gap <= coarse.tail_bound + coarse.quadrature_error + fine.quadrature_error, "gap {gap}");
        assert!(fine.tail_bound < coarse.tail_bound);
    }

    #[test]
    fn ou_table_interpolates_and_respects_lipschitz_bound() {
        let m = OuModel::new(1.0, std::f64::consts::SQRT_2).unwrap();
        let g = Observable::tanh(1.0);
        let t = OuCorrectorTable::build(&m, &g, &OuTableOptions { points: 161, ..OuTableOptions::default() }).unwrap();
        assert!(t.interpolation_error < 1e-6, "{}", t.interpolation_error);
        let nodes = t.nodes();
        let bound = corrector_lipschitz_bound(&g, m.gamma).unwrap();
        for w in nodes.windows(2) {
            assert!(((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs() <= bound + 1e-9);
        }
        // Out-of-range points fall back to direct quadrature.
        let far = 11.0;
        let direct = corrector_quadrature(&m, &g, far, t.truncation_t, t.mesh).unwrap().value;
        assert_eq!(t.eval(far), direct);
        let s = sigma_pairing(&g, &Corrector::Ou(t), &m.invariant_measure()).unwrap();
        assert!(s.value > 0.0 && !s.negative);
    }
}
