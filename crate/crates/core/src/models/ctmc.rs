use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::space::{Metric, Observable};

/// Poisson tail mass below which the uniformization series is truncated.
const POISSON_TAIL: f64 = 1e-14;
/// Largest `Λt` handled by a single series before squaring.
const MAX_SERIES_RATE: f64 = 8.0;

/// Finite continuous-time Markov chain with generator `Q` and ground metric.
#[derive(Debug, Clone, Serialize)]
pub struct CtmcModel {
    q: Vec<Vec<f64>>,
    metric: Metric,
    gamma: Option<f64>,
    #[serde(skip)]
    jump_cdf: Vec<Vec<f64>>,
}

impl CtmcModel {
    /// Validates the generator: square, off-diagonal rates nonnegative, rows
    /// summing to zero within `1e-12`. Irreducibility is checked separately
    /// by [`CtmcModel::check_irreducible`] because frozen chains (`Q = 0`)
    /// are legitimate simulation fixtures.
    pub fn new(q: Vec<Vec<f64>>, metric: Metric) -> Result<CtmcModel> {
        let n = q.len();
        if n == 0 {
            return Err(LabError::InvalidGenerator("empty generator".into()));
        }
        for (i, row) in q.iter().enumerate() {
            if row.len() != n {
                return Err(LabError::InvalidGenerator(format!("row {i} has length {}, expected {n}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(LabError::InvalidGenerator(format!("row {i} has non-finite entries")));
            }
            for (j, &v) in row.iter().enumerate() {
                if i != j && v < 0.0 {
                    return Err(LabError::InvalidGenerator(format!("negative rate {v} at ({i},{j})")));
                }
            }
            let s: f64 = row.iter().sum();
            if s.abs() >= 1e-12 {
                return Err(LabError::InvalidGenerator(format!("row {i} sums to {s:e}")));
            }
        }
        match metric.states() {
            Some(m) if m == n => {}
            Some(m) => return Err(LabError::DimensionMismatch(format!("metric has {m} states, generator {n}"))),
            None => return Err(LabError::DimensionMismatch("chain needs a finite metric".into())),
        }
        let jump_cdf = q
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let rate = -row[i];
                let mut acc = 0.0;
                row.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        if j != i && rate > 0.0 {
                            acc += v / rate;
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(CtmcModel { q, metric, gamma: None, jump_cdf })
    }

    /// Declares the contraction rate used as the nominal `γ`.
    pub fn with_gamma(mut self, gamma: f64) -> Result<CtmcModel> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(LabError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        self.gamma = Some(gamma);
        Ok(self)
    }

    /// Symmetric two-state chain with unit rates and `ρ ≡ 1` off the
    /// diagonal.
    pub fn two_state_symmetric() -> CtmcModel {
        CtmcModel::new(vec![vec![-1.0, 1.0], vec![1.0, -1.0]], Metric::DiscreteUniform { states: 2 })
            .expect("valid generator")
    }

    pub fn states(&self) -> usize {
        self.q.len()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn generator(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn declared_gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn generator_matrix(&self) -> DMatrix<f64> {
        let n = self.states();
        DMatrix::from_fn(n, n, |i, j| self.q[i][j])
    }

    /// Breadth-first reachability on the support graph of `Q`, forwards and
    /// backwards from state 0.
    pub fn check_irreducible(&self) -> Result<()> {
        let n = self.states();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            seen[0] = true;
            let mut queue = VecDeque::from([0usize]);
            while let Some(i) = queue.pop_front() {
                for j in 0..n {
                    let rate = if forward { self.q[i][j] } else { self.q[j][i] };
                    if j != i && rate > 0.0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            seen
        };
        if let Some(j) = reach(true).iter().position(|s| !s) {
            return Err(LabError::Reducible { from: 0, to: j });
        }
        if let Some(j) = reach(false).iter().position(|s| !s) {
            return Err(LabError::Reducible { from: j, to: 0 });
        }
        Ok(())
    }

    /// `max_i |Q_ii|`.
    pub fn uniformization_rate(&self) -> f64 {
        (0..self.states()).map(|i| -self.q[i][i]).fold(0.0, f64::max)
    }

    /// `exp(tQ)` by uniformization: a Poisson mixture of powers of
    /// `P = I + Q/Λ`, truncated once the Poisson tail drops below `1e-14`.
    /// Long horizons are split into `2^k` equal pieces and recombined by
    /// squaring, which keeps every factor stochastic.
    pub fn transition(&self, t: f64) -> DMatrix<f64> {
        assert!(t >= 0.0, "transition time must be nonnegative");
        let n = self.states();
        let rate = self.uniformization_rate();
        if rate == 0.0 || t == 0.0 {
            return DMatrix::identity(n, n);
        }
        let mut halvings = 0u32;
        let mut lambda = rate * t;
        while lambda > MAX_SERIES_RATE {
            lambda *= 0.5;
            halvings += 1;
        }
        let p = DMatrix::identity(n, n) + self.generator_matrix() / rate;
        let mut weight = (-lambda).exp();
        let mut cumulative = weight;
        let mut power = DMatrix::identity(n, n);
        let mut acc = power.clone() * weight;
        let mut k = 0usize;
        while 1.0 - cumulative > POISSON_TAIL || (k as f64) < lambda {
            k += 1;
            weight *= lambda / k as f64;
            cumulative += weight;
            power = &power * &p;
            acc += &power * weight;
            if k > 10_000 {
                break;
            }
        }
        for _ in 0..halvings {
            acc = &acc * &acc;
        }
        acc
    }

    /// Unique `π` with `πQ = 0`, `Σπ = 1`, by LU on the system whose last
    /// equation is replaced by the normalization, followed by one step of
    /// iterative refinement.
    pub fn invariant_measure(&self) -> Result<Vec<f64>> {
        self.check_irreducible()?;
        let n = self.states();
        let q = self.generator_matrix();
        let mut a = q.transpose();
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let lu = a.clone().lu();
        let mut pi = lu.solve(&b).ok_or_else(|| LabError::Singular("invariant-measure system".into()))?;
        let r = &b - &a * &pi;
        if let Some(d) = lu.solve(&r) {
            pi += d;
        }
        let mut pi: Vec<f64> = pi.iter().map(|&v| if v < 0.0 && v > -1e-15 { 0.0 } else { v }).collect();
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= s);
        Ok(pi)
    }

    /// `(exp(tQ) f)[x]`.
    pub fn apply_semigroup(&self, f: &Observable, t: f64, x: usize) -> f64 {
        let p = self.transition(t);
        (0..self.states()).map(|j| p[(x, j)] * f.eval_index(j)).sum()
    }

    /// Exponential holding time in `state`, or `None` for absorbing states.
    pub fn holding_time<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> Option<f64> {
        let rate = -self.q[state][state];
        if rate <= 0.0 {
            return None;
        }
        Some(Exp::new(rate).expect("positive rate").sample(rng))
    }

    /// Next state of the embedded jump chain.
    pub fn jump<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let cdf = &self.jump_cdf[state];
        let mut last = state;
        for (j, &c) in cdf.iter().enumerate() {
            if j == state {
                continue;
            }
            if self.q[state][j] > 0.0 {
                last = j;
                if u < c {
                    return j;
                }
            }
        }
        last
    }

    /// End state after `dt` of exact jump-chain simulation.
    pub fn sample_step<R: Rng + ?Sized>(&self, x: usize, dt: f64, rng: &mut R) -> usize {
        let mut t = 0.0;
        let mut state = x;
        loop {
            match self.holding_time(state, rng) {
                None => return state,
                Some(h) => {
                    if t + h > dt {
                        return state;
                    }
                    t += h;
                    state = self.jump(state, rng);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{path_stream, Purpose};

    fn spectral(t: f64) -> [[f64; 2]; 2] {
        let e = (-2.0 * t).exp();
        [[(1.0 + e) / 2.0, (1.0 - e) / 2.0], [(1.0 - e) / 2.0, (1.0 + e) / 2.0]]
    }

    fn three_state() -> CtmcModel {
        let q = vec![vec![-1.5, 1.0, 0.5], vec![0.3, -0.8, 0.5], vec![2.0, 0.0, -2.0]];
        CtmcModel::new(q, Metric::explicit(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.5], vec![2.0, 1.5, 0.0]]).unwrap())
            .unwrap()
    }

    #[test]
    fn generator_validation() {
        let m = Metric::DiscreteUniform { states: 2 };
        assert!(CtmcModel::new(vec![vec![-1.0, 1.0], vec![1.0, -0.5]], m.clone()).is_err());
        assert!(CtmcModel::new(vec![vec![1.0, -1.0], vec![1.0, -1.0]], m.clone()).is_err());
        assert!(CtmcModel::new(vec![vec![-1.0, 1.0]], m.clone()).is_err());
        assert!(CtmcModel::new(vec![vec![0.0]], m).is_err());
    }

    #[test]
    fn transition_at_zero_is_identity() {
        let p = three_state().transition(0.0);
        assert_eq!(p, DMatrix::identity(3, 3));
    }

    #[test]
    fn two_state_transition_matches_spectral_form() {
        let m = CtmcModel::two_state_symmetric();
        for t in [0.01, 0.3, 1.0, 5.0, 40.0, 700.0] {
            let p = m.transition(t);
            let s = spectral(t);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((p[(i, j)] - s[i][j]).abs() < 1e-12, "t={t} ({i},{j}): {} vs {}", p[(i, j)], s[i][j]);
                }
            }
        }
    }

    #[test]
    fn transition_is_stochastic_and_satisfies_semigroup_law() {
        let m = three_state();
        for &(s, t) in &[(0.1, 0.4), (1.0, 2.5), (7.0, 13.0)] {
            let ps = m.transition(s);
            let pt = m.transition(t);
            let pst = m.transition(s + t);
            let prod = &ps * &pt;
            for i in 0..3 {
                let row: f64 = (0..3).map(|j| pst[(i, j)]).sum();
                assert!((row - 1.0).abs() < 1e-10);
                for j in 0..3 {
                    assert!((0.0..=1.0).contains(&pst[(i, j)]));
                    assert!((prod[(i, j)] - pst[(i, j)]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn invariant_measure_examples() {
        let pi = CtmcModel::two_state_symmetric().invariant_measure().unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);

        let m = three_state();
        let pi = m.invariant_measure().unwrap();
        let q = m.generator_matrix();
        for j in 0..3 {
            let r: f64 = (0..3).map(|i| pi[i] * q[(i, j)]).sum();
            assert!(r.abs() < 1e-12);
        }
        for t in [0.5, 3.0, 20.0] {
            let p = m.transition(t);
            for j in 0..3 {
                let v: f64 = (0..3).map(|i| pi[i] * p[(i, j)]).sum();
                assert!((v - pi[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let frozen = CtmcModel::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]], Metric::DiscreteUniform { states: 2 }).unwrap();
        assert!(matches!(frozen.invariant_measure(), Err(LabError::Reducible { .. })));
        let one_way =
            CtmcModel::new(vec![vec![-1.0, 1.0], vec![0.0, 0.0]], Metric::DiscreteUniform { states: 2 }).unwrap();
        assert!(matches!(one_way.check_irreducible(), Err(LabError::Reducible { .. })));
    }

    #[test]
    fn frozen_chain_never_moves() {
        let frozen = CtmcModel::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]], Metric::DiscreteUniform { states: 2 }).unwrap();
        let mut rng = path_stream(3, Purpose::Kernel, 0);
        assert_eq!(frozen.sample_step(1, 100.0, &mut rng), 1);
        assert_eq!(frozen.transition(5.0), DMatrix::identity(2, 2));
    }

    #[test]
    fn semigroup_on_two_state_observable() {
        let m = CtmcModel::two_state_symmetric();
        let g = Observable::table(vec![1.0, -1.0], m.metric()).unwrap();
        for t in [0.0, 0.25, 2.0] {
            assert!((m.apply_semigroup(&g, t, 0) - (-2.0 * t).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn empirical_transition_frequencies_match_exp_tq() {
        let m = three_state();
        let p = m.transition(0.7);
        let n = 200_000;
        let mut counts = [0usize; 3];
        let mut rng = path_stream(11, Purpose::Kernel, 0);
        for _ in 0..n {
            counts[m.sample_step(0, 0.7, &mut rng)] += 1;
        }
        for j in 0..3 {
            let f = counts[j] as f64 / n as f64;
            let se = (p[(0, j)] * (1.0 - p[(0, j)]) / n as f64).sqrt();
            assert!((f - p[(0, j)]).abs() < 4.0 * se, "state {j}: {f} vs {}", p[(0, j)]);
        }
    }
}
