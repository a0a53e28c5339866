use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{SemigroupOptions, SemigroupValue};
use crate::error::{LabError, Result};
use crate::quadrature::GaussHermite;
use crate::rng::{path_stream, Purpose};
use crate::space::{gaussian_expectation_kinked, ExactMeasure, Observable};
use crate::stats::Estimate;

/// Ornstein–Uhlenbeck process `dX = −γX dt + σ dW`.
///
/// The transition kernel is `N(x e^{−γt}, σ²(1−e^{−2γt})/(2γ))`, so Dirac
/// kernels started at `x` and `y` share a variance and their Wasserstein-1
/// distance is exactly `e^{−γt}|x−y|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuModel {
    pub gamma: f64,
    pub noise_sigma: f64,
}

/// Mean and variance of `δ_x P_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub mean: f64,
    pub variance: f64,
}

impl OuModel {
    pub fn new(gamma: f64, noise_sigma: f64) -> Result<OuModel> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(LabError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
            return Err(LabError::InvalidArgument(format!("sigma must be positive, got {noise_sigma}")));
        }
        Ok(OuModel { gamma, noise_sigma })
    }

    /// `σ²/(2γ)`.
    pub fn stationary_variance(&self) -> f64 {
        self.noise_sigma * self.noise_sigma / (2.0 * self.gamma)
    }

    /// Kernel variance after time `t`.
    pub fn kernel_variance(&self, t: f64) -> f64 {
        self.stationary_variance() * (-(-2.0 * self.gamma * t).exp_m1())
    }

    pub fn kernel_moments(&self, x: f64, t: f64) -> KernelMoments {
        KernelMoments { mean: x * (-self.gamma * t).exp(), variance: self.kernel_variance(t) }
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, x: f64, dt: f64, rng: &mut R) -> f64 {
        if dt == 0.0 {
            return x;
        }
        let z: f64 = rng.sample(StandardNormal);
        x * (-self.gamma * dt).exp() + self.kernel_variance(dt).sqrt() * z
    }

    pub fn invariant_measure(&self) -> ExactMeasure {
        ExactMeasure::Gaussian { mean: 0.0, variance: self.stationary_variance() }
    }

    /// `P_t f(x)` against the closed-form Gaussian kernel.
    pub fn apply_semigroup(&self, f: &Observable, t: f64, x: f64, opts: &SemigroupOptions) -> SemigroupValue {
        let km = self.kernel_moments(x, t);
        let sd = km.variance.sqrt();
        if sd == 0.0 {
            return SemigroupValue { value: f.eval_real(km.mean), std_error: None };
        }
        if opts.mc_samples == 0 {
            if let Some(value) = f.gaussian_closed_form(km.mean, sd) {
                return SemigroupValue { value, std_error: None };
            }
        }
        if f.smooth {
            let gh = GaussHermite::cached(opts.gh_nodes);
            let value = gh.gaussian_expectation(km.mean, sd, |y| f.eval_real(y));
            SemigroupValue { value, std_error: None }
        } else if opts.mc_samples > 0 {
            let mut rng = path_stream(opts.seed, Purpose::Semigroup, 0);
            let draws: Vec<f64> = (0..opts.mc_samples)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    f.eval_real(km.mean + sd * z)
                })
                .collect();
            let e = Estimate::from_samples(&draws);
            SemigroupValue { value: e.mean, std_error: Some(e.std_error) }
        } else {
            let value = gaussian_expectation_kinked(km.mean, sd, |y| f.eval_real(y), &f.kinks());
            SemigroupValue { value, std_error: None }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_stream;

    fn unit() -> OuModel {
        OuModel::new(1.0, std::f64::consts::SQRT_2).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(OuModel::new(0.0, 1.0).is_err());
        assert!(OuModel::new(1.0, -1.0).is_err());
        assert!(OuModel::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn kernel_moment_examples() {
        let m = unit();
        assert_eq!(m.kernel_moments(3.0, 0.0), KernelMoments { mean: 3.0, variance: 0.0 });
        let k = m.kernel_moments(1.0, std::f64::consts::LN_2);
        assert!((k.mean - 0.5).abs() < 1e-15);
        assert!((k.variance - 0.75).abs() < 1e-15);
        let far = m.kernel_moments(0.0, 60.0);
        assert_eq!(far.mean, 0.0);
        assert!((far.variance - m.stationary_variance()).abs() < 1e-15);
        assert!((m.stationary_variance() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_moments_compose() {
        // Chapman–Kolmogorov on the Gaussian family.
        let m = OuModel::new(0.7, 1.3).unwrap();
        for &(s, t) in &[(0.1, 0.2), (0.5, 1.5), (2.0, 0.25)] {
            let a = m.kernel_moments(2.0, s);
            let b = m.kernel_moments(a.mean, t);
            let v = m.kernel_variance(t) + (-2.0 * m.gamma * t).exp() * a.variance;
            let direct = m.kernel_moments(2.0, s + t);
            assert!((b.mean - direct.mean).abs() < 1e-14);
            assert!((v - direct.variance).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let mut rng = path_stream(1, Purpose::Kernel, 0);
        assert_eq!(unit().sample_step(0.3, 0.0, &mut rng), 0.3);
    }

    #[test]
    fn semigroup_of_odd_function_vanishes_at_origin() {
        let m = unit();
        let opts = SemigroupOptions::default();
        for t in [0.1, 1.0, 5.0] {
            assert!(m.apply_semigroup(&Observable::tanh(1.0), t, 0.0, &opts).value.abs() < 1e-15);
            assert!(m.apply_semigroup(&Observable::clipped_identity(1.0), t, 0.0, &opts).value.abs() < 1e-12);
        }
        assert_eq!(m.apply_semigroup(&Observable::tanh(1.0), 0.0, 0.4, &opts).value, 0.4f64.tanh());
    }

    #[test]
    fn clipped_identity_matches_closed_form() {
        // E[clip(m + sZ)] for a unit clip, in closed form.
        let m = unit();
        let t = 0.8;
        let x = 0.9;
        let km = m.kernel_moments(x, t);
        let s = km.variance.sqrt();
        let mu = km.mean;
        let pdf = crate::stats::normal_pdf;
        let cdf = crate::stats::normal_cdf;
        let a = (-1.0 - mu) / s;
        let b = (1.0 - mu) / s;
        let exact = -cdf(a) + (1.0 - cdf(b)) + mu * (cdf(b) - cdf(a)) + s * (pdf(a) - pdf(b));
        let det = m.apply_semigroup(&Observable::clipped_identity(1.0), t, x, &SemigroupOptions::default());
        assert!((det.value - exact).abs() < 1e-12, "{} vs {exact}", det.value);
        // The piecewise quadrature path agrees with the closed form.
        let quad = gaussian_expectation_kinked(mu, s, |y| y.clamp(-1.0, 1.0), &[-1.0, 1.0]);
        assert!((quad - exact).abs() < 1e-10, "{quad} vs {exact}");
        let mc = m.apply_semigroup(
            &Observable::clipped_identity(1.0),
            t,
            x,
            &SemigroupOptions { mc_samples: 100_000, seed: 9, ..SemigroupOptions::default() },
        );
        let se = mc.std_error.unwrap();
        assert!((mc.value - exact).abs() < 4.0 * se);
    }
}
