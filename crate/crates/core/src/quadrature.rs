//! Gauss–Hermite rules for Gaussian expectations and a geometric-panel
//! Simpson rule for time integrals.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Physicists' Gauss–Hermite rule (weight `e^{-x²}`).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes by Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(n: usize) -> GaussHermite {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.166_67),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        GaussHermite { nodes: x, weights: w }
    }

    /// Shared rule of size `n`.
    pub fn cached(n: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(GaussHermite::new(n))).clone()
    }

    /// `E[f(mean + sd·Z)]`, `Z ~ N(0,1)`.
    pub fn gaussian_expectation(&self, mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
        if sd == 0.0 {
            return f(mean);
        }
        let scale = std::f64::consts::SQRT_2 * sd;
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum();
        s / std::f64::consts::PI.sqrt()
    }

    /// Standard-normal abscissae and probability weights.
    pub fn standard_normal_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (std::f64::consts::SQRT_2 * x, w / c))
    }
}

/// Partition of `[0, end]` whose panel widths start at `first` and grow
/// geometrically by `ratio`, capped at `max_width`.
pub fn geometric_partition(end: f64, first: f64, ratio: f64, max_width: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut h = first.min(end);
    let mut t = 0.0;
    while t < end {
        let step = h.min(end - t);
        t += step;
        if end - t < 1e-12 * end.max(1.0) {
            t = end;
        }
        pts.push(t);
        h = (h * ratio).min(max_width);
    }
    pts
}

/// Composite Simpson integral over the given panels, each split in two
/// halves. Returns the value and the summed Richardson estimate
/// `|S_halves − S_whole|/15` of its error.
pub fn simpson_on_panels(panels: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut total = 0.0;
    let mut err = 0.0;
    let mut f_left = f(panels[0]);
    for w in panels.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        let (fq1, fm, fq3, fb) = (f(a + 0.25 * h), f(a + 0.5 * h), f(a + 0.75 * h), f(b));
        let whole = h / 6.0 * (f_left + 4.0 * fm + fb);
        let halves = h / 12.0 * (f_left + 4.0 * fq1 + 2.0 * fm + 4.0 * fq3 + fb);
        total += halves;
        err += (halves - whole).abs() / 15.0;
        f_left = fb;
    }
    (total, err)
}
