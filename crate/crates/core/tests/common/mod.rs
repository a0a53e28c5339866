//! Shared oracles for the integration tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Minimum-cost basic feasible plan by enumerating every spanning tree of
/// the bipartite support graph and solving it by leaf peeling.
pub fn brute_force_w1(mu: &[f64], nu: &[f64], cost: &[Vec<f64>]) -> f64 {
    let n = mu.len();
    let m = nu.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    fn rec(
        start: usize,
        k: usize,
        cells: &[(usize, usize)],
        chosen: &mut Vec<(usize, usize)>,
        visit: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        if chosen.len() == k {
            visit(chosen);
            return;
        }
        for idx in start..cells.len() {
            if cells.len() - idx < k - chosen.len() {
                break;
            }
            chosen.push(cells[idx]);
            rec(idx + 1, k, cells, chosen, visit);
            chosen.pop();
        }
    }
    let mut visit = |tree: &[(usize, usize)]| {
        if let Some(flow) = peel(tree, mu, nu) {
            if flow.iter().all(|&(_, _, f)| f >= -1e-12) {
                let c: f64 = flow.iter().map(|&(i, j, f)| f * cost[i][j]).sum();
                best = best.min(c);
            }
        }
    };
    rec(0, k, &cells, &mut chosen, &mut visit);
    best
}

fn peel(tree: &[(usize, usize)], mu: &[f64], nu: &[f64]) -> Option<Vec<(usize, usize, f64)>> {
    let n = mu.len();
    let mut rows = mu.to_vec();
    let mut cols = nu.to_vec();
    let mut open: Vec<bool> = vec![true; tree.len()];
    let mut out = Vec::new();
    for _ in 0..tree.len() {
        // Find a row or column node incident to exactly one open cell.
        let mut found = None;
        for node in 0..(n + nu.len()) {
            let inc: Vec<usize> = (0..tree.len())
                .filter(|&e| open[e] && if node < n { tree[e].0 == node } else { tree[e].1 == node - n })
                .collect();
            if inc.len() == 1 {
                found = Some((node, inc[0]));
                break;
            }
        }
        let (node, e) = found?;
        let (i, j) = tree[e];
        let f = if node < n { rows[i] } else { cols[j] };
        rows[i] -= f;
        cols[j] -= f;
        open[e] = false;
        out.push((i, j, f));
    }
    if rows.iter().chain(&cols).any(|r| r.abs() > 1e-9) {
        return None;
    }
    Some(out)
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let n = rng.random_range(1..=4usize);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0)).collect();
    let rho: Vec<Vec<f64>> = pts
        .iter()
        .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
        .collect();
    let prob = |rng: &mut ChaCha8Rng| {
        let mut p: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() }).collect();
        if p.iter().sum::<f64>() == 0.0 {
            p[0] = 1.0;
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    };
    let mu = prob(rng);
    let nu = prob(rng);
    (mu, nu, rho)
}
