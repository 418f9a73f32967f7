//! Test-only helpers: random panels and brute-force reference formulas
//! written independently of the library code.
#![allow(dead_code)]

use finsync::corrnet::{build_network, DistanceNetwork, Window};
use finsync::ingest::ReturnsPanel;
use finsync::synth::trading_days;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `n` series of length `t`, each mixing a shared factor with weight drawn
/// per series so that correlations span a wide range, including negative.
pub fn random_returns(n: usize, t: usize, seed: u64) -> ReturnsPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
    let returns = (0..n)
        .map(|_| {
            let b: f64 = rng.random_range(-1.0..1.0);
            let scale: f64 = rng.random_range(0.001..0.05);
            factor
                .iter()
                .map(|f| scale * (b * f + rng.sample::<f64, _>(StandardNormal)))
                .collect()
        })
        .collect();
    let tickers = (0..n).map(|i| format!("T{i}")).collect();
    ReturnsPanel::new(tickers, trading_days(t), returns).unwrap()
}

pub fn full_window(panel: &ReturnsPanel) -> Window {
    Window {
        index: 0,
        start: 0,
        end: panel.len(),
    }
}

pub fn random_network(n: usize, t: usize, seed: u64) -> (ReturnsPanel, DistanceNetwork) {
    let panel = random_returns(n, t, seed);
    let net = build_network(&panel, full_window(&panel)).unwrap();
    (panel, net)
}

/// Raw-moment correlation: (<xy> - <x><y>) / sqrt((<x^2> - <x>^2)(<y^2> - <y>^2)).
pub fn oracle_correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let xx: Vec<f64> = x.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = y.iter().map(|b| b * b).collect();
    let (mx, my) = (mean(x), mean(y));
    (mean(&xy) - mx * my) / ((mean(&xx) - mx * mx) * (mean(&yy) - my * my)).sqrt()
}

pub fn oracle_distance(rho: f64) -> f64 {
    (2.0 * (1.0 - rho)).sqrt()
}

pub fn oracle_matrix(panel: &ReturnsPanel) -> Vec<Vec<f64>> {
    let r = panel.returns();
    let n = r.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i][j] = oracle_distance(oracle_correlation(&r[i], &r[j]));
            }
        }
    }
    d
}

pub fn oracle_strengths(d: &[Vec<f64>]) -> Vec<f64> {
    d.iter().map(|row| row.iter().sum()).collect()
}

/// Entropy in bits of a `bins`-bin equal-width histogram on `[min, max]`,
/// assigning each value by scanning bin edges.
pub fn oracle_entropy(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return 0.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &v in values {
        let mut b = bins - 1;
        for k in 0..bins {
            if v < lo + (k + 1) as f64 * width {
                b = k;
                break;
            }
        }
        counts[b] += 1.0;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| -(c / n) * (c / n).log2())
        .sum()
}

/// Weighted clustering over ordered neighbour pairs of the complete graph.
pub fn oracle_clustering(d: &[Vec<f64>]) -> Vec<f64> {
    let n = d.len();
    let max = d.iter().flatten().cloned().fold(0.0, f64::max);
    let k = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                for l in 0..n {
                    if j != i && l != i && j != l {
                        s += (d[i][j] / max * d[i][l] / max * d[j][l] / max).powf(1.0 / 3.0);
                    }
                }
            }
            s / (k * (k - 1.0))
        })
        .collect()
}

/// Floyd-Warshall all-pairs shortest paths; returns the mean over i != j.
pub fn oracle_path_length(d: &[Vec<f64>]) -> f64 {
    let n = d.len();
    let mut dist = d.to_vec();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    let total: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| dist[i][j])
        .sum();
    total / (n * (n - 1)) as f64
}

pub fn wrap_to_pi(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let y = x.rem_euclid(tau);
    if y > std::f64::consts::PI {
        y - tau
    } else {
        y
    }
}
