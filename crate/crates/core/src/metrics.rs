//! Weighted topology measurements of a distance network.
//!
//! Edge weights are the raw distances throughout: strength, clustering and
//! shortest paths are all computed on `d(i,j)`, not on a similarity.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::corrnet::DistanceNetwork;
use crate::error::{Error, Result};

/// Per-node sum of incident edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthVector(pub Vec<f64>);

impl StrengthVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub window: usize,
    pub start: usize,
    pub end: usize,
    /// Strength-distribution entropy in bits.
    pub entropy: f64,
    /// Average weighted clustering coefficient.
    pub clustering: f64,
    /// Weighted average shortest path length.
    pub path_length: f64,
    pub bins: usize,
}

/// `ceil(sqrt(n))`, at least 1.
pub fn default_bins(n: usize) -> usize {
    let mut b = (n as f64).sqrt().ceil() as usize;
    // guard against sqrt rounding on perfect squares
    while b > 1 && (b - 1) * (b - 1) >= n {
        b -= 1;
    }
    while b * b < n {
        b += 1;
    }
    b.max(1)
}

pub fn node_strengths(net: &DistanceNetwork) -> StrengthVector {
    let n = net.len();
    let mut s = vec![0.0; n];
    for i in 0..n {
        for j in 0..i {
            let d = net.get(i, j);
            s[i] += d;
            s[j] += d;
        }
    }
    StrengthVector(s)
}

/// Shannon entropy (bits) of an equal-width histogram of the strengths over
/// `[min, max]`. The top edge belongs to the last bin.
pub fn strength_entropy(strengths: &StrengthVector, bins: usize) -> f64 {
    let s = strengths.as_slice();
    if s.is_empty() || bins == 0 {
        return 0.0;
    }
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    for &v in s {
        let b = (((v - lo) / span) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let total = s.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // -0.0 for a single bin
    h.max(0.0)
}

/// Weighted clustering of one node on the complete graph, with weights
/// normalised by the network maximum. The sum runs over ordered neighbour
/// pairs and is divided by `k (k - 1)` where `k = N - 1`.
pub fn weighted_clustering(net: &DistanceNetwork, node: usize) -> Result<f64> {
    let n = net.len();
    if n < 3 {
        return Err(Error::TooFewNodes {
            needed: 3,
            actual: n,
        });
    }
    if node >= n {
        return Err(Error::Dimension(format!(
            "node {node} out of range for {n} nodes"
        )));
    }
    let max = net.max_weight();
    if !(max > 0.0) {
        return Ok(0.0);
    }
    Ok(clustering_normalized(n, node, |i, j| net.get(i, j) / max))
}

/// Clustering of `node` given already normalised weights `w_hat(i, j)`.
fn clustering_normalized(n: usize, node: usize, w_hat: impl Fn(usize, usize) -> f64) -> f64 {
    let mut sum = 0.0;
    for j in 0..n {
        if j == node {
            continue;
        }
        for k in 0..j {
            if k == node {
                continue;
            }
            sum += (w_hat(node, j) * w_hat(node, k) * w_hat(j, k)).cbrt();
        }
    }
    let k = (n - 1) as f64;
    // unordered pairs counted once, hence the factor 2
    (2.0 * sum / (k * (k - 1.0))).clamp(0.0, 1.0)
}

/// Clustering of every node; shares the cube-root table across nodes.
pub fn clustering_coefficients(net: &DistanceNetwork) -> Result<Vec<f64>> {
    let n = net.len();
    if n < 3 {
        return Err(Error::TooFewNodes {
            needed: 3,
            actual: n,
        });
    }
    let max = net.max_weight();
    if !(max > 0.0) {
        return Ok(vec![0.0; n]);
    }
    let mut cube = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let c = (net.get(i, j) / max).cbrt();
            cube[i * n + j] = c;
            cube[j * n + i] = c;
        }
    }
    let k = (n - 1) as f64;
    let norm = k * (k - 1.0);
    Ok((0..n)
        .map(|i| {
            let row_i = &cube[i * n..(i + 1) * n];
            let mut sum = 0.0;
            for j in 0..n {
                let cij = row_i[j];
                if cij == 0.0 {
                    continue;
                }
                let row_j = &cube[j * n..(j + 1) * n];
                // diagonal entries are zero, so k == i or k == j add nothing
                let inner: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                sum += cij * inner;
            }
            (sum / norm).clamp(0.0, 1.0)
        })
        .collect())
}

pub fn average_clustering(net: &DistanceNetwork) -> Result<f64> {
    let cc = clustering_coefficients(net)?;
    Ok(cc.iter().sum::<f64>() / cc.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties broken by node for determinism
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source weighted shortest path lengths on the complete graph.
pub fn shortest_paths_from(net: &DistanceNetwork, source: usize) -> Result<Vec<f64>> {
    let n = net.len();
    if source >= n {
        return Err(Error::Dimension(format!(
            "source {source} out of range for {n} nodes"
        )));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::with_capacity(n);
    dist[source] = 0.0;
    heap.push(Frontier {
        dist: 0.0,
        node: source,
    });
    while let Some(Frontier { dist: du, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for v in 0..n {
            if v == u || done[v] {
                continue;
            }
            let w = net.get(u, v);
            if w < 0.0 {
                return Err(Error::NegativeWeight {
                    i: u,
                    j: v,
                    weight: w,
                });
            }
            let alt = du + w;
            if alt < dist[v] {
                dist[v] = alt;
                heap.push(Frontier { dist: alt, node: v });
            }
        }
    }
    Ok(dist)
}

/// Mean weighted shortest path over ordered pairs `i != j`.
pub fn average_shortest_path(net: &DistanceNetwork) -> Result<f64> {
    let n = net.len();
    if n < 2 {
        return Err(Error::TooFewNodes {
            needed: 2,
            actual: n,
        });
    }
    if let Some(idx) = net.lower_triangle().iter().position(|&w| w < 0.0) {
        let (i, j) = lower_position(idx);
        return Err(Error::NegativeWeight {
            i,
            j,
            weight: net.lower_triangle()[idx],
        });
    }
    let mut total = 0.0;
    for source in 0..n {
        total += shortest_paths_from(net, source)?.iter().sum::<f64>();
    }
    Ok(total / (n * (n - 1)) as f64)
}

fn lower_position(idx: usize) -> (usize, usize) {
    let mut i = 1;
    while i * (i + 1) / 2 <= idx {
        i += 1;
    }
    (i, idx - i * (i - 1) / 2)
}

/// All three measurements of one network.
pub fn compute_metrics(net: &DistanceNetwork, bins: usize) -> Result<MetricsRecord> {
    let window = net.window();
    let wrap = |e: Error| e.in_window(window.index);
    let strengths = node_strengths(net);
    Ok(MetricsRecord {
        window: window.index,
        start: window.start,
        end: window.end,
        entropy: strength_entropy(&strengths, bins),
        clustering: average_clustering(net).map_err(wrap)?,
        path_length: average_shortest_path(net).map_err(wrap)?,
        bins,
    })
}
