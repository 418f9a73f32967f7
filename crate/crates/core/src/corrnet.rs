//! Rolling correlation-distance networks.
//!
//! Each window of return observations yields a complete weighted graph whose
//! edge weights are `d(i,j) = sqrt(2 (1 - rho_ij))`, with `rho_ij` the Pearson
//! correlation of the two return series inside the window.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ReturnsPanel;

pub const DEFAULT_WINDOW_WIDTH: usize = 28;
pub const DEFAULT_WINDOW_STEP: usize = 1;

const CORRELATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Number of return observations per window.
    pub width: usize,
    /// Displacement between consecutive window starts.
    pub step: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            width: DEFAULT_WINDOW_WIDTH,
            step: DEFAULT_WINDOW_STEP,
        }
    }
}

impl WindowSpec {
    pub fn new(width: usize, step: usize) -> Result<Self> {
        let spec = WindowSpec { width, step };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 3 {
            return Err(Error::Config(format!(
                "window width must be at least 3, got {}",
                self.width
            )));
        }
        if self.step < 1 {
            return Err(Error::Config("window step must be at least 1".into()));
        }
        Ok(())
    }
}

/// Half-open range `[start, end)` of return indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// Population-moment Pearson correlation, clamped to `[-1, 1]`.
///
/// Zero variance is reported as [`Error::ZeroVariance`] with ticker `"x"` or
/// `"y"`; [`build_network`] rewrites it with the real ticker.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            actual: x.len(),
        });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mean_x, b - mean_y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if is_degenerate(sxx / n, x) {
        return Err(Error::ZeroVariance { ticker: "x".into() });
    }
    if is_degenerate(syy / n, y) {
        return Err(Error::ZeroVariance { ticker: "y".into() });
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Variance indistinguishable from rounding noise on the series' magnitude.
fn is_degenerate(variance: f64, series: &[f64]) -> bool {
    let scale = series.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    !(variance > (1e-14 * scale).powi(2))
}

pub fn distance_from_correlation(rho: f64) -> Result<f64> {
    if !rho.is_finite() || rho.abs() > 1.0 + CORRELATION_TOLERANCE {
        return Err(Error::CorrelationOutOfRange(rho));
    }
    let rho = rho.clamp(-1.0, 1.0);
    Ok((2.0 * (1.0 - rho)).sqrt())
}

/// Window boundaries `[k*step, k*step + width)` for every `k` that fits.
pub fn window_sequence(n_returns: usize, spec: WindowSpec) -> Result<Vec<Window>> {
    spec.validate()?;
    if n_returns < spec.width {
        return Err(Error::TooShort {
            needed: spec.width,
            actual: n_returns,
        });
    }
    let count = (n_returns - spec.width) / spec.step + 1;
    Ok((0..count)
        .map(|k| Window {
            index: k,
            start: k * spec.step,
            end: k * spec.step + spec.width,
        })
        .collect())
}

/// Symmetric zero-diagonal weight matrix over a complete graph, stored as the
/// row-major strict lower triangle `(1,0), (2,0), (2,1), (3,0), ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceNetwork {
    tickers: Arc<Vec<String>>,
    window: Window,
    lower: Vec<f64>,
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    let (hi, lo) = if i > j { (i, j) } else { (j, i) };
    hi * (hi - 1) / 2 + lo
}

impl DistanceNetwork {
    /// Wraps a lower triangle. Values must be finite; range and metric
    /// properties are checked separately by [`DistanceNetwork::check_invariants`].
    pub fn from_lower_triangle(
        tickers: Arc<Vec<String>>,
        window: Window,
        lower: Vec<f64>,
    ) -> Result<Self> {
        let n = tickers.len();
        let expected = n * n.saturating_sub(1) / 2;
        if lower.len() != expected {
            return Err(Error::Dimension(format!(
                "{n} nodes need {expected} lower-triangle entries, got {}",
                lower.len()
            )));
        }
        if let Some(v) = lower.iter().find(|v| !v.is_finite()) {
            return Err(Error::Malformed(format!("non-finite edge weight {v}")));
        }
        Ok(DistanceNetwork {
            tickers,
            window,
            lower,
        })
    }

    /// Builds a network from a full square matrix, which must be symmetric
    /// with a zero diagonal. Intended for hand-made inputs and tests.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut lower = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries",
                    row.len()
                )));
            }
            if row[i] != 0.0 {
                return Err(Error::Malformed(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                if row[j] != rows[j][i] {
                    return Err(Error::Malformed(format!("asymmetric entry ({i},{j})")));
                }
                lower.push(row[j]);
            }
        }
        let tickers = Arc::new((0..n).map(|i| format!("N{i}")).collect());
        let window = Window {
            index: 0,
            start: 0,
            end: 0,
        };
        DistanceNetwork::from_lower_triangle(tickers, window, lower)
    }

    pub fn len(&self) -> usize {
        self.tickers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickers.is_empty()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn window(&self) -> Window {
        self.window
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.lower[tri_index(i, j)]
        }
    }

    pub fn lower_triangle(&self) -> &[f64] {
        &self.lower
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn max_weight(&self) -> f64 {
        self.lower.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_weight(&self) -> f64 {
        if self.lower.is_empty() {
            0.0
        } else {
            self.lower.iter().sum::<f64>() / self.lower.len() as f64
        }
    }

    /// Checks range `[0, 2]` and the triangle inequality within `tol`.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        let n = self.len();
        for i in 0..n {
            for j in 0..i {
                let d = self.get(i, j);
                if !(-tol..=2.0 + tol).contains(&d) {
                    return Err(format!("d({i},{j}) = {d} outside [0, 2]"));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let direct = self.get(i, j);
                    let detour = self.get(i, k) + self.get(k, j);
                    if direct > detour + tol {
                        return Err(format!(
                            "triangle inequality fails: d({i},{j}) = {direct} > {detour} via {k}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes one CSV record: window index, start/end labels, lower triangle.
    pub fn write_csv_record<W: Write>(
        &self,
        out: &mut W,
        start_date: &str,
        end_date: &str,
    ) -> std::io::Result<()> {
        write!(out, "{},{},{}", self.window.index, start_date, end_date)?;
        for d in &self.lower {
            write!(out, ",{d}")?;
        }
        writeln!(out)
    }

    /// Binary record, little endian: `u64` window index, two length-prefixed
    /// (`u32`) UTF-8 date labels, `u64` entry count, then the `f64` entries.
    pub fn write_binary_record<W: Write>(
        &self,
        out: &mut W,
        start_date: &str,
        end_date: &str,
    ) -> std::io::Result<()> {
        out.write_all(&(self.window.index as u64).to_le_bytes())?;
        for label in [start_date, end_date] {
            out.write_all(&(label.len() as u32).to_le_bytes())?;
            out.write_all(label.as_bytes())?;
        }
        out.write_all(&(self.lower.len() as u64).to_le_bytes())?;
        for d in &self.lower {
            out.write_all(&d.to_le_bytes())?;
        }
        Ok(())
    }
}

/// One decoded record of the binary network dump.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRecord {
    pub window: usize,
    pub start_date: String,
    pub end_date: String,
    pub lower: Vec<f64>,
}

/// Reads the next binary record, or `None` at a clean end of stream.
pub fn read_binary_record<R: Read>(input: &mut R) -> std::io::Result<Option<NetworkRecord>> {
    let mut u64buf = [0u8; 8];
    match input.read_exact(&mut u64buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let window = u64::from_le_bytes(u64buf) as usize;
    let mut labels = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut lenbuf = [0u8; 4];
        input.read_exact(&mut lenbuf)?;
        let mut bytes = vec![0u8; u32::from_le_bytes(lenbuf) as usize];
        input.read_exact(&mut bytes)?;
        labels.push(
            String::from_utf8(bytes)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?,
        );
    }
    input.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf) as usize;
    let mut lower = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut u64buf)?;
        lower.push(f64::from_le_bytes(u64buf));
    }
    let end_date = labels.pop().unwrap_or_default();
    let start_date = labels.pop().unwrap_or_default();
    Ok(Some(NetworkRecord {
        window,
        start_date,
        end_date,
        lower,
    }))
}

/// Builds the complete distance network for returns `[start, end)`.
///
/// Each series is standardised once, so every pair costs one dot product;
/// the result is the same population-moment correlation that
/// [`pearson_correlation`] computes.
pub fn build_network(panel: &ReturnsPanel, window: Window) -> Result<DistanceNetwork> {
    build_network_shared(panel, Arc::new(panel.tickers().to_vec()), window)
}

/// As [`build_network`], reusing an already shared ticker list.
pub fn build_network_shared(
    panel: &ReturnsPanel,
    tickers: Arc<Vec<String>>,
    window: Window,
) -> Result<DistanceNetwork> {
    let Window { start, end, index } = window;
    if end > panel.len() || start >= end {
        return Err(Error::Dimension(format!(
            "window [{start}, {end}) outside returns of length {}",
            panel.len()
        ))
        .in_window(index));
    }
    if end - start < 3 {
        return Err(Error::TooShort {
            needed: 3,
            actual: end - start,
        }
        .in_window(index));
    }
    let width = (end - start) as f64;
    let standardized = panel
        .returns()
        .iter()
        .zip(panel.tickers())
        .map(|(row, ticker)| {
            let xs = &row[start..end];
            let mean = xs.iter().sum::<f64>() / width;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width;
            if is_degenerate(var, xs) {
                return Err(Error::ZeroVariance {
                    ticker: ticker.clone(),
                }
                .in_window(index));
            }
            let sd = var.sqrt();
            let z: Vec<f64> = xs.iter().map(|v| (v - mean) / sd).collect();
            let norm_sq = z.iter().map(|v| v * v).sum::<f64>();
            Ok((z, norm_sq))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = standardized.len();
    let mut lower = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 1..n {
        let (zi, ni) = &standardized[i];
        for (zj, nj) in &standardized[..i] {
            let dot: f64 = zi.iter().zip(zj).map(|(a, b)| a * b).sum();
            // Normalising by the realised norms keeps rho = +-1 exact for
            // identical or negated series.
            let rho = (dot / (ni * nj).sqrt()).clamp(-1.0, 1.0);
            lower.push((2.0 * (1.0 - rho)).sqrt());
        }
    }
    DistanceNetwork::from_lower_triangle(tickers, window, lower)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(rows: Vec<Vec<f64>>) -> ReturnsPanel {
        let t = rows[0].len();
        ReturnsPanel::new(
            (0..rows.len()).map(|i| format!("S{i}")).collect(),
            (0..t).map(|i| format!("{i:04}")).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn correlation_of_series_with_itself_and_its_negation() {
        let x = [0.3, -1.2, 0.5, 2.0, -0.1];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_correlation(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_hand_computed_correlation() {
        // dx = [-1,0,1], dy = [-1,1,0]: sxy = 1, sxx = syy = 2
        let rho = pearson_correlation(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((rho - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let err = pearson_correlation(&[1.0, 2.0, 3.0], &[0.1, 0.1, 0.1]).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { ticker } if ticker == "y"));
        assert!(pearson_correlation(&[1.0, 2.0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn distance_endpoints() {
        assert_eq!(distance_from_correlation(1.0).unwrap(), 0.0);
        assert_eq!(distance_from_correlation(-1.0).unwrap(), 2.0);
        assert!((distance_from_correlation(0.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(distance_from_correlation(1.0 + 1e-12).is_ok());
        assert!(distance_from_correlation(1.1).is_err());
        assert!(distance_from_correlation(f64::NAN).is_err());
    }

    #[test]
    fn window_counts() {
        let w = window_sequence(10, WindowSpec::new(3, 1).unwrap()).unwrap();
        assert_eq!(w.len(), 8);
        let w = window_sequence(10, WindowSpec::new(3, 3).unwrap()).unwrap();
        assert_eq!(w.iter().map(|w| w.start).collect::<Vec<_>>(), [0, 3, 6]);
        let w = window_sequence(6007, WindowSpec::default()).unwrap();
        assert_eq!(w.len(), 5980);
        assert_eq!(w.last().unwrap().end, 6007);
        assert!(window_sequence(2, WindowSpec::new(3, 1).unwrap()).is_err());
        assert!(WindowSpec::new(2, 1).is_err());
        assert!(WindowSpec::new(3, 0).is_err());
    }

    #[test]
    fn identical_and_opposed_pairs() {
        let x = vec![0.1, -0.2, 0.05, 0.3];
        let p = panel(vec![x.clone(), x.clone()]);
        let w = window_sequence(4, WindowSpec::new(4, 1).unwrap()).unwrap()[0];
        let net = build_network(&p, w).unwrap();
        assert_eq!(net.get(0, 1), 0.0);

        let neg = x.iter().map(|v| -v).collect();
        let p = panel(vec![x, neg]);
        let net = build_network(&p, w).unwrap();
        assert_eq!(net.get(1, 0), 2.0);
    }

    #[test]
    fn three_stock_network_matches_pairwise_oracle() {
        let rows = vec![
            vec![0.01, -0.02, 0.015, 0.0, 0.03, -0.01],
            vec![0.02, -0.01, 0.0, 0.01, 0.02, -0.03],
            vec![-0.01, 0.02, 0.01, -0.02, 0.0, 0.01],
        ];
        let p = panel(rows.clone());
        let w = Window {
            index: 0,
            start: 1,
            end: 6,
        };
        let net = build_network(&p, w).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let (x, y) = (&rows[i][1..6], &rows[j][1..6]);
                let n = 5.0;
                let mx = x.iter().sum::<f64>() / n;
                let my = y.iter().sum::<f64>() / n;
                let mxy = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
                let mxx = x.iter().map(|a| a * a).sum::<f64>() / n;
                let myy = y.iter().map(|a| a * a).sum::<f64>() / n;
                let rho = (mxy - mx * my) / ((mxx - mx * mx) * (myy - my * my)).sqrt();
                let d = (2.0 * (1.0 - rho)).sqrt();
                assert!((net.get(i, j) - d).abs() < 1e-12);
            }
        }
        net.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn constant_stock_in_window_names_ticker_and_window() {
        let p = panel(vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.5, 0.0, 0.0, 0.0]]);
        let w = Window {
            index: 7,
            start: 1,
            end: 4,
        };
        let err = build_network(&p, w).unwrap_err();
        assert_eq!(err.to_string(), "window 7: zero variance in series S1");
    }

    #[test]
    fn binary_record_round_trip() {
        let net = DistanceNetwork::from_matrix(&[
            vec![0.0, 0.5, 1.5],
            vec![0.5, 0.0, 1.0],
            vec![1.5, 1.0, 0.0],
        ])
        .unwrap();
        let mut buf = Vec::new();
        net.write_binary_record(&mut buf, "2020-01-01", "2020-02-01")
            .unwrap();
        net.write_binary_record(&mut buf, "a", "b").unwrap();
        let mut cursor = std::io::Cursor::new(buf);
        let rec = read_binary_record(&mut cursor).unwrap().unwrap();
        assert_eq!(rec.lower, [0.5, 1.5, 1.0]);
        assert_eq!(rec.start_date, "2020-01-01");
        assert!(read_binary_record(&mut cursor).unwrap().is_some());
        assert!(read_binary_record(&mut cursor).unwrap().is_none());

        let mut csv = Vec::new();
        net.write_csv_record(&mut csv, "s", "e").unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "0,s,e,0.5,1.5,1\n");
    }

    #[test]
    fn from_matrix_rejects_asymmetry() {
        assert!(DistanceNetwork::from_matrix(&[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceNetwork::from_matrix(&[vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
    }
}
