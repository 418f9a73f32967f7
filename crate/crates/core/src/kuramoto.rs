//! Kuramoto phase dynamics on a distance network.
//!
//! Each oscillator obeys
//!
//! ```text
//! dθ_i/dt = ω_i + λ Σ_j K_ij sin(θ_j − θ_i),   K_ij = exp(−α d_ij)
//! ```
//!
//! integrated with fixed-step classical RK4. Coherence is measured by the
//! order parameter `r = |mean_j exp(iθ_j)|`.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::corrnet::DistanceNetwork;
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_ALPHA: f64 = 5.0;

/// Law of the natural frequencies ω_i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum FrequencyDistribution {
    Normal { mean: f64, std_dev: f64 },
    Uniform { low: f64, high: f64 },
    Delta { value: f64 },
}

impl Default for FrequencyDistribution {
    fn default() -> Self {
        FrequencyDistribution::Normal {
            mean: 0.0,
            std_dev: 1.0,
        }
    }
}

impl FrequencyDistribution {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            FrequencyDistribution::Normal { mean, std_dev } => {
                mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0
            }
            FrequencyDistribution::Uniform { low, high } => {
                low.is_finite() && high.is_finite() && low < high
            }
            FrequencyDistribution::Delta { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid frequency distribution {self}"
            )))
        }
    }

    fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            FrequencyDistribution::Normal { mean, std_dev } => {
                let normal = Normal::new(mean, std_dev).expect("validated");
                (0..n).map(|_| normal.sample(rng)).collect()
            }
            FrequencyDistribution::Uniform { low, high } => {
                let uni = Uniform::new(low, high).expect("validated");
                (0..n).map(|_| uni.sample(rng)).collect()
            }
            FrequencyDistribution::Delta { value } => vec![value; n],
        }
    }
}

/// Text form: `normal:MEAN:STD`, `uniform:LOW:HIGH` or `delta:VALUE`.
impl FromStr for FrequencyDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {p:?} in frequency law {s:?}")))
        };
        let dist = match parts.as_slice() {
            ["normal"] => FrequencyDistribution::default(),
            ["normal", m, sd] => FrequencyDistribution::Normal {
                mean: num(m)?,
                std_dev: num(sd)?,
            },
            ["uniform", lo, hi] => FrequencyDistribution::Uniform {
                low: num(lo)?,
                high: num(hi)?,
            },
            ["delta", v] => FrequencyDistribution::Delta { value: num(v)? },
            _ => return Err(Error::Config(format!("unknown frequency law {s:?}"))),
        };
        dist.validate()?;
        Ok(dist)
    }
}

impl std::fmt::Display for FrequencyDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FrequencyDistribution::Normal { mean, std_dev } => write!(f, "normal:{mean}:{std_dev}"),
            FrequencyDistribution::Uniform { low, high } => write!(f, "uniform:{low}:{high}"),
            FrequencyDistribution::Delta { value } => write!(f, "delta:{value}"),
        }
    }
}

/// Early stop once successive block means of r(t) agree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauDetector {
    /// Samples per block.
    pub block: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub dt: f64,
    pub t_max: f64,
    pub tail_fraction: f64,
    pub seed: u64,
    pub omega: FrequencyDistribution,
    /// Record r(t) every this many integration steps.
    pub sample_every: usize,
    /// Number of seeds `seed, seed + 1, ...` averaged into `terminal_r`.
    pub ensemble: usize,
    pub plateau: Option<PlateauDetector>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            lambda: DEFAULT_LAMBDA,
            alpha: DEFAULT_ALPHA,
            dt: 0.05,
            t_max: 200.0,
            tail_fraction: 0.25,
            seed: 1,
            omega: FrequencyDistribution::default(),
            sample_every: 20,
            ensemble: 1,
            plateau: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be finite and >= 0");
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be > 0");
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return bad("t_max must be finite and >= 0");
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return bad("tail_fraction must lie in (0, 1]");
        }
        if self.sample_every == 0 {
            return bad("sample_every must be >= 1");
        }
        if self.ensemble == 0 {
            return bad("ensemble must be >= 1");
        }
        if let Some(p) = self.plateau {
            if p.block == 0 || !(p.tolerance > 0.0) {
                return bad("plateau block must be >= 1 and tolerance > 0");
            }
        }
        self.omega.validate()
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorState {
    pub phases: Vec<f64>,
    pub frequencies: Vec<f64>,
}

impl OscillatorState {
    pub fn new(phases: Vec<f64>, frequencies: Vec<f64>) -> Result<Self> {
        if phases.len() != frequencies.len() {
            return Err(Error::Dimension(format!(
                "{} phases but {} frequencies",
                phases.len(),
                frequencies.len()
            )));
        }
        if phases.iter().chain(&frequencies).any(|v| !v.is_finite()) {
            return Err(Error::NonFinitePhase { step: 0 });
        }
        let phases = phases.into_iter().map(wrap_phase).collect();
        Ok(OscillatorState {
            phases,
            frequencies,
        })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// Reduces to `[0, 2π)`.
#[inline]
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Dense symmetric coupling weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    weights: Vec<f64>,
}

impl CouplingMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let w = f(i, j);
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
        }
        CouplingMatrix { n, weights }
    }

    /// Binary coupling of the standard networked Kuramoto model.
    pub fn from_adjacency(adjacency: &[Vec<bool>]) -> Self {
        CouplingMatrix::from_fn(
            adjacency.len(),
            |i, j| {
                if adjacency[i][j] {
                    1.0
                } else {
                    0.0
                }
            },
        )
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    pub fn max_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `K_ij = exp(−α d_ij)` off the diagonal.
pub fn coupling_matrix(net: &DistanceNetwork, alpha: f64) -> CouplingMatrix {
    CouplingMatrix::from_fn(net.len(), |i, j| (-alpha * net.get(i, j)).exp())
}

/// Uniform phases on `[0, 2π)` and frequencies from `config.omega`, both
/// drawn from one ChaCha8 stream seeded with `seed`.
pub fn initialize_seeded(n: usize, omega: FrequencyDistribution, seed: u64) -> OscillatorState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uni = Uniform::new(0.0, TAU).expect("valid range");
    let phases = (0..n).map(|_| wrap_phase(uni.sample(&mut rng))).collect();
    let frequencies = omega.sample(n, &mut rng);
    OscillatorState {
        phases,
        frequencies,
    }
}

pub fn initialize(n: usize, config: &SimulationConfig) -> OscillatorState {
    initialize_seeded(n, config.omega, config.seed)
}

pub fn order_parameter(phases: &[f64]) -> f64 {
    if phases.is_empty() {
        return 0.0;
    }
    let n = phases.len() as f64;
    let (s, c) = phases
        .iter()
        .fold((0.0, 0.0), |(s, c), th| (s + th.sin(), c + th.cos()));
    ((s / n).hypot(c / n)).min(1.0)
}

/// Mean of the last `ceil(tail_fraction * len)` samples.
pub fn terminal_sync(trajectory: &[f64], tail_fraction: f64) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Config("tail_fraction must lie in (0, 1]".into()));
    }
    let count =
        ((tail_fraction * trajectory.len() as f64).ceil() as usize).clamp(1, trajectory.len());
    let tail = &trajectory[trajectory.len() - count..];
    Ok(tail.iter().sum::<f64>() / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncResult {
    pub window: usize,
    pub seed: u64,
    pub trajectory: Vec<TrajectoryPoint>,
    pub terminal_r: f64,
    /// One entry per ensemble member; length 1 unless an ensemble is used.
    pub member_terminal_r: Vec<f64>,
    pub final_phases: Vec<f64>,
    pub config: SimulationConfig,
}

impl SyncResult {
    pub fn record(&self, start: usize, end: usize) -> SyncRecord {
        SyncRecord {
            window: self.window,
            start,
            end,
            terminal_r: self.terminal_r,
            seed: self.seed,
        }
    }
}

/// The scalar part of a [`SyncResult`], as persisted in the sync CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncRecord {
    pub window: usize,
    pub start: usize,
    pub end: usize,
    pub terminal_r: f64,
    pub seed: u64,
}

struct Rk4Scratch {
    sin: Vec<f64>,
    cos: Vec<f64>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Rk4Scratch {
            sin: vec![0.0; n],
            cos: vec![0.0; n],
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
        }
    }
}

/// Writes `ω_i + λ Σ_j K_ij sin(θ_j − θ_i)` into `out`, using
/// `sin(θ_j − θ_i) = sin θ_j cos θ_i − cos θ_j sin θ_i`.
fn velocity(
    theta: &[f64],
    omega: &[f64],
    coupling: &CouplingMatrix,
    lambda: f64,
    sin: &mut [f64],
    cos: &mut [f64],
    out: &mut [f64],
) {
    for (i, &th) in theta.iter().enumerate() {
        let (s, c) = th.sin_cos();
        sin[i] = s;
        cos[i] = c;
    }
    for i in 0..theta.len() {
        let row = coupling.row(i);
        let (mut ks, mut kc) = (0.0, 0.0);
        for ((&w, &s), &c) in row.iter().zip(sin.iter()).zip(cos.iter()) {
            ks += w * s;
            kc += w * c;
        }
        out[i] = omega[i] + lambda * (cos[i] * ks - sin[i] * kc);
    }
}

/// Integrates one realisation from `state` and records r(t).
pub fn integrate(
    state: &OscillatorState,
    coupling: &CouplingMatrix,
    config: &SimulationConfig,
) -> Result<SyncResult> {
    config.validate()?;
    let n = state.len();
    if coupling.len() != n {
        return Err(Error::Dimension(format!(
            "{n} oscillators but {}x{} coupling matrix",
            coupling.len(),
            coupling.len()
        )));
    }
    let max_omega = state
        .frequencies
        .iter()
        .fold(0.0_f64, |m, w| m.max(w.abs()));
    let rate = max_omega + config.lambda * coupling.max_row_sum();
    let product = config.dt * rate;
    if !(product < 0.5) {
        return Err(Error::StabilityGuard { product });
    }

    let dt = config.dt;
    let steps = config.steps();
    let omega = &state.frequencies;
    let mut theta = state.phases.clone();
    let mut scratch = Rk4Scratch::new(n);
    let mut trajectory = Vec::with_capacity(steps / config.sample_every + 1);
    trajectory.push(TrajectoryPoint {
        t: 0.0,
        r: order_parameter(&theta),
    });
    let mut last_block_mean: Option<f64> = None;

    for step in 1..=steps {
        let Rk4Scratch { sin, cos, k, stage } = &mut scratch;
        let [k1, k2, k3, k4] = k;
        velocity(&theta, omega, coupling, config.lambda, sin, cos, k1);
        for i in 0..n {
            stage[i] = theta[i] + 0.5 * dt * k1[i];
        }
        velocity(stage, omega, coupling, config.lambda, sin, cos, k2);
        for i in 0..n {
            stage[i] = theta[i] + 0.5 * dt * k2[i];
        }
        velocity(stage, omega, coupling, config.lambda, sin, cos, k3);
        for i in 0..n {
            stage[i] = theta[i] + dt * k3[i];
        }
        velocity(stage, omega, coupling, config.lambda, sin, cos, k4);
        for i in 0..n {
            let next = theta[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !next.is_finite() {
                return Err(Error::NonFinitePhase { step });
            }
            theta[i] = wrap_phase(next);
        }

        if step % config.sample_every == 0 {
            trajectory.push(TrajectoryPoint {
                t: step as f64 * dt,
                r: order_parameter(&theta),
            });
            if let Some(p) = config.plateau {
                // block boundaries exclude the t = 0 sample
                let recorded = trajectory.len() - 1;
                if recorded % p.block == 0 {
                    let block = &trajectory[trajectory.len() - p.block..];
                    let mean = block.iter().map(|pt| pt.r).sum::<f64>() / p.block as f64;
                    if last_block_mean.is_some_and(|prev| (prev - mean).abs() < p.tolerance) {
                        break;
                    }
                    last_block_mean = Some(mean);
                }
            }
        }
    }

    let rs: Vec<f64> = trajectory.iter().map(|p| p.r).collect();
    let terminal_r = terminal_sync(&rs, config.tail_fraction)?;
    Ok(SyncResult {
        window: 0,
        seed: config.seed,
        trajectory,
        terminal_r,
        member_terminal_r: vec![terminal_r],
        final_phases: theta,
        config: config.clone(),
    })
}

/// Runs the configured ensemble on one network. The first member's
/// trajectory is kept; `terminal_r` is the ensemble mean.
pub fn simulate(net: &DistanceNetwork, config: &SimulationConfig) -> Result<SyncResult> {
    config.validate()?;
    let window = net.window().index;
    let coupling = coupling_matrix(net, config.alpha);
    let mut first: Option<SyncResult> = None;
    let mut members = Vec::with_capacity(config.ensemble);
    for m in 0..config.ensemble {
        let seed = config.seed.wrapping_add(m as u64);
        let state = initialize_seeded(net.len(), config.omega, seed);
        let member_config = SimulationConfig {
            seed,
            ..config.clone()
        };
        let run = integrate(&state, &coupling, &member_config).map_err(|e| e.in_window(window))?;
        members.push(run.terminal_r);
        if first.is_none() {
            first = Some(run);
        }
    }
    let mut result = first.expect("ensemble >= 1");
    result.window = window;
    result.seed = config.seed;
    result.terminal_r = members.iter().sum::<f64>() / members.len() as f64;
    result.member_terminal_r = members;
    result.config = config.clone();
    Ok(result)
}
