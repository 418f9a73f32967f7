//! One-factor Gaussian price panels with piecewise regimes.
//!
//! Within a segment, stock `i` on day `t` has log-return
//! `drift + b * sf * f_t + sqrt(1 - b^2) * si * e_it` with `f_t, e_it ~ N(0, 1)`.
//! With equal factor and idiosyncratic volatilities, two distinct stocks
//! correlate at `b^2`.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corrnet::DEFAULT_WINDOW_WIDTH;
use crate::error::{Error, Result};
use crate::ingest::PricePanel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegment {
    /// First return day, inclusive.
    pub start: usize,
    /// One past the last return day.
    pub end: usize,
    pub factor_loading: f64,
    pub factor_volatility: f64,
    pub idiosyncratic_volatility: f64,
    pub drift: f64,
}

impl RegimeSegment {
    /// Population correlation between two distinct stocks in this segment.
    pub fn population_correlation(&self) -> f64 {
        let b2 = self.factor_loading.powi(2);
        let common = b2 * self.factor_volatility.powi(2);
        let idio = (1.0 - b2) * self.idiosyncratic_volatility.powi(2);
        if common + idio == 0.0 {
            0.0
        } else {
            common / (common + idio)
        }
    }
}

/// Ordered, contiguous segments covering return days `[0, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSchedule {
    segments: Vec<RegimeSegment>,
}

impl RegimeSchedule {
    pub fn new(segments: Vec<RegimeSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Schedule("no segments".into()));
        }
        let mut expected_start = 0;
        for (k, seg) in segments.iter().enumerate() {
            if seg.start != expected_start {
                return Err(Error::Schedule(format!(
                    "segment {k} starts at {} but the previous one ends at {expected_start}",
                    seg.start
                )));
            }
            if seg.end <= seg.start {
                return Err(Error::Schedule(format!("segment {k} is empty")));
            }
            if !(0.0..1.0).contains(&seg.factor_loading) {
                return Err(Error::Schedule(format!(
                    "segment {k} loading {} outside [0, 1)",
                    seg.factor_loading
                )));
            }
            let vols = [seg.factor_volatility, seg.idiosyncratic_volatility];
            if vols.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !seg.drift.is_finite() {
                return Err(Error::Schedule(format!(
                    "segment {k} has invalid volatility or drift"
                )));
            }
            if seg.idiosyncratic_volatility == 0.0 && seg.factor_volatility == 0.0 {
                return Err(Error::Schedule(format!("segment {k} has zero volatility")));
            }
            expected_start = seg.end;
        }
        Ok(RegimeSchedule { segments })
    }

    pub fn segments(&self) -> &[RegimeSegment] {
        &self.segments
    }

    /// Number of return days covered.
    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weekday labels starting 2000-01-03, one per price.
pub fn trading_days(count: usize) -> Vec<String> {
    let mut day = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day.format("%Y-%m-%d").to_string());
        }
        day += Duration::days(1);
    }
    out
}

/// Generates `n_stocks` price paths starting at 1.0. The panel has
/// `schedule.len() + 1` dates, so its log-returns line up with the schedule.
pub fn generate_panel(n_stocks: usize, schedule: &RegimeSchedule, seed: u64) -> Result<PricePanel> {
    if n_stocks < 2 {
        return Err(Error::Schedule(format!(
            "need at least 2 stocks, got {n_stocks}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = schedule.len();
    let mut log_price = vec![0.0_f64; n_stocks];
    let mut prices: Vec<Vec<f64>> = (0..n_stocks)
        .map(|_| {
            let mut row = Vec::with_capacity(days + 1);
            row.push(1.0);
            row
        })
        .collect();
    for seg in schedule.segments() {
        let b = seg.factor_loading;
        let spread = (1.0 - b * b).sqrt();
        for _ in seg.start..seg.end {
            let f: f64 = StandardNormal.sample(&mut rng);
            for (i, lp) in log_price.iter_mut().enumerate() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *lp += seg.drift
                    + b * seg.factor_volatility * f
                    + spread * seg.idiosyncratic_volatility * e;
                prices[i].push(lp.exp());
            }
        }
    }
    let tickers = (0..n_stocks).map(|i| format!("S{i:03}")).collect();
    PricePanel::new(tickers, trading_days(days + 1), prices)
}

pub const CALM_LOADING: f64 = 0.2;
pub const CRASH_LOADING: f64 = 0.9;
pub const CALM_VOLATILITY: f64 = 0.01;
pub const CRASH_VOLATILITY: f64 = 0.03;
pub const CALM_DRIFT: f64 = 0.0003;
pub const CRASH_DRIFT: f64 = -0.01;

/// Calm / crash / calm schedule with the segment lengths given in return days.
pub fn crash_schedule(calm_days: usize, crash_days: usize) -> Result<RegimeSchedule> {
    let min = 2 * DEFAULT_WINDOW_WIDTH;
    if calm_days < min || crash_days < min {
        return Err(Error::Schedule(format!(
            "calm and crash segments need at least {min} days, got {calm_days} and {crash_days}"
        )));
    }
    let calm = |start, end| RegimeSegment {
        start,
        end,
        factor_loading: CALM_LOADING,
        factor_volatility: CALM_VOLATILITY,
        idiosyncratic_volatility: CALM_VOLATILITY,
        drift: CALM_DRIFT,
    };
    RegimeSchedule::new(vec![
        calm(0, calm_days),
        RegimeSegment {
            start: calm_days,
            end: calm_days + crash_days,
            factor_loading: CRASH_LOADING,
            factor_volatility: CRASH_VOLATILITY,
            idiosyncratic_volatility: CRASH_VOLATILITY,
            drift: CRASH_DRIFT,
        },
        calm(calm_days + crash_days, 2 * calm_days + crash_days),
    ])
}

/// Stylised crash: calm, then a strongly correlated falling market, then calm.
pub fn crash_scenario(
    n_stocks: usize,
    calm_days: usize,
    crash_days: usize,
    seed: u64,
) -> Result<PricePanel> {
    generate_panel(n_stocks, &crash_schedule(calm_days, crash_days)?, seed)
}
