//! Classification of trust-score trajectories after an attack starts.
//!
//! The cohort means of attackers and normal users are mirror images of each
//! other (trust always sums to one), so a variance comparison between the two
//! means only measures the cohort sizes. Oscillation is therefore judged on
//! roughness: a trajectory is scaled by its own post-attack mean and differenced
//! once, which removes both the level and any steady trend, and the largest
//! windowed variance of what remains is its roughness. The attacker cohort
//! oscillates when the roughness of its mean trajectory exceeds `kappa` times
//! the median roughness of individual normal users.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Roster;
use crate::simulation::TrustTimeSeries;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("window too large: window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("window must be at least 2, got {0}")]
    WindowTooSmall(usize),
    #[error("tick range {from}..={to} is out of bounds for a series of length {len}")]
    RangeOutOfBounds { from: usize, to: usize, len: usize },
}

/// Sliding sample variance (divisor `window - 1`). Entry `i` belongs to the
/// window ending at tick `i + window - 1`.
pub fn windowed_variance(series: &[f64], window: usize) -> Result<Vec<f64>, AnalysisError> {
    if window < 2 {
        return Err(AnalysisError::WindowTooSmall(window));
    }
    if window > series.len() {
        return Err(AnalysisError::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    Ok(series.windows(window).map(sample_variance).collect())
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

/// Ordinary least-squares slope of value against tick over `from..=to`.
pub fn trend_slope(series: &[f64], from: usize, to: usize) -> Result<f64, AnalysisError> {
    if to <= from + 1 || to >= series.len() {
        return Err(AnalysisError::RangeOutOfBounds {
            from,
            to,
            len: series.len(),
        });
    }
    let ys = &series[from..=to];
    let n = ys.len() as f64;
    let x_mean = (from + to) as f64 / 2.0;
    let y_mean = mean(ys);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = (from + i) as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    debug_assert!(n >= 3.0);
    Ok(sxy / sxx)
}

/// Result of comparing post-attack variability of two series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationTest {
    pub oscillating: bool,
    /// Attacker statistic over reference statistic; 0 when both are 0 and
    /// [`RATIO_CAP`] when only the reference is 0.
    pub ratio: f64,
}

/// Reported ratio when the reference shows no variability at all.
pub const RATIO_CAP: f64 = 1e9;

fn compare(attacker: f64, reference: f64, kappa: f64) -> OscillationTest {
    let ratio = if reference > 0.0 {
        (attacker / reference).min(RATIO_CAP)
    } else if attacker > 0.0 {
        RATIO_CAP
    } else {
        0.0
    };
    OscillationTest {
        oscillating: attacker > kappa * reference,
        ratio,
    }
}

/// Largest windowed variance among windows that lie entirely after
/// `attack_tick`.
fn post_attack_max(
    series: &[f64],
    attack_tick: usize,
    window: usize,
) -> Result<f64, AnalysisError> {
    let first = attack_tick + 1;
    if first + window > series.len() {
        return Err(AnalysisError::WindowTooLarge {
            window,
            len: series.len().saturating_sub(first),
        });
    }
    Ok(windowed_variance(&series[first..], window)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Compares the largest post-attack windowed variance of two series.
pub fn detect_oscillation(
    attacker: &[f64],
    reference: &[f64],
    attack_tick: usize,
    window: usize,
    kappa: f64,
) -> Result<OscillationTest, AnalysisError> {
    let a = post_attack_max(attacker, attack_tick, window)?;
    let r = post_attack_max(reference, attack_tick, window)?;
    Ok(compare(a, r, kappa))
}

/// Post-attack roughness of one node's trajectory: the largest windowed
/// variance of its tick-to-tick changes, relative to its post-attack mean.
pub fn roughness(series: &[f64], attack_tick: usize, window: usize) -> Result<f64, AnalysisError> {
    let post = series.get(attack_tick + 1..).unwrap_or(&[]);
    if post.len() < window + 1 {
        return Err(AnalysisError::WindowTooLarge {
            window,
            len: post.len().saturating_sub(1),
        });
    }
    let level = mean(post);
    if level <= 0.0 {
        return Ok(0.0);
    }
    let changes: Vec<f64> = post.windows(2).map(|w| (w[1] - w[0]) / level).collect();
    Ok(windowed_variance(&changes, window)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Per-node trajectories of the two cohorts, indexed `[node][tick]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CohortSeries {
    pub attacker: Vec<Vec<f64>>,
    pub normal: Vec<Vec<f64>>,
}

impl CohortSeries {
    /// Splits a run's trust series into malicious nodes and normal users.
    pub fn from_run(series: &TrustTimeSeries, roster: &Roster) -> Self {
        let pick = |ids: Vec<usize>| ids.into_iter().map(|id| series.node_series(id)).collect();
        Self {
            attacker: pick(roster.malicious_ids()),
            normal: pick(roster.normal_ids()),
        }
    }

    pub fn len(&self) -> usize {
        self.attacker
            .first()
            .or(self.normal.first())
            .map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn attacker_mean(&self) -> Vec<f64> {
        cohort_mean(&self.attacker, self.len())
    }

    pub fn normal_mean(&self) -> Vec<f64> {
        cohort_mean(&self.normal, self.len())
    }
}

fn cohort_mean(nodes: &[Vec<f64>], len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| mean(&nodes.iter().map(|s| s[t]).collect::<Vec<_>>()))
        .collect()
}

/// Roughness of the attacker cohort mean against `kappa` times the median
/// roughness of individual normal users.
pub fn detect_cohort_oscillation(
    cohorts: &CohortSeries,
    attack_tick: usize,
    window: usize,
    kappa: f64,
) -> Result<OscillationTest, AnalysisError> {
    let attacker = roughness(&cohorts.attacker_mean(), attack_tick, window)?;
    let mut normal = cohorts
        .normal
        .iter()
        .map(|s| roughness(s, attack_tick, window))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compare(attacker, median(&mut normal), kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    MonotoneDecrease,
    SpikeThenDecrease,
    SpikeThenPlateau,
    Oscillating,
    Inconclusive,
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Classifier settings. Every threshold is relative to the series' own scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Oscillation window in ticks.
    pub window: usize,
    pub kappa: f64,
    /// Ticks after the attack start searched for the peak.
    pub spike_window: usize,
    /// The peak must exceed this multiple of the pre-attack mean.
    pub spike_factor: f64,
    /// Ticks before the attack start averaged as the baseline.
    pub baseline_window: usize,
    /// Ticks after the attack start skipped before fitting the trend.
    pub settle: usize,
    /// Largest relative change per `slope_horizon` ticks still called flat.
    pub slope_eps: f64,
    pub slope_horizon: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            window: 10,
            kappa: 2.0,
            spike_window: 10,
            spike_factor: 1.5,
            baseline_window: 10,
            settle: 20,
            slope_eps: 0.1,
            slope_horizon: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsVerdict {
    pub shape: Shape,
    /// OLS slope of the attacker mean per tick over the fitted range.
    pub slope: f64,
    /// Slope per `slope_horizon` ticks relative to the mean over the range.
    pub relative_slope: f64,
    pub peak: f64,
    pub peak_tick: usize,
    pub baseline: f64,
    pub oscillation_ratio: f64,
}

/// Assigns one trajectory shape to the attacker cohort.
///
/// Decision order: oscillation, then a spike within `spike_window` ticks of
/// the attack start, then the trend after the spike has settled (ticks
/// `attack_tick + settle` to the end). With a spike, a falling trend means
/// SpikeThenDecrease and a flat one SpikeThenPlateau; without a spike, a
/// falling trend over the whole post-attack range means MonotoneDecrease.
pub fn classify_dynamics(
    cohorts: &CohortSeries,
    attack_tick: usize,
    th: &Thresholds,
) -> Result<DynamicsVerdict, AnalysisError> {
    let len = cohorts.len();
    let last = len.saturating_sub(1);
    if attack_tick < th.baseline_window || attack_tick + th.settle + 2 > last {
        return Err(AnalysisError::RangeOutOfBounds {
            from: attack_tick.saturating_sub(th.baseline_window),
            to: attack_tick + th.settle + 2,
            len,
        });
    }
    let means = cohorts.attacker_mean();
    let oscillation = detect_cohort_oscillation(cohorts, attack_tick, th.window, th.kappa)?;
    let baseline = mean(&means[attack_tick - th.baseline_window..attack_tick]);
    let spike_end = (attack_tick + th.spike_window).min(last);
    let (peak_tick, peak) = (attack_tick..=spike_end).map(|t| (t, means[t])).fold(
        (attack_tick, f64::MIN),
        |best, cur| if cur.1 > best.1 { cur } else { best },
    );
    let spiked = peak > th.spike_factor * baseline;

    let from = if spiked {
        attack_tick + th.settle
    } else {
        attack_tick
    };
    let slope = trend_slope(&means, from, last)?;
    let level = mean(&means[from..=last]);
    let relative_slope = if level > 0.0 {
        slope * th.slope_horizon as f64 / level
    } else {
        0.0
    };
    let falling = relative_slope < -th.slope_eps;
    let flat = relative_slope.abs() <= th.slope_eps;

    let shape = if oscillation.oscillating {
        Shape::Oscillating
    } else if spiked && falling {
        Shape::SpikeThenDecrease
    } else if spiked && flat {
        Shape::SpikeThenPlateau
    } else if !spiked && falling {
        Shape::MonotoneDecrease
    } else {
        Shape::Inconclusive
    };
    Ok(DynamicsVerdict {
        shape,
        slope,
        relative_slope,
        peak,
        peak_tick,
        baseline,
        oscillation_ratio: oscillation.ratio,
    })
}
