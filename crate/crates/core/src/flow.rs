//! Driver flow per time bin, the inverse-flow waiting time prediction, and
//! the comparisons built on them.
//!
//! The flow of a bin counts simplified traces whose arrival at the line's
//! first meeting point falls in the bin, averaged over `day_count` days.
//! Under Poisson driver arrivals the expected wait is the bin length over
//! that flow.

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::network::CarpoolLine;
use crate::simplify::SimplifiedTrace;
use crate::time::TimeGrid;

/// Default bin length in minutes.
pub const DEFAULT_BIN_MINUTES: u32 = 15;
/// Weekly counts are divided by this many operating days.
pub const DEFAULT_OPERATING_DAYS: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("simplified trace {trace_id:?} does not run along line {line}")]
    LineMismatch { trace_id: String, line: String },
    #[error("profiles are defined on different time grids")]
    GridMismatch,
    #[error("participation rate must be positive, got {0}")]
    ZeroRate(f64),
    #[error("flow profile is zero in every bin")]
    AllZeroFlow,
    #[error("day count must be positive")]
    ZeroDays,
    #[error("profile has {got} counts for a grid of {expected} bins")]
    LengthMismatch { expected: usize, got: usize },
    #[error("flow counts must be finite and non-negative")]
    NegativeCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowProfile {
    pub grid: TimeGrid,
    pub line: String,
    /// Drivers per bin, averaged over `day_count` days.
    pub counts: Vec<f64>,
    pub day_count: u32,
}

impl FlowProfile {
    pub fn new(
        grid: TimeGrid,
        line: impl Into<String>,
        counts: Vec<f64>,
        day_count: u32,
    ) -> Result<Self, FlowError> {
        if day_count == 0 {
            return Err(FlowError::ZeroDays);
        }
        if counts.len() != grid.len() {
            return Err(FlowError::LengthMismatch { expected: grid.len(), got: counts.len() });
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(FlowError::NegativeCount);
        }
        Ok(Self { grid, line: line.into(), counts, day_count })
    }

    /// Σ counts, i.e. drivers per day over the whole window.
    pub fn daily_total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Number of traces behind the profile, `Σ counts × day_count`.
    pub fn raw_total(&self) -> f64 {
        self.daily_total() * f64::from(self.day_count)
    }
}

/// Per-bin predicted wait in minutes; `None` where the flow is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitProfile {
    pub grid: TimeGrid,
    pub waits: Vec<Option<f64>>,
}

impl WaitProfile {
    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.waits.iter().flatten().copied()
    }

    pub fn mean_defined(&self) -> Option<f64> {
        let (sum, n) = self.defined().fold((0.0, 0usize), |(s, n), w| (s + w, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservedWait {
    pub requested_at: DateTime<Utc>,
    pub wait_minutes: f64,
}

/// Arrivals at the line's first meeting point per bin, divided by
/// `day_count`.
pub fn driver_flow(
    simplified: &[SimplifiedTrace],
    line: &CarpoolLine,
    grid: &TimeGrid,
    day_count: u32,
) -> Result<FlowProfile, FlowError> {
    if day_count == 0 {
        return Err(FlowError::ZeroDays);
    }
    let mut raw = vec![0u64; grid.len()];
    for s in simplified {
        let ids = s.node_ids();
        if ids.first() != Some(&line.first()) || ids.last() != Some(&line.last()) {
            return Err(FlowError::LineMismatch { trace_id: s.trace_id.clone(), line: line.to_string() });
        }
        if let Some(j) = s.first_arrival().and_then(|t| grid.bin_of(t)) {
            raw[j] += 1;
        }
    }
    let days = f64::from(day_count);
    FlowProfile::new(*grid, line.to_string(), raw.into_iter().map(|c| c as f64 / days).collect(), day_count)
}

/// `len(τ) / f(τ)` in minutes, unavailable where the flow is zero.
pub fn wait_times(flow: &FlowProfile) -> WaitProfile {
    let len = flow.grid.bin_minutes();
    WaitProfile { grid: flow.grid, waits: flow.counts.iter().map(|&c| (c > 0.0).then(|| len / c)).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeeklyComparison {
    pub door_count: f64,
    pub meeting_count: f64,
    pub door_wait: Option<f64>,
    pub meeting_wait: Option<f64>,
    /// `(W_meeting − W_door) / W_door`, as a fraction.
    pub change: Option<f64>,
}

/// Predicted waits over a whole window from two weekly totals.
///
/// Each total is turned into a daily flow by dividing by `operating_days`;
/// the wait is the window length over that daily flow.
pub fn weekly_waits(
    door_count: f64,
    meeting_count: f64,
    window_minutes: f64,
    operating_days: u32,
) -> WeeklyComparison {
    let days = f64::from(operating_days.max(1));
    let wait = |count: f64| (count > 0.0).then(|| window_minutes / (count / days));
    let door_wait = wait(door_count);
    let meeting_wait = wait(meeting_count);
    let change = match (door_wait, meeting_wait) {
        (Some(d), Some(m)) => Some((m - d) / d),
        _ => None,
    };
    WeeklyComparison { door_count, meeting_count, door_wait, meeting_wait, change }
}

/// Door-to-door versus meeting point comparison for profiles holding
/// weekly counts on the same grid.
pub fn weekly_comparison(
    door: &FlowProfile,
    meeting: &FlowProfile,
    operating_days: u32,
) -> Result<WeeklyComparison, FlowError> {
    if door.grid != meeting.grid {
        return Err(FlowError::GridMismatch);
    }
    Ok(weekly_waits(
        door.raw_total(),
        meeting.raw_total(),
        door.grid.window().length_minutes(),
        operating_days,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinRmse {
    pub bin: usize,
    pub observations: usize,
    pub rmse: f64,
}

/// Per-bin root mean squared error between observed and predicted waits.
/// Bins lacking either an observation or a prediction are left out.
pub fn rmse(observed: &[ObservedWait], predicted: &WaitProfile) -> Vec<BinRmse> {
    let n = predicted.waits.len();
    let mut sq = vec![0.0; n];
    let mut count = vec![0usize; n];
    for obs in observed {
        let Some(j) = predicted.grid.bin_of(obs.requested_at) else {
            continue;
        };
        if let Some(p) = predicted.waits[j] {
            sq[j] += (obs.wait_minutes - p).powi(2);
            count[j] += 1;
        }
    }
    (0..n)
        .filter(|&j| count[j] > 0)
        .map(|j| BinRmse { bin: j, observations: count[j], rmse: (sq[j] / count[j] as f64).sqrt() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipationPoint {
    pub rate: f64,
    pub mean_wait: f64,
    pub waits: Vec<Option<f64>>,
}

/// Waits after scaling every count by `target / current_rate`.
pub fn wait_vs_participation(
    flow: &FlowProfile,
    current_rate: f64,
    target_rates: &[f64],
) -> Result<Vec<ParticipationPoint>, FlowError> {
    if !(current_rate > 0.0 && current_rate.is_finite()) {
        return Err(FlowError::ZeroRate(current_rate));
    }
    if flow.counts.iter().all(|&c| c == 0.0) {
        return Err(FlowError::AllZeroFlow);
    }
    target_rates
        .iter()
        .map(|&rate| {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(FlowError::ZeroRate(rate));
            }
            let scale = rate / current_rate;
            let scaled =
                FlowProfile { counts: flow.counts.iter().map(|c| c * scale).collect(), ..flow.clone() };
            let waits = wait_times(&scaled);
            Ok(ParticipationPoint {
                rate,
                mean_wait: waits.mean_defined().expect("non-zero flow has a defined wait"),
                waits: waits.waits,
            })
        })
        .collect()
}
