//! Topological simplification of a GPS trace onto a carpooling line.
//!
//! A trace is reduced to its origin, one pass per meeting point of the
//! matched line variant, and its destination. Each pass is the globally
//! closest sample to the meeting point, and its timestamp is the arrival
//! time estimate.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{check_radius, planar_distance, GeoError, GpsSample, Trace};
use crate::network::{CarpoolLine, CarpoolNetwork, MeetingPoint, NetworkError};
use crate::time::DailyWindow;

/// Default buffer radius around a meeting point, in meters.
pub const DEFAULT_BUFFER_RADIUS_M: f64 = 1_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimplifyError {
    #[error("trace {trace_id:?} never enters the buffer of {meeting_point_id:?}")]
    NoIntersection { trace_id: String, meeting_point_id: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingPointPass {
    pub meeting_point_id: String,
    pub closest_sample: GpsSample,
    /// Meters from the closest sample to the meeting point.
    pub distance: f64,
}

impl MeetingPointPass {
    pub fn arrival_time(&self) -> DateTime<Utc> {
        self.closest_sample.timestamp
    }
}

/// Origin, ordered meeting point passes, destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedTrace {
    pub trace_id: String,
    pub origin: GpsSample,
    pub passes: Vec<MeetingPointPass>,
    pub destination: GpsSample,
    /// Sample count of the raw trace.
    pub source_length: usize,
}

impl SimplifiedTrace {
    pub fn point_count(&self) -> usize {
        2 + self.passes.len()
    }

    pub fn first_arrival(&self) -> Option<DateTime<Utc>> {
        self.passes.first().map(MeetingPointPass::arrival_time)
    }

    pub fn pass(&self, meeting_point_id: &str) -> Option<&MeetingPointPass> {
        self.passes.iter().find(|p| p.meeting_point_id == meeting_point_id)
    }

    pub fn node_ids(&self) -> Vec<&str> {
        self.passes.iter().map(|p| p.meeting_point_id.as_str()).collect()
    }
}

/// Fraction of raw points dropped by simplification, `1 - (2 + k) / ℓ`,
/// saturating at zero.
pub fn compression_rate(simplified: &SimplifiedTrace) -> f64 {
    if simplified.source_length == 0 {
        return 0.0;
    }
    let kept = simplified.point_count() as f64;
    (1.0 - kept / simplified.source_length as f64).max(0.0)
}

/// Samples of `trace` inside each meeting point buffer, in trace order.
/// Meeting points with no sample inside are omitted.
pub fn intersect_buffers(
    trace: &Trace,
    network: &CarpoolNetwork,
    radius: f64,
) -> Result<BTreeMap<String, Vec<GpsSample>>, GeoError> {
    check_radius(radius)?;
    let mut out = BTreeMap::new();
    for mp in network.nodes() {
        let inside: Vec<GpsSample> = trace
            .samples()
            .iter()
            .filter(|s| planar_distance(s.position, mp.location) <= radius)
            .copied()
            .collect();
        if !inside.is_empty() {
            out.insert(mp.id.clone(), inside);
        }
    }
    Ok(out)
}

// Index and distance of the closest sample; the earliest wins ties since
// samples are in non-decreasing time order.
fn closest_sample(trace: &Trace, point: &MeetingPoint) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, s) in trace.samples().iter().enumerate() {
        let d = planar_distance(s.position, point.location);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Arrival estimate at `point`: the sample minimizing the distance to it.
pub fn estimate_arrival(
    trace: &Trace,
    point: &MeetingPoint,
    radius: f64,
) -> Result<MeetingPointPass, SimplifyError> {
    check_radius(radius)?;
    let (i, d) = closest_sample(trace, point);
    if d > radius {
        return Err(SimplifyError::NoIntersection {
            trace_id: trace.id().to_string(),
            meeting_point_id: point.id.clone(),
        });
    }
    Ok(MeetingPointPass {
        meeting_point_id: point.id.clone(),
        closest_sample: trace.samples()[i],
        distance: d,
    })
}

/// Matches traces against one carpooling line. Variants are expanded once
/// at construction.
#[derive(Debug, Clone)]
pub struct LineMatcher {
    line: CarpoolLine,
    // variants as node index lists into `points`
    variants: Vec<Vec<usize>>,
    points: Vec<MeetingPoint>,
    radius: f64,
    window: DailyWindow,
}

impl LineMatcher {
    pub fn new(
        network: &CarpoolNetwork,
        line: &CarpoolLine,
        radius: f64,
        window: DailyWindow,
    ) -> Result<Self, SimplifyError> {
        check_radius(radius)?;
        let variants = network.line_variants(line)?;
        let mut points: Vec<MeetingPoint> = Vec::new();
        let mut slot = BTreeMap::new();
        let variants = variants
            .iter()
            .map(|v| {
                v.node_ids()
                    .iter()
                    .map(|id| {
                        *slot.entry(id.clone()).or_insert_with(|| {
                            points.push(network.node(id).expect("variant node exists").clone());
                            points.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        Ok(Self { line: line.clone(), variants, points, radius, window })
    }

    pub fn line(&self) -> &CarpoolLine {
        &self.line
    }

    pub fn window(&self) -> &DailyWindow {
        &self.window
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn variant_count(&self) -> usize {
        self.variants.len()
    }

    /// Simplifies `trace` if it realizes some variant of the line: every
    /// node of the variant within the buffer, strictly increasing arrival
    /// times along it, and every arrival inside the window. Among matching
    /// variants the one with the most nodes wins, then the earliest final
    /// arrival.
    pub fn simplify(&self, trace: &Trace) -> Option<SimplifiedTrace> {
        let closest: Vec<(usize, f64)> = self.points.iter().map(|p| closest_sample(trace, p)).collect();
        let samples = trace.samples();

        let mut best: Option<(&Vec<usize>, DateTime<Utc>)> = None;
        for variant in &self.variants {
            let ok = variant.iter().all(|&k| {
                let (i, d) = closest[k];
                d <= self.radius && self.window.contains(samples[i].timestamp)
            }) && variant
                .windows(2)
                .all(|w| samples[closest[w[0]].0].timestamp < samples[closest[w[1]].0].timestamp);
            if !ok {
                continue;
            }
            let last = samples[closest[*variant.last().expect("variant has nodes")].0].timestamp;
            let better = match best {
                None => true,
                Some((b, b_last)) => variant.len() > b.len() || (variant.len() == b.len() && last < b_last),
            };
            if better {
                best = Some((variant, last));
            }
        }

        let (variant, _) = best?;
        Some(SimplifiedTrace {
            trace_id: trace.id().to_string(),
            origin: *trace.origin(),
            passes: variant
                .iter()
                .map(|&k| MeetingPointPass {
                    meeting_point_id: self.points[k].id.clone(),
                    closest_sample: samples[closest[k].0],
                    distance: closest[k].1,
                })
                .collect(),
            destination: *trace.destination(),
            source_length: trace.len(),
        })
    }

    /// Simplifies a batch in parallel; output keeps input order and drops
    /// non-matches.
    pub fn simplify_all(&self, traces: &[Trace]) -> Vec<SimplifiedTrace> {
        traces.par_iter().filter_map(|t| self.simplify(t)).collect()
    }
}

/// One-shot form of [`LineMatcher::simplify`].
pub fn simplify_trace(
    trace: &Trace,
    line: &CarpoolLine,
    network: &CarpoolNetwork,
    radius: f64,
    window: DailyWindow,
) -> Result<Option<SimplifiedTrace>, SimplifyError> {
    Ok(LineMatcher::new(network, line, radius, window)?.simplify(trace))
}
