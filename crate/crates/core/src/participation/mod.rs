//! Driver participation rate: geolocated drivers on a line over the
//! route-inferred driver population of the same line.
//!
//! The population comes from an origin/destination matrix. Each OD pair is
//! routed between its centroids, and its count is kept when the route
//! passes every meeting point of some line variant, in order.

pub mod router;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::geo::{check_radius, planar_distance, GeoError, GeoPoint};
use crate::network::{CarpoolLine, CarpoolNetwork, NetworkError};

pub use router::{HttpRouter, RouterClient, RoutingError, StraightLineRouter};

/// Polylines are resampled to at most this spacing before buffer tests.
pub const POLYLINE_SAMPLE_SPACING_M: f64 = 50.0;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticipationError {
    #[error("driver population is zero")]
    ZeroPopulation,
    #[error("all {count} route requests failed; first failure: {first}")]
    AllRoutesFailed { count: usize, first: String },
    #[error("driver count must be finite and non-negative, got {0}")]
    NegativeCount(f64),
    #[error("duplicate OD pair ({0}, {1})")]
    DuplicatePair(String, String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdEntry {
    pub origin_id: String,
    pub destination_id: String,
    pub count: f64,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OdMatrix {
    entries: Vec<OdEntry>,
}

impl OdMatrix {
    pub fn new(entries: Vec<OdEntry>) -> Result<Self, ParticipationError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !e.count.is_finite() || e.count < 0.0 {
                return Err(ParticipationError::NegativeCount(e.count));
            }
            if !seen.insert((e.origin_id.as_str(), e.destination_id.as_str())) {
                return Err(ParticipationError::DuplicatePair(e.origin_id.clone(), e.destination_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[OdEntry] {
        &self.entries
    }

    pub fn count(&self, origin_id: &str, destination_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.origin_id == origin_id && e.destination_id == destination_id)
            .map(|e| e.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutePlan {
    pub origin_id: String,
    pub destination_id: String,
    pub polyline: Vec<GeoPoint>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingFailure {
    pub origin_id: String,
    pub destination_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RoutingReport {
    pub plans: Vec<RoutePlan>,
    pub failures: Vec<RoutingFailure>,
}

type RouteResult = Result<Vec<GeoPoint>, RoutingError>;

/// Routes every OD entry with a positive count. Failures are collected per
/// entry and never abort the batch. At most `max_in_flight` requests run at
/// once; output follows OD order.
pub fn infer_routes(
    od: &OdMatrix,
    router: &dyn RouterClient,
    departure: DateTime<Utc>,
    max_in_flight: usize,
) -> RoutingReport {
    let todo: Vec<&OdEntry> = od.entries().iter().filter(|e| e.count > 0.0).collect();
    let results: Vec<Mutex<Option<RouteResult>>> = todo.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.clamp(1, todo.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(e) = todo.get(i) else { break };
                let r = router.route(e.origin, e.destination, departure).and_then(|line| {
                    router::validate_polyline(&line, e.origin, e.destination)?;
                    Ok(line)
                });
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });

    let mut report = RoutingReport::default();
    for (e, slot) in todo.iter().zip(results) {
        match slot.into_inner().expect("result slot").expect("every entry was routed") {
            Ok(polyline) => report.plans.push(RoutePlan {
                origin_id: e.origin_id.clone(),
                destination_id: e.destination_id.clone(),
                polyline,
                source: router.name().to_string(),
            }),
            Err(err) => report.failures.push(RoutingFailure {
                origin_id: e.origin_id.clone(),
                destination_id: e.destination_id.clone(),
                message: err.to_string(),
            }),
        }
    }
    report
}

/// Resamples a polyline so consecutive points are at most `spacing_m`
/// apart. Original vertices are kept.
pub fn densify(polyline: &[GeoPoint], spacing_m: f64) -> Vec<GeoPoint> {
    let mut out = Vec::with_capacity(polyline.len());
    for w in polyline.windows(2) {
        let (a, b) = (w[0], w[1]);
        let steps = (planar_distance(a, b) / spacing_m).ceil().max(1.0) as usize;
        out.push(a);
        for k in 1..steps {
            let t = k as f64 / steps as f64;
            out.push(
                GeoPoint::new(a.lon() + t * (b.lon() - a.lon()), a.lat() + t * (b.lat() - a.lat()))
                    .expect("interpolated point in range"),
            );
        }
    }
    if let Some(&last) = polyline.last() {
        out.push(last);
    }
    out
}

// Index of the closest densified point to every stop, if each is within
// radius and the indices strictly increase.
fn follows(points: &[GeoPoint], stops: &[GeoPoint], radius: f64) -> bool {
    let mut prev: Option<usize> = None;
    for stop in stops {
        let (idx, d) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, planar_distance(*p, *stop)))
            .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        if d > radius || prev.is_some_and(|p| idx <= p) {
            return false;
        }
        prev = Some(idx);
    }
    true
}

/// Whether a route passes within `radius` of every node of some variant
/// of `line`, in the variant's order.
pub fn route_follows_line(polyline: &[GeoPoint], variants: &[Vec<GeoPoint>], radius: f64) -> bool {
    let points = densify(polyline, POLYLINE_SAMPLE_SPACING_M);
    variants.iter().any(|v| follows(&points, v, radius))
}

/// `ñ₀`: total OD count over routes that coincide with the line.
pub fn coincident_flow(
    routes: &[RoutePlan],
    od: &OdMatrix,
    line: &CarpoolLine,
    network: &CarpoolNetwork,
    radius: f64,
) -> Result<f64, ParticipationError> {
    check_radius(radius)?;
    let variants: Vec<Vec<GeoPoint>> = network
        .line_variants(line)?
        .iter()
        .map(|v| v.node_ids().iter().map(|id| network.node(id).expect("variant node").location).collect())
        .collect();
    let counts: BTreeMap<(&str, &str), f64> =
        od.entries().iter().map(|e| ((e.origin_id.as_str(), e.destination_id.as_str()), e.count)).collect();
    Ok(routes
        .iter()
        .filter(|r| route_follows_line(&r.polyline, &variants, radius))
        .filter_map(|r| counts.get(&(r.origin_id.as_str(), r.destination_id.as_str())))
        .sum())
}

/// `P̃ = ñ / ñ₀`.
pub fn participation_rate(n_tilde: f64, n0: f64) -> Result<f64, ParticipationError> {
    if !n_tilde.is_finite() || n_tilde < 0.0 {
        return Err(ParticipationError::NegativeCount(n_tilde));
    }
    if !n0.is_finite() || n0 < 0.0 {
        return Err(ParticipationError::NegativeCount(n0));
    }
    if n0 == 0.0 {
        return Err(ParticipationError::ZeroPopulation);
    }
    Ok(n_tilde / n0)
}

pub const ASSUMPTION_MORNING_PEAK: &str = "od_flow_treated_as_morning_peak: the OD matrix has no timestamps";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipationReport {
    pub line: String,
    pub n_tilde: f64,
    pub n0: f64,
    pub rate: f64,
    pub routed: usize,
    pub routing_failures: Vec<RoutingFailure>,
    pub warnings: Vec<String>,
    pub assumptions: Vec<String>,
}

/// Rate plus data-quality notes. A rate above 1 is a warning, not an
/// error: the traces and the OD survey are independent sources.
pub fn participation_report(
    line: &CarpoolLine,
    n_tilde: f64,
    routing: &RoutingReport,
    od: &OdMatrix,
    network: &CarpoolNetwork,
    radius: f64,
) -> Result<ParticipationReport, ParticipationError> {
    if routing.plans.is_empty() {
        if let Some(f) = routing.failures.first() {
            return Err(ParticipationError::AllRoutesFailed {
                count: routing.failures.len(),
                first: f.message.clone(),
            });
        }
    }
    let n0 = coincident_flow(&routing.plans, od, line, network, radius)?;
    let rate = participation_rate(n_tilde, n0)?;
    let mut warnings = Vec::new();
    if rate > 1.0 {
        warnings.push(format!(
            "participation rate {rate:.4} exceeds 1: geolocated drivers outnumber the OD population"
        ));
    }
    if !routing.failures.is_empty() {
        warnings.push(format!("{} OD entries could not be routed", routing.failures.len()));
    }
    Ok(ParticipationReport {
        line: line.to_string(),
        n_tilde,
        n0,
        rate,
        routed: routing.plans.len(),
        routing_failures: routing.failures.clone(),
        warnings,
        assumptions: vec![ASSUMPTION_MORNING_PEAK.to_string()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::lane_network;

    fn p(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    fn entry(o: &str, d: &str, count: f64, a: GeoPoint, b: GeoPoint) -> OdEntry {
        OdEntry { origin_id: o.into(), destination_id: d.into(), count, origin: a, destination: b }
    }

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2019-11-26T08:00:00+01:00").unwrap().with_timezone(&Utc)
    }

    struct Down;
    impl RouterClient for Down {
        fn route(&self, _: GeoPoint, _: GeoPoint, _: DateTime<Utc>) -> Result<Vec<GeoPoint>, RoutingError> {
            Err(RoutingError::Transport("connection refused".into()))
        }
        fn name(&self) -> &str {
            "down"
        }
    }

    #[test]
    fn stub_routes_skip_zero_counts() {
        let od = OdMatrix::new(vec![
            entry("a", "b", 10.0, p(5.0, 45.0), p(5.1, 45.1)),
            entry("a", "c", 0.0, p(5.0, 45.0), p(5.2, 45.1)),
            entry("c", "b", 4.0, p(5.2, 45.1), p(5.1, 45.1)),
        ])
        .unwrap();
        let rep = infer_routes(&od, &StraightLineRouter::default(), t0(), 4);
        assert_eq!(rep.plans.len(), 2);
        assert!(rep.failures.is_empty());
        assert_eq!(rep.plans[0].destination_id, "b");
        assert_eq!(rep.plans[1].origin_id, "c");
        assert_eq!(rep.plans[0].source, "straight-line");
    }

    #[test]
    fn unreachable_router_collects_failures() {
        let od = OdMatrix::new(vec![
            entry("a", "b", 10.0, p(5.0, 45.0), p(5.1, 45.1)),
            entry("c", "b", 4.0, p(5.2, 45.1), p(5.1, 45.1)),
        ])
        .unwrap();
        let rep = infer_routes(&od, &Down, t0(), 2);
        assert!(rep.plans.is_empty());
        assert_eq!(rep.failures.len(), 2);
        let net = lane_network();
        let line: CarpoolLine = "B>S".parse().unwrap();
        assert!(matches!(
            participation_report(&line, 20.0, &rep, &od, &net, 1000.0),
            Err(ParticipationError::AllRoutesFailed { count: 2, .. })
        ));
    }

    #[test]
    fn od_matrix_validation() {
        let a = p(5.0, 45.0);
        assert!(matches!(
            OdMatrix::new(vec![entry("a", "b", 1.0, a, a), entry("a", "b", 2.0, a, a)]),
            Err(ParticipationError::DuplicatePair(..))
        ));
        assert!(matches!(
            OdMatrix::new(vec![entry("a", "b", -1.0, a, a)]),
            Err(ParticipationError::NegativeCount(_))
        ));
    }

    #[test]
    fn coincidence_requires_every_stop_in_order() {
        let net = lane_network();
        let line: CarpoolLine = "B>S".parse().unwrap();
        let b = net.node("B").unwrap().location;
        let s = net.node("S").unwrap().location;
        let origin = b.offset_m(4000.0, -2000.0).unwrap();
        let dest = s.offset_m(-4000.0, 1000.0).unwrap();
        let miss = s.offset_m(0.0, 3000.0).unwrap();
        let od = OdMatrix::new(vec![
            entry("o", "d", 100.0, origin, dest),
            entry("o", "m", 7.0, origin, miss),
            entry("d", "o", 50.0, dest, origin),
        ])
        .unwrap();
        let plans = vec![
            RoutePlan {
                origin_id: "o".into(),
                destination_id: "d".into(),
                polyline: vec![origin, b, s, dest],
                source: "t".into(),
            },
            RoutePlan {
                origin_id: "o".into(),
                destination_id: "m".into(),
                polyline: vec![origin, b, miss],
                source: "t".into(),
            },
            RoutePlan {
                origin_id: "d".into(),
                destination_id: "o".into(),
                polyline: vec![dest, s, b, origin],
                source: "t".into(),
            },
        ];
        assert_eq!(coincident_flow(&plans, &od, &line, &net, 1000.0).unwrap(), 100.0);
        // a larger radius can only add routes
        assert!(coincident_flow(&plans, &od, &line, &net, 5000.0).unwrap() >= 100.0);
    }

    #[test]
    fn rates() {
        let r = participation_rate(20.0, 3821.0).unwrap();
        assert!((r * 100.0 - 0.52).abs() < 0.005);
        assert_eq!(participation_rate(5.0, 5.0).unwrap(), 1.0);
        assert_eq!(participation_rate(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(participation_rate(1.0, 0.0), Err(ParticipationError::ZeroPopulation));
    }

    #[test]
    fn report_flags_rates_above_one() {
        let net = lane_network();
        let line: CarpoolLine = "B>S".parse().unwrap();
        let b = net.node("B").unwrap().location;
        let s = net.node("S").unwrap().location;
        let od = OdMatrix::new(vec![entry("b", "s", 10.0, b, s)]).unwrap();
        let routing = infer_routes(&od, &StraightLineRouter::default(), t0(), 1);
        let rep = participation_report(&line, 20.0, &routing, &od, &net, 1000.0).unwrap();
        assert_eq!(rep.n0, 10.0);
        assert_eq!(rep.rate, 2.0);
        assert_eq!(rep.warnings.len(), 1);
        assert_eq!(rep.assumptions, vec![ASSUMPTION_MORNING_PEAK.to_string()]);
    }

    #[test]
    fn densify_spacing() {
        let pts = densify(&[p(5.0, 45.0), p(5.02, 45.0), p(5.02, 45.01)], 50.0);
        assert!(pts.windows(2).all(|w| planar_distance(w[0], w[1]) <= 50.0 + 1e-6));
        assert_eq!(pts[0], p(5.0, 45.0));
        assert_eq!(*pts.last().unwrap(), p(5.02, 45.01));
    }
}
