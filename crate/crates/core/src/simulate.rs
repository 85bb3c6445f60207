//! Poisson driver arrivals and synthetic driver traces.
//!
//! [`simulate_waits`] draws the time to the first driver for each request
//! under a piecewise-constant arrival intensity. It is the stochastic
//! check on the inverse-flow waiting time prediction.
//!
//! [`generate_traces`] fabricates GPS traces along a carpooling line with
//! a prescribed number of first-stop arrivals per bin.

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::flow::FlowProfile;
use crate::geo::{planar_distance, GeoError, GeoPoint, GpsSample, Trace};
use crate::network::{CarpoolLine, CarpoolNetwork, NetworkError};
use crate::rng;
use crate::time::{DailyWindow, TimeGrid, SECONDS_PER_DAY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
    #[error("arrival rates must be finite and non-negative")]
    NegativeRate,
    #[error("willingness must lie in [0, 1], got {0}")]
    BadWillingness(f64),
    #[error("request at {0} lies outside the modeled window")]
    RequestOutsideWindow(DateTime<Utc>),
    #[error("expected {expected} rates for the grid, got {got}")]
    RateCount { expected: usize, got: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Piecewise-constant driver arrival intensity over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalModel {
    grid: TimeGrid,
    /// Drivers per minute in each bin.
    rates: Vec<f64>,
    /// Probability that a passing driver responds; thins the process.
    willingness: f64,
    seed: u64,
}

impl ArrivalModel {
    pub fn new(grid: TimeGrid, rates: Vec<f64>, seed: u64) -> Result<Self, SimulateError> {
        if rates.len() != grid.len() {
            return Err(SimulateError::RateCount { expected: grid.len(), got: rates.len() });
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(SimulateError::NegativeRate);
        }
        Ok(Self { grid, rates, willingness: 1.0, seed })
    }

    /// `λⱼ = countsⱼ / len(τⱼ)`.
    pub fn from_flow(flow: &FlowProfile, seed: u64) -> Result<Self, SimulateError> {
        let len = flow.grid.bin_minutes();
        Self::new(flow.grid, flow.counts.iter().map(|c| c / len).collect(), seed)
    }

    pub fn with_willingness(mut self, p: f64) -> Result<Self, SimulateError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SimulateError::BadWillingness(p));
        }
        self.willingness = p;
        Ok(self)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    // minutes until the unit-rate exponential `e` is used up, starting at
    // local second `t0`; None if the intensity runs out first
    fn invert_hazard(&self, t0: f64, mut e: f64) -> Option<f64> {
        let first = self.grid.bin_of_seconds(t0 as u32)?;
        let mut cur = t0;
        for j in first..self.grid.len() {
            let end = f64::from(self.grid.bin_bounds(j).1);
            let rate = self.rates[j] * self.willingness;
            let hazard = rate * (end - cur) / 60.0;
            if rate > 0.0 && e <= hazard {
                return Some((cur - t0) / 60.0 + e / rate);
            }
            e -= hazard;
            cur = end;
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulatedWait {
    pub requested_at: DateTime<Utc>,
    pub wait_minutes: f64,
    /// The wait reached the horizon before any driver arrived.
    pub censored: bool,
}

/// Time to the first driver for each request. `horizon_minutes = None`
/// censors at the end of the modeled window. Request `i` draws from
/// stream `i` of the model seed.
pub fn simulate_waits(
    model: &ArrivalModel,
    requests: &[DateTime<Utc>],
    horizon_minutes: Option<f64>,
) -> Result<Vec<SimulatedWait>, SimulateError> {
    let window = model.grid.window();
    requests
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            if !window.contains(t) {
                return Err(SimulateError::RequestOutsideWindow(t));
            }
            let t0 = f64::from(window.local_seconds(t));
            let horizon = horizon_minutes.unwrap_or_else(|| (f64::from(window.end_s()) - t0) / 60.0);
            let mut rng = rng::stream(model.seed, i as u64);
            let e: f64 = Exp1.sample(&mut rng);
            let (wait_minutes, censored) = match model.invert_hazard(t0, e) {
                Some(w) if w <= horizon => (w, false),
                _ => (horizon, true),
            };
            Ok(SimulatedWait { requested_at: t, wait_minutes, censored })
        })
        .collect()
}

/// Parameters of a synthetic collection of driver traces.
#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub network: CarpoolNetwork,
    pub line: CarpoolLine,
    pub grid: TimeGrid,
    /// Target daily flow per bin; `flow × day_count` must be whole.
    pub flows: Vec<f64>,
    pub day_count: u32,
    pub first_day: NaiveDate,
    pub noise_sigma_m: f64,
    pub sampling_period_s: u32,
    pub speed_mps: f64,
    /// Origin distance from the first stop, `(min, max)` meters.
    pub origin_scatter_m: (f64, f64),
    /// Destination distance from the last stop, `(min, max)` meters.
    pub destination_scatter_m: (f64, f64),
    pub radius_m: f64,
    pub seed: u64,
}

impl SyntheticScenario {
    /// A scenario with the defaults used throughout the test suite.
    pub fn new(
        network: CarpoolNetwork,
        line: CarpoolLine,
        grid: TimeGrid,
        flows: Vec<f64>,
        day_count: u32,
    ) -> Self {
        Self {
            network,
            line,
            grid,
            flows,
            day_count,
            first_day: NaiveDate::from_ymd_opt(2019, 11, 25).expect("valid date"),
            noise_sigma_m: 10.0,
            sampling_period_s: 5,
            speed_mps: 20.0,
            origin_scatter_m: (3_000.0, 8_000.0),
            destination_scatter_m: (3_000.0, 8_000.0),
            radius_m: crate::simplify::DEFAULT_BUFFER_RADIUS_M,
            seed: 0,
        }
    }

    fn route(&self) -> Result<Vec<GeoPoint>, SimulateError> {
        let variants = self.network.line_variants(&self.line)?;
        let longest = variants
            .iter()
            .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b.cmp(a)))
            .ok_or_else(|| SimulateError::InfeasibleScenario(format!("line {} has no path", self.line)))?;
        Ok(longest
            .node_ids()
            .iter()
            .map(|id| self.network.node(id).expect("variant node").location)
            .collect())
    }

    /// Matching window that covers the full line traversal of every
    /// generated trace: the grid window extended by the travel time from
    /// the first to the last stop, rounded up to the minute.
    pub fn match_window(&self) -> Result<DailyWindow, SimulateError> {
        let stops = self.route()?;
        let travel: f64 = stops.windows(2).map(|w| planar_distance(w[0], w[1])).sum();
        let extra = ((travel / self.speed_mps + 60.0) / 60.0).ceil() as u32 * 60;
        let w = self.grid.window();
        Ok(DailyWindow::new(w.start_s(), (w.end_s() + extra).min(SECONDS_PER_DAY), w.offset())
            .expect("extension keeps start < end"))
    }

    fn whole_counts(&self) -> Result<Vec<u32>, SimulateError> {
        if self.flows.len() != self.grid.len() {
            return Err(SimulateError::InfeasibleScenario(format!(
                "{} flows for {} bins",
                self.flows.len(),
                self.grid.len()
            )));
        }
        if self.day_count == 0 {
            return Err(SimulateError::InfeasibleScenario("day count is zero".into()));
        }
        self.flows
            .iter()
            .enumerate()
            .map(|(j, &f)| {
                let total = f * f64::from(self.day_count);
                if !f.is_finite() || f < 0.0 || (total - total.round()).abs() > 1e-9 {
                    return Err(SimulateError::InfeasibleScenario(format!(
                        "bin {j}: flow {f} over {} days is not a whole number of traces",
                        self.day_count
                    )));
                }
                Ok(total.round() as u32)
            })
            .collect()
    }
}

struct Polyline {
    points: Vec<GeoPoint>,
    // cumulative meters at each vertex
    cum: Vec<f64>,
}

impl Polyline {
    fn new(points: Vec<GeoPoint>) -> Self {
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            cum.push(cum[cum.len() - 1] + planar_distance(w[0], w[1]));
        }
        Self { points, cum }
    }

    fn length(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    fn at(&self, s: f64) -> GeoPoint {
        let s = s.clamp(0.0, self.length());
        let k = match self.cum.partition_point(|&c| c <= s) {
            0 => 0,
            k => (k - 1).min(self.points.len() - 2),
        };
        let seg = self.cum[k + 1] - self.cum[k];
        let f = if seg > 0.0 { (s - self.cum[k]) / seg } else { 0.0 };
        let (a, b) = (self.points[k], self.points[k + 1]);
        GeoPoint::new(a.lon() + f * (b.lon() - a.lon()), a.lat() + f * (b.lat() - a.lat()))
            .expect("interpolation stays in range")
    }
}

const MAX_ATTEMPTS: usize = 64;

/// Synthetic traces whose first-stop arrivals reproduce the scenario's
/// per-bin flows. Traces are ordered by id.
pub fn generate_traces(scenario: &SyntheticScenario) -> Result<Vec<Trace>, SimulateError> {
    if !scenario.noise_sigma_m.is_finite()
        || scenario.noise_sigma_m < 0.0
        || scenario.noise_sigma_m > scenario.radius_m / 4.0
    {
        return Err(SimulateError::InfeasibleScenario(format!(
            "GPS noise sigma {} m exceeds a quarter of the {} m buffer",
            scenario.noise_sigma_m, scenario.radius_m
        )));
    }
    if scenario.sampling_period_s == 0 || !scenario.speed_mps.is_finite() || scenario.speed_mps <= 0.0 {
        return Err(SimulateError::InfeasibleScenario("sampling period and speed must be positive".into()));
    }
    let counts = scenario.whole_counts()?;
    let stops = scenario.route()?;

    // (day, bin, rank within day-bin, day-bin size)
    let mut jobs = Vec::new();
    for (j, &total) in counts.iter().enumerate() {
        let days = scenario.day_count;
        for d in 0..days {
            let here = total / days + u32::from(d < total % days);
            for r in 0..here {
                jobs.push((d, j, r, here));
            }
        }
    }
    jobs.sort();

    jobs.par_iter()
        .map(|&(d, j, r, m)| {
            let date = scenario.first_day + Duration::days(i64::from(d));
            let (b0, b1) = scenario.grid.bin_bounds(j);
            let offset = ((f64::from(r) + 0.5) / f64::from(m) * f64::from(b1 - b0)) as u32;
            let arrival = scenario.grid.window().instant_on(date, b0 + offset);
            let id = format!("syn-d{d:03}-b{j:03}-{r:03}");
            let stream = (u64::from(d) << 40) | ((j as u64) << 20) | u64::from(r);
            one_trace(scenario, &stops, id, arrival, j, stream)
        })
        .collect()
}

fn scatter(
    rng: &mut rng::Rng,
    center: GeoPoint,
    (lo, hi): (f64, f64),
    network: &CarpoolNetwork,
    radius: f64,
) -> Result<GeoPoint, SimulateError> {
    for _ in 0..MAX_ATTEMPTS {
        let bearing = rng.random_range(0.0..std::f64::consts::TAU);
        let dist = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let p = center.offset_m(dist * bearing.cos(), dist * bearing.sin())?;
        if network.nodes().iter().all(|n| planar_distance(p, n.location) > radius) {
            return Ok(p);
        }
    }
    Err(SimulateError::InfeasibleScenario("could not place an endpoint outside every buffer".into()))
}

fn one_trace(
    sc: &SyntheticScenario,
    stops: &[GeoPoint],
    id: String,
    arrival: DateTime<Utc>,
    bin: usize,
    stream: u64,
) -> Result<Trace, SimulateError> {
    let mut rng = rng::stream(sc.seed, stream);
    let noise = Normal::new(0.0, sc.noise_sigma_m.max(f64::MIN_POSITIVE)).expect("finite non-negative sigma");
    let period = f64::from(sc.sampling_period_s);

    for _ in 0..MAX_ATTEMPTS {
        let origin = scatter(&mut rng, stops[0], sc.origin_scatter_m, &sc.network, sc.radius_m)?;
        let dest =
            scatter(&mut rng, stops[stops.len() - 1], sc.destination_scatter_m, &sc.network, sc.radius_m)?;
        let mut vertices = vec![origin];
        vertices.extend_from_slice(stops);
        vertices.push(dest);
        let path = Polyline::new(vertices);
        let at_first = path.cum[1];

        // sample k sits at arrival + k·period, so k = 0 is on the first stop
        let k_min = -((at_first / sc.speed_mps / period).floor() as i64);
        let k_max = ((path.length() - at_first) / sc.speed_mps / period).floor() as i64;
        let samples: Vec<GpsSample> = (k_min..=k_max)
            .map(|k| {
                let s = at_first + k as f64 * period * sc.speed_mps;
                let p = path.at(s);
                let (e, n) = if sc.noise_sigma_m > 0.0 {
                    (noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                Ok(GpsSample::new(
                    p.offset_m(e, n)?,
                    arrival + Duration::seconds(k * i64::from(sc.sampling_period_s)),
                ))
            })
            .collect::<Result<_, GeoError>>()?;

        if arrivals_hold(&samples, stops, sc, bin) {
            return Ok(Trace::new(id, samples)?);
        }
    }
    Err(SimulateError::InfeasibleScenario(format!(
        "trace {id}: noise keeps moving the closest sample out of its bin"
    )))
}

// every stop's closest sample inside its buffer, closest samples in stop
// order, and the first stop's closest sample still in the intended bin
fn arrivals_hold(samples: &[GpsSample], stops: &[GeoPoint], sc: &SyntheticScenario, bin: usize) -> bool {
    let mut prev: Option<usize> = None;
    for (k, stop) in stops.iter().enumerate() {
        let (idx, d) = samples
            .iter()
            .enumerate()
            .map(|(i, s)| (i, planar_distance(s.position, *stop)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        if d > sc.radius_m {
            return false;
        }
        if let Some(p) = prev {
            if samples[idx].timestamp <= samples[p].timestamp {
                return false;
            }
        }
        if k == 0 && sc.grid.bin_of(samples[idx].timestamp) != Some(bin) {
            return false;
        }
        prev = Some(idx);
    }
    true
}

/// `per_bin` passenger requests in every bin of every day, each at a
/// uniform time in its bin, truncated to the millisecond. Sorted.
pub fn uniform_requests(
    grid: &TimeGrid,
    first_day: NaiveDate,
    day_count: u32,
    per_bin: u32,
    seed: u64,
) -> Vec<DateTime<Utc>> {
    let mut out = Vec::with_capacity(day_count as usize * grid.len() * per_bin as usize);
    for d in 0..day_count {
        let date = first_day + Duration::days(i64::from(d));
        for j in 0..grid.len() {
            let mut rng = rng::stream(seed, REQUEST_STREAMS | (u64::from(d) << 20) | j as u64);
            let (b0, b1) = grid.bin_bounds(j);
            let start = grid.window().instant_on(date, b0);
            let mut times: Vec<DateTime<Utc>> = (0..per_bin)
                .map(|_| {
                    let ms = rng.random_range(0..u64::from(b1 - b0) * 1000);
                    start + Duration::milliseconds(ms as i64)
                })
                .collect();
            times.sort();
            out.extend(times);
        }
    }
    out
}

// keeps request-time streams apart from the per-request wait streams
const REQUEST_STREAMS: u64 = 1 << 60;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::lane_network;
    use crate::flow::{driver_flow, wait_times};
    use crate::simplify::LineMatcher;

    fn grid(window: &str, minutes: u32) -> TimeGrid {
        TimeGrid::with_minutes(window.parse().unwrap(), minutes).unwrap()
    }

    fn requests(g: &TimeGrid, bin: usize, n: usize) -> Vec<DateTime<Utc>> {
        let day = NaiveDate::from_ymd_opt(2019, 11, 28).unwrap();
        (0..n).map(|_| g.window().instant_on(day, g.bin_bounds(bin).0)).collect()
    }

    fn mean(ws: &[SimulatedWait]) -> f64 {
        ws.iter().map(|w| w.wait_minutes).sum::<f64>() / ws.len() as f64
    }

    #[test]
    fn constant_rate_mean_and_scaling() {
        let g = grid("00:00-20:00", 15);
        let model = ArrivalModel::new(g, vec![2.0 / 15.0; g.len()], 3).unwrap();
        let reqs = requests(&g, 4, 100_000);
        let w = simulate_waits(&model, &reqs, None).unwrap();
        assert!(w.iter().all(|x| !x.censored));
        let m1 = mean(&w);
        assert!((m1 - 7.5).abs() / 7.5 < 0.05, "{m1}");

        let fast = ArrivalModel::new(g, vec![4.0 / 15.0; g.len()], 4).unwrap();
        let m2 = mean(&simulate_waits(&fast, &reqs, None).unwrap());
        assert!((m2 / m1 - 0.5).abs() < 0.05 * 0.5 * 2.0, "{m1} {m2}");
    }

    #[test]
    fn zero_rate_censors_everything() {
        let g = grid("06:30-09:00", 15);
        let model = ArrivalModel::new(g, vec![0.0; 10], 1).unwrap();
        let w = simulate_waits(&model, &requests(&g, 2, 50), None).unwrap();
        assert!(w.iter().all(|x| x.censored && x.wait_minutes == 120.0));
        let w = simulate_waits(&model, &requests(&g, 2, 5), Some(30.0)).unwrap();
        assert!(w.iter().all(|x| x.censored && x.wait_minutes == 30.0));
    }

    #[test]
    fn willingness_thins_arrivals() {
        let g = grid("00:00-20:00", 15);
        let reqs = requests(&g, 0, 50_000);
        let full = ArrivalModel::new(g, vec![0.2; g.len()], 9).unwrap();
        let half = full.clone().with_willingness(0.5).unwrap();
        let r = mean(&simulate_waits(&half, &reqs, None).unwrap())
            / mean(&simulate_waits(&full, &reqs, None).unwrap());
        assert!((r - 2.0).abs() < 0.1, "{r}");
        assert!(full.with_willingness(1.5).is_err());
    }

    #[test]
    fn memoryless() {
        let g = grid("00:00-20:00", 15);
        let model = ArrivalModel::new(g, vec![2.0 / 15.0; g.len()], 21).unwrap();
        let w = simulate_waits(&model, &requests(&g, 0, 100_000), None).unwrap();
        let all = mean(&w);
        let tail: Vec<f64> = w.iter().map(|x| x.wait_minutes).filter(|&x| x > 5.0).map(|x| x - 5.0).collect();
        let cond = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((cond - all).abs() / all < 0.05, "{cond} vs {all}");
    }

    #[test]
    fn request_outside_window_rejected() {
        let g = grid("06:30-09:00", 15);
        let model = ArrivalModel::new(g, vec![0.1; 10], 1).unwrap();
        let day = NaiveDate::from_ymd_opt(2019, 11, 28).unwrap();
        let t = g.window().instant_on(day, 10 * 3600);
        assert_eq!(simulate_waits(&model, &[t], None).unwrap_err(), SimulateError::RequestOutsideWindow(t));
    }

    #[test]
    fn piecewise_rate_crosses_bins() {
        // empty first bin: every wait is at least the remaining bin time
        let g = grid("06:00-07:00", 15);
        let model = ArrivalModel::new(g, vec![0.0, 1.0, 1.0, 1.0], 5).unwrap();
        let w = simulate_waits(&model, &requests(&g, 0, 1000), None).unwrap();
        assert!(w.iter().all(|x| x.wait_minutes >= 15.0));
        let m = mean(&w);
        assert!((m - 16.0).abs() < 0.2, "{m}");
    }

    fn lane_scenario(days: u32) -> SyntheticScenario {
        let g = grid("06:30-09:00", 15);
        let flows = vec![1.0, 1.5, 2.5, 1.5, 3.0, 1.5, 2.0, 2.0, 2.0, 1.0];
        SyntheticScenario::new(lane_network(), "B>S".parse().unwrap(), g, flows, days)
    }

    #[test]
    fn round_trip_reproduces_targets() {
        let sc = lane_scenario(2);
        let traces = generate_traces(&sc).unwrap();
        assert_eq!(traces.len(), 36);
        let m = LineMatcher::new(&sc.network, &sc.line, sc.radius_m, sc.match_window().unwrap()).unwrap();
        let simplified = m.simplify_all(&traces);
        assert_eq!(simplified.len(), traces.len());
        assert!(simplified.iter().all(|s| s.node_ids() == vec!["B", "V", "S"]));
        let f = driver_flow(&simplified, &sc.line, &sc.grid, 2).unwrap();
        assert_eq!(f.counts, sc.flows);
        assert_eq!(wait_times(&f).waits[0], Some(15.0));
    }

    #[test]
    fn infeasible_and_degenerate_scenarios() {
        assert!(matches!(generate_traces(&lane_scenario(1)), Err(SimulateError::InfeasibleScenario(_))));
        let mut sc = lane_scenario(2);
        sc.noise_sigma_m = 260.0;
        assert!(matches!(generate_traces(&sc), Err(SimulateError::InfeasibleScenario(_))));
        let mut zero = lane_scenario(1);
        zero.flows = vec![0.0; 10];
        assert!(generate_traces(&zero).unwrap().is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let sc = lane_scenario(2);
        assert_eq!(generate_traces(&sc).unwrap(), generate_traces(&sc).unwrap());
        let mut other = lane_scenario(2);
        other.seed = 1;
        assert_ne!(generate_traces(&sc).unwrap(), generate_traces(&other).unwrap());
    }

    #[test]
    fn uniform_requests_stay_in_their_bins() {
        let g = TimeGrid::with_minutes(DailyWindow::utc("08:00", "09:00").unwrap(), 15).unwrap();
        let day = NaiveDate::from_ymd_opt(2019, 11, 25).unwrap();
        let reqs = uniform_requests(&g, day, 2, 3, 7);
        assert_eq!(reqs.len(), 24);
        for (k, t) in reqs.iter().enumerate() {
            assert_eq!(g.bin_of(*t), Some((k / 3) % 4));
        }
        assert_eq!(reqs, uniform_requests(&g, day, 2, 3, 7));
        assert_ne!(reqs, uniform_requests(&g, day, 2, 3, 8));
    }
}
