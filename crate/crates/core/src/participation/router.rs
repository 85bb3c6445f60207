//! Route finders used to turn OD centroid pairs into likely itineraries.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::{planar_distance, GeoPoint, EARTH_RADIUS_M};

pub const ROUTER_URL_ENV: &str = "ROUTER_URL";
pub const ROUTER_API_KEY_ENV: &str = "ROUTER_API_KEY";

/// Largest allowed gap between a route endpoint and its requested centroid.
pub const ENDPOINT_TOLERANCE_M: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("router request failed: {0}")]
    Transport(String),
    #[error("router response could not be read: {0}")]
    BadResponse(String),
    #[error("route has {0} points, at least 2 are required")]
    TooShort(usize),
    #[error("route endpoint is {0:.0} m from the requested centroid")]
    EndpointMismatch(f64),
    #[error("router is not configured: {0}")]
    NotConfigured(String),
}

/// Given two points and a departure instant, return a polyline.
pub trait RouterClient: Send + Sync {
    fn route(
        &self,
        origin: GeoPoint,
        destination: GeoPoint,
        departure: DateTime<Utc>,
    ) -> Result<Vec<GeoPoint>, RoutingError>;

    fn name(&self) -> &str;
}

/// Checks the polyline invariants of a route plan.
pub fn validate_polyline(
    polyline: &[GeoPoint],
    origin: GeoPoint,
    destination: GeoPoint,
) -> Result<(), RoutingError> {
    if polyline.len() < 2 {
        return Err(RoutingError::TooShort(polyline.len()));
    }
    for (end, want) in [(polyline[0], origin), (polyline[polyline.len() - 1], destination)] {
        let gap = planar_distance(end, want);
        if gap > ENDPOINT_TOLERANCE_M {
            return Err(RoutingError::EndpointMismatch(gap));
        }
    }
    Ok(())
}

/// Offline router: the great-circle arc between the endpoints, densified
/// to at most `spacing_m` between consecutive points.
#[derive(Debug, Clone)]
pub struct StraightLineRouter {
    pub spacing_m: f64,
}

impl Default for StraightLineRouter {
    fn default() -> Self {
        Self { spacing_m: 100.0 }
    }
}

fn to_unit(p: GeoPoint) -> [f64; 3] {
    let (lon, lat) = (p.lon().to_radians(), p.lat().to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

fn from_unit(v: [f64; 3]) -> GeoPoint {
    let lat = v[2].clamp(-1.0, 1.0).asin().to_degrees();
    let lon = v[1].atan2(v[0]).to_degrees();
    GeoPoint::new(lon, lat).expect("unit vector maps to a valid coordinate")
}

/// Points along the great circle from `a` to `b`, endpoints included.
pub fn great_circle_points(a: GeoPoint, b: GeoPoint, spacing_m: f64) -> Vec<GeoPoint> {
    let (u, v) = (to_unit(a), to_unit(b));
    let dot = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).clamp(-1.0, 1.0);
    let omega = dot.acos();
    let steps = ((omega * EARTH_RADIUS_M) / spacing_m).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(a);
    for k in 1..steps {
        let t = k as f64 / steps as f64;
        let (wa, wb) = if omega.abs() < 1e-12 {
            (1.0 - t, t)
        } else {
            (((1.0 - t) * omega).sin() / omega.sin(), (t * omega).sin() / omega.sin())
        };
        out.push(from_unit([wa * u[0] + wb * v[0], wa * u[1] + wb * v[1], wa * u[2] + wb * v[2]]));
    }
    out.push(b);
    out
}

impl RouterClient for StraightLineRouter {
    fn route(
        &self,
        origin: GeoPoint,
        destination: GeoPoint,
        _departure: DateTime<Utc>,
    ) -> Result<Vec<GeoPoint>, RoutingError> {
        Ok(great_circle_points(origin, destination, self.spacing_m))
    }

    fn name(&self) -> &str {
        "straight-line"
    }
}

/// Generic HTTP routing client.
///
/// The endpoint template may contain `{olon}`, `{olat}`, `{dlon}`,
/// `{dlat}`, `{departure}` (RFC 3339, UTC) and `{key}`. The response must
/// be JSON; `coordinates_pointer` (a JSON pointer) selects an array of
/// `[lon, lat, ...]` positions. The default pointer fits OSRM-style
/// responses requested with `geometries=geojson`.
#[derive(Debug, Clone, Serialize)]
pub struct HttpRouter {
    pub endpoint_template: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub cache_dir: Option<PathBuf>,
    pub coordinates_pointer: String,
}

impl HttpRouter {
    pub fn new(endpoint_template: impl Into<String>) -> Self {
        Self {
            endpoint_template: endpoint_template.into(),
            api_key: None,
            timeout: Duration::from_secs(30),
            cache_dir: None,
            coordinates_pointer: "/routes/0/geometry/coordinates".to_string(),
        }
    }

    /// Reads `ROUTER_URL` and, if set, `ROUTER_API_KEY`.
    pub fn from_env() -> Result<Self, RoutingError> {
        let url = std::env::var(ROUTER_URL_ENV)
            .map_err(|_| RoutingError::NotConfigured(format!("{ROUTER_URL_ENV} is not set")))?;
        let mut r = Self::new(url);
        r.api_key = std::env::var(ROUTER_API_KEY_ENV).ok();
        Ok(r)
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn fill(&self, origin: GeoPoint, destination: GeoPoint, departure: &str, key: &str) -> String {
        self.endpoint_template
            .replace("{olon}", &origin.lon().to_string())
            .replace("{olat}", &origin.lat().to_string())
            .replace("{dlon}", &destination.lon().to_string())
            .replace("{dlat}", &destination.lat().to_string())
            .replace("{departure}", departure)
            .replace("{key}", key)
    }

    /// Cache file for a request. The key omits the API key.
    pub fn cache_path(
        &self,
        origin: GeoPoint,
        destination: GeoPoint,
        departure: DateTime<Utc>,
    ) -> Option<PathBuf> {
        let dir = self.cache_dir.as_ref()?;
        let dep = departure.to_rfc3339_opts(SecondsFormat::Secs, true);
        let mut h = Sha256::new();
        let key = format!(
            "{}|{}|{}|{}|{}|{}",
            self.endpoint_template,
            origin.lon(),
            origin.lat(),
            destination.lon(),
            destination.lat(),
            dep
        );
        h.update(key.as_bytes());
        Some(dir.join(format!("{}.json", hex::encode(h.finalize().as_slice()))))
    }

    fn fetch(&self, url: &str) -> Result<String, RoutingError> {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let mut resp = agent.get(url).call().map_err(|e| RoutingError::Transport(e.to_string()))?;
        resp.body_mut().read_to_string().map_err(|e| RoutingError::Transport(e.to_string()))
    }

    pub fn parse_response(&self, body: &str) -> Result<Vec<GeoPoint>, RoutingError> {
        let value: serde_json::Value =
            serde_json::from_str(body).map_err(|e| RoutingError::BadResponse(e.to_string()))?;
        let coords = value
            .pointer(&self.coordinates_pointer)
            .and_then(|v| v.as_array())
            .ok_or_else(|| RoutingError::BadResponse(format!("no array at {}", self.coordinates_pointer)))?;
        coords
            .iter()
            .map(|pos| {
                let pair = pos
                    .as_array()
                    .filter(|a| a.len() >= 2)
                    .and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?)));
                let (lon, lat) =
                    pair.ok_or_else(|| RoutingError::BadResponse(format!("bad position {pos}")))?;
                GeoPoint::new(lon, lat).map_err(|e| RoutingError::BadResponse(e.to_string()))
            })
            .collect()
    }
}

fn write_atomic(path: &Path, body: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(body.as_bytes())?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl RouterClient for HttpRouter {
    fn route(
        &self,
        origin: GeoPoint,
        destination: GeoPoint,
        departure: DateTime<Utc>,
    ) -> Result<Vec<GeoPoint>, RoutingError> {
        let cache = self.cache_path(origin, destination, departure);
        if let Some(body) = cache.as_ref().and_then(|p| fs::read_to_string(p).ok()) {
            if let Ok(route) = self.parse_response(&body) {
                return Ok(route);
            }
        }
        let dep = departure.to_rfc3339_opts(SecondsFormat::Secs, true);
        let url = self.fill(origin, destination, &dep, self.api_key.as_deref().unwrap_or(""));
        let body = self.fetch(&url)?;
        let route = self.parse_response(&body)?;
        if let Some(p) = cache {
            // a failed cache write only costs a repeated request
            let _ = write_atomic(&p, &body);
        }
        Ok(route)
    }

    fn name(&self) -> &str {
        "http"
    }
}
