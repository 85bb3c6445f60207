//! Geodesic primitives: points, timestamped samples, traces, and a
//! meter-scale planar distance.
//!
//! Distances use a local equirectangular approximation, which stays within
//! 0.5% of the great-circle distance for separations under 50 km at
//! mid-latitudes. That is the scale of a commuter carpooling line.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate (lon {lon}, lat {lat})")]
    InvalidCoordinate { lon: f64, lat: f64 },
    #[error("buffer radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("trace {id:?} has {len} samples, at least 2 are required")]
    TooShort { id: String, len: usize },
    #[error("trace {id:?} has decreasing timestamps at sample {index}")]
    NonMonotoneTimestamps { id: String, index: usize },
}

/// A WGS84 longitude/latitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lon: f64,
    lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !lon.is_finite() || !lat.is_finite() || lon.abs() > 180.0 || lat.abs() > 90.0 {
            return Err(GeoError::InvalidCoordinate { lon, lat });
        }
        Ok(Self { lon, lat })
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    /// Point displaced by `(east, north)` meters using the same local
    /// equirectangular mapping as [`planar_distance`].
    pub fn offset_m(&self, east: f64, north: f64) -> Result<Self, GeoError> {
        let lat = self.lat + (north / EARTH_RADIUS_M).to_degrees();
        let lat_mid = 0.5 * (lat + self.lat);
        let lon = self.lon + (east / (EARTH_RADIUS_M * lat_mid.to_radians().cos())).to_degrees();
        GeoPoint::new(lon, lat)
    }
}

/// Planar distance in meters between two points.
///
/// `Δx = R·cos(lat_mid)·Δlon`, `Δy = R·Δlat` (radians), `d = √(Δx² + Δy²)`.
#[inline]
pub fn planar_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat_mid = (0.5 * (a.lat + b.lat)).to_radians();
    let dx = EARTH_RADIUS_M * lat_mid.cos() * (b.lon - a.lon).to_radians();
    let dy = EARTH_RADIUS_M * (b.lat - a.lat).to_radians();
    dx.hypot(dy)
}

/// Projects `p` to planar meters `(east, north)` about `reference`.
#[inline]
pub fn project(p: GeoPoint, reference: GeoPoint) -> (f64, f64) {
    let cos_ref = reference.lat.to_radians().cos();
    (
        EARTH_RADIUS_M * cos_ref * (p.lon - reference.lon).to_radians(),
        EARTH_RADIUS_M * (p.lat - reference.lat).to_radians(),
    )
}

/// Inclusive disc test: a point exactly `radius` meters away is inside.
pub fn within_buffer(p: GeoPoint, center: GeoPoint, radius: f64) -> Result<bool, GeoError> {
    check_radius(radius)?;
    Ok(planar_distance(p, center) <= radius)
}

pub(crate) fn check_radius(radius: f64) -> Result<(), GeoError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(GeoError::NonPositiveRadius(radius))
    }
}

/// One GPS fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsSample {
    pub position: GeoPoint,
    pub timestamp: DateTime<Utc>,
}

impl GpsSample {
    pub fn new(position: GeoPoint, timestamp: DateTime<Utc>) -> Self {
        Self { position, timestamp }
    }
}

/// A single driver journey: at least two samples with non-decreasing
/// timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    id: String,
    samples: Vec<GpsSample>,
}

impl Trace {
    pub fn new(id: impl Into<String>, samples: Vec<GpsSample>) -> Result<Self, GeoError> {
        let id = id.into();
        if samples.len() < 2 {
            return Err(GeoError::TooShort { id, len: samples.len() });
        }
        if let Some(index) = samples.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
            return Err(GeoError::NonMonotoneTimestamps { id, index: index + 1 });
        }
        Ok(Self { id, samples })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &[GpsSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn origin(&self) -> &GpsSample {
        &self.samples[0]
    }

    pub fn destination(&self) -> &GpsSample {
        &self.samples[self.samples.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
        let (la1, la2) = (a.lat().to_radians(), b.lat().to_radians());
        let dlat = la2 - la1;
        let dlon = (b.lon() - a.lon()).to_radians();
        let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * h.sqrt().asin()
    }

    fn p(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    #[test]
    fn identity_is_zero() {
        let a = p(5.1, 45.6);
        assert_eq!(planar_distance(a, a), 0.0);
    }

    #[test]
    fn one_degree_of_latitude() {
        let d = planar_distance(p(0.0, 45.0), p(0.0, 46.0));
        let oracle = haversine(p(0.0, 45.0), p(0.0, 46.0));
        assert!((oracle - 111_195.0).abs() < 1.0);
        assert!((d - 111_195.0).abs() < 600.0, "{d}");
    }

    #[test]
    fn invalid_coordinates_rejected() {
        assert!(GeoPoint::new(0.0, 95.0).is_err());
        assert!(GeoPoint::new(181.0, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn buffer_edges() {
        let c = p(5.0, 45.0);
        assert!(within_buffer(c, c, 1.0).unwrap());
        let near = c.offset_m(999.0, 0.0).unwrap();
        let far = c.offset_m(1001.0, 0.0).unwrap();
        assert!((planar_distance(near, c) - 999.0).abs() < 1e-6);
        assert!(within_buffer(near, c, 1000.0).unwrap());
        assert!(!within_buffer(far, c, 1000.0).unwrap());
        assert_eq!(within_buffer(c, c, 0.0), Err(GeoError::NonPositiveRadius(0.0)));
        assert!(within_buffer(c, c, -3.0).is_err());
    }

    #[test]
    fn trace_invariants() {
        let t0 = DateTime::from_timestamp(1_000, 0).unwrap();
        let t1 = DateTime::from_timestamp(999, 0).unwrap();
        let a = GpsSample::new(p(0.0, 0.0), t0);
        let b = GpsSample::new(p(0.0, 0.0), t1);
        assert!(matches!(Trace::new("x", vec![a]), Err(GeoError::TooShort { .. })));
        assert!(matches!(Trace::new("x", vec![a, b]), Err(GeoError::NonMonotoneTimestamps { index: 1, .. })));
        assert_eq!(Trace::new("x", vec![b, a]).unwrap().len(), 2);
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(
            lon1 in -180.0f64..180.0, lat1 in -89.0f64..89.0,
            lon2 in -180.0f64..180.0, lat2 in -89.0f64..89.0,
        ) {
            let (a, b) = (p(lon1, lat1), p(lon2, lat2));
            let d = planar_distance(a, b);
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, planar_distance(b, a));
        }

        #[test]
        fn close_to_haversine_within_50_km(
            lon in -170.0f64..170.0, lat in -59.5f64..59.5,
            bearing in 0.0f64..std::f64::consts::TAU, dist in 10.0f64..50_000.0,
        ) {
            let a = p(lon, lat);
            let b = a.offset_m(dist * bearing.cos(), dist * bearing.sin()).unwrap();
            prop_assume!(b.lat().abs() < 60.0);
            let exact = haversine(a, b);
            let approx = planar_distance(a, b);
            prop_assert!((approx - exact).abs() / exact < 0.005, "{} vs {}", approx, exact);
        }

        #[test]
        fn buffer_monotone_in_radius(
            east in -3000.0f64..3000.0, north in -3000.0f64..3000.0,
            r in 1.0f64..3000.0, extra in 0.0f64..3000.0,
        ) {
            let c = p(5.0, 45.6);
            let q = c.offset_m(east, north).unwrap();
            if within_buffer(q, c, r).unwrap() {
                prop_assert!(within_buffer(q, c, r + extra).unwrap());
            }
        }
    }
}
