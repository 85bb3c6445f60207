//! A five-node network shaped like the Lyon-area Lane service, used by the
//! demo scenario, examples and tests.
//!
//! Coordinates are approximate public locations of the meeting points.
//! Edges make `B>S` realizable both directly and through `V`.

use crate::geo::GeoPoint;
use crate::network::{CarpoolNetwork, MeetingPoint};

pub const LANE_NODES: [(&str, &str, f64, f64); 5] = [
    ("L", "Lyon Mermoz", 4.8870, 45.7330),
    ("S", "St-Priest Parc Techno", 4.9560, 45.7180),
    ("A", "Aeroport Lyon-St Exupery", 5.0800, 45.7240),
    ("V", "Villefontaine The Village", 5.1500, 45.6140),
    ("B", "Bourgoin La Grive Sortie 7", 5.2450, 45.6050),
];

pub const LANE_EDGES: [(&str, &str); 10] = [
    ("B", "V"),
    ("V", "S"),
    ("B", "S"),
    ("S", "L"),
    ("V", "A"),
    ("V", "B"),
    ("S", "V"),
    ("S", "B"),
    ("L", "S"),
    ("A", "V"),
];

pub fn lane_network() -> CarpoolNetwork {
    let points = LANE_NODES
        .iter()
        .map(|&(id, name, lon, lat)| {
            MeetingPoint::new(id, name, GeoPoint::new(lon, lat).expect("fixture coordinates"))
        })
        .collect();
    let edges: Vec<(String, String)> =
        LANE_EDGES.iter().map(|&(a, b)| (a.to_string(), b.to_string())).collect();
    CarpoolNetwork::build(points, &edges).expect("fixture network is valid")
}
