//! Driver flow maps as GeoJSON.

use serde_json::{json, Map, Value};

use super::format_instant;
use crate::cluster::ClusterLabels;
use crate::geo::GeoPoint;
use crate::network::CarpoolNetwork;
use crate::simplify::SimplifiedTrace;

fn position(p: GeoPoint) -> Value {
    json!([p.lon(), p.lat()])
}

/// One LineString per simplified trace (origin, passes, destination) and
/// one Point per meeting point.
pub fn flow_map(
    simplified: &[SimplifiedTrace],
    labels: Option<&ClusterLabels>,
    network: &CarpoolNetwork,
) -> Value {
    let mut features = Vec::with_capacity(simplified.len() + network.len());
    for t in simplified {
        let mut coords = vec![position(t.origin.position)];
        coords.extend(t.passes.iter().map(|p| position(p.closest_sample.position)));
        coords.push(position(t.destination.position));
        let mut props = Map::new();
        props.insert("trace_id".into(), json!(t.trace_id));
        if let Some(label) = labels.and_then(|l| l.label_of(&t.trace_id)) {
            props.insert("cluster_label".into(), json!(label));
        }
        props.insert(
            "pass_times".into(),
            Value::Array(
                t.passes
                    .iter()
                    .map(|p| {
                        json!({
                            "meeting_point_id": p.meeting_point_id,
                            "arrival": format_instant(p.arrival_time()),
                        })
                    })
                    .collect(),
            ),
        );
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": props,
        }));
    }
    for m in network.nodes() {
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": position(m.location) },
            "properties": { "id": m.id, "name": m.name },
        }));
    }
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn flow_map_bytes(value: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("json values serialize");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::lane_network;
    use crate::geo::GpsSample;
    use crate::simplify::MeetingPointPass;
    use chrono::DateTime;

    fn sample(lon: f64, lat: f64, t: i64) -> GpsSample {
        GpsSample::new(GeoPoint::new(lon, lat).unwrap(), DateTime::from_timestamp(t, 0).unwrap())
    }

    fn three_pass() -> SimplifiedTrace {
        let pass = |id: &str, lon, lat, t| MeetingPointPass {
            meeting_point_id: id.into(),
            closest_sample: sample(lon, lat, t),
            distance: 12.0,
        };
        SimplifiedTrace {
            trace_id: "x".into(),
            origin: sample(5.3, 45.58, 0),
            passes: vec![
                pass("B", 5.245, 45.605, 600),
                pass("V", 5.15, 45.614, 1000),
                pass("S", 4.956, 45.718, 1800),
            ],
            destination: sample(4.9, 45.74, 2400),
            source_length: 480,
        }
    }

    fn coordinates_in_range(v: &Value) -> bool {
        match v {
            Value::Array(a) if a.len() == 2 && a.iter().all(Value::is_number) => {
                let (lon, lat) = (a[0].as_f64().unwrap(), a[1].as_f64().unwrap());
                (-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat)
            }
            Value::Array(a) => a.iter().all(coordinates_in_range),
            _ => false,
        }
    }

    #[test]
    fn five_position_line_plus_points() {
        let net = lane_network();
        let map = flow_map(&[three_pass()], None, &net);
        let features = map["features"].as_array().unwrap();
        assert_eq!(features.len(), 1 + net.len());
        assert_eq!(features[0]["geometry"]["coordinates"].as_array().unwrap().len(), 5);
        assert_eq!(features[0]["properties"]["pass_times"][1]["meeting_point_id"], "V");
        assert!(features[0]["properties"].get("cluster_label").is_none());
        for f in features {
            assert_eq!(f["type"], "Feature");
            assert!(coordinates_in_range(&f["geometry"]["coordinates"]));
        }
        assert_eq!(features[1]["geometry"]["type"], "Point");
    }

    #[test]
    fn empty_and_labelled() {
        let net = lane_network();
        let map = flow_map(&[], None, &net);
        assert!(map["features"].as_array().unwrap().iter().all(|f| f["geometry"]["type"] == "Point"));
        let labels = ClusterLabels::new(vec!["x".into()], vec![1]);
        let map = flow_map(&[three_pass()], Some(&labels), &net);
        assert_eq!(map["features"][0]["properties"]["cluster_label"], 1);
    }
}
