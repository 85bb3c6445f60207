//! Domain inputs: traces, networks, OD matrices and simplified traces.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{csv_bytes, format_instant, open, parse_instant, IoError};
use crate::geo::{GeoPoint, GpsSample, Trace};
use crate::network::{CarpoolNetwork, MeetingPoint};
use crate::participation::{OdEntry, OdMatrix};
use crate::simplify::{MeetingPointPass, SimplifiedTrace};

/// A row or trace dropped during ingestion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowIssue {
    pub line: u64,
    pub trace_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceLoad {
    /// Accepted traces, sorted by id.
    pub traces: Vec<Trace>,
    pub issues: Vec<RowIssue>,
}

fn reader(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

fn parse_err(source: &str, err: &csv::Error) -> IoError {
    IoError::Parse {
        file: source.to_string(),
        line: err.position().map_or(0, |p| p.line()),
        message: err.to_string(),
    }
}

/// Every row, failing on the first malformed one.
pub(crate) fn strict_rows<T: DeserializeOwned>(
    input: impl Read,
    source: &str,
) -> Result<Vec<(u64, T)>, IoError> {
    let mut r = reader(input);
    let headers = r.headers().map_err(|e| parse_err(source, &e))?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_err(source, &e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec.deserialize(Some(&headers)).map_err(|e| IoError::Parse {
            file: source.to_string(),
            line,
            message: e.to_string(),
        })?;
        out.push((line, row));
    }
    Ok(out)
}

fn point(lon: f64, lat: f64, source: &str, line: u64) -> Result<GeoPoint, IoError> {
    GeoPoint::new(lon, lat).map_err(|e| IoError::Parse {
        file: source.to_string(),
        line,
        message: e.to_string(),
    })
}

#[derive(Deserialize)]
struct TraceRow {
    trace_id: String,
    #[serde(alias = "timestamp_iso8601_utc")]
    timestamp: String,
    lon: f64,
    lat: f64,
}

/// Reads `trace_id,timestamp,lon,lat` rows. Malformed rows are skipped and
/// reported; a trace whose timestamps decrease is dropped whole. Rows of a
/// trace keep their file order.
pub fn parse_traces(input: impl Read, source: &str) -> Result<TraceLoad, IoError> {
    let mut r = reader(input);
    let headers = r.headers().map_err(|e| parse_err(source, &e))?.clone();
    let mut issues = Vec::new();
    let mut groups: BTreeMap<String, Vec<(u64, GpsSample)>> = BTreeMap::new();
    for rec in r.records() {
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                issues.push(RowIssue {
                    line: e.position().map_or(0, |p| p.line()),
                    trace_id: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let parsed =
            rec.deserialize::<TraceRow>(Some(&headers)).map_err(|e| (None, e.to_string())).and_then(|row| {
                let id = Some(row.trace_id.clone());
                let position = GeoPoint::new(row.lon, row.lat).map_err(|e| (id.clone(), e.to_string()))?;
                let timestamp = parse_instant(&row.timestamp).map_err(|e| (id, e))?;
                Ok((row.trace_id, GpsSample::new(position, timestamp)))
            });
        match parsed {
            Ok((id, sample)) => groups.entry(id).or_default().push((line, sample)),
            Err((trace_id, message)) => issues.push(RowIssue { line, trace_id, message }),
        }
    }
    if groups.is_empty() {
        return Err(IoError::EmptyInput(source.to_string()));
    }
    let mut traces = Vec::with_capacity(groups.len());
    for (id, rows) in groups {
        if let Some(w) = rows.windows(2).find(|w| w[1].1.timestamp < w[0].1.timestamp) {
            issues.push(RowIssue {
                line: w[1].0,
                trace_id: Some(id),
                message: "timestamps decrease; trace rejected".into(),
            });
            continue;
        }
        let first_line = rows[0].0;
        match Trace::new(id.clone(), rows.into_iter().map(|(_, s)| s).collect()) {
            Ok(t) => traces.push(t),
            Err(e) => issues.push(RowIssue {
                line: first_line,
                trace_id: Some(id),
                message: format!("{e}; trace rejected"),
            }),
        }
    }
    issues.sort_by_key(|i| i.line);
    Ok(TraceLoad { traces, issues })
}

pub fn read_traces(path: &Path) -> Result<TraceLoad, IoError> {
    parse_traces(open(path)?, &path.display().to_string())
}

/// Trace CSV sorted by (trace id, timestamp).
pub fn traces_csv(traces: &[Trace]) -> Vec<u8> {
    let mut sorted: Vec<&Trace> = traces.iter().collect();
    sorted.sort_by(|a, b| a.id().cmp(b.id()));
    let rows = sorted.into_iter().flat_map(|t| {
        t.samples().iter().map(move |s| {
            vec![
                t.id().to_string(),
                format_instant(s.timestamp),
                s.position.lon().to_string(),
                s.position.lat().to_string(),
            ]
        })
    });
    csv_bytes(&["trace_id", "timestamp", "lon", "lat"], rows)
}

#[derive(Deserialize)]
struct NodeRow {
    id: String,
    name: String,
    lon: f64,
    lat: f64,
}

#[derive(Deserialize)]
struct EdgeRow {
    from_id: String,
    to_id: String,
}

pub fn parse_network(
    nodes: impl Read,
    nodes_source: &str,
    edges: impl Read,
    edges_source: &str,
) -> Result<CarpoolNetwork, IoError> {
    let points = strict_rows::<NodeRow>(nodes, nodes_source)?
        .into_iter()
        .map(|(line, r)| Ok(MeetingPoint::new(r.id, r.name, point(r.lon, r.lat, nodes_source, line)?)))
        .collect::<Result<Vec<_>, IoError>>()?;
    if points.is_empty() {
        return Err(IoError::EmptyInput(nodes_source.to_string()));
    }
    let edges: Vec<(String, String)> =
        strict_rows::<EdgeRow>(edges, edges_source)?.into_iter().map(|(_, r)| (r.from_id, r.to_id)).collect();
    CarpoolNetwork::build(points, &edges)
        .map_err(|e| IoError::Invalid { file: edges_source.to_string(), message: e.to_string() })
}

pub fn read_network(nodes: &Path, edges: &Path) -> Result<CarpoolNetwork, IoError> {
    parse_network(open(nodes)?, &nodes.display().to_string(), open(edges)?, &edges.display().to_string())
}

pub fn nodes_csv(network: &CarpoolNetwork) -> Vec<u8> {
    let rows = network.nodes().iter().map(|m| {
        vec![m.id.clone(), m.name.clone(), m.location.lon().to_string(), m.location.lat().to_string()]
    });
    csv_bytes(&["id", "name", "lon", "lat"], rows)
}

pub fn edges_csv(network: &CarpoolNetwork) -> Vec<u8> {
    csv_bytes(&["from_id", "to_id"], network.edges().into_iter().map(|(a, b)| vec![a, b]))
}

#[derive(Deserialize)]
struct OdRow {
    origin_id: String,
    dest_id: String,
    count: f64,
    origin_lon: f64,
    origin_lat: f64,
    dest_lon: f64,
    dest_lat: f64,
}

pub fn parse_od(input: impl Read, source: &str) -> Result<OdMatrix, IoError> {
    let entries = strict_rows::<OdRow>(input, source)?
        .into_iter()
        .map(|(line, r)| {
            Ok(OdEntry {
                origin_id: r.origin_id,
                destination_id: r.dest_id,
                count: r.count,
                origin: point(r.origin_lon, r.origin_lat, source, line)?,
                destination: point(r.dest_lon, r.dest_lat, source, line)?,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    if entries.is_empty() {
        return Err(IoError::EmptyInput(source.to_string()));
    }
    OdMatrix::new(entries).map_err(|e| IoError::Invalid { file: source.to_string(), message: e.to_string() })
}

pub fn read_od(path: &Path) -> Result<OdMatrix, IoError> {
    parse_od(open(path)?, &path.display().to_string())
}

const SIMPLIFIED_HEADER: [&str; 9] =
    ["trace_id", "seq", "kind", "meeting_point_id", "timestamp", "lon", "lat", "distance_m", "source_length"];

/// One row per simplified point: the origin, each pass, the destination.
pub fn simplified_csv(traces: &[SimplifiedTrace]) -> Vec<u8> {
    let rows = traces.iter().flat_map(|t| {
        let sample_row = |seq: usize, kind: &str, id: &str, s: &GpsSample, dist: String| {
            vec![
                t.trace_id.clone(),
                seq.to_string(),
                kind.to_string(),
                id.to_string(),
                format_instant(s.timestamp),
                s.position.lon().to_string(),
                s.position.lat().to_string(),
                dist,
                t.source_length.to_string(),
            ]
        };
        let mut rows = vec![sample_row(0, "origin", "", &t.origin, String::new())];
        for (k, p) in t.passes.iter().enumerate() {
            rows.push(sample_row(
                k + 1,
                "pass",
                &p.meeting_point_id,
                &p.closest_sample,
                p.distance.to_string(),
            ));
        }
        rows.push(sample_row(t.passes.len() + 1, "destination", "", &t.destination, String::new()));
        rows
    });
    csv_bytes(&SIMPLIFIED_HEADER, rows)
}

#[derive(Deserialize)]
struct SimplifiedRow {
    trace_id: String,
    seq: usize,
    kind: String,
    meeting_point_id: String,
    timestamp: String,
    lon: f64,
    lat: f64,
    distance_m: Option<f64>,
    source_length: usize,
}

/// Inverse of [`simplified_csv`]. Traces keep their first-appearance order.
pub fn parse_simplified(input: impl Read, source: &str) -> Result<Vec<SimplifiedTrace>, IoError> {
    let bad = |line: u64, message: String| IoError::Parse { file: source.to_string(), line, message };
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<(u64, SimplifiedRow)>> = BTreeMap::new();
    for (line, row) in strict_rows::<SimplifiedRow>(input, source)? {
        if !groups.contains_key(&row.trace_id) {
            order.push(row.trace_id.clone());
        }
        groups.entry(row.trace_id.clone()).or_default().push((line, row));
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(&id).expect("grouped id");
        rows.sort_by_key(|(_, r)| r.seq);
        let n = rows.len();
        let mut origin = None;
        let mut destination = None;
        let mut passes = Vec::new();
        let source_length = rows[0].1.source_length;
        for (k, (line, r)) in rows.into_iter().enumerate() {
            if r.seq != k {
                return Err(bad(line, format!("trace {id:?}: expected seq {k}, got {}", r.seq)));
            }
            let sample = GpsSample::new(
                point(r.lon, r.lat, source, line)?,
                parse_instant(&r.timestamp).map_err(|m| bad(line, m))?,
            );
            match (r.kind.as_str(), k) {
                ("origin", 0) => origin = Some(sample),
                ("destination", k) if k + 1 == n && k > 0 => destination = Some(sample),
                ("pass", k) if k > 0 && k + 1 < n => passes.push(MeetingPointPass {
                    meeting_point_id: r.meeting_point_id,
                    closest_sample: sample,
                    distance: r.distance_m.ok_or_else(|| bad(line, "pass without distance_m".into()))?,
                }),
                (kind, _) => {
                    return Err(bad(line, format!("trace {id:?}: unexpected {kind:?} row at seq {k}")))
                }
            }
        }
        let (Some(origin), Some(destination)) = (origin, destination) else {
            return Err(IoError::Invalid {
                file: source.to_string(),
                message: format!("trace {id:?} lacks an origin or destination row"),
            });
        };
        out.push(SimplifiedTrace { trace_id: id, origin, passes, destination, source_length });
    }
    if out.is_empty() {
        return Err(IoError::EmptyInput(source.to_string()));
    }
    Ok(out)
}

pub fn read_simplified(path: &Path) -> Result<Vec<SimplifiedTrace>, IoError> {
    parse_simplified(open(path)?, &path.display().to_string())
}
