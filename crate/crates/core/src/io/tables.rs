//! Result tables written by the command line tool.

use std::io::Read;
use std::path::Path;

use chrono::FixedOffset;
use serde::Deserialize;

use super::{csv_bytes, format_instant, open, IoError};
use crate::cluster::ClusterLabels;
use crate::flow::{FlowProfile, WaitProfile};
use crate::matchprob::MatchProbRow;
use crate::pipeline::CompareRow;
use crate::simulate::SimulatedWait;
use crate::time::{parse_time_of_day, DailyWindow, TimeGrid};

pub const UNAVAILABLE: &str = "NA";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNAVAILABLE.to_string(), |x| x.to_string())
}

pub fn flow_csv(flow: &FlowProfile) -> Vec<u8> {
    let rows = flow.counts.iter().enumerate().map(|(j, c)| {
        let (a, b) = flow.grid.bin_label(j);
        vec![flow.line.clone(), a, b, c.to_string(), flow.day_count.to_string()]
    });
    csv_bytes(&["line", "bin_start", "bin_end", "flow", "day_count"], rows)
}

#[derive(Deserialize)]
struct FlowRow {
    line: String,
    bin_start: String,
    bin_end: String,
    flow: f64,
    day_count: u32,
}

/// Reads a flow CSV back. Bin labels are local times in `offset`.
pub fn parse_flow(input: impl Read, source: &str, offset: FixedOffset) -> Result<FlowProfile, IoError> {
    let bad = |line: u64, message: String| IoError::Parse { file: source.to_string(), line, message };
    let rows = super::records::strict_rows::<FlowRow>(input, source)?;
    let Some((first_line, first)) = rows.first() else {
        return Err(IoError::EmptyInput(source.to_string()));
    };
    let secs = |line: u64, s: &str| parse_time_of_day(s).map_err(|e| bad(line, e.to_string()));
    let start = secs(*first_line, &first.bin_start)?;
    let bin_end = secs(*first_line, &first.bin_end)?;
    let (last_line, last) = rows.last().expect("non-empty");
    let end = secs(*last_line, &last.bin_end)?;
    let window = DailyWindow::new(start, end, offset).map_err(|e| bad(*last_line, e.to_string()))?;
    let grid =
        TimeGrid::new(window, bin_end.saturating_sub(start)).map_err(|e| bad(*first_line, e.to_string()))?;
    for (j, (line, r)) in rows.iter().enumerate() {
        let (a, b) = grid.bin_bounds(j);
        if secs(*line, &r.bin_start)? != a || secs(*line, &r.bin_end)? != b {
            return Err(bad(*line, "bins are not consecutive and equal in length".into()));
        }
        if r.line != first.line || r.day_count != first.day_count {
            return Err(bad(*line, "line and day_count must be constant".into()));
        }
    }
    FlowProfile::new(grid, first.line.clone(), rows.iter().map(|(_, r)| r.flow).collect(), first.day_count)
        .map_err(|e| IoError::Invalid { file: source.to_string(), message: e.to_string() })
}

pub fn read_flow(path: &Path, offset: FixedOffset) -> Result<FlowProfile, IoError> {
    parse_flow(open(path)?, &path.display().to_string(), offset)
}

pub fn wait_csv(flow: &FlowProfile, waits: &WaitProfile) -> Vec<u8> {
    let rows = waits.waits.iter().enumerate().map(|(j, w)| {
        let (a, b) = waits.grid.bin_label(j);
        vec![flow.line.clone(), a, b, flow.counts[j].to_string(), opt(*w)]
    });
    csv_bytes(&["line", "bin_start", "bin_end", "flow", "wait_minutes"], rows)
}

pub fn labels_csv(labels: &ClusterLabels) -> Vec<u8> {
    let rows = labels.assignments.iter().map(|(id, l)| vec![id.clone(), l.to_string()]);
    csv_bytes(&["trace_id", "cluster_label"], rows)
}

#[derive(Deserialize)]
struct LabelRow {
    trace_id: String,
    cluster_label: usize,
}

pub fn parse_labels(input: impl Read, source: &str) -> Result<ClusterLabels, IoError> {
    let rows = super::records::strict_rows::<LabelRow>(input, source)?;
    if let Some((line, _)) = rows.iter().find(|(_, r)| r.cluster_label == 0) {
        return Err(IoError::Parse {
            file: source.to_string(),
            line: *line,
            message: "cluster labels start at 1".into(),
        });
    }
    let (ids, labels) = rows.into_iter().map(|(_, r)| (r.trace_id, r.cluster_label)).unzip();
    Ok(ClusterLabels::new(ids, labels))
}

pub fn read_labels(path: &Path) -> Result<ClusterLabels, IoError> {
    parse_labels(open(path)?, &path.display().to_string())
}

pub fn matchprob_csv(rows: &[MatchProbRow]) -> Vec<u8> {
    let rows = rows.iter().map(|r| vec![r.n.to_string(), r.estimate.to_string(), r.exact.to_string()]);
    csv_bytes(&["n", "p_hat", "exact"], rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> Vec<u8> {
    let pct = |v: Option<f64>| opt(v.map(|x| 100.0 * x));
    let rows = rows.iter().map(|r| {
        vec![
            r.week.clone(),
            r.window.clone(),
            r.door_count.to_string(),
            r.meeting_count.to_string(),
            pct(r.increase),
            opt(r.comparison.door_wait),
            opt(r.comparison.meeting_wait),
            pct(r.comparison.change),
        ]
    });
    csv_bytes(
        &[
            "week",
            "window",
            "door_count",
            "meeting_count",
            "increase_pct",
            "door_wait_min",
            "meeting_wait_min",
            "wait_change_pct",
        ],
        rows,
    )
}

/// Simulated waits next to the prediction for their bin.
pub fn simulated_waits_csv(waits: &[SimulatedWait], predicted: &WaitProfile) -> Vec<u8> {
    let rows = waits.iter().map(|w| {
        let bin = predicted.grid.bin_of(w.requested_at);
        vec![
            format_instant(w.requested_at),
            bin.map_or_else(String::new, |j| predicted.grid.bin_label(j).0),
            w.wait_minutes.to_string(),
            w.censored.to_string(),
            opt(bin.and_then(|j| predicted.waits[j])),
        ]
    });
    csv_bytes(&["requested_at", "bin_start", "wait_minutes", "censored", "predicted_minutes"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::with_minutes(DailyWindow::utc("08:00", "08:45").unwrap(), 15).unwrap()
    }

    #[test]
    fn flow_round_trip_and_na_waits() {
        let flow = FlowProfile::new(grid(), "B>S", vec![2.0, 0.0, 1.5], 3).unwrap();
        let bytes = flow_csv(&flow);
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "line,bin_start,bin_end,flow,day_count\nB>S,08:00,08:15,2,3\nB>S,08:15,08:30,0,3\nB>S,08:30,08:45,1.5,3\n"
        );
        let utc = FixedOffset::east_opt(0).unwrap();
        assert_eq!(parse_flow(bytes.as_slice(), "f", utc).unwrap(), flow);
        let waits = crate::flow::wait_times(&flow);
        let text = String::from_utf8(wait_csv(&flow, &waits)).unwrap();
        assert!(text.contains("08:15,08:30,0,NA\n"));
        assert!(text.contains("08:00,08:15,2,7.5\n"));
    }

    #[test]
    fn flow_gaps_rejected() {
        let text = "line,bin_start,bin_end,flow,day_count\nB>S,08:00,08:15,2,1\nB>S,08:30,08:45,1,1\n";
        let utc = FixedOffset::east_opt(0).unwrap();
        assert!(matches!(parse_flow(text.as_bytes(), "f", utc), Err(IoError::Parse { .. })));
    }

    #[test]
    fn labels_round_trip() {
        let labels = ClusterLabels::new(vec!["a".into(), "b".into(), "c".into()], vec![1, 2, 1]);
        let back = parse_labels(labels_csv(&labels).as_slice(), "l").unwrap();
        assert_eq!(back, labels);
    }
}
