//! Multi-stage analyses built from the single-purpose modules.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Utc};
use serde::Serialize;

use crate::cluster::{cluster_simplified, door_to_door_matches};
use crate::flow::{weekly_waits, WeeklyComparison};
use crate::geo::GeoPoint;
use crate::network::{CarpoolLine, CarpoolNetwork, NetworkError};
use crate::simplify::SimplifiedTrace;
use crate::time::DailyWindow;

/// Location of the line's first meeting point, the origin of OD vectors.
pub fn line_reference(network: &CarpoolNetwork, line: &CarpoolLine) -> Result<GeoPoint, NetworkError> {
    network
        .node(line.first())
        .map(|m| m.location)
        .ok_or_else(|| NetworkError::UnknownNode(line.first().to_string()))
}

/// Number of distinct local dates among `instants`; at least 1.
pub fn distinct_days(instants: impl IntoIterator<Item = DateTime<Utc>>, window: &DailyWindow) -> u32 {
    let days: BTreeSet<_> = instants.into_iter().map(|t| window.local_date(t)).collect();
    days.len().max(1) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    /// ISO week, e.g. `2019-W48`.
    pub week: String,
    pub window: String,
    pub door_count: f64,
    pub meeting_count: f64,
    /// `(meeting − door) / door`.
    pub increase: Option<f64>,
    pub comparison: WeeklyComparison,
}

/// Door-to-door against meeting point matches, one row per ISO week and
/// window.
///
/// Meeting point matches are the simplified traces whose first arrival
/// falls in the window. Door-to-door matches are the members of the
/// largest cluster of that week's full-window matches, counted by the
/// same arrival rule.
pub fn weekly_door_vs_meeting(
    simplified: &[SimplifiedTrace],
    full: &DailyWindow,
    sub_windows: &[DailyWindow],
    reference: GeoPoint,
    cut_height: f64,
    operating_days: u32,
) -> Vec<CompareRow> {
    let mut weeks: BTreeMap<(i32, u32), Vec<SimplifiedTrace>> = BTreeMap::new();
    for t in simplified {
        let Some(arrival) = t.first_arrival() else { continue };
        if !full.contains(arrival) {
            continue;
        }
        let w = full.local_date(arrival).iso_week();
        weeks.entry((w.year(), w.week())).or_default().push(t.clone());
    }

    let windows: Vec<&DailyWindow> = std::iter::once(full).chain(sub_windows).collect();
    let mut rows = Vec::new();
    for ((year, week), traces) in weeks {
        let labels = cluster_simplified(&traces, reference, cut_height);
        let door: BTreeSet<String> = door_to_door_matches(&labels).into_iter().collect();
        for window in &windows {
            let in_window = traces.iter().filter(|t| t.first_arrival().is_some_and(|a| window.contains(a)));
            let (mut meeting, mut door_count) = (0.0, 0.0);
            for t in in_window {
                meeting += 1.0;
                if door.contains(&t.trace_id) {
                    door_count += 1.0;
                }
            }
            rows.push(CompareRow {
                week: format!("{year}-W{week:02}"),
                window: window.to_string(),
                door_count,
                meeting_count: meeting,
                increase: (door_count > 0.0).then(|| (meeting - door_count) / door_count),
                comparison: weekly_waits(door_count, meeting, window.length_minutes(), operating_days),
            });
        }
    }
    rows
}
