//! The carpooling network: meeting points as nodes of a directed graph,
//! and carpooling lines as ordered node sequences.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

/// Upper bound on the node count for path enumeration.
pub const MAX_ENUMERATION_NODES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("duplicate meeting point id {0:?}")]
    DuplicateId(String),
    #[error("edge endpoint {0:?} is not a meeting point")]
    UnknownEndpoint(String),
    #[error("self-loop edge on {0:?}")]
    SelfLoop(String),
    #[error("unknown meeting point {0:?}")]
    UnknownNode(String),
    #[error("a carpooling line needs at least two nodes, got {0}")]
    LineTooShort(usize),
    #[error("carpooling line repeats node {0:?}")]
    RepeatedNode(String),
    #[error("network has {0} nodes; path enumeration is limited to {MAX_ENUMERATION_NODES}")]
    TooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingPoint {
    pub id: String,
    pub name: String,
    pub location: GeoPoint,
}

impl MeetingPoint {
    pub fn new(id: impl Into<String>, name: impl Into<String>, location: GeoPoint) -> Self {
        Self { id: id.into(), name: name.into(), location }
    }
}

/// Ordered, acyclic sequence of at least two meeting point ids.
///
/// Consecutive ids need not share an edge; they only have to be joined by
/// a directed path in the network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CarpoolLine {
    node_ids: Vec<String>,
}

impl CarpoolLine {
    pub fn new<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Result<Self, NetworkError> {
        let node_ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        if node_ids.len() < 2 {
            return Err(NetworkError::LineTooShort(node_ids.len()));
        }
        let mut seen = BTreeSet::new();
        for id in &node_ids {
            if !seen.insert(id.as_str()) {
                return Err(NetworkError::RepeatedNode(id.clone()));
            }
        }
        Ok(Self { node_ids })
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn first(&self) -> &str {
        &self.node_ids[0]
    }

    pub fn last(&self) -> &str {
        &self.node_ids[self.node_ids.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl TryFrom<Vec<String>> for CarpoolLine {
    type Error = NetworkError;

    fn try_from(ids: Vec<String>) -> Result<Self, Self::Error> {
        CarpoolLine::new(ids)
    }
}

impl From<CarpoolLine> for Vec<String> {
    fn from(line: CarpoolLine) -> Self {
        line.node_ids
    }
}

/// Parses the `B>V>S` notation.
impl FromStr for CarpoolLine {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CarpoolLine::new(s.split('>').map(str::trim).filter(|p| !p.is_empty()))
    }
}

impl fmt::Display for CarpoolLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.node_ids.join(">"))
    }
}

/// Validated directed graph of meeting points. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct CarpoolNetwork {
    nodes: Vec<MeetingPoint>,
    index: BTreeMap<String, usize>,
    // sorted, deduplicated successor lists
    successors: Vec<Vec<usize>>,
}

impl CarpoolNetwork {
    pub fn build(points: Vec<MeetingPoint>, edges: &[(String, String)]) -> Result<Self, NetworkError> {
        let mut index = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            if index.insert(p.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateId(p.id.clone()));
            }
        }
        let mut successors = vec![BTreeSet::new(); points.len()];
        for (from, to) in edges {
            let a = *index.get(from).ok_or_else(|| NetworkError::UnknownEndpoint(from.clone()))?;
            let b = *index.get(to).ok_or_else(|| NetworkError::UnknownEndpoint(to.clone()))?;
            if a == b {
                return Err(NetworkError::SelfLoop(from.clone()));
            }
            successors[a].insert(b);
        }
        Ok(Self {
            nodes: points,
            index,
            successors: successors.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn nodes(&self) -> &[MeetingPoint] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&MeetingPoint> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Directed edges as id pairs, ordered by source insertion order then
    /// target insertion order.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.successors
            .iter()
            .enumerate()
            .flat_map(|(a, succ)| {
                succ.iter().map(move |&b| (self.nodes[a].id.clone(), self.nodes[b].id.clone()))
            })
            .collect()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&a), Some(&b)) => self.successors[a].binary_search(&b).is_ok(),
            _ => false,
        }
    }

    /// Every simple directed path from the line's first node to its last
    /// node that visits the line's intermediate nodes in order. Other
    /// network nodes may be interleaved. Returned in lexicographic order of
    /// node index sequence.
    pub fn line_variants(&self, line: &CarpoolLine) -> Result<Vec<CarpoolLine>, NetworkError> {
        if self.nodes.len() > MAX_ENUMERATION_NODES {
            return Err(NetworkError::TooLarge(self.nodes.len()));
        }
        let waypoints = line
            .node_ids()
            .iter()
            .map(|id| self.index.get(id).copied().ok_or_else(|| NetworkError::UnknownNode(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;

        let target = waypoints[waypoints.len() - 1];
        let mut out = Vec::new();
        let mut path = vec![waypoints[0]];
        let mut visited = vec![false; self.nodes.len()];
        visited[waypoints[0]] = true;
        self.extend_paths(&waypoints, 1, target, &mut path, &mut visited, &mut out);

        Ok(out
            .into_iter()
            .map(|p| CarpoolLine { node_ids: p.into_iter().map(|i| self.nodes[i].id.clone()).collect() })
            .collect())
    }

    // `next_wp` indexes the next waypoint still to be visited.
    fn extend_paths(
        &self,
        waypoints: &[usize],
        next_wp: usize,
        target: usize,
        path: &mut Vec<usize>,
        visited: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        let here = *path.last().expect("path is never empty");
        for &succ in &self.successors[here] {
            if visited[succ] {
                continue;
            }
            let expected = waypoints[next_wp];
            if succ == expected {
                if succ == target {
                    let mut done = path.clone();
                    done.push(succ);
                    out.push(done);
                    continue;
                }
                path.push(succ);
                visited[succ] = true;
                self.extend_paths(waypoints, next_wp + 1, target, path, visited, out);
                visited[succ] = false;
                path.pop();
            } else if !waypoints[next_wp..].contains(&succ) {
                path.push(succ);
                visited[succ] = true;
                self.extend_paths(waypoints, next_wp, target, path, visited, out);
                visited[succ] = false;
                path.pop();
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn lane() -> CarpoolNetwork {
        crate::fixtures::lane_network()
    }

    fn line(s: &str) -> CarpoolLine {
        s.parse().unwrap()
    }

    fn names(v: &[CarpoolLine]) -> Vec<String> {
        v.iter().map(ToString::to_string).collect()
    }

    fn mp(id: &str) -> MeetingPoint {
        MeetingPoint::new(id, id, GeoPoint::new(0.0, 0.0).unwrap())
    }

    #[test]
    fn lane_graph_variants() {
        let net = lane();
        assert_eq!(net.len(), 5);
        assert!(net.has_edge("B", "V") && net.has_edge("V", "S") && net.has_edge("B", "S"));
        let mut got = names(&net.line_variants(&line("B>S")).unwrap());
        got.sort();
        assert_eq!(got, vec!["B>S", "B>V>S"]);
        assert_eq!(names(&net.line_variants(&line("B>V>S")).unwrap()), vec!["B>V>S"]);
    }

    #[test]
    fn build_errors() {
        assert!(CarpoolNetwork::build(vec![], &[]).unwrap().is_empty());
        let e = CarpoolNetwork::build(vec![mp("B")], &[("B".into(), "B".into())]);
        assert_eq!(e.unwrap_err(), NetworkError::SelfLoop("B".into()));
        let e = CarpoolNetwork::build(vec![mp("B"), mp("B")], &[]);
        assert_eq!(e.unwrap_err(), NetworkError::DuplicateId("B".into()));
        let e = CarpoolNetwork::build(vec![mp("B")], &[("B".into(), "Z".into())]);
        assert_eq!(e.unwrap_err(), NetworkError::UnknownEndpoint("Z".into()));
    }

    #[test]
    fn line_invariants() {
        assert_eq!("B>B".parse::<CarpoolLine>().unwrap_err(), NetworkError::RepeatedNode("B".into()));
        assert_eq!("B".parse::<CarpoolLine>().unwrap_err(), NetworkError::LineTooShort(1));
        assert_eq!(line(" B > V>S ").to_string(), "B>V>S");
    }

    #[test]
    fn single_edge_and_unknown_node() {
        let net = CarpoolNetwork::build(vec![mp("A"), mp("B")], &[("A".into(), "B".into())]).unwrap();
        assert_eq!(names(&net.line_variants(&line("A>B")).unwrap()), vec!["A>B"]);
        assert!(net.line_variants(&line("B>A")).unwrap().is_empty());
        assert_eq!(net.line_variants(&line("A>Q")).unwrap_err(), NetworkError::UnknownNode("Q".into()));
    }

    #[test]
    fn enumeration_bound_is_a_hard_error() {
        let pts: Vec<_> = (0..65).map(|i| mp(&format!("n{i}"))).collect();
        let net = CarpoolNetwork::build(pts, &[]).unwrap();
        assert_eq!(net.line_variants(&line("n0>n1")).unwrap_err(), NetworkError::TooLarge(65));
    }

    // Brute force: every permutation of every node subset that starts and
    // ends at the endpoints, follows edges, has no repeats, and contains
    // the waypoints in order.
    pub(crate) fn brute_variants(net: &CarpoolNetwork, line: &CarpoolLine) -> Vec<Vec<String>> {
        let ids: Vec<String> = net.nodes().iter().map(|n| n.id.clone()).collect();
        let mut out = Vec::new();
        let n = ids.len();
        fn perms(pool: &[String], k: usize, cur: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for x in pool {
                if !cur.contains(x) {
                    cur.push(x.clone());
                    perms(pool, k, cur, out);
                    cur.pop();
                }
            }
        }
        for k in 2..=n {
            let mut all = Vec::new();
            perms(&ids, k, &mut Vec::new(), &mut all);
            for cand in all {
                if cand[0] != line.first() || cand[k - 1] != line.last() {
                    continue;
                }
                if !cand.windows(2).all(|w| net.has_edge(&w[0], &w[1])) {
                    continue;
                }
                let positions: Option<Vec<usize>> =
                    line.node_ids().iter().map(|w| cand.iter().position(|c| c == w)).collect();
                if let Some(pos) = positions {
                    if pos.windows(2).all(|w| w[0] < w[1]) {
                        out.push(cand);
                    }
                }
            }
        }
        out.sort();
        out
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..=6).prop_flat_map(|n| (Just(n), proptest::collection::vec((0..n, 0..n), 0..(n * n))))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn variants_match_brute_force((n, raw) in arb_graph(), mid in proptest::option::of(0usize..6)) {
            let pts: Vec<_> = (0..n).map(|i| mp(&format!("{i}"))).collect();
            let edges: Vec<(String, String)> = raw.into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect();
            let net = CarpoolNetwork::build(pts, &edges).unwrap();
            let mut ids = vec!["0".to_string()];
            if let Some(m) = mid.filter(|&m| m > 0 && m < n - 1) {
                ids.push(m.to_string());
            }
            ids.push((n - 1).to_string());
            let l = CarpoolLine::new(ids).unwrap();
            let mut got: Vec<Vec<String>> = net.line_variants(&l).unwrap()
                .into_iter().map(Vec::from).collect();
            got.sort();
            for v in &got {
                prop_assert_eq!(v.first().unwrap().as_str(), l.first());
                prop_assert_eq!(v.last().unwrap().as_str(), l.last());
                prop_assert!(CarpoolLine::new(v.clone()).is_ok());
            }
            prop_assert_eq!(got, brute_variants(&net, &l));
        }
    }
}
