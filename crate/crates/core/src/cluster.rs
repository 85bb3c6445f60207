//! Door-to-door matching by complete-linkage agglomerative clustering of
//! origin/destination 4-vectors.
//!
//! Endpoints are projected to planar meters about a reference point before
//! clustering, so the dendrogram cut height is a distance in meters.

use serde::Serialize;

use crate::geo::{project, GeoPoint, Trace};
use crate::simplify::SimplifiedTrace;

/// Cut height used for door-to-door neighborhoods, in meters.
pub const DEFAULT_CUT_HEIGHT_M: f64 = 6_000.0;

/// `(origin east, origin north, destination east, destination north)` in
/// meters relative to a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdVector(pub [f64; 4]);

impl OdVector {
    pub fn from_endpoints(origin: GeoPoint, destination: GeoPoint, reference: GeoPoint) -> Self {
        let (ox, oy) = project(origin, reference);
        let (dx, dy) = project(destination, reference);
        OdVector([ox, oy, dx, dy])
    }

    pub fn distance(&self, other: &OdVector) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

pub fn od_vector(trace: &Trace, reference: GeoPoint) -> OdVector {
    OdVector::from_endpoints(trace.origin().position, trace.destination().position, reference)
}

pub fn od_vector_simplified(trace: &SimplifiedTrace, reference: GeoPoint) -> OdVector {
    OdVector::from_endpoints(trace.origin.position, trace.destination.position, reference)
}

/// One agglomeration step. Leaves are `0..n`; the cluster created by step
/// `i` gets id `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    leaves: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn from_merges(leaves: usize, merges: Vec<Merge>) -> Self {
        Self { leaves, merges }
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Leaf labels after discarding merges taller than `h`. Labels are
    /// numbered from 1 in order of each cluster's smallest leaf.
    pub fn cut(&self, h: f64) -> Vec<usize> {
        let n = self.leaves;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        // representative leaf of every cluster id
        let mut rep: Vec<usize> = (0..n).collect();
        rep.reserve(self.merges.len());
        // complete-linkage heights are non-decreasing, so the kept merges
        // form a prefix
        for m in self.merges.iter().take_while(|m| m.height <= h) {
            let (ra, rb) = (find(&mut parent, rep[m.a]), find(&mut parent, rep[m.b]));
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
            rep.push(lo);
        }
        let mut label_of_root = vec![0usize; n];
        let mut next = 0;
        (0..n)
            .map(|leaf| {
                let r = find(&mut parent, leaf);
                if label_of_root[r] == 0 {
                    next += 1;
                    label_of_root[r] = next;
                }
                label_of_root[r]
            })
            .collect()
    }
}

/// Complete-linkage clustering: the dissimilarity of two clusters is the
/// largest pairwise distance between their members. Ties in the minimum
/// are resolved by the smallest `(a, b)` pair of cluster slots, where a
/// cluster's slot is its smallest leaf index.
pub fn complete_linkage(vectors: &[OdVector]) -> Dendrogram {
    let n = vectors.len();
    linkage_from_fn(n, |i, j| vectors[i].distance(&vectors[j]))
}

pub fn linkage_from_fn(n: usize, dist: impl Fn(usize, usize) -> f64) -> Dendrogram {
    if n < 2 {
        return Dendrogram { leaves: n, merges: Vec::new() };
    }
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist(i, j);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }

    let mut active = vec![true; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut nn = vec![usize::MAX; n];
    let mut nn_d = vec![f64::INFINITY; n];

    let refresh = |i: usize, d: &[f64], active: &[bool], nn: &mut [usize], nn_d: &mut [f64]| {
        nn[i] = usize::MAX;
        nn_d[i] = f64::INFINITY;
        for j in (i + 1)..n {
            if active[j] && d[i * n + j] < nn_d[i] {
                nn[i] = j;
                nn_d[i] = d[i * n + j];
            }
        }
    };
    for i in 0..n {
        refresh(i, &d, &active, &mut nn, &mut nn_d);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..(n - 1) {
        let mut i = usize::MAX;
        let mut best = f64::INFINITY;
        for k in 0..n {
            if active[k] && nn[k] != usize::MAX && nn_d[k] < best {
                best = nn_d[k];
                i = k;
            }
        }
        if i == usize::MAX {
            // only non-finite distances remain; take the first two slots
            let mut it = (0..n).filter(|&k| active[k]);
            i = it.next().expect("two active slots");
            nn[i] = it.next().expect("two active slots");
            best = d[i * n + nn[i]];
        }
        let j = nn[i];
        let (a, b) = (id[i].min(id[j]), id[i].max(id[j]));
        merges.push(Merge { a, b, height: best, size: size[i] + size[j] });

        active[j] = false;
        for k in 0..n {
            if active[k] && k != i {
                let v = d[i * n + k].max(d[j * n + k]);
                d[i * n + k] = v;
                d[k * n + i] = v;
            }
        }
        id[i] = n + step;
        size[i] += size[j];
        refresh(i, &d, &active, &mut nn, &mut nn_d);
        for k in 0..i {
            if active[k] && (nn[k] == i || nn[k] == j) {
                refresh(k, &d, &active, &mut nn, &mut nn_d);
            }
        }
        for k in (i + 1)..j {
            if active[k] && nn[k] == j {
                refresh(k, &d, &active, &mut nn, &mut nn_d);
            }
        }
    }
    Dendrogram { leaves: n, merges }
}

/// Cluster membership of a set of traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterLabels {
    /// `(trace id, label)` in input order; labels start at 1.
    pub assignments: Vec<(String, usize)>,
    /// `sizes[l - 1]` is the cardinality of label `l`.
    pub sizes: Vec<usize>,
}

impl ClusterLabels {
    pub fn new(ids: Vec<String>, labels: Vec<usize>) -> Self {
        let k = labels.iter().copied().max().unwrap_or(0);
        let mut sizes = vec![0; k];
        for &l in &labels {
            sizes[l - 1] += 1;
        }
        Self { assignments: ids.into_iter().zip(labels).collect(), sizes }
    }

    pub fn label_of(&self, trace_id: &str) -> Option<usize> {
        self.assignments.iter().find(|(id, _)| id == trace_id).map(|&(_, l)| l)
    }

    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }
}

pub fn cut(dendrogram: &Dendrogram, h: f64, ids: Vec<String>) -> ClusterLabels {
    assert_eq!(ids.len(), dendrogram.leaves(), "one id per leaf");
    ClusterLabels::new(ids, dendrogram.cut(h))
}

/// Members of the largest cluster, sorted. Ties go to the cluster holding
/// the lexicographically smallest trace id.
pub fn door_to_door_matches(labels: &ClusterLabels) -> Vec<String> {
    let Some(&max) = labels.sizes.iter().max() else {
        return Vec::new();
    };
    let chosen = labels
        .assignments
        .iter()
        .filter(|(_, l)| labels.sizes[l - 1] == max)
        .min_by(|x, y| x.0.cmp(&y.0))
        .map(|&(_, l)| l)
        .expect("a largest cluster exists");
    let mut out: Vec<String> =
        labels.assignments.iter().filter(|(_, l)| *l == chosen).map(|(id, _)| id.clone()).collect();
    out.sort();
    out
}

/// Clusters simplified traces by their endpoints and cuts at `h` meters.
pub fn cluster_simplified(traces: &[SimplifiedTrace], reference: GeoPoint, h: f64) -> ClusterLabels {
    let vectors: Vec<OdVector> = traces.iter().map(|t| od_vector_simplified(t, reference)).collect();
    let dendrogram = complete_linkage(&vectors);
    cut(&dendrogram, h, traces.iter().map(|t| t.trace_id.clone()).collect())
}
