//! Dynamic approximate farthest neighbor over a mergeable partition.
//!
//! Projection-based AFN: sample `L'` Gaussian directions, and for every live
//! cluster keep, per direction, the `min(|S|, M)` members with the largest
//! projection. A query ranks the stored entries by the projection of `p - q`
//! and scans the best `M` distinct candidates; merging moves the smaller
//! cluster's lists into the larger and truncates back to `M`.

use std::collections::BinaryHeap;
use std::collections::HashSet;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dataset::PointSet;
use crate::dsu::Dsu;
use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum AfnError {
    #[error("cluster handle is stale (cluster was consumed by a merge)")]
    StaleHandle,
    #[error("cannot merge a cluster with itself")]
    SelfMerge,
    #[error("point id {0} out of range")]
    BadId(u32),
    #[error("alpha must exceed 1, got {0}")]
    BadAlpha(f64),
}

/// AFN configuration. `directions` and `cap` follow
/// `L' = ceil(c_l * n^{1/alpha^2} * ln n)` and `M = ceil(c_m * n^{1/alpha^2})`.
#[derive(Debug, Clone, Copy)]
pub struct AfnParams {
    pub alpha: f64,
    pub c_l: f64,
    pub c_m: f64,
    pub seed: u64,
}

impl AfnParams {
    pub fn new(alpha: f64, seed: u64) -> Self {
        AfnParams {
            alpha,
            c_l: 1.0,
            c_m: 1.0,
            seed,
        }
    }

    /// Number of Gaussian directions L'.
    pub fn directions(&self, n: usize) -> usize {
        let base = (n as f64).powf(1.0 / (self.alpha * self.alpha));
        ((self.c_l * base * (n as f64).ln().max(1.0)).ceil() as usize).max(1)
    }

    /// Per-direction list cap M.
    pub fn cap(&self, n: usize) -> usize {
        let base = (n as f64).powf(1.0 / (self.alpha * self.alpha));
        ((self.c_m * base).ceil() as usize).max(1)
    }
}

/// Handle to a live cluster. Invalidated when the cluster is consumed by a
/// merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterHandle {
    slot: u32,
    generation: u32,
    /// Cluster size at the time the handle was issued.
    pub size: usize,
}

/// Operation counters for instrumentation.
#[derive(Debug, Clone, Copy, Default)]
pub struct AfnCounters {
    pub queries: u64,
    pub candidates_scanned: u64,
    pub merges: u64,
    pub entries_moved: u64,
    /// Entries moved by the last merge alone.
    pub last_merge_moved: u64,
}

struct Cluster {
    generation: u32,
    members: Vec<u32>,
    /// Per direction: up to `min(|S|, M)` entries `(beta, id)`, sorted
    /// descending by `(beta, id)`.
    lists: Vec<Vec<(f64, u32)>>,
}

pub struct AfnStructure {
    n: usize,
    dim: usize,
    lprime: usize,
    cap_m: usize,
    alpha: f64,
    /// Direction matrix, `lprime x dim` row-major.
    directions: Vec<f64>,
    /// Cached projections `beta[j * lprime + i] = <a_i, p_j>`.
    beta: Vec<f64>,
    clusters: Vec<Option<Cluster>>,
    dsu: Dsu,
    /// Maps a DSU root to its cluster slot.
    slot_of_root: Vec<u32>,
    counters: AfnCounters,
}

/// Ordering key for descending entry order: larger `(beta, id)` first.
#[inline]
fn entry_cmp(a: &(f64, u32), b: &(f64, u32)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(b.1.cmp(&a.1))
}

impl AfnStructure {
    /// Builds the structure with one singleton cluster per point.
    pub fn initialize(ps: &PointSet, params: &AfnParams) -> Result<Self, AfnError> {
        if params.alpha <= 1.0 {
            return Err(AfnError::BadAlpha(params.alpha));
        }
        let n = ps.len();
        let dim = ps.dim();
        let lprime = params.directions(n);
        let cap_m = params.cap(n);

        let mut rng = rng::stream(params.seed, tag::AFN, 0);
        let directions: Vec<f64> = (0..lprime * dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();

        let mut beta = vec![0.0; n * lprime];
        for j in 0..n {
            let p = ps.point(j as u32);
            for i in 0..lprime {
                let a = &directions[i * dim..(i + 1) * dim];
                beta[j * lprime + i] = a.iter().zip(p).map(|(x, y)| x * y).sum();
            }
        }

        let clusters = (0..n)
            .map(|j| {
                Some(Cluster {
                    generation: 0,
                    members: vec![j as u32],
                    lists: (0..lprime)
                        .map(|i| vec![(beta[j * lprime + i], j as u32)])
                        .collect(),
                })
            })
            .collect();

        Ok(AfnStructure {
            n,
            dim,
            lprime,
            cap_m,
            alpha: params.alpha,
            directions,
            beta,
            clusters,
            dsu: Dsu::new(n),
            slot_of_root: (0..n as u32).collect(),
            counters: AfnCounters::default(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn directions_count(&self) -> usize {
        self.lprime
    }

    pub fn cap(&self) -> usize {
        self.cap_m
    }

    pub fn counters(&self) -> AfnCounters {
        self.counters
    }

    /// Cached projection of point `j` on direction `i`.
    pub fn projection(&self, j: u32, i: usize) -> f64 {
        self.beta[j as usize * self.lprime + i]
    }

    fn live(&self, s: ClusterHandle) -> Result<&Cluster, AfnError> {
        match self.clusters.get(s.slot as usize).and_then(Option::as_ref) {
            Some(c) if c.generation == s.generation => Ok(c),
            _ => Err(AfnError::StaleHandle),
        }
    }

    /// The live cluster containing point `q`.
    pub fn find(&mut self, q: u32) -> Result<ClusterHandle, AfnError> {
        if q as usize >= self.n {
            return Err(AfnError::BadId(q));
        }
        let root = self.dsu.find(q);
        let slot = self.slot_of_root[root as usize];
        let cluster = self.clusters[slot as usize]
            .as_ref()
            .expect("root cluster is live");
        Ok(ClusterHandle {
            slot,
            generation: cluster.generation,
            size: cluster.members.len(),
        })
    }

    /// Iterates over the members of a live cluster.
    pub fn enumerate(&self, s: ClusterHandle) -> Result<impl Iterator<Item = u32> + '_, AfnError> {
        Ok(self.live(s)?.members.iter().copied())
    }

    /// Approximate farthest neighbor of the dataset point `q` within the
    /// cluster `s`. Returns the candidate id and its exact distance to `q`.
    pub fn query_id(&mut self, s: ClusterHandle, q: u32, ps: &PointSet) -> Result<(u32, f64), AfnError> {
        if q as usize >= self.n {
            return Err(AfnError::BadId(q));
        }
        let qdots: Vec<f64> = (0..self.lprime).map(|i| self.projection(q, i)).collect();
        self.query_with_dots(s, &qdots, ps.point(q), ps)
    }

    /// Approximate farthest neighbor of an arbitrary query point.
    pub fn query(&mut self, s: ClusterHandle, point: &[f64], ps: &PointSet) -> Result<(u32, f64), AfnError> {
        assert_eq!(point.len(), self.dim, "query dimension mismatch");
        let qdots: Vec<f64> = (0..self.lprime)
            .map(|i| {
                let a = &self.directions[i * self.dim..(i + 1) * self.dim];
                a.iter().zip(point).map(|(x, y)| x * y).sum()
            })
            .collect();
        self.query_with_dots(s, &qdots, point, ps)
    }

    fn query_with_dots(
        &mut self,
        s: ClusterHandle,
        qdots: &[f64],
        point: &[f64],
        ps: &PointSet,
    ) -> Result<(u32, f64), AfnError> {
        self.live(s)?;
        self.counters.queries += 1;
        let cluster = self.clusters[s.slot as usize]
            .as_ref()
            .expect("validated live");

        // Merge the per-direction streams, ranked by the projection of
        // p - q, until M distinct candidates have been seen.
        #[derive(PartialEq)]
        struct Head {
            key: f64,
            dir: u32,
            pos: u32,
        }
        impl Eq for Head {}
        impl PartialOrd for Head {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Head {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.key
                    .total_cmp(&other.key)
                    .then(other.dir.cmp(&self.dir))
            }
        }

        let mut heap = BinaryHeap::with_capacity(self.lprime);
        for (i, list) in cluster.lists.iter().enumerate() {
            if let Some(&(beta, _)) = list.first() {
                heap.push(Head {
                    key: beta - qdots[i],
                    dir: i as u32,
                    pos: 0,
                });
            }
        }
        let mut seen: HashSet<u32> = HashSet::with_capacity(self.cap_m * 2);
        let mut best: Option<(u32, f64)> = None;
        let mut scanned = 0u64;
        while let Some(head) = heap.pop() {
            let list = &cluster.lists[head.dir as usize];
            let (_, id) = list[head.pos as usize];
            scanned += 1;
            if seen.insert(id) {
                let dist = point
                    .iter()
                    .zip(ps.point(id))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if best.is_none_or(|(_, b)| dist > b) {
                    best = Some((id, dist));
                }
                if seen.len() >= self.cap_m {
                    break;
                }
            }
            let next = head.pos + 1;
            if (next as usize) < list.len() {
                let (beta, _) = list[next as usize];
                heap.push(Head {
                    key: beta - qdots[head.dir as usize],
                    dir: head.dir,
                    pos: next,
                });
            }
        }
        self.counters.candidates_scanned += scanned;
        Ok(best.expect("live cluster is nonempty"))
    }

    /// Merges two live clusters; both input handles are consumed.
    pub fn merge(
        &mut self,
        s1: ClusterHandle,
        s2: ClusterHandle,
    ) -> Result<ClusterHandle, AfnError> {
        self.live(s1)?;
        self.live(s2)?;
        if s1.slot == s2.slot {
            return Err(AfnError::SelfMerge);
        }
        let (big, small) = if s1.size >= s2.size { (s1, s2) } else { (s2, s1) };

        let mut donor = self.clusters[small.slot as usize]
            .take()
            .expect("checked live");
        let target = self.clusters[big.slot as usize]
            .as_mut()
            .expect("checked live");

        let mut moved = 0u64;
        for (dst, src) in target.lists.iter_mut().zip(donor.lists.iter_mut()) {
            moved += src.len() as u64;
            dst.extend(src.drain(..));
            dst.sort_by(entry_cmp);
            dst.truncate(self.cap_m);
        }
        target.members.append(&mut donor.members);
        target.generation += 1;

        let new_size = target.members.len();
        let generation = target.generation;
        self.counters.merges += 1;
        self.counters.entries_moved += moved;
        self.counters.last_merge_moved = moved;

        // Point the union root at the surviving slot.
        let rep_big = self.dsu.find(
            self.clusters[big.slot as usize]
                .as_ref()
                .expect("live")
                .members[0],
        );
        let rep_small = self.dsu.find(donor_rep(&donor, small));
        debug_assert_ne!(rep_big, rep_small);
        self.dsu.union(rep_big, rep_small);
        let root = self.dsu.find(rep_big);
        self.slot_of_root[root as usize] = big.slot;

        Ok(ClusterHandle {
            slot: big.slot,
            generation,
            size: new_size,
        })
    }
}

// The donor's member list has been drained into the target, so recover a
// representative from its slot id instead.
fn donor_rep(_donor: &Cluster, small: ClusterHandle) -> u32 {
    small.slot
}
