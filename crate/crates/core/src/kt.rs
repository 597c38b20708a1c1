//! γ-Kruskal tree construction.
//!
//! A γ-KT is a spanning tree in which every non-tree pair `(u, v)` has
//! tree-path maximum edge weight at most `γ` times its Euclidean distance.
//! The builder harvests a sparse edge set with LSH-guided local breadth-first
//! search over a geometric grid of radii, then runs Kruskal's algorithm.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dataset::{DatasetError, DistanceScale, PointSet};
use crate::dsu::Dsu;
use crate::lsh::{self, HashedBuckets, LshError};
use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum KtError {
    #[error("edge set does not connect the points: {components} components")]
    Disconnected { components: usize },
    #[error("edge references id {id} out of range 0..{n}")]
    IdOutOfRange { id: u32, n: usize },
    #[error("not a spanning tree: expected {expected} edges, got {got}")]
    NotSpanning { expected: usize, got: usize },
    #[error(transparent)]
    Lsh(#[from] LshError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// An undirected weighted edge, stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub u: u32,
    pub v: u32,
    pub weight: f64,
}

impl WeightedEdge {
    pub fn new(a: u32, b: u32, weight: f64) -> Self {
        assert_ne!(a, b, "self-loop edge");
        WeightedEdge {
            u: a.min(b),
            v: a.max(b),
            weight,
        }
    }

    /// The strict total order `(weight, u, v)` used everywhere edges are
    /// sorted: Kruskal, cut-weight processing and Cartesian trees.
    pub fn total_order(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.u.cmp(&other.u))
            .then(self.v.cmp(&other.v))
    }
}

/// A set of undirected edges, deduplicated on `(u, v)`.
#[derive(Debug, Default)]
pub struct EdgeList {
    edges: Vec<WeightedEdge>,
    seen: HashSet<(u32, u32)>,
}

impl EdgeList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an edge unless the pair is already present.
    pub fn insert(&mut self, e: WeightedEdge) -> bool {
        if self.seen.insert((e.u, e.v)) {
            self.edges.push(e);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &WeightedEdge> {
        self.edges.iter()
    }

    pub fn as_slice(&self) -> &[WeightedEdge] {
        &self.edges
    }
}

impl FromIterator<WeightedEdge> for EdgeList {
    fn from_iter<I: IntoIterator<Item = WeightedEdge>>(iter: I) -> Self {
        let mut list = EdgeList::new();
        for e in iter {
            list.insert(e);
        }
        list
    }
}

/// A spanning tree: exactly `n - 1` edges over ids `0..n`, stored sorted by
/// the `(weight, u, v)` total order.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    n: usize,
    edges: Vec<WeightedEdge>,
}

impl SpanningTree {
    pub fn new(n: usize, mut edges: Vec<WeightedEdge>) -> Result<Self, KtError> {
        if n >= 1 && edges.len() != n - 1 {
            return Err(KtError::NotSpanning {
                expected: n.saturating_sub(1),
                got: edges.len(),
            });
        }
        let mut dsu = Dsu::new(n);
        for e in &edges {
            if e.v as usize >= n {
                return Err(KtError::IdOutOfRange { id: e.v, n });
            }
            if !dsu.union(e.u, e.v) {
                return Err(KtError::NotSpanning {
                    expected: n - 1,
                    got: edges.len(),
                });
            }
        }
        edges.sort_by(WeightedEdge::total_order);
        Ok(SpanningTree { n, edges })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Edges in `(weight, u, v)` ascending order.
    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

/// Instrumentation gathered by [`harvest_edges`].
#[derive(Debug, Clone, Copy, Default)]
pub struct HarvestCounters {
    /// Distinct edges harvested.
    pub edges: usize,
    /// Far-pair collisions summed over all Local-BFS invocations.
    pub collisions: u64,
    /// Number of (scale, repetition) rounds executed.
    pub rounds: usize,
    /// Number of radius scales visited.
    pub scales: usize,
    /// Re-harvest attempts after a disconnected result.
    pub retries: usize,
    /// Components joined by the brute-force fallback.
    pub bridged: usize,
}

/// Tuning knobs for the harvest. Defaults match the reference configuration.
#[derive(Debug, Clone, Copy)]
pub struct HarvestParams {
    /// LSH bucket width in units of the radius.
    pub width: f64,
    /// Multiplier on the calibrated repetition count.
    pub safety: f64,
    pub seed: u64,
    /// Stop visiting larger radii once the harvested edges already connect
    /// all points; every pair at a larger distance is then already served.
    pub stop_when_connected: bool,
}

impl HarvestParams {
    pub fn new(seed: u64) -> Self {
        HarvestParams {
            width: 4.0,
            safety: 1.0,
            seed,
            stop_when_connected: true,
        }
    }
}

/// Breadth-first exploration of one hashed partition (one repetition at one
/// radius). Emits at most `n` edges, each of weight at most `gamma * radius`,
/// spanning every intra-bucket component of the `<= gamma * radius` threshold
/// graph. Also returns the far-pair collision count.
pub fn local_bfs(
    ps: &PointSet,
    buckets: &HashedBuckets,
    gamma: f64,
    radius: f64,
) -> (Vec<WeightedEdge>, u64) {
    let cutoff = gamma * radius;
    let mut edges = Vec::new();
    let mut collisions = 0u64;
    let mut queue = VecDeque::new();
    for bucket in buckets.iter() {
        if bucket.len() < 2 {
            continue;
        }
        let mut residual: Vec<u32> = bucket.to_vec();
        while let Some(x) = residual.pop() {
            queue.clear();
            queue.push_back(x);
            while let Some(u) = queue.pop_front() {
                let mut i = 0;
                while i < residual.len() {
                    let v = residual[i];
                    let dist = ps.distance(u, v);
                    if dist <= cutoff {
                        residual.swap_remove(i);
                        edges.push(WeightedEdge::new(u, v, dist));
                        queue.push_back(v);
                    } else {
                        collisions += 1;
                        i += 1;
                    }
                }
            }
        }
    }
    (edges, collisions)
}

/// One slot of the per-round open-addressing bucket table: points sharing a
/// fingerprint form a singly linked chain through `Harvest::next`. `epoch`
/// marks which round last wrote the slot, so the table resets in O(1).
#[derive(Clone, Copy)]
struct Slot {
    fp: u32,
    head: u32,
    count: u32,
    epoch: u32,
}

/// Working state of one multi-scale harvest.
///
/// Rounds run repetition-major: a repetition draws one set of Gaussian
/// directions and offsets, projects every point once, and reuses the
/// projections across all still-active radii. Two facts make the radius
/// bookkeeping sound regardless of processing order:
///
/// 1. `dsus[i]` joins two points only through harvested edges of weight at
///    most `gamma_eff * radii[i]` (each accepted edge is unioned into every
///    level whose cutoff admits its weight). A pair that collides at radius
///    `radii[i]` and is already joined there is served for that radius: any
///    pair at distance `d > radii[i] / tau` connected by edges of weight
///    `<= gamma_eff * radii[i] <= gamma * d` needs nothing further.
/// 2. The levels only grow, and level `i`'s edges are a subset of level
///    `j`'s for `j > i`, so connected levels form a suffix of the grid; a
///    fully connected level serves every remaining pair at its radius and
///    can be skipped for all later repetitions.
struct Harvest<'a> {
    ps: &'a PointSet,
    /// Point coordinates transposed to column-major f32 for the projection
    /// pass; distances and edge weights stay exact f64.
    cols: Vec<f32>,
    n: usize,
    d: usize,
    k: usize,
    /// Radius grid `r_min * tau^i` up to the first radius `>= tau * r_max`.
    radii: Vec<f64>,
    /// `gamma_eff * radii[i]`: the maximum edge weight level `i` may accept.
    cutoffs: Vec<f64>,
    dsus: Vec<Dsu>,
    edges: EdgeList,
    collisions: u64,
    // per-repetition scratch
    dirs: Vec<f32>,
    offs: Vec<f32>,
    dots: Vec<f32>,
    // per-round scratch
    fp: Vec<u32>,
    slots: Vec<Slot>,
    mask: usize,
    epoch: u32,
    next: Vec<u32>,
    multi: Vec<u32>,
    members: Vec<u32>,
    queue: VecDeque<u32>,
}

impl<'a> Harvest<'a> {
    fn new(ps: &'a PointSet, gamma_eff: f64, tau: f64, scale: &DistanceScale, k: usize) -> Self {
        let n = ps.len();
        let d = ps.dim();
        let mut cols = vec![0f32; n * d];
        for i in 0..n {
            let p = ps.point(i as u32);
            for l in 0..d {
                cols[l * n + i] = p[l] as f32;
            }
        }
        let mut radii = vec![scale.r_min];
        while *radii.last().unwrap() < tau * scale.r_max {
            let next = radii.last().unwrap() * tau;
            radii.push(next);
        }
        let cutoffs: Vec<f64> = radii.iter().map(|r| gamma_eff * r).collect();
        let table = (2 * n).next_power_of_two();
        Harvest {
            ps,
            cols,
            n,
            d,
            k,
            dsus: (0..radii.len()).map(|_| Dsu::new(n)).collect(),
            radii,
            cutoffs,
            edges: EdgeList::new(),
            collisions: 0,
            dirs: vec![0f32; k * d],
            offs: vec![0f32; k],
            dots: vec![0f32; k * n],
            fp: vec![0u32; n],
            slots: vec![
                Slot {
                    fp: 0,
                    head: 0,
                    count: 0,
                    epoch: 0
                };
                table
            ],
            mask: table - 1,
            epoch: 0,
            next: vec![0u32; n],
            multi: Vec::new(),
            members: Vec::new(),
            queue: VecDeque::new(),
        }
    }

    /// Draws the hash family of repetition `rep` and projects all points,
    /// direction-major. Offsets are kept as cell fractions so one draw
    /// serves every radius.
    fn project(&mut self, seed: u64, rep: usize) {
        let mut rng = rng::stream(seed, tag::LSH, rep as u64);
        for g in self.dirs.iter_mut() {
            *g = StandardNormal.sample(&mut rng);
        }
        for o in self.offs.iter_mut() {
            *o = rng.random::<f32>();
        }
        let (n, d) = (self.n, self.d);
        for j in 0..self.k {
            let out = &mut self.dots[j * n..(j + 1) * n];
            out.fill(0.0);
            for l in 0..d {
                let g = self.dirs[j * d + l];
                for (o, &c) in out.iter_mut().zip(&self.cols[l * n..(l + 1) * n]) {
                    *o += g * c;
                }
            }
        }
    }

    /// Runs one (radius, repetition) round on the current projections:
    /// fingerprint, bucket, and breadth-first exploration of every bucket
    /// with at least two members.
    fn round(&mut self, scale_idx: usize, w: f64) {
        let n = self.n;
        // One mixed 32-bit fingerprint per point stands in for the full key
        // tuple; a fingerprint clash only co-buckets unrelated points, which
        // the distance checks below absorb.
        let inv_cell = (1.0 / (w * self.radii[scale_idx])) as f32;
        self.fp.fill(0x811c_9dc5);
        for j in 0..self.k {
            let off = self.offs[j];
            let dj = &self.dots[j * n..(j + 1) * n];
            for (f, &dv) in self.fp.iter_mut().zip(dj) {
                let key = (dv * inv_cell + off).floor() as i32;
                *f = (*f ^ key as u32).wrapping_mul(0x9E37_79B1);
            }
        }

        self.epoch += 1;
        self.multi.clear();
        for i in 0..n {
            let f = self.fp[i];
            let mut s = f as usize & self.mask;
            loop {
                let slot = &mut self.slots[s];
                if slot.epoch != self.epoch {
                    *slot = Slot {
                        fp: f,
                        head: i as u32,
                        count: 1,
                        epoch: self.epoch,
                    };
                    self.next[i] = u32::MAX;
                    break;
                }
                if slot.fp == f {
                    self.next[i] = slot.head;
                    slot.head = i as u32;
                    slot.count += 1;
                    if slot.count == 2 {
                        self.multi.push(s as u32);
                    }
                    break;
                }
                s = (s + 1) & self.mask;
            }
        }

        let cutoff = self.cutoffs[scale_idx];
        let mut members = std::mem::take(&mut self.members);
        let mut queue = std::mem::take(&mut self.queue);
        for b in 0..self.multi.len() {
            members.clear();
            let mut cur = self.slots[self.multi[b] as usize].head;
            while cur != u32::MAX {
                members.push(cur);
                cur = self.next[cur as usize];
            }
            while let Some(x) = members.pop() {
                queue.clear();
                queue.push_back(x);
                while let Some(u) = queue.pop_front() {
                    let mut i = 0;
                    while i < members.len() {
                        let v = members[i];
                        if self.dsus[scale_idx].same(u, v) {
                            // already joined by edges light enough for this
                            // radius: absorb without a distance check
                            members.swap_remove(i);
                            queue.push_back(v);
                            continue;
                        }
                        let dist = self.ps.distance(u, v);
                        if dist <= cutoff {
                            members.swap_remove(i);
                            queue.push_back(v);
                            self.accept(u, v, dist, scale_idx);
                        } else {
                            self.collisions += 1;
                            i += 1;
                        }
                    }
                }
            }
        }
        self.members = members;
        self.queue = queue;
    }

    /// Records an accepted edge and joins it into every radius level whose
    /// cutoff admits its weight (maintaining invariant 1 above).
    fn accept(&mut self, u: u32, v: u32, dist: f64, scale_idx: usize) {
        self.edges.insert(WeightedEdge::new(u, v, dist));
        let mut idx = scale_idx;
        while idx > 0 && self.cutoffs[idx - 1] >= dist {
            idx -= 1;
        }
        for dsu in &mut self.dsus[idx..] {
            dsu.union(u, v);
        }
    }
}

/// Harvests an edge set intended to satisfy property (*): every pair `(u,v)`
/// is connected by edges of weight at most `gamma * ||u - v||` (w.h.p.).
///
/// Radii follow the geometric grid `r_min * tau^i` with `tau = 1 + 1/ln n`,
/// ending at the first radius `>= tau * r_max`; each radius runs the
/// calibrated number of independent LSH repetitions with effective gap
/// `gamma / tau`. Processing is repetition-major so each repetition's
/// projections are computed once and shared across radii; see [`Harvest`]
/// for why skipping already-connected radii preserves the guarantee.
pub fn harvest_edges(
    ps: &PointSet,
    gamma: f64,
    scale: &DistanceScale,
    params: &HarvestParams,
) -> Result<(EdgeList, HarvestCounters), KtError> {
    if gamma <= 1.0 {
        return Err(LshError::BadGamma(gamma).into());
    }
    let n = ps.len();
    // The guarantee holds for any grid step tau in (1, sqrt(gamma)]: pairs
    // are served at their level with effective gap gamma / tau, and
    // gamma_eff * tau = gamma either way. Within that freedom, pick the tau
    // minimizing total work: the number of levels scales with 1 / ln(tau)
    // while the calibrated repetition count grows as tau widens the gap the
    // hash family must discriminate. The cap at sqrt(gamma) also keeps the
    // effective gap above 1 for very small n.
    let mut tau = (1.0 + 1.0 / (n as f64).ln()).min(gamma.sqrt());
    let mut cal = lsh::calibrate(n, gamma / tau, params.width, params.safety)?;
    let mut cost = cal.repetitions as f64 / tau.ln();
    for cand in [1.1f64, 1.15, 1.2, 1.25, 1.3] {
        let cand = cand.min(gamma.sqrt());
        let c = lsh::calibrate(n, gamma / cand, params.width, params.safety)?;
        let cand_cost = c.repetitions as f64 / cand.ln();
        if cand_cost < cost {
            (tau, cal, cost) = (cand, c, cand_cost);
        }
    }
    let gamma_eff = gamma / tau;

    let mut hv = Harvest::new(ps, gamma_eff, tau, scale, cal.concat_k);
    let num_scales = hv.radii.len();
    let mut counters = HarvestCounters::default();
    for rep in 0..cal.repetitions {
        if params.stop_when_connected && hv.dsus[0].components() == 1 {
            break;
        }
        hv.project(params.seed, rep);
        for scale_idx in 0..num_scales {
            if params.stop_when_connected && hv.dsus[scale_idx].components() == 1 {
                // connected levels form a suffix: nothing above needs rounds
                break;
            }
            counters.rounds += 1;
            counters.scales = counters.scales.max(scale_idx + 1);
            hv.round(scale_idx, cal.w);
        }
    }
    counters.collisions = hv.collisions;
    counters.edges = hv.edges.len();
    Ok((hv.edges, counters))
}

/// Kruskal's algorithm under the `(weight, u, v)` total order. Returns the
/// spanning tree, or [`KtError::Disconnected`] if the edges do not connect
/// all `n` points.
pub fn kruskal_mst(edges: &EdgeList, n: usize) -> Result<SpanningTree, KtError> {
    for e in edges.iter() {
        if e.v as usize >= n {
            return Err(KtError::IdOutOfRange { id: e.v, n });
        }
    }
    let mut sorted: Vec<WeightedEdge> = edges.iter().copied().collect();
    sorted.sort_by(WeightedEdge::total_order);
    let mut dsu = Dsu::new(n);
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for e in sorted {
        if dsu.union(e.u, e.v) {
            tree.push(e);
        }
    }
    if dsu.components() != 1 {
        return Err(KtError::Disconnected {
            components: dsu.components(),
        });
    }
    SpanningTree::new(n, tree)
}

/// Exact minimum spanning tree by Prim's algorithm, `O(n^2 d)`.
pub fn prim_mst(ps: &PointSet) -> SpanningTree {
    let n = ps.len();
    if n == 1 {
        return SpanningTree::new(1, Vec::new()).unwrap();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0u32; n];
    in_tree[0] = true;
    for v in 1..n as u32 {
        best[v as usize] = ps.distance(0, v);
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick = usize::MAX;
        let mut pick_dist = f64::INFINITY;
        for v in 0..n {
            if !in_tree[v] && best[v] < pick_dist {
                pick = v;
                pick_dist = best[v];
            }
        }
        in_tree[pick] = true;
        edges.push(WeightedEdge::new(from[pick], pick as u32, pick_dist));
        let p = pick as u32;
        for v in 0..n {
            if !in_tree[v] {
                let dist = ps.distance(p, v as u32);
                if dist < best[v] {
                    best[v] = dist;
                    from[v] = p;
                }
            }
        }
    }
    SpanningTree::new(n, edges).expect("Prim output is a spanning tree")
}

/// End-to-end γ-KT construction with the disconnection fallback.
///
/// `gamma = 1` routes to the exact Prim MST (an MST is a 1-KT). Otherwise
/// the harvest runs with up to two retries at doubled safety; any components
/// still left are joined by their minimum cross pair.
pub fn gamma_kruskal_tree(
    ps: &PointSet,
    gamma: f64,
    scale: &DistanceScale,
    params: &HarvestParams,
) -> Result<(SpanningTree, HarvestCounters), KtError> {
    if gamma == 1.0 {
        return Ok((prim_mst(ps), HarvestCounters::default()));
    }
    let n = ps.len();
    let mut attempt = *params;
    let mut counters;
    let mut edges;
    let mut retries = 0;
    loop {
        let (e, c) = harvest_edges(ps, gamma, scale, &attempt)?;
        edges = e;
        counters = c;
        counters.retries = retries;
        match kruskal_mst(&edges, n) {
            Ok(tree) => {
                counters.edges = edges.len();
                return Ok((tree, counters));
            }
            Err(KtError::Disconnected { .. }) if retries < 2 => {
                retries += 1;
                attempt.safety *= 2.0;
                attempt.seed = rng::derive_seed(attempt.seed, tag::LSH, 0xfa11bac + retries as u64);
            }
            Err(KtError::Disconnected { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    // Brute-force bridging of whatever is left.
    let mut dsu = Dsu::new(n);
    for e in edges.iter() {
        dsu.union(e.u, e.v);
    }
    while dsu.components() > 1 {
        let mut best: Option<WeightedEdge> = None;
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if !dsu.same(u, v) {
                    let dist = ps.distance(u, v);
                    if best.is_none_or(|b| dist < b.weight) {
                        best = Some(WeightedEdge::new(u, v, dist));
                    }
                }
            }
        }
        let bridge = best.expect("disconnected graph has a cross pair");
        edges.insert(bridge);
        dsu.union(bridge.u, bridge.v);
        counters.bridged += 1;
    }
    let tree = kruskal_mst(&edges, n)?;
    counters.edges = edges.len();
    Ok((tree, counters))
}

/// Verification report for the γ-KT property.
#[derive(Debug, Clone, Copy)]
pub struct KtReport {
    pub ok: bool,
    /// Maximum over pairs of (tree-path max edge weight) / (distance).
    pub worst_ratio: f64,
    /// A pair attaining `worst_ratio`, if any pair exists.
    pub witness: Option<(u32, u32)>,
}

/// Checks the γ-KT property over all pairs (quadratic; test oracle only).
///
/// Processing tree edges in ascending order, the edge that first joins the
/// components of `u` and `v` is the maximum on their tree path, so the check
/// runs with one small-to-large merge pass.
pub fn verify_gamma_kt(ps: &PointSet, tree: &SpanningTree, gamma: f64) -> KtReport {
    let n = tree.len();
    let mut members: Vec<Vec<u32>> = (0..n as u32).map(|i| vec![i]).collect();
    let mut dsu = Dsu::new(n);
    let mut worst = 0.0f64;
    let mut witness = None;
    for e in tree.edges() {
        let (ru, rv) = (dsu.find(e.u), dsu.find(e.v));
        let (big, small) = if members[ru as usize].len() >= members[rv as usize].len() {
            (ru, rv)
        } else {
            (rv, ru)
        };
        for &a in &members[small as usize] {
            for &b in &members[big as usize] {
                let ratio = e.weight / ps.distance(a, b);
                if ratio > worst {
                    worst = ratio;
                    witness = Some((a.min(b), a.max(b)));
                }
            }
        }
        let moved = std::mem::take(&mut members[small as usize]);
        members[big as usize].extend(moved);
        dsu.union_into(big, small);
    }
    KtReport {
        ok: worst <= gamma * (1.0 + 1e-12),
        worst_ratio: worst,
        witness,
    }
}
