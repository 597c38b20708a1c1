//! Dendrograms, ultrametric queries, distortion evaluation, and the two
//! end-to-end pipelines.
//!
//! A dendrogram stores `n - 1` merge records in linkage-matrix convention:
//! leaves are nodes `0..n-1`, the i-th merge creates internal node `n + i`,
//! and heights are non-decreasing in merge order. The ultrametric distance
//! between two leaves is the height of their lowest common ancestor.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::cutweights::{
    approximate_cut_weights, exact_cut_weights, CutWeightMap, CwCounters, CwError, CwParams,
    MultiplierMode,
};
use crate::dataset::{estimate_scale_range, DatasetError, DistanceScale, PointSet};
use crate::kt::{
    gamma_kruskal_tree, prim_mst, HarvestCounters, HarvestParams, KtError, SpanningTree,
};

#[derive(Debug, Error)]
pub enum DendroError {
    #[error("expected {expected} cut weights, got {got}")]
    WeightCountMismatch { expected: usize, got: usize },
    #[error("merge {index}: node {node} is not available (reused or out of range)")]
    BadMergeNode { index: usize, node: u32 },
    #[error("merge {index}: size {got} does not equal sum of child sizes {expected}")]
    BadMergeSize { index: usize, expected: u32, got: u32 },
    #[error("merge {index}: height {height} decreases below previous {previous}")]
    HeightsDecreasing {
        index: usize,
        height: f64,
        previous: f64,
    },
    #[error("merge {index}: height {height} is not a finite nonnegative number")]
    BadHeight { index: usize, height: f64 },
    #[error("leaf id {0} out of range")]
    BadLeaf(u32),
    #[error("dendrogram has {dendro} leaves but the point set has {points} points")]
    LeafCountMismatch { dendro: usize, points: usize },
    #[error("distortion needs at least 2 points")]
    TooFewPoints,
    #[error("c must be at least 1, got {0}")]
    BadC(f64),
    #[error("points {0} and {1} are duplicates; the best fit is undefined")]
    DuplicatePoints(u32, u32),
    #[error("malformed linkage row {row}: {message}")]
    BadLinkageRow { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Kt(#[from] KtError),
    #[error(transparent)]
    Cw(#[from] CwError),
}

/// One merge record in linkage-matrix convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: u32,
    pub right: u32,
    pub height: f64,
    pub size: u32,
}

/// A dendrogram over `n` leaves: `n - 1` validated merge records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    /// Validates and wraps a linkage matrix: each node is consumed by at most
    /// one later merge, sizes add up, and heights never decrease.
    pub fn from_merges(n: usize, merges: Vec<Merge>) -> Result<Self, DendroError> {
        if merges.len() + 1 != n {
            return Err(DendroError::WeightCountMismatch {
                expected: n.saturating_sub(1),
                got: merges.len(),
            });
        }
        let total = 2 * n - 1;
        let mut used = vec![false; total];
        let mut sizes = vec![1u32; total];
        let mut prev = 0.0f64;
        for (index, m) in merges.iter().enumerate() {
            let id = n + index;
            for node in [m.left, m.right] {
                if node as usize >= id || used[node as usize] {
                    return Err(DendroError::BadMergeNode { index, node });
                }
                used[node as usize] = true;
            }
            let expected = sizes[m.left as usize] + sizes[m.right as usize];
            if m.size != expected {
                return Err(DendroError::BadMergeSize {
                    index,
                    expected,
                    got: m.size,
                });
            }
            sizes[id] = expected;
            if !(m.height >= 0.0 && m.height.is_finite()) {
                return Err(DendroError::BadHeight {
                    index,
                    height: m.height,
                });
            }
            if m.height < prev {
                return Err(DendroError::HeightsDecreasing {
                    index,
                    height: m.height,
                    previous: prev,
                });
            }
            prev = m.height;
        }
        Ok(Dendrogram { n, merges })
    }

    /// Number of leaves.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Height of the root merge, or 0 for a single leaf.
    pub fn root_height(&self) -> f64 {
        self.merges.last().map_or(0.0, |m| m.height)
    }

    /// Writes the linkage matrix as CSV rows `left,right,height,size`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), DendroError> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        for m in &self.merges {
            writer.write_record([
                m.left.to_string(),
                m.right.to_string(),
                format!("{:.17}", m.height),
                m.size.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a linkage matrix written by [`Dendrogram::write_csv`].
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self, DendroError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut merges = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let row = i + 1;
            if record.len() != 4 {
                return Err(DendroError::BadLinkageRow {
                    row,
                    message: format!("expected 4 fields, got {}", record.len()),
                });
            }
            let field = |j: usize| record.get(j).unwrap();
            let parse_err = |j: usize| DendroError::BadLinkageRow {
                row,
                message: format!("cannot parse field {:?}", field(j)),
            };
            merges.push(Merge {
                left: field(0).parse().map_err(|_| parse_err(0))?,
                right: field(1).parse().map_err(|_| parse_err(1))?,
                height: field(2).parse().map_err(|_| parse_err(2))?,
                size: field(3).parse().map_err(|_| parse_err(3))?,
            });
        }
        Dendrogram::from_merges(merges.len() + 1, merges)
    }

    /// Newick serialization with merge heights as internal node labels.
    pub fn to_newick(&self) -> String {
        if self.n == 1 {
            return "0;".to_string();
        }
        // Iterative post-order render; trees can be path-shaped, so no
        // recursion.
        let total = 2 * self.n - 1;
        let mut rendered: Vec<Option<String>> = vec![None; total];
        let mut stack = vec![total as u32 - 1];
        while let Some(&node) = stack.last() {
            let id = node as usize;
            if id < self.n {
                rendered[id] = Some(id.to_string());
                stack.pop();
                continue;
            }
            let m = &self.merges[id - self.n];
            match (&rendered[m.left as usize], &rendered[m.right as usize]) {
                (Some(l), Some(r)) => {
                    rendered[id] = Some(format!("({l},{r}){}", m.height));
                    stack.pop();
                }
                _ => {
                    stack.push(m.left);
                    stack.push(m.right);
                }
            }
        }
        let root = rendered[total - 1].take().expect("root rendered");
        format!("{root};")
    }
}

/// Constant-time ultrametric distance queries over a dendrogram, backed by an
/// Euler tour with a sparse-table range-minimum structure.
pub struct UltrametricIndex {
    n: usize,
    /// Height per node (0 for leaves).
    height: Vec<f64>,
    /// First occurrence of each node in the Euler tour.
    first: Vec<u32>,
    /// Sparse table over tour positions; entry = position of minimum depth.
    table: Vec<Vec<u32>>,
    tour: Vec<u32>,
    depth: Vec<u32>,
}

impl UltrametricIndex {
    pub fn new(d: &Dendrogram) -> Self {
        let n = d.len();
        let total = 2 * n - 1;
        let mut height = vec![0.0f64; total];
        for (i, m) in d.merges().iter().enumerate() {
            height[n + i] = m.height;
        }

        // Euler tour with explicit stack; depths recorded per tour position.
        let mut tour = Vec::with_capacity(4 * n);
        let mut depth = Vec::with_capacity(4 * n);
        let mut first = vec![u32::MAX; total];
        enum Step {
            Visit(u32, u32),
            Emit(u32, u32),
        }
        let mut stack = vec![Step::Visit(total as u32 - 1, 0)];
        while let Some(step) = stack.pop() {
            let (node, dep) = match step {
                Step::Visit(node, dep) => {
                    if first[node as usize] == u32::MAX {
                        first[node as usize] = tour.len() as u32;
                    }
                    (node, dep)
                }
                Step::Emit(node, dep) => (node, dep),
            };
            tour.push(node);
            depth.push(dep);
            if let Step::Visit(node, dep) = step {
                if node as usize >= n {
                    // tour pattern per internal node: self, left subtree,
                    // self, right subtree, self
                    let m = &d.merges()[node as usize - n];
                    stack.push(Step::Emit(node, dep));
                    stack.push(Step::Visit(m.right, dep + 1));
                    stack.push(Step::Emit(node, dep));
                    stack.push(Step::Visit(m.left, dep + 1));
                }
            }
        }

        // Sparse table of argmin-depth over tour positions.
        let len = tour.len();
        let levels = (usize::BITS - len.leading_zeros()) as usize;
        let mut table: Vec<Vec<u32>> = Vec::with_capacity(levels);
        table.push((0..len as u32).collect());
        let mut span = 1;
        while 2 * span <= len {
            let prev = table.last().unwrap();
            let mut row = Vec::with_capacity(len - 2 * span + 1);
            for i in 0..=len - 2 * span {
                let (a, b) = (prev[i], prev[i + span]);
                row.push(if depth[a as usize] <= depth[b as usize] {
                    a
                } else {
                    b
                });
            }
            table.push(row);
            span *= 2;
        }
        UltrametricIndex {
            n,
            height,
            first,
            table,
            tour,
            depth,
        }
    }

    /// Lowest common ancestor of two distinct leaves: the minimum-depth node
    /// between their first tour occurrences.
    fn lca(&self, u: u32, v: u32) -> u32 {
        let (mut a, mut b) = (
            self.first[u as usize] as usize,
            self.first[v as usize] as usize,
        );
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        let len = b - a + 1;
        let k = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let left = self.table[k][a];
        let right = self.table[k][b + 1 - (1 << k)];
        let cand = if self.depth[left as usize] <= self.depth[right as usize] {
            left
        } else {
            right
        };
        self.tour[cand as usize]
    }

    /// Ultrametric distance between two leaves: LCA height, 0 for `u == v`.
    pub fn distance(&self, u: u32, v: u32) -> Result<f64, DendroError> {
        for id in [u, v] {
            if id as usize >= self.n {
                return Err(DendroError::BadLeaf(id));
            }
        }
        if u == v {
            return Ok(0.0);
        }
        Ok(self.height[self.lca(u, v) as usize])
    }
}

/// Evaluation of a dendrogram against the underlying points.
#[derive(Debug, Clone, Copy)]
pub struct DistortionReport {
    /// Maximum over pairs of ultrametric distance over Euclidean distance.
    pub dist_max: f64,
    /// Maximum over pairs of Euclidean over ultrametric distance; 1.0 when
    /// the ultrametric dominates everywhere.
    pub dominance_violation_max: f64,
    /// A pair attaining `dist_max`.
    pub argmax: Option<(u32, u32)>,
    pub runtime_ms: f64,
}

/// Builds the Cartesian tree of a spanning tree with respect to the given
/// cut weights: edges are processed in ascending `(weight, edge)` order and
/// each union of two current clusters becomes an internal node at height
/// equal to the edge's cut weight.
pub fn cartesian_tree(tree: &SpanningTree, weights: &CutWeightMap) -> Result<Dendrogram, DendroError> {
    let n = tree.len();
    if weights.values.len() != tree.edges().len() {
        return Err(DendroError::WeightCountMismatch {
            expected: tree.edges().len(),
            got: weights.values.len(),
        });
    }
    // sort edge indices by (acw, edge total order); tree edges are already
    // in edge total order, so the index is the tiebreak
    let mut order: Vec<u32> = (0..tree.edges().len() as u32).collect();
    order.sort_by(|&a, &b| {
        weights.values[a as usize]
            .total_cmp(&weights.values[b as usize])
            .then(a.cmp(&b))
    });

    let mut dsu = crate::dsu::Dsu::new(n);
    // node id of the current cluster, addressed by DSU root
    let mut node_of_root: Vec<u32> = (0..n as u32).collect();
    let mut sizes: Vec<u32> = vec![1; 2 * n - 1];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for &i in &order {
        let e = tree.edges()[i as usize];
        let (ru, rv) = (dsu.find(e.u), dsu.find(e.v));
        let (left, right) = (node_of_root[ru as usize], node_of_root[rv as usize]);
        let id = (n + merges.len()) as u32;
        let size = sizes[left as usize] + sizes[right as usize];
        sizes[id as usize] = size;
        merges.push(Merge {
            left: left.min(right),
            right: left.max(right),
            height: weights.values[i as usize],
            size,
        });
        dsu.union(ru, rv);
        node_of_root[dsu.find(ru) as usize] = id;
    }
    Dendrogram::from_merges(n, merges)
}

/// Exact distortion evaluation over all pairs, `O(n^2)` after linear-size
/// preprocessing. The pair loop parallelizes over the current rayon pool;
/// the result does not depend on the thread count.
pub fn distortion(d: &Dendrogram, ps: &PointSet) -> Result<DistortionReport, DendroError> {
    if d.len() != ps.len() {
        return Err(DendroError::LeafCountMismatch {
            dendro: d.len(),
            points: ps.len(),
        });
    }
    let n = ps.len();
    if n < 2 {
        return Err(DendroError::TooFewPoints);
    }
    let start = Instant::now();
    let index = UltrametricIndex::new(d);

    struct Acc {
        dist_max: f64,
        argmax: Option<(u32, u32)>,
        violation: f64,
    }
    let zero = || Acc {
        dist_max: 0.0,
        argmax: None,
        violation: 1.0,
    };
    // deterministic independent of thread count: the per-u accumulators are
    // combined by a symmetric max with a fixed pair tiebreak
    let combine = |a: Acc, b: Acc| {
        let (dist_max, argmax) = match a.dist_max.total_cmp(&b.dist_max) {
            std::cmp::Ordering::Greater => (a.dist_max, a.argmax),
            std::cmp::Ordering::Less => (b.dist_max, b.argmax),
            std::cmp::Ordering::Equal => (a.dist_max, a.argmax.min(b.argmax).or(a.argmax)),
        };
        Acc {
            dist_max,
            argmax,
            violation: a.violation.max(b.violation),
        }
    };
    let acc = (0..n as u32 - 1)
        .into_par_iter()
        .map(|u| {
            let mut acc = zero();
            for v in u + 1..n as u32 {
                let delta = index.distance(u, v).expect("ids in range");
                let l2 = ps.distance(u, v);
                if l2 > 0.0 {
                    let ratio = delta / l2;
                    if ratio > acc.dist_max {
                        acc.dist_max = ratio;
                        acc.argmax = Some((u, v));
                    }
                }
                if delta > 0.0 {
                    acc.violation = acc.violation.max(l2 / delta);
                }
            }
            acc
        })
        .reduce(zero, combine);

    Ok(DistortionReport {
        dist_max: acc.dist_max,
        dominance_violation_max: acc.violation,
        argmax: acc.argmax,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Parameters of the approximation pipeline. The overall target `c` splits
/// into a tree factor `gamma` and a cut-weight factor `alpha`; the defaults
/// take `gamma = alpha = sqrt(c)`.
#[derive(Debug, Clone, Copy)]
pub struct FitParams {
    pub gamma: f64,
    pub alpha: f64,
    pub multiplier: MultiplierMode,
    pub seed: u64,
    /// LSH bucket width in units of the radius.
    pub lsh_width: f64,
    /// Multiplier on the calibrated LSH repetition count.
    pub lsh_safety: f64,
    /// Constant in front of the AFN direction count.
    pub afn_c_l: f64,
    /// Constant in front of the AFN list cap.
    pub afn_c_m: f64,
    /// Below this size the distance-scale estimate is exact.
    pub scale_exact_threshold: usize,
    /// Overrides for the estimated radius range.
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
}

impl FitParams {
    pub fn new(gamma: f64, alpha: f64, seed: u64) -> Self {
        FitParams {
            gamma,
            alpha,
            multiplier: MultiplierMode::PracticalSqrt,
            seed,
            lsh_width: 4.0,
            lsh_safety: 1.0,
            afn_c_l: 1.0,
            afn_c_m: 1.0,
            scale_exact_threshold: 2000,
            r_min: None,
            r_max: None,
        }
    }

    /// Splits an overall target `c >= 1` evenly: `gamma = alpha = sqrt(c)`.
    pub fn from_c(c: f64, seed: u64) -> Result<Self, DendroError> {
        if !(c >= 1.0) {
            return Err(DendroError::BadC(c));
        }
        Ok(FitParams::new(c.sqrt(), c.sqrt(), seed))
    }

    /// The product `gamma * alpha` bounding the approximation in strict mode.
    pub fn c(&self) -> f64 {
        self.gamma * self.alpha
    }
}

/// Counters and per-phase timings of one [`fast_ultrametric`] run.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitCounters {
    pub harvest: HarvestCounters,
    pub cut_weights: CwCounters,
    pub tree_ms: f64,
    pub cut_weights_ms: f64,
    pub cartesian_ms: f64,
}

/// Everything one pipeline run produces, for callers that also want the
/// intermediate spanning tree and cut weights (dumps, diagnostics).
pub struct FitArtifacts {
    pub tree: SpanningTree,
    pub weights: CutWeightMap,
    pub dendrogram: Dendrogram,
    pub counters: FitCounters,
}

/// The exact quadratic pipeline: exact minimum spanning tree, exact cut
/// weights, Cartesian tree. The output is the optimal ultrametric fit.
pub fn exact_best_fit(ps: &PointSet) -> Result<Dendrogram, DendroError> {
    Ok(exact_best_fit_artifacts(ps)?.dendrogram)
}

/// [`exact_best_fit`] keeping the intermediate artifacts.
pub fn exact_best_fit_artifacts(ps: &PointSet) -> Result<FitArtifacts, DendroError> {
    let mut counters = FitCounters::default();
    let start = Instant::now();
    let tree = prim_mst(ps);
    counters.tree_ms = start.elapsed().as_secs_f64() * 1e3;
    if let Some(e) = tree.edges().first() {
        if e.weight == 0.0 {
            return Err(DendroError::DuplicatePoints(e.u, e.v));
        }
    }
    let start = Instant::now();
    let weights = exact_cut_weights(ps, &tree);
    counters.cut_weights = weights.counters;
    counters.cut_weights_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let dendrogram = cartesian_tree(&tree, &weights)?;
    counters.cartesian_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(FitArtifacts {
        tree,
        weights,
        dendrogram,
        counters,
    })
}

/// The subquadratic approximation pipeline: γ-Kruskal tree, approximate cut
/// weights, Cartesian tree. Deterministic for a fixed seed.
pub fn fast_ultrametric(
    ps: &PointSet,
    params: &FitParams,
) -> Result<(Dendrogram, FitCounters), DendroError> {
    let artifacts = fast_ultrametric_artifacts(ps, params)?;
    Ok((artifacts.dendrogram, artifacts.counters))
}

/// [`fast_ultrametric`] keeping the intermediate artifacts.
pub fn fast_ultrametric_artifacts(
    ps: &PointSet,
    params: &FitParams,
) -> Result<FitArtifacts, DendroError> {
    let mut counters = FitCounters::default();

    let start = Instant::now();
    let tree = if params.gamma <= 1.0 {
        prim_mst(ps)
    } else {
        let estimated;
        let scale = match (params.r_min, params.r_max) {
            (Some(r_min), Some(r_max)) => DistanceScale {
                r_min,
                r_max,
                exact: false,
            },
            (r_min, r_max) => {
                estimated = estimate_scale_range(ps, params.scale_exact_threshold)?;
                DistanceScale {
                    r_min: r_min.unwrap_or(estimated.r_min),
                    r_max: r_max.unwrap_or(estimated.r_max),
                    exact: estimated.exact,
                }
            }
        };
        let harvest = HarvestParams {
            width: params.lsh_width,
            safety: params.lsh_safety,
            seed: params.seed,
            stop_when_connected: true,
        };
        let (tree, hc) = gamma_kruskal_tree(ps, params.gamma, &scale, &harvest)?;
        counters.harvest = hc;
        tree
    };
    counters.tree_ms = start.elapsed().as_secs_f64() * 1e3;
    if let Some(e) = tree.edges().first() {
        if e.weight == 0.0 {
            return Err(DendroError::DuplicatePoints(e.u, e.v));
        }
    }

    let start = Instant::now();
    let cw_params = CwParams {
        alpha: params.alpha,
        multiplier: params.multiplier,
        c_l: params.afn_c_l,
        c_m: params.afn_c_m,
        seed: params.seed,
    };
    let weights = approximate_cut_weights(ps, &tree, &cw_params)?;
    counters.cut_weights = weights.counters;
    counters.cut_weights_ms = start.elapsed().as_secs_f64() * 1e3;

    let start = Instant::now();
    let dendrogram = cartesian_tree(&tree, &weights)?;
    counters.cartesian_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(FitArtifacts {
        tree,
        weights,
        dendrogram,
        counters,
    })
}
