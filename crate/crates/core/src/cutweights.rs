//! Cut weights of a spanning tree.
//!
//! The cut weight of a tree edge `e` is the maximum Euclidean distance
//! between the two components of the tree after removing `e`. Processing the
//! edges in ascending `(weight, u, v)` order makes the two components of an
//! edge available incrementally: they are exactly the clusters of its
//! endpoints in the forest of strictly lighter edges.

use thiserror::Error;

use crate::afn::{AfnError, AfnParams, AfnStructure};
use crate::dataset::PointSet;
use crate::kt::SpanningTree;

#[derive(Debug, Error)]
pub enum CwError {
    #[error(transparent)]
    Afn(#[from] AfnError),
    #[error("alpha must be at least 1, got {0}")]
    BadAlpha(f64),
    #[error("custom multiplier must be positive, got {0}")]
    BadMultiplier(f64),
}

/// How the raw farthest-neighbor estimate is scaled into an approximate cut
/// weight. The estimate is within a factor `alpha` below the true maximum,
/// so `Strict` (multiply by `alpha`) guarantees an upper bound on the true
/// cut weight; `PracticalSqrt` (multiply by `sqrt(alpha)`) trades that
/// guarantee for tighter typical values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierMode {
    Strict,
    PracticalSqrt,
    Custom(f64),
}

impl MultiplierMode {
    pub fn factor(&self, alpha: f64) -> f64 {
        match *self {
            MultiplierMode::Strict => alpha,
            MultiplierMode::PracticalSqrt => alpha.sqrt(),
            MultiplierMode::Custom(m) => m,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CwParams {
    pub alpha: f64,
    pub multiplier: MultiplierMode,
    pub c_l: f64,
    pub c_m: f64,
    pub seed: u64,
}

impl CwParams {
    pub fn new(alpha: f64, seed: u64) -> Self {
        CwParams {
            alpha,
            multiplier: MultiplierMode::PracticalSqrt,
            c_l: 1.0,
            c_m: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CwCounters {
    /// Farthest-neighbor queries issued (one per enumerated point).
    pub queries: u64,
    /// Entries moved across all merges of the farthest-neighbor structure.
    pub entries_moved: u64,
    /// Cross pairs inspected by the exact routine.
    pub pairs_scanned: u64,
}

/// Cut weights aligned with `tree.edges()` (ascending `(weight, u, v)`
/// order): `values[i]` belongs to `tree.edges()[i]`.
#[derive(Debug, Clone)]
pub struct CutWeightMap {
    pub values: Vec<f64>,
    pub counters: CwCounters,
}

/// Exact cut weights, `O(n^2 d)` total: every pair is a cross pair of
/// exactly one edge, the one that first joins its endpoints.
pub fn exact_cut_weights(ps: &PointSet, tree: &SpanningTree) -> CutWeightMap {
    let n = tree.len();
    let mut members: Vec<Vec<u32>> = (0..n as u32).map(|i| vec![i]).collect();
    let mut dsu = crate::dsu::Dsu::new(n);
    let mut values = Vec::with_capacity(tree.edges().len());
    let mut counters = CwCounters::default();
    for e in tree.edges() {
        let (ru, rv) = (dsu.find(e.u), dsu.find(e.v));
        let (big, small) = if members[ru as usize].len() >= members[rv as usize].len() {
            (ru, rv)
        } else {
            (rv, ru)
        };
        let mut max = 0.0f64;
        for &a in &members[small as usize] {
            for &b in &members[big as usize] {
                max = max.max(ps.distance(a, b));
            }
        }
        counters.pairs_scanned +=
            members[small as usize].len() as u64 * members[big as usize].len() as u64;
        values.push(max);
        let moved = std::mem::take(&mut members[small as usize]);
        members[big as usize].extend(moved);
        dsu.union_into(big, small);
    }
    CutWeightMap { values, counters }
}

/// Approximate cut weights via the dynamic farthest-neighbor structure.
///
/// For each tree edge in ascending order, every point of the smaller
/// endpoint cluster queries the larger cluster; the scaled maximum of the
/// answers is the approximate cut weight, and the clusters are merged.
/// With `alpha = 1` this routes to [`exact_cut_weights`] (and still applies
/// the multiplier, which is 1 in the default modes).
pub fn approximate_cut_weights(
    ps: &PointSet,
    tree: &SpanningTree,
    params: &CwParams,
) -> Result<CutWeightMap, CwError> {
    if params.alpha < 1.0 {
        return Err(CwError::BadAlpha(params.alpha));
    }
    if let MultiplierMode::Custom(m) = params.multiplier {
        if !(m > 0.0) {
            return Err(CwError::BadMultiplier(m));
        }
    }
    let factor = params.multiplier.factor(params.alpha);
    if params.alpha == 1.0 {
        let mut map = exact_cut_weights(ps, tree);
        if factor != 1.0 {
            for v in &mut map.values {
                *v *= factor;
            }
        }
        return Ok(map);
    }

    let afn_params = AfnParams {
        alpha: params.alpha,
        c_l: params.c_l,
        c_m: params.c_m,
        seed: params.seed,
    };
    let mut st = AfnStructure::initialize(ps, &afn_params)?;
    let mut values = Vec::with_capacity(tree.edges().len());
    for e in tree.edges() {
        let hu = st.find(e.u)?;
        let hv = st.find(e.v)?;
        let (target, source) = if hu.size >= hv.size { (hu, hv) } else { (hv, hu) };
        let probes: Vec<u32> = st.enumerate(source)?.collect();
        let mut max = 0.0f64;
        for q in probes {
            let (_, dist) = st.query_id(target, q, ps)?;
            max = max.max(dist);
        }
        values.push(factor * max);
        st.merge(target, source)?;
    }
    let afn = st.counters();
    Ok(CutWeightMap {
        values,
        counters: CwCounters {
            queries: afn.queries,
            entries_moved: afn.entries_moved,
            pairs_scanned: 0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_uniform, PointSet};
    use crate::dsu::Dsu;
    use crate::kt::{prim_mst, SpanningTree, WeightedEdge};

    /// Definition-literal oracle: for each edge, rebuild from scratch the
    /// components of its endpoints in the forest of strictly lighter edges,
    /// then take the max distance between the two components. `O(n^3)`.
    fn cut_weight_oracle(ps: &PointSet, tree: &SpanningTree) -> Vec<f64> {
        let n = tree.len();
        let mut out = Vec::new();
        for (pos, edge) in tree.edges().iter().enumerate() {
            let mut dsu = Dsu::new(n);
            for e in &tree.edges()[..pos] {
                dsu.union(e.u, e.v);
            }
            let mut max = 0.0f64;
            for u in 0..n as u32 {
                if !dsu.same(u, edge.u) {
                    continue;
                }
                for v in 0..n as u32 {
                    if dsu.same(v, edge.v) {
                        max = max.max(ps.distance(u, v));
                    }
                }
            }
            out.push(max);
        }
        out
    }

    #[test]
    fn collinear_hand_oracle() {
        let ps = PointSet::from_coords(1, vec![0.0, 1.0, 3.0]).unwrap();
        let tree = prim_mst(&ps);
        let map = exact_cut_weights(&ps, &tree);
        assert_eq!(map.values, vec![1.0, 3.0]);
        // every pair is charged to exactly one edge
        assert_eq!(map.counters.pairs_scanned, 3);
    }

    #[test]
    fn exact_matches_definition_oracle() {
        let ps = generate_uniform(60, 3, 17).unwrap();
        let tree = prim_mst(&ps);
        let fast = exact_cut_weights(&ps, &tree);
        let slow = cut_weight_oracle(&ps, &tree);
        for (i, (a, b)) in fast.values.iter().zip(&slow).enumerate() {
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "edge {i}: {a} vs {b}");
        }
        assert_eq!(fast.counters.pairs_scanned, 60 * 59 / 2);
    }

    #[test]
    fn exact_dominates_edge_weights() {
        // CW(e) >= weight(e): the endpoints themselves are a cross pair.
        let ps = generate_uniform(80, 4, 23).unwrap();
        let tree = prim_mst(&ps);
        let map = exact_cut_weights(&ps, &tree);
        for (e, &cw) in tree.edges().iter().zip(&map.values) {
            assert!(cw >= e.weight);
        }
    }

    #[test]
    fn two_points_strict_multiplier() {
        let ps = PointSet::from_coords(1, vec![0.0, 5.0]).unwrap();
        let tree = SpanningTree::new(2, vec![WeightedEdge::new(0, 1, 5.0)]).unwrap();
        let params = CwParams {
            multiplier: MultiplierMode::Strict,
            ..CwParams::new(2.0, 1)
        };
        // singleton clusters: the farthest-neighbor answer is exact, so the
        // approximate cut weight is exactly alpha * distance.
        let map = approximate_cut_weights(&ps, &tree, &params).unwrap();
        assert_eq!(map.values, vec![10.0]);
    }

    #[test]
    fn alpha_one_routes_to_exact() {
        let ps = generate_uniform(50, 3, 29).unwrap();
        let tree = prim_mst(&ps);
        let map = approximate_cut_weights(&ps, &tree, &CwParams::new(1.0, 7)).unwrap();
        assert_eq!(map.values, exact_cut_weights(&ps, &tree).values);
    }

    #[test]
    fn strict_sandwich_holds() {
        let alpha = 2.0;
        let ps = generate_uniform(200, 4, 31).unwrap();
        let tree = prim_mst(&ps);
        let exact = exact_cut_weights(&ps, &tree);
        let params = CwParams {
            multiplier: MultiplierMode::Strict,
            ..CwParams::new(alpha, 13)
        };
        let approx = approximate_cut_weights(&ps, &tree, &params).unwrap();
        for (i, (&acw, &cw)) in approx.values.iter().zip(&exact.values).enumerate() {
            assert!(acw >= cw * (1.0 - 1e-12), "edge {i}: {acw} < {cw}");
            assert!(
                acw <= alpha * cw * (1.0 + 1e-12),
                "edge {i}: {acw} > {alpha} * {cw}"
            );
        }
    }

    #[test]
    fn query_counter_stays_within_small_to_large_bound() {
        let n = 300usize;
        let ps = generate_uniform(n, 3, 37).unwrap();
        let tree = prim_mst(&ps);
        let map = approximate_cut_weights(&ps, &tree, &CwParams::new(2.0, 3)).unwrap();
        let bound = 2.0 * n as f64 * (n as f64).log2() + n as f64;
        assert!(
            (map.counters.queries as f64) <= bound,
            "{} queries exceeds {bound}",
            map.counters.queries
        );
    }

    #[test]
    fn approximate_is_deterministic() {
        let ps = generate_uniform(100, 3, 41).unwrap();
        let tree = prim_mst(&ps);
        let params = CwParams::new(2.0, 99);
        let a = approximate_cut_weights(&ps, &tree, &params).unwrap();
        let b = approximate_cut_weights(&ps, &tree, &params).unwrap();
        assert_eq!(a.values, b.values);
    }
}
