//! Hierarchical clustering by ultrametric fitting.
//!
//! This crate computes ultrametric embeddings (dendrograms) of Euclidean
//! point sets that approximately minimize the maximum distortion
//! `max Δ(x,y) / ||x - y||` subject to `Δ(x,y) >= ||x - y||` for all pairs.
//!
//! Two pipelines are provided:
//!
//! * [`dendro::exact_best_fit`] — the quadratic-time exact optimum:
//!   exact minimum spanning tree, exact cut weights, Cartesian tree.
//! * [`dendro::fast_ultrametric`] — a subquadratic `γ·α`-approximation:
//!   an LSH-guided γ-Kruskal tree ([`kt`]), α-approximate cut weights via a
//!   dynamic approximate-farthest-neighbor structure ([`afn`], [`cutweights`]),
//!   and the same Cartesian-tree step ([`dendro`]).
//!
//! All randomness derives from a single 64-bit seed (see [`rng`]), so every
//! run is reproducible bit for bit.

pub mod afn;
pub mod cutweights;
pub mod dataset;
pub mod dendro;
pub mod dsu;
pub mod kt;
pub mod lsh;
pub mod rng;

pub use dataset::{DistanceScale, PointSet};
pub use dendro::{Dendrogram, DistortionReport, FitParams};
pub use kt::{EdgeList, SpanningTree, WeightedEdge};
