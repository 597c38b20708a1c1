//! Point-set storage, CSV ingestion, synthetic generation and distance-scale
//! estimation.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {col}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("row {row}, column {col}: coordinate is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("input file contains no data rows")]
    Empty,
    #[error("point count and dimension must both be at least 1")]
    EmptyShape,
    #[error("need at least 2 points to estimate a distance scale")]
    TooFewPoints,
    #[error("duplicate points: ids {0} and {1} have distance 0")]
    DuplicatePoints(u32, u32),
}

/// An immutable set of `n` points in `R^d`, addressed by dense ids `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    n: usize,
    d: usize,
    coords: Vec<f64>, // row-major, n * d
}

impl PointSet {
    /// Builds a point set from a row-major coordinate buffer of length `n*d`.
    pub fn from_coords(d: usize, coords: Vec<f64>) -> Result<Self, DatasetError> {
        if d == 0 || coords.is_empty() || coords.len() % d != 0 {
            return Err(DatasetError::EmptyShape);
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(DatasetError::NonFinite {
                row: pos / d + 1,
                col: pos % d + 1,
            });
        }
        Ok(PointSet {
            n: coords.len() / d,
            d,
            coords,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Coordinates of point `id`. Panics if `id` is out of range.
    #[inline]
    pub fn point(&self, id: u32) -> &[f64] {
        let i = id as usize;
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Euclidean distance between points `u` and `v`.
    /// Panics if either id is out of range.
    #[inline]
    pub fn distance(&self, u: u32, v: u32) -> f64 {
        let (a, b) = (self.point(u), self.point(v));
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let t = x - y;
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Estimated range of pairwise distances.
///
/// `r_min` is a lower bound estimate of the minimum pairwise distance and
/// `r_max` an upper bound estimate of the maximum; `exact` marks brute-force
/// computation, in which case both bounds are tight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceScale {
    pub r_min: f64,
    pub r_max: f64,
    pub exact: bool,
}

impl DistanceScale {
    pub fn new(r_min: f64, r_max: f64, exact: bool) -> Self {
        assert!(
            r_min > 0.0 && r_min <= r_max,
            "invalid distance scale: r_min={r_min}, r_max={r_max}"
        );
        DistanceScale {
            r_min,
            r_max,
            exact,
        }
    }

    pub fn spread(&self) -> f64 {
        self.r_max / self.r_min
    }
}

/// Reads a points CSV: one row per point, comma-separated decimal reals,
/// optionally preceded by a single header row. Row order defines ids.
pub fn load_csv<P: AsRef<Path>>(path: P, has_header: bool) -> Result<PointSet, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let mut coords = Vec::new();
    let mut d = 0usize;
    let offset = if has_header { 2 } else { 1 };
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + offset; // 1-based row number in the file
        if d == 0 {
            d = record.len();
        } else if record.len() != d {
            return Err(DatasetError::RaggedRow {
                row,
                expected: d,
                found: record.len(),
            });
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| DatasetError::NonNumeric {
                row,
                col: col + 1,
                value: field.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DatasetError::NonFinite { row, col: col + 1 });
            }
            coords.push(value);
        }
    }
    if coords.is_empty() {
        return Err(DatasetError::Empty);
    }
    PointSet::from_coords(d, coords)
}

/// Writes a point set in the same CSV format accepted by [`load_csv`].
pub fn write_csv<P: AsRef<Path>>(ps: &PointSet, path: P) -> Result<(), DatasetError> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for id in 0..ps.len() as u32 {
        let row: Vec<String> = ps.point(id).iter().map(|c| format!("{c:.17e}")).collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Generates `n` points i.i.d. uniform on `[0,1]^d`.
///
/// Coordinates are drawn row by row from the ChaCha8 stream
/// `rng::stream(seed, tag::GENERATE, 0)` via `Rng::random::<f64>()`, so the
/// output is bit-identical for a given `(n, d, seed)`.
pub fn generate_uniform(n: usize, d: usize, seed: u64) -> Result<PointSet, DatasetError> {
    if n == 0 || d == 0 {
        return Err(DatasetError::EmptyShape);
    }
    let mut rng = rng::stream(seed, tag::GENERATE, 0);
    let coords: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    PointSet::from_coords(d, coords)
}

/// Number of points sampled by the heuristic `r_min` estimate.
const SCALE_SAMPLE_SIZE: usize = 2048;
/// Slack divisor applied to the sampled minimum distance.
const SCALE_SAMPLE_SLACK: f64 = 4.0;

/// Estimates the range `[d_min, d_max]` of pairwise distances.
///
/// Brute force (exact) when `n <= exact_threshold`. Otherwise `r_max` is
/// twice the maximum distance from point 0 (an upper bound on the diameter)
/// and `r_min` is the minimum pairwise distance within a fixed random sample
/// of up to [`SCALE_SAMPLE_SIZE`] points, divided by [`SCALE_SAMPLE_SLACK`].
/// The sample is drawn from a fixed-seed stream, so the estimate is
/// deterministic.
pub fn estimate_scale_range(
    ps: &PointSet,
    exact_threshold: usize,
) -> Result<DistanceScale, DatasetError> {
    let n = ps.len();
    if n < 2 {
        return Err(DatasetError::TooFewPoints);
    }
    if n <= exact_threshold {
        let mut min = f64::INFINITY;
        let mut max = 0.0f64;
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                let dist = ps.distance(u, v);
                if dist == 0.0 {
                    return Err(DatasetError::DuplicatePoints(u, v));
                }
                min = min.min(dist);
                max = max.max(dist);
            }
        }
        return Ok(DistanceScale::new(min, max, true));
    }

    let mut r_max = 0.0f64;
    for u in 1..n as u32 {
        r_max = r_max.max(ps.distance(0, u));
    }
    r_max *= 2.0;

    let mut rng = rng::stream(0, tag::SCALE_SAMPLE, 0);
    let mut sample: Vec<u32> = Vec::with_capacity(SCALE_SAMPLE_SIZE);
    for _ in 0..SCALE_SAMPLE_SIZE {
        sample.push(rng.random_range(0..n as u32));
    }
    sample.sort_unstable();
    sample.dedup();

    let mut sample_min = f64::INFINITY;
    for (i, &u) in sample.iter().enumerate() {
        for &v in &sample[i + 1..] {
            let dist = ps.distance(u, v);
            if dist == 0.0 {
                return Err(DatasetError::DuplicatePoints(u, v));
            }
            sample_min = sample_min.min(dist);
        }
    }
    Ok(DistanceScale::new(
        sample_min / SCALE_SAMPLE_SLACK,
        r_max,
        false,
    ))
}

/// Projects the point set to `target_dim` dimensions with a seeded Gaussian
/// matrix scaled by `1/sqrt(target_dim)`.
pub fn jl_project(ps: &PointSet, target_dim: usize, seed: u64) -> Result<PointSet, DatasetError> {
    if target_dim == 0 {
        return Err(DatasetError::EmptyShape);
    }
    let d = ps.dim();
    let mut rng = rng::stream(seed, tag::JL, 0);
    // matrix is d x target_dim, row-major
    let scale = 1.0 / (target_dim as f64).sqrt();
    let matrix: Vec<f64> = (0..d * target_dim)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * scale
        })
        .collect();

    let mut coords = Vec::with_capacity(ps.len() * target_dim);
    for id in 0..ps.len() as u32 {
        let p = ps.point(id);
        for j in 0..target_dim {
            let mut acc = 0.0;
            for (i, &x) in p.iter().enumerate() {
                acc += x * matrix[i * target_dim + j];
            }
            coords.push(acc);
        }
    }
    PointSet::from_coords(target_dim, coords)
}
