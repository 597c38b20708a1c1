//! Locality-sensitive hashing for Euclidean space at a target radius.
//!
//! The family is the classic p-stable construction: a Gaussian projection
//! quantized into buckets of width `w * R`, concatenated `concat_k` times.
//! [`calibrate`] picks the concatenation depth so that pairs at distance
//! `>= c * R` collide with probability at most `1/n`, and the repetition
//! count so that pairs at distance `<= R` collide at least once with
//! probability `1 - 1/n^3`.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::dataset::PointSet;
use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum LshError {
    #[error("approximation parameter must exceed 1, got {0}")]
    BadGamma(f64),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("bucket width must be positive, got {0}")]
    BadWidth(f64),
}

/// Parameters of one calibrated hash family instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshParams {
    /// Target radius R.
    pub radius: f64,
    /// Gap parameter c (> 1): far means distance >= c * R.
    pub c: f64,
    /// Bucket width in units of R.
    pub w: f64,
    /// Number of concatenated atomic hashes.
    pub concat_k: usize,
    /// Number of independent repetitions.
    pub repetitions: usize,
    pub seed: u64,
}

/// Radius-free output of [`calibrate`]; combine with a radius and seed to get
/// [`LshParams`]. `p_near` and `p_far` are the single-hash collision
/// probabilities at distances `R` and `c * R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub c: f64,
    pub w: f64,
    pub concat_k: usize,
    pub repetitions: usize,
    pub p_near: f64,
    pub p_far: f64,
}

impl Calibration {
    pub fn params(&self, radius: f64, seed: u64) -> LshParams {
        LshParams {
            radius,
            c: self.c,
            w: self.w,
            concat_k: self.concat_k,
            repetitions: self.repetitions,
            seed,
        }
    }
}

/// Probability that a single atomic hash collides for two points at distance
/// `s * R`, with bucket width `w * R`. Continuous, equal to 1 at `s = 0` and
/// strictly decreasing in `s`.
pub fn collision_probability(s: f64, w: f64) -> f64 {
    assert!(s >= 0.0 && w > 0.0);
    if s == 0.0 {
        return 1.0;
    }
    let u = w / s;
    let normal = Normal::standard();
    let p = 1.0 - 2.0 * normal.cdf(-u)
        - (2.0 / ((2.0 * std::f64::consts::PI).sqrt() * u)) * (1.0 - (-u * u / 2.0).exp());
    p.clamp(0.0, 1.0)
}

/// Chooses `concat_k` as the smallest `k` with `p(gamma, w)^k <= 1/n` and
/// `repetitions = ceil(safety * 3 * ln n / p(1, w)^k)`.
pub fn calibrate(n: usize, gamma: f64, w: f64, safety: f64) -> Result<Calibration, LshError> {
    if gamma <= 1.0 {
        return Err(LshError::BadGamma(gamma));
    }
    if n < 2 {
        return Err(LshError::TooFewPoints(n));
    }
    if w <= 0.0 {
        return Err(LshError::BadWidth(w));
    }
    let p_far_single = collision_probability(gamma, w);
    let p_near_single = collision_probability(1.0, w);
    let target = 1.0 / n as f64;
    let concat_k = (target.ln() / p_far_single.ln()).ceil().max(1.0) as usize;
    let p_near = p_near_single.powi(concat_k as i32);
    let p_far = p_far_single.powi(concat_k as i32);
    let repetitions = (safety * 3.0 * (n as f64).ln() / p_near).ceil().max(1.0) as usize;
    Ok(Calibration {
        c: gamma,
        w,
        concat_k,
        repetitions,
        p_near,
        p_far,
    })
}

/// Partition of the point ids by hash key.
#[derive(Debug)]
pub struct HashedBuckets {
    buckets: HashMap<Box<[i64]>, Vec<u32>>,
}

impl HashedBuckets {
    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.buckets.values().map(|v| v.as_slice())
    }

    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn total_points(&self) -> usize {
        self.buckets.values().map(|v| v.len()).sum()
    }

    pub fn key_of(&self, id: u32) -> Option<&[i64]> {
        self.buckets
            .iter()
            .find(|(_, ids)| ids.contains(&id))
            .map(|(k, _)| &**k)
    }
}

/// Hashes all points for repetition `rep`, assigning each point the key
/// `(floor((<g_j, p> + b_j) / (w * R)))_{j < concat_k}` with Gaussian
/// directions `g_j` and offsets `b_j` uniform in `[0, w * R)`, both drawn
/// from the stream `(params.seed, LSH, rep)`.
pub fn hash_points(ps: &PointSet, params: &LshParams, rep: usize) -> HashedBuckets {
    assert!(rep < params.repetitions, "repetition index out of range");
    let d = ps.dim();
    let k = params.concat_k;
    let cell = params.w * params.radius;

    let mut rng = rng::stream(params.seed, tag::LSH, rep as u64);
    let mut dirs = Vec::with_capacity(k * d);
    for _ in 0..k * d {
        let g: f64 = StandardNormal.sample(&mut rng);
        dirs.push(g);
    }
    let offsets: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * cell).collect();

    let mut buckets: HashMap<Box<[i64]>, Vec<u32>> = HashMap::new();
    let mut key = vec![0i64; k];
    for id in 0..ps.len() as u32 {
        let p = ps.point(id);
        for j in 0..k {
            let g = &dirs[j * d..(j + 1) * d];
            let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
            key[j] = ((dot + offsets[j]) / cell).floor() as i64;
        }
        buckets
            .entry(key.clone().into_boxed_slice())
            .or_default()
            .push(id);
    }
    HashedBuckets { buckets }
}
