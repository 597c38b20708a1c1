//! JSON report types. The key set is stable: downstream scripts parse these
//! files, so fields are always present (null when not applicable).

use serde::Serialize;

use ultrafit::cutweights::MultiplierMode;
use ultrafit::dendro::{FitCounters, FitParams};

#[derive(Serialize)]
pub struct RunReport {
    pub command: String,
    pub seed: Option<u64>,
    pub params: ParamsEcho,
    pub distortion_max: Option<f64>,
    pub dominance_violation_max: Option<f64>,
    pub approx_factor: Option<f64>,
    pub runtime_ms: Phases,
    pub counters: Option<Counters>,
}

#[derive(Serialize)]
pub struct Phases {
    pub total: f64,
    pub tree: Option<f64>,
    pub cut_weights: Option<f64>,
    pub cartesian: Option<f64>,
    pub eval: Option<f64>,
}

#[derive(Serialize)]
pub struct ParamsEcho {
    pub n: usize,
    pub dim: usize,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub multiplier: Option<String>,
    pub lsh_width: Option<f64>,
    pub lsh_safety: Option<f64>,
}

impl ParamsEcho {
    pub fn from_fit(params: &FitParams, n: usize, dim: usize) -> Self {
        let multiplier = match params.multiplier {
            MultiplierMode::Strict => "strict".to_string(),
            MultiplierMode::PracticalSqrt => "sqrt".to_string(),
            MultiplierMode::Custom(m) => m.to_string(),
        };
        ParamsEcho {
            n,
            dim,
            c: Some(params.c()),
            gamma: Some(params.gamma),
            alpha: Some(params.alpha),
            multiplier: Some(multiplier),
            lsh_width: Some(params.lsh_width),
            lsh_safety: Some(params.lsh_safety),
        }
    }

    pub fn exact(n: usize, dim: usize) -> Self {
        ParamsEcho {
            n,
            dim,
            c: None,
            gamma: None,
            alpha: None,
            multiplier: None,
            lsh_width: None,
            lsh_safety: None,
        }
    }
}

#[derive(Serialize, Clone)]
pub struct Counters {
    pub edges_harvested: usize,
    pub lsh_collisions: u64,
    pub lsh_rounds: usize,
    pub lsh_scales: usize,
    pub harvest_retries: usize,
    pub bridged_components: usize,
    pub afn_queries: u64,
    pub afn_entries_moved: u64,
    pub exact_pairs_scanned: u64,
}

impl Counters {
    pub fn from_fit(counters: &FitCounters) -> Self {
        Counters {
            edges_harvested: counters.harvest.edges,
            lsh_collisions: counters.harvest.collisions,
            lsh_rounds: counters.harvest.rounds,
            lsh_scales: counters.harvest.scales,
            harvest_retries: counters.harvest.retries,
            bridged_components: counters.harvest.bridged,
            afn_queries: counters.cut_weights.queries,
            afn_entries_moved: counters.cut_weights.entries_moved,
            exact_pairs_scanned: counters.cut_weights.pairs_scanned,
        }
    }
}

#[derive(Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub algo: String,
    pub median_ms: f64,
    pub runs_ms: Vec<f64>,
    pub counters: Option<Counters>,
}

#[derive(Serialize)]
pub struct BenchReport {
    pub command: String,
    pub seed: u64,
    pub c: f64,
    pub dim: usize,
    pub repeats: usize,
    pub threads: usize,
    pub slopes_fast: Vec<f64>,
    pub slopes_exact: Vec<f64>,
    pub rows: Vec<BenchRow>,
}
