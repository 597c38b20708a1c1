//! `ultrafit` — fit ultrametrics (dendrograms) to Euclidean point sets.
//!
//! Subcommands: `fit` (subquadratic approximation), `exact` (quadratic
//! optimum), `eval` (distortion / approximation factor), `gen` (synthetic
//! data), `bench` (runtime scaling harness).

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ultrafit::cutweights::MultiplierMode;
use ultrafit::dataset::{self, PointSet};
use ultrafit::dendro::{
    self, distortion, exact_best_fit_artifacts, fast_ultrametric_artifacts, Dendrogram,
    FitArtifacts, FitParams,
};

mod report;
use report::{BenchReport, BenchRow, Counters, ParamsEcho, Phases, RunReport};

#[derive(Parser)]
#[command(name = "ultrafit", version, about = "Ultrametric fitting of Euclidean point sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an approximate ultrametric in subquadratic time
    Fit(FitArgs),
    /// Compute the exact optimal ultrametric (quadratic time)
    Exact(ExactArgs),
    /// Evaluate a dendrogram: distortion and approximation factor
    Eval(EvalArgs),
    /// Generate a uniform random point set
    Gen(GenArgs),
    /// Measure runtime scaling over a grid of sizes
    Bench(BenchArgs),
}

#[derive(Args)]
struct CommonIo {
    /// Input points CSV (one row per point)
    #[arg(long)]
    input: PathBuf,
    /// Treat the first input row as a header
    #[arg(long, default_value_t = false)]
    has_header: bool,
    /// Worker threads for the parallel phases
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write the JSON run report here as well as to stdout
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    io: CommonIo,
    /// Overall approximation target c >= 1 (gamma = alpha = sqrt(c))
    #[arg(long, value_parser = parse_c)]
    c: Option<f64>,
    /// Tree approximation factor (with --alpha, overrides --c)
    #[arg(long, requires = "alpha", conflicts_with = "c")]
    gamma: Option<f64>,
    /// Cut-weight approximation factor (with --gamma)
    #[arg(long, requires = "gamma")]
    alpha: Option<f64>,
    /// Output dendrogram CSV (rows left,right,height,size)
    #[arg(long)]
    output: PathBuf,
    /// Random seed
    #[arg(long, env = "ULTRAFIT_SEED", default_value_t = 0)]
    seed: u64,
    /// Cut-weight multiplier: "strict" (x alpha), "sqrt" (x sqrt(alpha)),
    /// or a positive number
    #[arg(long, default_value = "sqrt", value_parser = parse_multiplier)]
    multiplier: MultiplierMode,
    /// LSH bucket width in units of the radius
    #[arg(long, default_value_t = 4.0)]
    lsh_width: f64,
    /// Multiplier on the calibrated LSH repetition count
    #[arg(long, default_value_t = 1.0)]
    lsh_safety: f64,
    /// Override the smallest search radius
    #[arg(long)]
    r_min: Option<f64>,
    /// Override the largest search radius
    #[arg(long)]
    r_max: Option<f64>,
    /// Dump the harvested spanning tree edges (CSV u,v,weight)
    #[arg(long)]
    dump_edges: Option<PathBuf>,
    /// Dump per-edge cut weights (CSV u,v,edge_weight,acw)
    #[arg(long)]
    dump_cutweights: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    io: CommonIo,
    /// Output dendrogram CSV
    #[arg(long)]
    output: PathBuf,
    /// Dump the exact MST edges (CSV u,v,weight)
    #[arg(long)]
    dump_edges: Option<PathBuf>,
    /// Dump per-edge exact cut weights (CSV u,v,edge_weight,acw)
    #[arg(long)]
    dump_cutweights: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    io: CommonIo,
    /// Candidate dendrogram CSV
    #[arg(long)]
    dendrogram: PathBuf,
    /// Baseline dendrogram CSV; defaults to computing the exact optimum
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Number of points (>= 1)
    #[arg(long)]
    n: usize,
    /// Dimension (>= 1)
    #[arg(long)]
    dim: usize,
    /// Random seed
    #[arg(long, env = "ULTRAFIT_SEED", default_value_t = 0)]
    seed: u64,
    /// Output points CSV
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated point counts, e.g. 10000,20000,40000
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Dimension of the synthetic points
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Overall approximation target for the fast pipeline
    #[arg(long, default_value_t = 9.0, value_parser = parse_c)]
    c: f64,
    /// Timed repetitions per size (median is reported)
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Pipeline(s) to time
    #[arg(long, default_value = "fast", value_parser = ["fast", "exact", "both"])]
    algo: String,
    /// Random seed
    #[arg(long, env = "ULTRAFIT_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads for the parallel phases
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write rows as CSV (n,algo,median_ms) here as well
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the JSON report here as well as to stdout
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_c(s: &str) -> Result<f64, String> {
    let c: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if c >= 1.0 {
        Ok(c)
    } else {
        Err(format!("c must be at least 1, got {c}"))
    }
}

fn parse_multiplier(s: &str) -> Result<MultiplierMode, String> {
    match s {
        "strict" => Ok(MultiplierMode::Strict),
        "sqrt" => Ok(MultiplierMode::PracticalSqrt),
        other => {
            let m: f64 = other
                .parse()
                .map_err(|_| format!("expected strict, sqrt, or a number, got {other:?}"))?;
            if m > 0.0 {
                Ok(MultiplierMode::Custom(m))
            } else {
                Err(format!("multiplier must be positive, got {m}"))
            }
        }
    }
}

fn init_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("failed to initialize the thread pool")?;
    Ok(())
}

fn load_points(io: &CommonIo) -> Result<PointSet> {
    dataset::load_csv(&io.input, io.has_header)
        .with_context(|| format!("failed to load {}", io.input.display()))
}

fn emit_report(report: &RunReport, path: Option<&PathBuf>) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    println!("{json}");
    if let Some(path) = path {
        std::fs::write(path, format!("{json}\n"))?;
    }
    Ok(())
}

fn dump_edges(artifacts: &FitArtifacts, path: &PathBuf) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_path(path)?;
    writer.write_record(["u", "v", "weight"])?;
    for e in artifacts.tree.edges() {
        writer.write_record([e.u.to_string(), e.v.to_string(), format!("{:.17}", e.weight)])?;
    }
    writer.flush()?;
    Ok(())
}

fn dump_cutweights(artifacts: &FitArtifacts, path: &PathBuf) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_path(path)?;
    writer.write_record(["u", "v", "edge_weight", "acw"])?;
    for (e, &acw) in artifacts.tree.edges().iter().zip(&artifacts.weights.values) {
        writer.write_record([
            e.u.to_string(),
            e.v.to_string(),
            format!("{:.17}", e.weight),
            format!("{:.17}", acw),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    init_threads(args.io.threads)?;
    let ps = load_points(&args.io)?;

    let mut params = match (args.c, args.gamma, args.alpha) {
        (_, Some(gamma), Some(alpha)) => FitParams::new(gamma, alpha, args.seed),
        (Some(c), _, _) => FitParams::from_c(c, args.seed)?,
        _ => FitParams::from_c(9.0, args.seed)?,
    };
    params.multiplier = args.multiplier;
    params.lsh_width = args.lsh_width;
    params.lsh_safety = args.lsh_safety;
    params.r_min = args.r_min;
    params.r_max = args.r_max;

    let start = Instant::now();
    let artifacts = fast_ultrametric_artifacts(&ps, &params)?;
    let total_ms = start.elapsed().as_secs_f64() * 1e3;

    artifacts.dendrogram.write_csv(&args.output)?;
    if let Some(path) = &args.dump_edges {
        dump_edges(&artifacts, path)?;
    }
    if let Some(path) = &args.dump_cutweights {
        dump_cutweights(&artifacts, path)?;
    }

    let report = RunReport {
        command: "fit".into(),
        seed: Some(args.seed),
        params: ParamsEcho::from_fit(&params, ps.len(), ps.dim()),
        distortion_max: None,
        dominance_violation_max: None,
        approx_factor: None,
        runtime_ms: Phases {
            total: total_ms,
            tree: Some(artifacts.counters.tree_ms),
            cut_weights: Some(artifacts.counters.cut_weights_ms),
            cartesian: Some(artifacts.counters.cartesian_ms),
            eval: None,
        },
        counters: Some(Counters::from_fit(&artifacts.counters)),
    };
    emit_report(&report, args.io.report.as_ref())
}

fn cmd_exact(args: ExactArgs) -> Result<()> {
    init_threads(args.io.threads)?;
    let ps = load_points(&args.io)?;
    if ps.len() > 100_000 {
        eprintln!(
            "warning: exact pipeline is quadratic; n = {} will take a while",
            ps.len()
        );
    }

    let start = Instant::now();
    let artifacts = exact_best_fit_artifacts(&ps)?;
    let total_ms = start.elapsed().as_secs_f64() * 1e3;

    artifacts.dendrogram.write_csv(&args.output)?;
    if let Some(path) = &args.dump_edges {
        dump_edges(&artifacts, path)?;
    }
    if let Some(path) = &args.dump_cutweights {
        dump_cutweights(&artifacts, path)?;
    }

    let report = RunReport {
        command: "exact".into(),
        seed: None,
        params: ParamsEcho::exact(ps.len(), ps.dim()),
        distortion_max: None,
        dominance_violation_max: None,
        approx_factor: None,
        runtime_ms: Phases {
            total: total_ms,
            tree: Some(artifacts.counters.tree_ms),
            cut_weights: Some(artifacts.counters.cut_weights_ms),
            cartesian: Some(artifacts.counters.cartesian_ms),
            eval: None,
        },
        counters: Some(Counters::from_fit(&artifacts.counters)),
    };
    emit_report(&report, args.io.report.as_ref())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    init_threads(args.io.threads)?;
    let ps = load_points(&args.io)?;
    let candidate = Dendrogram::read_csv(&args.dendrogram)
        .with_context(|| format!("failed to load {}", args.dendrogram.display()))?;

    let start = Instant::now();
    let cand_report = distortion(&candidate, &ps)?;
    let baseline_dist = match &args.baseline {
        Some(path) => {
            let baseline = Dendrogram::read_csv(path)
                .with_context(|| format!("failed to load {}", path.display()))?;
            distortion(&baseline, &ps)?.dist_max
        }
        None => {
            let exact = dendro::exact_best_fit(&ps)?;
            distortion(&exact, &ps)?.dist_max
        }
    };
    let total_ms = start.elapsed().as_secs_f64() * 1e3;

    let report = RunReport {
        command: "eval".into(),
        seed: None,
        params: ParamsEcho::exact(ps.len(), ps.dim()),
        distortion_max: Some(cand_report.dist_max),
        dominance_violation_max: Some(cand_report.dominance_violation_max),
        approx_factor: Some(cand_report.dist_max / baseline_dist),
        runtime_ms: Phases {
            total: total_ms,
            tree: None,
            cut_weights: None,
            cartesian: None,
            eval: Some(cand_report.runtime_ms),
        },
        counters: None,
    };
    emit_report(&report, args.io.report.as_ref())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let ps = dataset::generate_uniform(args.n, args.dim, args.seed)?;
    dataset::write_csv(&ps, &args.output)?;
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    init_threads(args.threads)?;
    if args.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    if args.sizes.is_empty() {
        bail!("--sizes must list at least one size");
    }

    let run_fast = args.algo == "fast" || args.algo == "both";
    let run_exact = args.algo == "exact" || args.algo == "both";
    let mut rows = Vec::new();
    for (i, &n) in args.sizes.iter().enumerate() {
        let ps = dataset::generate_uniform(n, args.dim, args.seed.wrapping_add(i as u64))?;
        if run_fast {
            let mut runs = Vec::new();
            let mut counters = None;
            for r in 0..args.repeats {
                let params = FitParams::from_c(args.c, args.seed.wrapping_add(r as u64))?;
                let start = Instant::now();
                let artifacts = fast_ultrametric_artifacts(&ps, &params)?;
                runs.push(start.elapsed().as_secs_f64() * 1e3);
                counters = Some(Counters::from_fit(&artifacts.counters));
            }
            rows.push(BenchRow {
                n,
                algo: "fast".into(),
                median_ms: median(runs.clone()),
                runs_ms: runs,
                counters,
            });
        }
        if run_exact {
            let mut runs = Vec::new();
            for _ in 0..args.repeats {
                let start = Instant::now();
                let _ = dendro::exact_best_fit(&ps)?;
                runs.push(start.elapsed().as_secs_f64() * 1e3);
            }
            rows.push(BenchRow {
                n,
                algo: "exact".into(),
                median_ms: median(runs.clone()),
                runs_ms: runs,
                counters: None,
            });
        }
    }

    // log-log slope between consecutive sizes, per algorithm
    let slope_of = |algo: &str| -> Vec<f64> {
        let series: Vec<&BenchRow> = rows.iter().filter(|r| r.algo == algo).collect();
        series
            .windows(2)
            .map(|w| {
                (w[1].median_ms / w[0].median_ms).ln() / (w[1].n as f64 / w[0].n as f64).ln()
            })
            .collect()
    };
    let report = BenchReport {
        command: "bench".into(),
        seed: args.seed,
        c: args.c,
        dim: args.dim,
        repeats: args.repeats,
        threads: args.threads,
        slopes_fast: if run_fast { slope_of("fast") } else { Vec::new() },
        slopes_exact: if run_exact { slope_of("exact") } else { Vec::new() },
        rows,
    };

    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.report {
        std::fs::write(path, format!("{json}\n"))?;
    }
    if let Some(path) = &args.output {
        let mut writer = csv::WriterBuilder::new().from_path(path)?;
        writer.write_record(["n", "algo", "median_ms"])?;
        for row in &report.rows {
            writer.write_record([
                row.n.to_string(),
                row.algo.clone(),
                format!("{:.3}", row.median_ms),
            ])?;
        }
        writer.flush()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Fit(args) => cmd_fit(args),
        Command::Exact(args) => cmd_exact(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
    }
}
