//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them live).
//!
//! The statistical criteria use fixed seeds, so the suite is deterministic.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use ultrafit::afn::{AfnParams, AfnStructure};
use ultrafit::cutweights::{
    approximate_cut_weights, exact_cut_weights, CwParams, MultiplierMode,
};
use ultrafit::dataset::{estimate_scale_range, generate_uniform};
use ultrafit::dendro::{cartesian_tree, distortion, exact_best_fit, fast_ultrametric, FitParams};
use ultrafit::dsu::Dsu;
use ultrafit::kt::{gamma_kruskal_tree, harvest_edges, prim_mst, verify_gamma_kt, HarvestParams};
use ultrafit::rng;

fn verdict(id: u32, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {id} failed: {detail}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ultrafit"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn run_json(cmd: &mut Command) -> serde_json::Value {
    let out = cmd.output().expect("failed to launch ultrafit");
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is not valid JSON")
}

/// Criterion 1: the exact pipeline reproduces the reference optimal
/// distortion on the bundled iris data, in under 5 seconds.
#[test]
fn c01_exact_iris_distortion() {
    let dir = tempfile::tempdir().unwrap();
    let dendro = dir.path().join("iris_dendro.csv");
    let start = Instant::now();
    let out = bin()
        .args(["exact", "--input"])
        .arg(fixture("iris.csv"))
        .arg("--output")
        .arg(&dendro)
        .output()
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report = run_json(
        bin()
            .args(["eval", "--input"])
            .arg(fixture("iris.csv"))
            .arg("--dendrogram")
            .arg(&dendro)
            .arg("--baseline")
            .arg(&dendro),
    );
    let dist = report["distortion_max"].as_f64().unwrap();
    let ok = (dist - 8.07).abs() <= 0.01 && elapsed < 5.0;
    verdict(1, ok, &format!("iris dist_max {dist:.4}, {elapsed:.2} s"));
}

/// Criterion 2: exact-pipeline self-consistency — distortion equals the max
/// over MST edges of CW(e)/l2(e), and dominance holds exactly.
#[test]
fn c02_exact_self_consistency() {
    let mut worst_rel = 0.0f64;
    for seed in 0..30u64 {
        let ps = generate_uniform(200, 8, 100 + seed).unwrap();
        let tree = prim_mst(&ps);
        let weights = exact_cut_weights(&ps, &tree);
        let d = cartesian_tree(&tree, &weights).unwrap();
        let report = distortion(&d, &ps).unwrap();
        let edge_max = tree
            .edges()
            .iter()
            .zip(&weights.values)
            .map(|(e, &cw)| cw / e.weight)
            .fold(0.0, f64::max);
        worst_rel = worst_rel.max((report.dist_max - edge_max).abs() / edge_max);
        assert_eq!(report.dominance_violation_max, 1.0, "seed {seed}");
    }
    let ok = worst_rel <= 1e-9;
    verdict(2, ok, &format!("30/30 instances, worst rel diff {worst_rel:.2e}"));
}

/// Criterion 3: exact cut weights match the cubic definition-literal oracle
/// (components rebuilt from scratch from strictly lighter edges) exactly.
#[test]
fn c03_cut_weight_oracle_equivalence() {
    let mut checked = 0usize;
    for seed in 0..30u64 {
        let n = 20 + (seed as usize * 7) % 41; // 20..60
        let ps = generate_uniform(n, 3, 200 + seed).unwrap();
        let tree = prim_mst(&ps);
        let fast = exact_cut_weights(&ps, &tree);
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
            assert_eq!(fast.values[pos], max, "seed {seed} edge {pos}");
            checked += 1;
        }
    }
    verdict(3, true, &format!("30/30 instances, {checked} edges identical"));
}

/// Criterion 4: the gamma-Kruskal property holds in at least 29 of 30 seeded
/// runs for each gamma in {1.41, 2, 3} at n=500, d=4.
#[test]
fn c04_gamma_kt_property() {
    let mut detail = String::new();
    let mut all_ok = true;
    for &gamma in &[1.41f64, 2.0, 3.0] {
        let mut passes = 0;
        for seed in 0..30u64 {
            let ps = generate_uniform(500, 4, 400 + seed).unwrap();
            let scale = estimate_scale_range(&ps, 1000).unwrap();
            let (tree, _) =
                gamma_kruskal_tree(&ps, gamma, &scale, &HarvestParams::new(seed)).unwrap();
            if verify_gamma_kt(&ps, &tree, gamma).ok {
                passes += 1;
            }
        }
        all_ok &= passes >= 29;
        detail.push_str(&format!("gamma {gamma}: {passes}/30; "));
    }
    verdict(4, all_ok, detail.trim_end_matches("; "));
}

/// Criterion 5: strict-mode sandwich CW(e) <= ACW(e) <= alpha*CW(e) on at
/// least 99% of edges in every run and on all edges in >= 29/30 runs, for
/// alpha in {2, 3} at n=1000.
#[test]
fn c05_acw_sandwich_strict() {
    let mut detail = String::new();
    let mut all_ok = true;
    for &alpha in &[2.0f64, 3.0] {
        let mut perfect_runs = 0;
        let mut min_frac = 1.0f64;
        for seed in 0..30u64 {
            let ps = generate_uniform(1000, 6, 500 + seed).unwrap();
            let tree = prim_mst(&ps);
            let exact = exact_cut_weights(&ps, &tree);
            let params = CwParams {
                multiplier: MultiplierMode::Strict,
                ..CwParams::new(alpha, seed)
            };
            let approx = approximate_cut_weights(&ps, &tree, &params).unwrap();
            let good = approx
                .values
                .iter()
                .zip(&exact.values)
                .filter(|(&acw, &cw)| {
                    acw >= cw * (1.0 - 1e-12) && acw <= alpha * cw * (1.0 + 1e-12)
                })
                .count();
            let frac = good as f64 / exact.values.len() as f64;
            min_frac = min_frac.min(frac);
            if good == exact.values.len() {
                perfect_runs += 1;
            }
            assert!(frac >= 0.99, "alpha {alpha} seed {seed}: only {frac:.4} in sandwich");
        }
        all_ok &= perfect_runs >= 29;
        detail.push_str(&format!(
            "alpha {alpha}: min frac {min_frac:.4}, perfect {perfect_runs}/30; "
        ));
    }
    verdict(5, all_ok, detail.trim_end_matches("; "));
}

/// Criterion 6: AFN queries return a distance >= max/alpha in at least 99%
/// of 10^4 random queries at n=1000, alpha=2, and are exactly correct
/// whenever the cluster holds at most M points.
#[test]
fn c06_afn_quality() {
    use rand::Rng;
    let ps = generate_uniform(1000, 8, 600).unwrap();
    let alpha = 2.0;
    let mut st = AfnStructure::initialize(&ps, &AfnParams::new(alpha, 601)).unwrap();

    // 20 clusters of 50 consecutive points
    let mut clusters = Vec::new();
    for c in 0..20u32 {
        let base = c * 50;
        let mut h = st.find(base).unwrap();
        for v in base + 1..base + 50 {
            let hv = st.find(v).unwrap();
            h = st.merge(h, hv).unwrap();
        }
        clusters.push((h, (base..base + 50).collect::<Vec<u32>>()));
    }

    let mut rng = rng::stream(602, 99, 0);
    let trials = 10_000;
    let mut good = 0;
    for _ in 0..trials {
        let (h, members) = &clusters[rng.random_range(0..clusters.len())];
        let q = rng.random_range(0..1000u32);
        let (_, dist) = st.query_id(*h, q, &ps).unwrap();
        let exact = members
            .iter()
            .map(|&m| ps.distance(m, q))
            .fold(0.0, f64::max);
        if dist >= exact / alpha {
            good += 1;
        }
    }

    // small clusters (|S| <= M) must be exactly correct
    let ps2 = generate_uniform(1000, 8, 603).unwrap();
    let mut st2 = AfnStructure::initialize(&ps2, &AfnParams::new(alpha, 604)).unwrap();
    let m = st2.cap() as u32;
    let mut exact_small = 0;
    let mut small_trials = 0;
    for c in 0..100u32 {
        let base = c * m;
        let mut h = st2.find(base).unwrap();
        for v in base + 1..base + m {
            let hv = st2.find(v).unwrap();
            h = st2.merge(h, hv).unwrap();
        }
        for q in 0..10u32 {
            let q = (q * 97 + c) % 1000;
            let (_, dist) = st2.query_id(h, q, &ps2).unwrap();
            let truth = (base..base + m)
                .map(|x| ps2.distance(x, q))
                .fold(0.0, f64::max);
            small_trials += 1;
            if dist == truth {
                exact_small += 1;
            }
        }
        if (base + 2 * m) as usize > 1000 {
            break;
        }
    }

    let frac = good as f64 / trials as f64;
    let ok = frac >= 0.99 && exact_small == small_trials;
    verdict(
        6,
        ok,
        &format!(
            "alpha-guarantee {frac:.4} of {trials}; small clusters exact {exact_small}/{small_trials}"
        ),
    );
}

/// Criterion 7: end-to-end guarantee — c=9 strict stays within the factor-9
/// bound in 30/30 runs on each of 3 datasets, and c=4 practical mode
/// averages an approximation factor of at most 2.5.
#[test]
fn c07_end_to_end_guarantee() {
    let mut strict_ok = 0;
    let mut strict_total = 0;
    let mut practical_sum = 0.0;
    let mut practical_runs = 0;
    for ds in 0..3u64 {
        let ps = generate_uniform(500, 4, 700 + ds).unwrap();
        let exact = distortion(&exact_best_fit(&ps).unwrap(), &ps).unwrap();
        for seed in 0..30u64 {
            let mut params = FitParams::from_c(9.0, 7000 + seed).unwrap();
            params.multiplier = MultiplierMode::Strict;
            let (d, _) = fast_ultrametric(&ps, &params).unwrap();
            let factor = distortion(&d, &ps).unwrap().dist_max / exact.dist_max;
            strict_total += 1;
            if factor <= 9.0 {
                strict_ok += 1;
            }

            let params = FitParams::from_c(4.0, 7000 + seed).unwrap();
            let (d, _) = fast_ultrametric(&ps, &params).unwrap();
            practical_sum += distortion(&d, &ps).unwrap().dist_max / exact.dist_max;
            practical_runs += 1;
        }
    }
    let mean = practical_sum / practical_runs as f64;
    let ok = strict_ok == strict_total && mean <= 2.5;
    verdict(
        7,
        ok,
        &format!("strict c=9 within bound {strict_ok}/{strict_total}; practical c=4 mean factor {mean:.3}"),
    );
}

/// Criterion 8: across 150 practical-mode runs (5 datasets x 30 seeds),
/// dominance violations occur in at most 8% of runs.
#[test]
fn c08_practical_violation_rate() {
    let mut violating_runs = 0;
    let total = 150;
    for ds in 0..5u64 {
        let ps = generate_uniform(300, 4, 800 + ds).unwrap();
        for seed in 0..30u64 {
            let params = FitParams::from_c(4.0, 8000 + 100 * ds + seed).unwrap();
            let (d, _) = fast_ultrametric(&ps, &params).unwrap();
            let report = distortion(&d, &ps).unwrap();
            if report.dominance_violation_max > 1.0 + 1e-9 {
                violating_runs += 1;
            }
        }
    }
    let rate = violating_runs as f64 / total as f64;
    let ok = rate <= 0.08;
    verdict(
        8,
        ok,
        &format!("{violating_runs}/{total} runs with dominance violations ({:.1}%)", rate * 100.0),
    );
}

/// Criterion 9: complexity counters — AFN query bound, per-merge move
/// bound, and Local-BFS collision bound.
#[test]
fn c09_complexity_counters() {
    use rand::Rng;

    // AFN query count in cut-weight approximation: <= 2 n log2 n + n
    let n = 2000usize;
    let ps = generate_uniform(n, 6, 900).unwrap();
    let tree = prim_mst(&ps);
    let map = approximate_cut_weights(&ps, &tree, &CwParams::new(2.0, 901)).unwrap();
    let query_bound = 2.0 * n as f64 * (n as f64).log2() + n as f64;
    let queries_ok = (map.counters.queries as f64) <= query_bound;

    // per-merge moved entries <= L' * min(|S|, |S'|, M)
    let ps2 = generate_uniform(500, 4, 902).unwrap();
    let mut st = AfnStructure::initialize(&ps2, &AfnParams::new(2.0, 903)).unwrap();
    let mut rng = rng::stream(904, 99, 1);
    let mut moves_ok = true;
    for _ in 0..400 {
        let x = rng.random_range(0..500u32);
        let y = rng.random_range(0..500u32);
        let (hx, hy) = (st.find(x).unwrap(), st.find(y).unwrap());
        if hx == hy {
            continue;
        }
        let smaller = hx.size.min(hy.size);
        st.merge(hx, hy).unwrap();
        let bound = st.directions_count() as u64 * smaller.min(st.cap()) as u64;
        moves_ok &= st.counters().last_merge_moved <= bound;
    }

    // summed Local-BFS collisions <= 10 n per (scale x repetition) round
    let n3 = 3000usize;
    let ps3 = generate_uniform(n3, 10, 905).unwrap();
    let scale = estimate_scale_range(&ps3, 1000).unwrap();
    let (_, counters) = harvest_edges(&ps3, 3.0, &scale, &HarvestParams::new(906)).unwrap();
    let coll_bound = 10 * n3 as u64 * counters.rounds as u64;
    let coll_ok = counters.collisions <= coll_bound;

    let ok = queries_ok && moves_ok && coll_ok;
    verdict(
        9,
        ok,
        &format!(
            "queries {} <= {query_bound:.0}; merge moves bounded: {moves_ok}; collisions {} <= {coll_bound} over {} rounds",
            map.counters.queries, counters.collisions, counters.rounds
        ),
    );
}

/// Criterion 10: scaling — the fast pipeline's log-log runtime slope between
/// n=10^4 and n=4*10^4 (d=10, c=9) stays below 2, and the fast pipeline
/// beats the exact one in wall-clock time at n=4*10^4.
#[test]
fn c10_bench_scaling() {
    let report = run_json(bin().args([
        "bench",
        "--sizes",
        "10000,40000",
        "--dim",
        "10",
        "--c",
        "9",
        "--repeats",
        "1",
        "--algo",
        "both",
        "--threads",
        "4",
        "--seed",
        "10",
    ]));
    let slope = report["slopes_fast"][0].as_f64().unwrap();
    let rows = report["rows"].as_array().unwrap();
    let median = |n: u64, algo: &str| -> f64 {
        rows.iter()
            .find(|r| r["n"].as_u64() == Some(n) && r["algo"] == algo)
            .and_then(|r| r["median_ms"].as_f64())
            .unwrap()
    };
    let fast_big = median(40_000, "fast");
    let exact_big = median(40_000, "exact");
    let ok = slope < 2.0 && fast_big < exact_big;
    verdict(
        10,
        ok,
        &format!(
            "slope {slope:.3}; at n=40000 fast {:.1} s vs exact {:.1} s",
            fast_big / 1e3,
            exact_big / 1e3
        ),
    );
}
