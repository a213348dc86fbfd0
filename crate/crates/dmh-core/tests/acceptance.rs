//! Acceptance suite: one test per criterion, each printing a single
//! `[PASS]`/`[FAIL]` line with the measured numbers. Every criterion
//! carries a wall-clock budget that is asserted alongside the property
//! itself.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use dmh_core::checks;
use dmh_core::codes::{distances_to_all, hamming_distance, PackedCodes};
use dmh_core::data;
use dmh_core::eval;
use dmh_core::geometry;
use dmh_core::model::{self, ViewParams};
use dmh_core::optimizer::{TrainConfig, ViewHyper};
use dmh_core::pipeline;

fn pass(criterion: usize, detail: String) {
    println!("[PASS] criterion {criterion}: {detail}");
}

fn fail(criterion: usize, detail: String) -> ! {
    panic!("[FAIL] criterion {criterion}: {detail}");
}

fn check_budget(criterion: usize, started: Instant, budget_s: f64) -> f64 {
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed > budget_s {
        fail(
            criterion,
            format!("runtime {elapsed:.1}s exceeded the {budget_s:.0}s budget"),
        );
    }
    elapsed
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let report = checks::gradient_check_suite(20, 20_260_816, false).expect("suite");
    let worst = report
        .cases
        .iter()
        .map(|c| c.max_rel_error)
        .fold(0.0f64, f64::max);
    if !report.all_passed {
        let bad: Vec<u64> = report
            .cases
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.seed)
            .collect();
        fail(
            1,
            format!("gradients disagree with finite differences on seeds {bad:?}"),
        );
    }
    let elapsed = check_budget(1, started, 10.0);
    pass(
        1,
        format!(
            "analytic gradients match central finite differences on 20 instances \
             (worst rel err {worst:.2e}, {elapsed:.1}s)"
        ),
    );
}

#[test]
fn criterion_2_code_update_optimality() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_260_817);
    let standard = Normal::new(0.0, 1.0).unwrap();
    let scale = Normal::new(0.0, 0.3).unwrap();
    let mut flips_checked = 0usize;
    for instance in 0..10 {
        let n = rng.random_range(4..=16);
        let c_max = (512 / n).min(32);
        let c = rng.random_range(4..=c_max);
        assert!(n * c <= 512);
        let mut views = Vec::new();
        let mut params = Vec::new();
        for _ in 0..2 {
            let d = rng.random_range(2..=6);
            views.push(Array2::from_shape_fn((n, d), |_| standard.sample(&mut rng)));
            params.push(ViewParams {
                w: Array2::from_shape_fn((d, c), |_| scale.sample(&mut rng)),
                v: Array1::from_shape_fn(c, |_| scale.sample(&mut rng)),
                alpha: 0.5 + 1.5 * rng.random::<f64>(),
                beta: 1.0,
                gamma: 0.0,
            });
        }
        let b = model::update_code_matrix(&views, &params).expect("code update");
        let base = model::objective(&b, &views, &params).expect("objective");
        for m in 0..n {
            for j in 0..c {
                let mut flipped = b.clone();
                flipped[[m, j]] = 1 - flipped[[m, j]];
                let alt = model::objective(&flipped, &views, &params).expect("objective");
                flips_checked += 1;
                if alt < base - 1e-12 * base.abs().max(1.0) {
                    fail(
                        2,
                        format!(
                            "instance {instance}: flipping bit ({m},{j}) lowered the \
                             objective from {base} to {alt}"
                        ),
                    );
                }
            }
        }
    }
    let elapsed = check_budget(2, started, 5.0);
    pass(
        2,
        format!(
            "code update survives the exhaustive bit-flip oracle on 10 instances \
             ({flips_checked} flips, {elapsed:.1}s)"
        ),
    );
}

#[test]
fn criterion_3_proposition_oracles() {
    let started = Instant::now();

    // (a) when an orthogonal matrix exists, descent finds one
    let orth = geometry::minimize_or_penalty(4, 4, 7).expect("minimize");
    if orth.penalty >= 1e-6 {
        fail(
            3,
            format!("4x4 minimization stalled at penalty {:.3e}", orth.penalty),
        );
    }

    // (b) the planar three-column minimizer is the equilateral triangle
    let triangle = geometry::minimize_or_penalty(2, 3, 1).expect("minimize");
    let target = 2.0 * std::f64::consts::PI / 3.0;
    let worst_angle = triangle
        .profile
        .pairwise_angles
        .iter()
        .map(|a| (a - target).abs())
        .fold(0.0f64, f64::max);
    if worst_angle >= 1e-3 {
        fail(
            3,
            format!("d=2 c=3 angles deviate from 120 degrees by {worst_angle:.3e} rad"),
        );
    }

    // (c) the penalty is blind to orthogonal changes of basis
    let mut rng = ChaCha8Rng::seed_from_u64(20_260_818);
    let standard = Normal::new(0.0, 1.0).unwrap();
    let mut worst_delta = 0.0f64;
    for _ in 0..50 {
        let w = Array2::from_shape_fn((5, 8), |_| standard.sample(&mut rng));
        let r = geometry::random_orthogonal(8, &mut rng);
        worst_delta = worst_delta.max(geometry::rotation_invariance_check(&w, &r).expect("check"));
    }
    if worst_delta >= 1e-8 {
        fail(
            3,
            format!("rotation changed the penalty by {worst_delta:.3e}"),
        );
    }

    // (d) wide codes from a narrow view stay within the affine rank bound
    for i in 0..20u64 {
        let check = checks::rank_bound_instance(3000 + i).expect("rank instance");
        if check.numerical_rank > check.bound {
            fail(
                3,
                format!(
                    "rank {} exceeded bound {} at seed {}",
                    check.numerical_rank,
                    check.bound,
                    3000 + i
                ),
            );
        }
    }

    let elapsed = check_budget(3, started, 30.0);
    pass(
        3,
        format!(
            "orthogonal minimum {:.1e}, equilateral angles within {:.1e} rad, \
             rotation drift {:.1e}, 20/20 rank bounds hold ({elapsed:.1}s)",
            orth.penalty, worst_angle, worst_delta
        ),
    );
}

/// Trains the standard instance at one gamma and returns the correlation
/// diagnostic plus the MAP of both directions.
fn decorrelation_run(master_seed: u64, gamma: f64, c: usize) -> (f64, Vec<f64>) {
    let ds = data::generate_synthetic(&pipeline::default_synthetic_spec(master_seed))
        .expect("synthetic");
    let split = data::split_dataset(ds.n(), 0.2, pipeline::split_seed(master_seed)).expect("split");
    let base = pipeline::resolve_hyper(&ds, &pipeline::HyperOverrides::default()).expect("hyper");
    let hyper: Vec<ViewHyper> = base
        .hyper
        .iter()
        .map(|h| ViewHyper { gamma, ..*h })
        .collect();
    let config = TrainConfig {
        seed: pipeline::train_seed(master_seed),
        ..TrainConfig::default()
    };
    let result = pipeline::train_on_split(&ds, &split, &hyper, c, &config).expect("train");
    let correlation = eval::column_correlation_metric(&result.codes);
    let maps = pipeline::evaluate_directions(&result.params, &ds, &split, None, 2)
        .expect("eval")
        .into_iter()
        .map(|r| r.map)
        .collect();
    (correlation, maps)
}

#[test]
fn criterion_4_mcr_decorrelation_effect() {
    let started = Instant::now();
    let c = 64;
    let mut wins = 0usize;
    let mut details = Vec::new();
    for master_seed in 1..=5u64 {
        let (corr_reg, maps_reg) = decorrelation_run(master_seed, 0.001, c);
        let (corr_off, maps_off) = decorrelation_run(master_seed, 0.0, c);
        if corr_reg < corr_off {
            wins += 1;
        }
        for (m_reg, m_off) in maps_reg.iter().zip(&maps_off) {
            if *m_reg < m_off - 0.02 {
                fail(
                    4,
                    format!(
                        "seed {master_seed}: regularized MAP {m_reg:.4} fell more than \
                         0.02 below the unregularized {m_off:.4}"
                    ),
                );
            }
        }
        details.push(format!(
            "seed {master_seed}: corr {corr_off:.6} -> {corr_reg:.6}, MAP {:.3}/{:.3}",
            maps_reg[0], maps_reg[1]
        ));
    }
    let elapsed = check_budget(4, started, 180.0);
    if wins < 4 {
        fail(
            4,
            format!(
                "regularization lowered the column correlation in only {wins}/5 seeds \
                 (need 4); {}; {elapsed:.1}s",
                details.join("; ")
            ),
        );
    }
    pass(
        4,
        format!(
            "correlation strictly lower with regularization in {wins}/5 seeds, MAP \
             within guard ({elapsed:.1}s)"
        ),
    );
}

#[test]
fn criterion_5_convergence_shape() {
    let started = Instant::now();
    let ds = data::generate_synthetic(&pipeline::default_synthetic_spec(0)).expect("synthetic");
    let split = data::split_dataset(ds.n(), 0.2, pipeline::split_seed(0)).expect("split");
    let resolved =
        pipeline::resolve_hyper(&ds, &pipeline::HyperOverrides::default()).expect("hyper");
    // disable the early-stop rule so the trace provably reaches 100 entries
    let config = TrainConfig {
        convergence_rtol: 0.0,
        seed: pipeline::train_seed(0),
        ..TrainConfig::default()
    };
    let result =
        pipeline::train_on_split(&ds, &split, &resolved.hyper, 32, &config).expect("train");
    let trace = &result.trace.objective_per_iteration;
    if trace.len() < 100 {
        fail(5, format!("trace has only {} iterations", trace.len()));
    }
    let (first, hundredth) = (trace[0], trace[99]);
    if hundredth >= first || hundredth.is_nan() || first.is_nan() {
        fail(
            5,
            format!(
                "objective did not decrease: iteration 1 = {first}, iteration 100 = {hundredth}"
            ),
        );
    }
    let elapsed = check_budget(5, started, 60.0);
    pass(
        5,
        format!(
            "objective fell from {first:.2} at iteration 1 to {hundredth:.2} at \
             iteration 100 ({elapsed:.1}s)"
        ),
    );
}

/// Independent AP reference: explicit selection ranking plus the formula
/// applied term by term.
fn naive_ap(distances: &[u32], relevant: &[usize], r_cutoff: usize) -> f64 {
    let n = distances.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut ranking = Vec::with_capacity(n);
    while !remaining.is_empty() {
        let best = *remaining
            .iter()
            .min_by(|&&a, &&b| (distances[a], a).cmp(&(distances[b], b)))
            .unwrap();
        ranking.push(best);
        remaining.retain(|&m| m != best);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for r in 1..=r_cutoff {
        if relevant.contains(&ranking[r - 1]) {
            hits += 1;
            let in_top = (1..=r)
                .filter(|&s| relevant.contains(&ranking[s - 1]))
                .count();
            sum += in_top as f64 / r as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Independent lookup reference: explicit set arithmetic per query.
fn naive_lookup(distances: &[u32], relevant: &[usize], radius: usize) -> (f64, f64, f64) {
    let retrieved: Vec<usize> = (0..distances.len())
        .filter(|&m| distances[m] as usize <= radius)
        .collect();
    if retrieved.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let tp = retrieved.iter().filter(|m| relevant.contains(m)).count();
    let precision = tp as f64 / retrieved.len() as f64;
    let recall = tp as f64 / relevant.len() as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[test]
fn criterion_6_metric_correctness() {
    let started = Instant::now();

    // the hand case: relevance pattern (1, 0, 1) over three ranked items.
    // (1/1 + 2/3)/2 and 5.0/6.0 are two correct evaluation orders of the
    // same rational and land one ulp apart, so "exact" means one ulp here.
    let q = PackedCodes::from_bits(&Array2::zeros((1, 2)));
    let db_bits = ndarray::arr2(&[[0u8, 0], [0, 1], [1, 1]]);
    let db = PackedCodes::from_bits(&db_bits);
    let ap = eval::average_precision(q.row(0), &db, &[0, 2], 3).expect("ap");
    if (ap - 5.0 / 6.0).abs() > 1e-15 {
        fail(6, format!("hand case gave {ap}, expected 5/6"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(20_260_819);
    let mut compared = 0usize;
    for instance in 0..100 {
        let n_q = rng.random_range(1..=10);
        let n_db = rng.random_range(2..=30);
        let c = 8;
        let q_bits = Array2::from_shape_fn((n_q, c), |_| u8::from(rng.random::<f64>() > 0.5));
        let db_bits = Array2::from_shape_fn((n_db, c), |_| u8::from(rng.random::<f64>() > 0.5));
        let queries = PackedCodes::from_bits(&q_bits);
        let db = PackedCodes::from_bits(&db_bits);
        let gt: Vec<Vec<usize>> = (0..n_q)
            .map(|_| (0..n_db).filter(|_| rng.random::<f64>() < 0.3).collect())
            .collect();
        let r_cutoff = rng.random_range(1..=n_db);
        let radius = rng.random_range(0..=4);

        // per-query AP against the naive reference
        let mut naive_aps = Vec::new();
        for (qi, relevant) in gt.iter().enumerate() {
            let distances = distances_to_all(queries.row(qi), &db).expect("distances");
            if relevant.is_empty() {
                continue;
            }
            let ours =
                eval::average_precision(queries.row(qi), &db, relevant, r_cutoff).expect("ap");
            let reference = naive_ap(&distances, relevant, r_cutoff);
            if (ours - reference).abs() > 1e-12 {
                fail(
                    6,
                    format!("instance {instance} query {qi}: AP {ours} vs reference {reference}"),
                );
            }
            naive_aps.push(reference);
            compared += 1;
        }
        if naive_aps.is_empty() {
            continue;
        }

        // MAP and lookup against the naive references
        let ours_map = eval::mean_average_precision(&queries, &db, &gt, r_cutoff).expect("map");
        let reference_map = naive_aps.iter().sum::<f64>() / naive_aps.len() as f64;
        if (ours_map.map - reference_map).abs() > 1e-12 {
            fail(
                6,
                format!(
                    "instance {instance}: MAP {} vs reference {reference_map}",
                    ours_map.map
                ),
            );
        }
        let ours_lookup = eval::lookup_f1(&queries, &db, &gt, radius).expect("lookup");
        let mut sums = (0.0, 0.0, 0.0);
        let mut valid = 0usize;
        for (qi, relevant) in gt.iter().enumerate() {
            if relevant.is_empty() {
                continue;
            }
            let distances = distances_to_all(queries.row(qi), &db).expect("distances");
            let (p, r, f) = naive_lookup(&distances, relevant, radius);
            sums = (sums.0 + p, sums.1 + r, sums.2 + f);
            valid += 1;
        }
        let reference_f1 = sums.2 / valid as f64;
        if (ours_lookup.f1 - reference_f1).abs() > 1e-12
            || (ours_lookup.precision - sums.0 / valid as f64).abs() > 1e-12
            || (ours_lookup.recall - sums.1 / valid as f64).abs() > 1e-12
        {
            fail(
                6,
                format!(
                    "instance {instance}: lookup ({}, {}, {}) vs reference ({}, {}, {reference_f1})",
                    ours_lookup.precision,
                    ours_lookup.recall,
                    ours_lookup.f1,
                    sums.0 / valid as f64,
                    sums.1 / valid as f64
                ),
            );
        }
    }
    let elapsed = check_budget(6, started, 5.0);
    pass(
        6,
        format!(
            "AP/MAP/F1 agree with brute-force references on 100 instances \
             ({compared} queries compared, hand case exact, {elapsed:.1}s)"
        ),
    );
}

#[test]
fn criterion_7_hamming_kernel() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_260_820);
    let mut pairs_checked = 0usize;
    for &c in &[16usize, 32, 64, 96, 128] {
        let a_bits = Array2::from_shape_fn((1000, c), |_| u8::from(rng.random::<f64>() > 0.5));
        let b_bits = Array2::from_shape_fn((1000, c), |_| u8::from(rng.random::<f64>() > 0.5));
        let a = PackedCodes::from_bits(&a_bits);
        let b = PackedCodes::from_bits(&b_bits);
        for m in 0..1000 {
            let packed = hamming_distance(a.row(m), b.row(m)).expect("distance");
            let naive: u32 = (0..c)
                .map(|j| u32::from(a_bits[[m, j]] != b_bits[[m, j]]))
                .sum();
            if packed != naive {
                fail(
                    7,
                    format!("c={c} pair {m}: packed distance {packed}, per-bit oracle {naive}"),
                );
            }
            pairs_checked += 1;
        }
    }
    // metric axioms on random triples
    let bits = Array2::from_shape_fn((64, 48), |_| u8::from(rng.random::<f64>() > 0.5));
    let codes = PackedCodes::from_bits(&bits);
    for t in 0..1000 {
        let (i, j, k) = (
            rng.random_range(0..64),
            rng.random_range(0..64),
            rng.random_range(0..64),
        );
        let dij = hamming_distance(codes.row(i), codes.row(j)).expect("distance");
        let dji = hamming_distance(codes.row(j), codes.row(i)).expect("distance");
        let dik = hamming_distance(codes.row(i), codes.row(k)).expect("distance");
        let dkj = hamming_distance(codes.row(k), codes.row(j)).expect("distance");
        let dii = hamming_distance(codes.row(i), codes.row(i)).expect("distance");
        if dij != dji || dii != 0 || dij > dik + dkj {
            fail(
                7,
                format!("metric axiom violated on triple {t} ({i},{j},{k})"),
            );
        }
    }
    let elapsed = check_budget(7, started, 5.0);
    pass(
        7,
        format!(
            "packed distances match the per-bit oracle on {pairs_checked} pairs and \
             metric axioms hold on 1000 triples ({elapsed:.1}s)"
        ),
    );
}

#[test]
fn criterion_8_retrieval_sanity() {
    let started = Instant::now();
    let ds = data::generate_synthetic(&pipeline::default_synthetic_spec(0)).expect("synthetic");
    let split = data::split_dataset(ds.n(), 0.2, pipeline::split_seed(0)).expect("split");
    let resolved =
        pipeline::resolve_hyper(&ds, &pipeline::HyperOverrides::default()).expect("hyper");
    let config = TrainConfig {
        seed: pipeline::train_seed(0),
        ..TrainConfig::default()
    };
    let result =
        pipeline::train_on_split(&ds, &split, &resolved.hyper, 32, &config).expect("train");
    let reports =
        pipeline::evaluate_directions(&result.params, &ds, &split, None, 2).expect("eval");
    for report in &reports {
        if report.map <= 0.9 {
            fail(
                8,
                format!("{} MAP {:.4} is not above 0.9", report.task, report.map),
            );
        }
    }
    let elapsed = check_budget(8, started, 60.0);
    let summary: Vec<String> = reports
        .iter()
        .map(|r| format!("{} {:.4}", r.task, r.map))
        .collect();
    pass(
        8,
        format!(
            "32-bit cross-modal MAP above 0.9: {} ({elapsed:.1}s)",
            summary.join(", ")
        ),
    );
}

#[test]
fn criterion_9_determinism() {
    let started = Instant::now();
    let bin = env!("CARGO_BIN_EXE_dmh");
    let dir = tempfile::tempdir().expect("tempdir");
    let data_dir = dir.path().join("data");
    let run = |args: &[&str]| {
        let output = std::process::Command::new(bin)
            .args(args)
            .output()
            .expect("spawn dmh");
        if !output.status.success() {
            fail(
                9,
                format!(
                    "command {:?} failed: {}",
                    args,
                    String::from_utf8_lossy(&output.stderr)
                ),
            );
        }
    };
    run(&[
        "synth",
        "--n-per-class",
        "20",
        "--seed",
        "11",
        "--out",
        data_dir.to_str().unwrap(),
    ]);
    let view0 = data_dir.join("view0.dmh1");
    let view1 = data_dir.join("view1.dmh1");
    let labels = data_dir.join("labels.dmh1");

    let mut model_bytes = Vec::new();
    let mut trace_bytes = Vec::new();
    let mut eval_bytes = Vec::new();
    for attempt in 0..2 {
        let out = dir.path().join(format!("run{attempt}"));
        run(&[
            "train",
            "--views",
            view0.to_str().unwrap(),
            view1.to_str().unwrap(),
            "--labels",
            labels.to_str().unwrap(),
            "--code-length",
            "32",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        run(&[
            "eval",
            "--model",
            out.join("model.dmhm").to_str().unwrap(),
            "--views",
            view0.to_str().unwrap(),
            view1.to_str().unwrap(),
            "--labels",
            labels.to_str().unwrap(),
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        model_bytes.push(std::fs::read(out.join("model.dmhm")).expect("model"));
        trace_bytes.push(std::fs::read(out.join("trace.json")).expect("trace"));
        eval_bytes.push(std::fs::read(out.join("eval_image_to_text.json")).expect("eval report"));
    }
    if model_bytes[0] != model_bytes[1] {
        fail(9, "model files differ between identical runs".into());
    }
    if trace_bytes[0] != trace_bytes[1] {
        fail(9, "trace reports differ between identical runs".into());
    }
    if eval_bytes[0] != eval_bytes[1] {
        fail(9, "eval reports differ between identical runs".into());
    }
    let elapsed = check_budget(9, started, 60.0);
    pass(
        9,
        format!(
            "model, trace, and eval artifacts are byte-identical across reruns \
             ({} model bytes, {elapsed:.1}s)",
            model_bytes[0].len()
        ),
    );
}
