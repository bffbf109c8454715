//! Acceptance suite: one pass/fail line per criterion, non-zero exit when any
//! criterion fails. Runs as a plain binary so the report is always printed.

use std::path::Path;
use std::process::Command as Proc;
use std::time::{Duration, Instant};

use peekgrad_core::estimators::{expectation_oracle, paired_samples, Moments};
use peekgrad_core::harness::{self, variance_ratio, Command, ExperimentSpec};
use peekgrad_core::kv::KvMap;
use peekgrad_core::models::{evaluate_scalar, AnyModel, ObjectiveModel};
use peekgrad_core::oracle::heaviside_vrr;
use peekgrad_core::peek::{PeekContext, Rel, Tracer};
use peekgrad_core::stream::{replication_stream, SimRng};
use peekgrad_core::{DiscreteGaussianSpec, EstimatorConfig, EstimatorKind};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(start: Instant, limit: Duration, detail: String) -> Outcome {
    let took = start.elapsed();
    check(
        took < limit,
        format!("{detail}; {took:.2?} (limit {limit:?})"),
    )
}

fn model(name: &str, params: &[(&str, &str)]) -> AnyModel {
    let mut kv = KvMap::new();
    for (k, v) in params {
        kv.insert(*k, *v);
    }
    AnyModel::from_kv(name, &kv).unwrap()
}

fn spec(command: Command, pairs: &[(&str, &str)]) -> ExperimentSpec {
    let mut kv = KvMap::new();
    for (k, v) in pairs {
        kv.insert(*k, *v);
    }
    ExperimentSpec::from_kv(command, &kv).unwrap()
}

fn analytic_table() -> Outcome {
    let start = Instant::now();
    let tol = 0.0015;
    let r1 = heaviside_vrr(1.0).map_err(|e| e.to_string())?;
    let (a, b) = r1.table_columns();
    let mut ok =
        (a - 0.069).abs() <= tol && (b - 0.327).abs() <= tol && (r1.vrr - 1.212).abs() <= tol;
    let mut got = vec![format!("s=1: {a:.4}/{b:.4}/{:.4}", r1.vrr)];
    for (sigma, want) in [(2.0, 1.525), (4.0, 1.781), (8.0, 1.946)] {
        let v = heaviside_vrr(sigma).map_err(|e| e.to_string())?.vrr;
        ok &= (v - want).abs() <= tol;
        got.push(format!("s={sigma}: {v:.4}"));
    }
    if !ok {
        return Err(got.join(", "));
    }
    within_time(start, Duration::from_secs(1), got.join(", "))
}

fn measured_table() -> Outcome {
    let start = Instant::now();
    let s = spec(Command::Oracle, &[("reps", "100000"), ("seed", "2024")]);
    let rows = harness::run_oracle(&s).map_err(|e| e.to_string())?;
    let mut ok = rows.len() == 4;
    let mut got = Vec::new();
    for r in &rows {
        ok &= (r.vrr_measured - r.vrr_analytic).abs() <= 0.03;
        got.push(format!(
            "s={}: {:.3} vs {:.3}",
            r.sigma, r.vrr_measured, r.vrr_analytic
        ));
    }
    if !ok {
        return Err(got.join(", "));
    }
    within_time(start, Duration::from_secs(60), got.join(", "))
}

fn deterministic_cases() -> Vec<(AnyModel, Vec<i64>)> {
    vec![
        (model("heaviside", &[]), vec![0]),
        (model("linear", &[]), vec![0]),
        (model("branchy", &[]), vec![1, 0]),
        (model("branchy", &[]), vec![2, 3]),
    ]
}

fn exact_unbiasedness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (m, x) in deterministic_cases() {
        for c in [1.0, 3.0, 15.0] {
            let cfg = EstimatorConfig::new(1.0, c).unwrap();
            let a =
                expectation_oracle(&m, &x, &cfg, EstimatorKind::Pgo).map_err(|e| e.to_string())?;
            let b = expectation_oracle(&m, &x, &cfg, EstimatorKind::PgoDp)
                .map_err(|e| e.to_string())?;
            for (p, q) in a.mean.iter().zip(&b.mean) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!("max |E[pgo] - E[pgo_dp]| = {worst:e}"));
    }
    within_time(
        start,
        Duration::from_secs(10),
        format!("max |E[pgo] - E[pgo_dp]| = {worst:e}"),
    )
}

fn variance_dominance() -> Outcome {
    let mut min_ratio = f64::INFINITY;
    for (m, x) in deterministic_cases() {
        for c in [1.0, 3.0, 15.0] {
            let cfg = EstimatorConfig::new(1.0, c).unwrap();
            let a =
                expectation_oracle(&m, &x, &cfg, EstimatorKind::Pgo).map_err(|e| e.to_string())?;
            let b = expectation_oracle(&m, &x, &cfg, EstimatorKind::PgoDp)
                .map_err(|e| e.to_string())?;
            for (i, (p, q)) in a.variance.iter().zip(&b.variance).enumerate() {
                if q > p {
                    return Err(format!(
                        "{} c={c} dim {i}: Var(pgo_dp) {q} > Var(pgo) {p}",
                        m.name()
                    ));
                }
                if *q > 0.0 {
                    min_ratio = min_ratio.min(p / q);
                }
            }
        }
    }
    let cfg = EstimatorConfig::new(1.0, 15.0).unwrap();
    let lin = model("linear", &[]);
    let v =
        expectation_oracle(&lin, &[0], &cfg, EstimatorKind::PgoDp).map_err(|e| e.to_string())?;
    check(
        v.variance[0] == 0.0,
        format!(
            "min Var ratio {min_ratio:.3}; linear Var(pgo_dp) = {:e}",
            v.variance[0]
        ),
    )
}

fn arithmetic_goldens() -> Outcome {
    let ctx = PeekContext::new(&[3, 1, 5], &[-1, 0, 2], 2).map_err(|e| e.to_string())?;
    let x0 = ctx.lift_input(0).unwrap();
    let x1 = ctx.lift_input(1).unwrap();
    let rhs = &x0 * 2.0 + 1.0;
    let same = &x0 * &rhs;
    let cross = &x0 * &x1;
    let row =
        |v: &peekgrad_core::PeekScalar, d: usize| v.row(d).map(|r| r.to_vec()).unwrap_or_default();
    let mut ok = row(&rhs, 0) == [3.0, 5.0, 7.0, 9.0, 11.0]
        && row(&same, 0) == [3.0, 10.0, 21.0, 36.0, 55.0]
        && same.primal() == 10.0
        && row(&cross, 0) == [1.0, 2.0, 3.0, 4.0, 5.0]
        && row(&cross, 1) == [-2.0, 0.0, 2.0, 4.0, 6.0]
        && cross.primal() == 2.0;

    let mut ctx = PeekContext::new(&[3, 1, 5], &[-1, 0, 2], 2).unwrap();
    let v = ctx.lift_all();
    let y = &v[0] * &(&v[1] * 2.0 + &v[2]);
    let branch = ctx.compare_scalar(&y, Rel::Lt, 20.0);
    let (t, f) = (true, false);
    ok &= branch
        && ctx.mask(0) == [t, t, f, f, f]
        && ctx.mask(1) == [t, t, t, f, f]
        && ctx.mask(2) == [t; 5];
    check(
        ok,
        format!(
            "masks x0 {:?} x1 {:?} x2 {:?}",
            ctx.mask(0),
            ctx.mask(1),
            ctx.mask(2)
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

/// Peeked run vs independent scalar re-executions at every surviving slot.
fn fuzz_model(m: &AnyModel, runs: usize, seed: u64) -> Result<usize, String> {
    let (lower, upper) = m.bounds();
    let mut checked = 0;
    for k in 0..runs {
        let mut rng = replication_stream(seed, k as u64);
        let sigma = [1.0, 2.0][rng.random_range(0..2)];
        let c_factor = [1.0, 3.0][rng.random_range(0..2)];
        let radius = (c_factor * sigma as f64).ceil() as usize;
        let x: Vec<i64> = lower
            .iter()
            .zip(&upper)
            .map(|(&lo, &hi)| rng.random_range(lo.max(-20)..=hi.min(20)))
            .collect();
        let draw = DiscreteGaussianSpec::new(sigma)
            .unwrap()
            .sample_vec(x.len(), &mut rng);
        let stream: u64 = rng.random();

        let mut ctx = PeekContext::new(&x, &draw, radius).map_err(|e| e.to_string())?;
        let inputs = ctx.lift_all();
        let mut sim = SimRng::new(stream);
        let out = m
            .evaluate(&inputs, &mut ctx, &mut sim)
            .map_err(|e| e.to_string())?;

        let perturbed: Vec<i64> = x.iter().zip(&draw).map(|(a, r)| a + r).collect();
        let mut scalar_rng = SimRng::new(stream);
        let input: Vec<f64> = perturbed.iter().map(|&v| v as f64).collect();
        let primal = m
            .evaluate(
                &input,
                &mut peekgrad_core::peek::ScalarTracer::new(),
                &mut scalar_rng,
            )
            .map_err(|e| e.to_string())?;
        if primal.to_bits() != out.primal().to_bits() || scalar_rng.draws() != sim.draws() {
            return Err(format!(
                "{} run {k}: primal {} vs scalar {primal}",
                m.name(),
                out.primal()
            ));
        }
        for i in (0..x.len()).filter(|&i| ctx.is_peeked(i)) {
            let (row, mask) = ctx.extract(&out, i).map_err(|e| e.to_string())?;
            for (g, (v, keep)) in ctx.grid(i).into_iter().zip(row.iter().zip(&mask)) {
                if !keep {
                    continue;
                }
                let mut alt = perturbed.clone();
                alt[i] = g;
                let expect = evaluate_scalar(m, &alt, stream).map_err(|e| e.to_string())?;
                if !close(*v, expect) {
                    return Err(format!(
                        "{} run {k} dim {i} at {g}: peeked {v} vs scalar {expect}",
                        m.name()
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

fn scalar_consistency() -> Outcome {
    let start = Instant::now();
    let models = [
        model("heaviside", &[("d", "4")]),
        model("linear", &[("weights", "3,-1,0.5")]),
        model("branchy", &[]),
        model("dynamnews", &[]),
        model("hotel", &[("n_products", "10")]),
    ];
    let mut counts = Vec::new();
    for (j, m) in models.iter().enumerate() {
        let n = fuzz_model(m, 1000, 600 + j as u64)?;
        counts.push(format!("{} {n} slots", m.name()));
    }
    within_time(start, Duration::from_secs(300), counts.join(", "))
}

/// Overall VRR at coverage factors 1 and 3 plus the batch-means standard
/// error of their difference.
fn vrr_trend(m: &AnyModel, reps: usize, seed: u64) -> Result<(f64, f64, f64), String> {
    let x = m.default_point();
    let batches = 20;
    let mut per_c = Vec::new();
    for c in [1.0, 3.0] {
        let cfg = EstimatorConfig::new(1.0, c).unwrap();
        let pairs = paired_samples(m, &x, &cfg, reps, seed).map_err(|e| e.to_string())?;
        let ratio = |lo: usize, hi: usize| {
            variance_ratio(
                &Moments::from_samples(&pairs.pgo[lo..hi]).unwrap(),
                &Moments::from_samples(&pairs.pgo_dp[lo..hi]).unwrap(),
            )
        };
        let size = reps / batches;
        let per_batch: Vec<f64> = (0..batches)
            .map(|b| ratio(b * size, (b + 1) * size))
            .collect();
        per_c.push((ratio(0, reps), per_batch));
    }
    let diffs: Vec<f64> = per_c[1]
        .1
        .iter()
        .zip(&per_c[0].1)
        .map(|(a, b)| a - b)
        .collect();
    let mean = diffs.iter().sum::<f64>() / batches as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok((per_c[0].0, per_c[1].0, (var / batches as f64).sqrt()))
}

fn coverage_trend() -> Outcome {
    let mut ok = true;
    let mut got = Vec::new();
    for (name, m) in [
        ("dynamnews", model("dynamnews", &[])),
        ("hotel", model("hotel", &[("n_products", "10")])),
    ] {
        let (v1, v3, se) = vrr_trend(&m, 10_000, 77)?;
        ok &= v3 > 1.0 && v3 >= v1 - 3.0 * se;
        got.push(format!(
            "{name}: vrr(1s) {v1:.3}, vrr(3s) {v3:.3}, se {se:.3}"
        ));
    }
    check(ok, got.join("; "))
}

fn slowdown_bound() -> Outcome {
    let base = [
        ("model", "dynamnews"),
        ("c_factor", "3"),
        ("bench_reps", "30"),
    ];
    let rows = harness::run_bench(&spec(Command::Bench, &base)).map_err(|e| e.to_string())?;
    let mut sanity = base.to_vec();
    sanity.push(("estimator", "pgo"));
    let same = harness::run_bench(&spec(Command::Bench, &sanity)).map_err(|e| e.to_string())?;
    let s = rows[0].slowdown_median;
    check(
        s <= 3.0,
        format!(
            "slowdown at 3s {s:.3} (iqr {:.3}); scalar vs scalar {:.3}",
            rows[0].slowdown_iqr, same[0].slowdown_median
        ),
    )
}

fn optimization_benefit() -> Outcome {
    let start = Instant::now();
    let s = spec(
        Command::Optimize,
        &[
            ("model", "dynamnews"),
            ("seed", "11"),
            ("sigma", "1"),
            ("reps", "30"),
        ],
    );
    let out = harness::run_optimize(&s).map_err(|e| e.to_string())?;
    let dp = out.best(EstimatorKind::PgoDp).ok_or("no pgo_dp result")?;
    let pg = out.best(EstimatorKind::Pgo).ok_or("no pgo result")?;
    let r75 = &out.improvement.rows[0];
    let label = |t: &harness::MeanTrajectory| {
        format!("{} lr {}", t.key.optimizer.as_str(), t.key.learning_rate)
    };
    // Minimized (negated) objectives: lower is better.
    let final_ok = dp.final_mean() <= pg.final_mean();
    let reach_ok = match (r75.pgo_dp_evals, r75.pgo_evals) {
        (Some(a), Some(b)) => a <= b,
        (Some(_), None) => true,
        _ => false,
    };
    let detail = format!(
        "best pgo_dp ({}) final profit {:.1}, best pgo ({}) {:.1}; 75% reached after {:?} vs {:?} evaluations",
        label(dp),
        -dp.final_mean(),
        label(pg),
        -pg.final_mean(),
        r75.pgo_dp_evals,
        r75.pgo_evals
    );
    if !(final_ok && reach_ok) {
        return Err(detail);
    }
    within_time(start, Duration::from_secs(1800), detail)
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Proc::new(env!("CARGO_BIN_EXE_peekgrad"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "peekgrad {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn strip_timing(csv: &[u8], keep: usize) -> Vec<String> {
    String::from_utf8_lossy(csv)
        .lines()
        .map(|l| l.split(',').take(keep).collect::<Vec<_>>().join(","))
        .collect()
}

fn determinism() -> Outcome {
    let cases: Vec<(Vec<&str>, Option<usize>)> = vec![
        (
            vec![
                "verify",
                "--model",
                "dynamnews",
                "--reps",
                "300",
                "--seed",
                "5",
            ],
            None,
        ),
        (
            vec![
                "verify",
                "--model",
                "branchy",
                "--exact",
                "--c-factor",
                "1,3",
            ],
            None,
        ),
        (
            vec![
                "vrr",
                "--model",
                "hotel",
                "--param",
                "n_products=10",
                "--reps",
                "300",
                "--seed",
                "5",
            ],
            None,
        ),
        (vec!["oracle", "--reps", "2000", "--seed", "5"], None),
        (
            vec!["bench", "--model", "heaviside", "--c-factor", "1,3"],
            Some(2),
        ),
    ];
    for (args, keep) in &cases {
        let a = run_cli(args)?;
        let b = run_cli(args)?;
        let same = match keep {
            None => a == b,
            Some(k) => strip_timing(&a, *k) == strip_timing(&b, *k),
        };
        if !same || a.is_empty() {
            return Err(format!("output differs for {args:?}"));
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(format!("{run}.csv"));
        let out_s = out.display().to_string();
        run_cli(&[
            "optimize",
            "--model",
            "dynamnews",
            "--steps",
            "8",
            "--reps",
            "4",
            "--seed",
            "9",
            "--out",
            &out_s,
        ])?;
        let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
        files.push((
            read(&out)?,
            read(&harness::suffixed_path(&out, "_summary"))?,
            read(&harness::suffixed_path(&out, "_improvement"))?,
        ));
    }
    check(
        files[0] == files[1],
        format!(
            "{} commands byte-identical across two runs",
            cases.len() + 1
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 analytic variance split", analytic_table),
        ("2 measured heaviside vrr", measured_table),
        ("3 exact unbiasedness", exact_unbiasedness),
        ("4 variance dominance", variance_dominance),
        ("5 arithmetic goldens", arithmetic_goldens),
        ("6 scalar consistency fuzz", scalar_consistency),
        ("7 coverage vrr trend", coverage_trend),
        ("8 slowdown bound", slowdown_bound),
        ("9 optimization benefit", optimization_benefit),
        ("10 cli determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  criterion {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
