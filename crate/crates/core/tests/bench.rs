//! Timing checks live in their own binary so no other test competes for the
//! CPU while they measure.

use peekgrad_core::harness::{self, Command, ExperimentSpec};
use peekgrad_core::kv::KvMap;

fn spec(command: Command, pairs: &[(&str, &str)]) -> ExperimentSpec {
    let mut kv = KvMap::new();
    for (k, v) in pairs {
        kv.insert(*k, *v);
    }
    ExperimentSpec::from_kv(command, &kv).unwrap()
}

#[test]
fn bench_reports_each_coverage_radius() {
    let s = spec(Command::Bench, &[("model", "dynamnews")]);
    let rows = harness::run_bench(&s).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.c_factor).collect::<Vec<_>>(),
        vec![1.0, 3.0, 5.0, 15.0]
    );
    assert!(
        rows[3].slowdown_median >= rows[0].slowdown_median - 0.25,
        "{rows:?}"
    );
    let sanity = harness::run_bench(&spec(
        Command::Bench,
        &[
            ("estimator", "pgo"),
            ("model", "dynamnews"),
            ("c_factor", "3"),
        ],
    ))
    .unwrap();
    assert!((sanity[0].slowdown_median - 1.0).abs() <= 0.1, "{sanity:?}");
}
