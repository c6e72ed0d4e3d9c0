use afkit::bench::{run_bench, Estimator, MCConfig};
use afkit::signal::ProcessSpec;

fn run_with_threads(threads: usize, cfg: &MCConfig) -> afkit::bench::MCReport {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| run_bench(cfg).unwrap())
}

#[test]
fn report_does_not_depend_on_thread_count() {
    let cfg = MCConfig::new(
        ProcessSpec::benchmark_tvma(),
        64,
        13,
        42,
        vec![Estimator::Emaf, Estimator::Teaf, Estimator::Lteaf],
    );
    let one = run_with_threads(1, &cfg);
    let four = run_with_threads(4, &cfg);
    assert_eq!(one.estimators, four.estimators);
    for (a, b) in one.estimators.iter().zip(&four.estimators) {
        assert_eq!(a.mse_grid, b.mse_grid);
    }
}

#[test]
fn mse_grid_sums_to_total() {
    let cfg = MCConfig::new(ProcessSpec::benchmark_chirp(), 64, 6, 1, vec![Estimator::Emaf, Estimator::Lbteaf]);
    let r = run_bench(&cfg).unwrap();
    for s in &r.estimators {
        let sum: f64 = s.mse_grid.as_ref().unwrap().values().iter().map(|v| v.re).sum();
        assert!((sum - s.total_mse_mean).abs() <= 1e-9 * s.total_mse_mean);
        assert_eq!(s.trial_mse.len(), 6);
    }
    assert!(!r.metadata.single_trial);
}
