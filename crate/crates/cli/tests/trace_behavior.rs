//! Qualitative behavior of the error-versus-iteration traces at N = 30.

use epbp_cli::bench::run_iteration_trace;
use epbp_cli::config::ExperimentConfig;

#[test]
fn trace_shapes_separate_the_methods() {
    let mut cfg = ExperimentConfig::default();
    cfg.bench.methods = vec!["epbp".into(), "pbp".into()];
    cfg.bench.seeds = (1..=10).collect();
    let exp = cfg.build().unwrap();
    let out = run_iteration_trace(&exp).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);

    let iterations = cfg.bench.iterations;
    let mean_at = |method: &str, it: usize| -> f64 {
        let vals: Vec<f64> = out
            .rows
            .iter()
            .filter(|r| r.method == method && r.iteration == it)
            .map(|r| r.mean_l1)
            .collect();
        assert_eq!(vals.len(), 10);
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let std_at = |method: &str, it: usize| -> f64 {
        let vals: Vec<f64> = out
            .rows
            .iter()
            .filter(|r| r.method == method && r.iteration == it)
            .map(|r| r.mean_l1)
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64).sqrt()
    };

    // EPBP: sharp drop, then flat.
    let e0 = mean_at("epbp", 0);
    let e1 = mean_at("epbp", 1);
    let e_final = mean_at("epbp", iterations);
    assert!(e1 < 0.3 * e0, "iteration 1 mean {e1} vs prior {e0}");
    assert!(e_final < 0.6 * e1, "final {e_final} vs iteration 1 {e1}");
    for it in iterations / 2..=iterations {
        let e = mean_at("epbp", it);
        assert!(e < 2.5 * e_final, "late-trace bump at {it}: {e} vs {e_final}");
    }

    // PBP converges more slowly: far behind EPBP mid-trace.
    let p_quarter = mean_at("pbp", iterations / 4);
    let e_quarter = mean_at("epbp", iterations / 4);
    assert!(
        p_quarter > 2.0 * e_quarter,
        "pbp {p_quarter} vs epbp {e_quarter} at iteration {}",
        iterations / 4
    );

    // And its trace varies more across seeds, aggregated over iterations.
    let agg = |method: &str| -> f64 {
        (1..=iterations).map(|it| std_at(method, it)).sum::<f64>() / iterations as f64
    };
    let pbp_spread = agg("pbp");
    let epbp_spread = agg("epbp");
    assert!(
        pbp_spread > epbp_spread,
        "pbp spread {pbp_spread} vs epbp spread {epbp_spread}"
    );
}
