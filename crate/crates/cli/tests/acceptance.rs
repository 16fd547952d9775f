//! Acceptance suite: every release criterion runs here, one pass/fail line
//! per criterion. Heavy shared computations (the grid bench matrix) run once.
//!
//! Run with `cargo test -p epbp-cli --test acceptance -- --nocapture` to see
//! the per-criterion lines and timings.

use std::time::{Duration, Instant};

use epbp_cli::bench::{run_accuracy_bench, BenchRow};
use epbp_cli::config::ExperimentConfig;
use epbp_cli::denoise::{denoise, DenoiseOptions};
use epbp_cli::image::{add_gaussian_noise, synthetic_image};
use epbp_core::densities::DensityKernel;
use epbp_core::gaussian_ep::{project_tilted, GaussianFactor, Projection, Quadrature};
use epbp_core::mesh_oracle::{brute_force_marginals, run_mesh_lbp, Mesh};
use epbp_core::model::{make_tree_mrf, TreePotentials};
use epbp_core::particles::ParticleMessage;
use epbp_core::samplers::{EpbpConfig, EpbpRunner};
use epbp_core::schedule::Schedule;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type CriterionResult = Result<String, String>;

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

fn median_of<'a>(
    rows: impl Iterator<Item = &'a BenchRow>,
    pick: impl Fn(&BenchRow) -> f64,
) -> f64 {
    let mut vals: Vec<f64> = rows.map(pick).collect();
    assert!(!vals.is_empty(), "no rows matched");
    median(&mut vals)
}

/// Least-squares slope of log(y) against log(x).
fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// The shared grid benchmark: 3x3 grid, 20 iterations, full and sub-quadratic
/// EPBP plus PBP over the full particle ladder, 5 seeds.
struct GridBench {
    rows: Vec<BenchRow>,
    particles: Vec<usize>,
    wall: Duration,
}

impl GridBench {
    fn compute() -> Result<Self, String> {
        let mut cfg = ExperimentConfig::default();
        cfg.bench.methods = vec!["epbp".into(), "epbp-subquad".into(), "pbp".into()];
        let particles = cfg.bench.particles.clone();
        let exp = cfg.build().map_err(|e| e.to_string())?;
        let start = Instant::now();
        let outcome = run_accuracy_bench(&exp).map_err(|e| e.to_string())?;
        if !outcome.failures.is_empty() {
            return Err(format!("bench cells failed: {:?}", outcome.failures));
        }
        Ok(Self {
            rows: outcome.rows,
            particles,
            wall: start.elapsed(),
        })
    }

    fn med(&self, method: &str, n: usize, pick: impl Fn(&BenchRow) -> f64) -> f64 {
        median_of(
            self.rows.iter().filter(|r| r.method == method && r.n == n),
            pick,
        )
    }
}

fn criterion_1_tree_oracle() -> CriterionResult {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.graph.kind = epbp_cli::config::GraphKind::Tree;
    let exp = cfg.build().map_err(|e| e.to_string())?;
    let sweeps = exp.mrf.graph().diameter();
    let lbp = run_mesh_lbp(&exp.mrf, &exp.mesh, sweeps, &exp.schedule).map_err(|e| e.to_string())?;
    let exact = brute_force_marginals(&exp.mrf, &exp.mesh).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (a, b) in lbp.iter().zip(&exact) {
        let l1: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            * exp.mesh.spacing();
        worst = worst.max(l1);
    }
    let elapsed = start.elapsed();
    if worst > 1e-8 {
        return Err(format!("worst per-node L1 {worst:.3e} > 1e-8"));
    }
    if elapsed > Duration::from_secs(5) {
        return Err(format!("took {elapsed:.2?} > 5 s"));
    }
    Ok(format!("worst per-node L1 {worst:.2e} in {elapsed:.2?}"))
}

fn criterion_2_message_consistency() -> CriterionResult {
    let start = Instant::now();
    let graph = epbp_core::model::build_tree(&[(0, 1)]).map_err(|e| e.to_string())?;
    let y = epbp_cli::observations::generate_observations(2, 0);
    let mrf = make_tree_mrf(graph, y, &TreePotentials::default()).map_err(|e| e.to_string())?;
    let mesh = epbp_core::mesh_oracle::default_mesh(mrf.observations()).map_err(|e| e.to_string())?;
    let schedule = Schedule::forward_backward(2);

    // Quadrature-exact message 0 -> 1 on the mesh, dense inner grid.
    let inner = Mesh::new(mesh.lo() - 4.0, mesh.hi() + 4.0, 4001).map_err(|e| e.to_string())?;
    let mut exact: Vec<f64> = mesh
        .points()
        .iter()
        .map(|&xv| {
            inner
                .points()
                .iter()
                .map(|&xu| (mrf.log_edge_potential(xu, xv) + mrf.log_node_potential(0, xu)).exp())
                .sum::<f64>()
                * inner.spacing()
        })
        .collect();
    let mass: f64 = exact.iter().sum::<f64>() * mesh.spacing();
    for v in &mut exact {
        *v /= mass;
    }

    let ns = [10usize, 100, 1000, 10000];
    let seeds: Vec<u64> = (1..=10).collect();
    let mut averages = Vec::new();
    for &n in &ns {
        let mut acc = 0.0;
        for &seed in &seeds {
            let mut runner = EpbpRunner::new(
                &mrf,
                &schedule,
                mesh.range(),
                EpbpConfig {
                    particles: n,
                    subquad: None,
                    seed,
                },
            )
            .map_err(|e| e.to_string())?;
            runner.sweep().map_err(|e| e.to_string())?;
            runner.sweep().map_err(|e| e.to_string())?;
            let msg = runner.message(0, 1).full().expect("message built");
            let mut est: Vec<f64> = mesh
                .points()
                .iter()
                .map(|&x| msg.log_eval(x).exp())
                .collect();
            let mass: f64 = est.iter().sum::<f64>() * mesh.spacing();
            for v in &mut est {
                *v /= mass;
            }
            acc += est
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * mesh.spacing();
        }
        averages.push(acc / seeds.len() as f64);
    }
    let elapsed = start.elapsed();
    for pair in averages.windows(2) {
        if pair[1] >= pair[0] {
            return Err(format!("seed-averaged errors not monotone: {averages:?}"));
        }
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = log_log_slope(&xs, &averages);
    if !(-0.75..=-0.25).contains(&slope) {
        return Err(format!("slope {slope:.3} outside [-0.75, -0.25]"));
    }
    if elapsed > Duration::from_secs(120) {
        return Err(format!("took {elapsed:.2?} > 2 min"));
    }
    Ok(format!(
        "errors {averages:.4?} slope {slope:.3} in {elapsed:.2?}"
    ))
}

fn criterion_3_grid_ordering(bench: &GridBench) -> CriterionResult {
    let mut detail = String::new();
    for &n in &bench.particles {
        let e = bench.med("epbp", n, |r| r.mean_l1);
        let p = bench.med("pbp", n, |r| r.mean_l1);
        detail += &format!("N={n}: epbp {e:.4} pbp {p:.4}; ");
        if e >= p {
            return Err(format!(
                "EPBP median {e:.4} not below PBP median {p:.4} at N={n}"
            ));
        }
    }
    let p100 = bench.med("pbp", 100, |r| r.mean_l1);
    let p500 = bench.med("pbp", 500, |r| r.mean_l1);
    if p500 < 0.8 * p100 {
        return Err(format!(
            "PBP error kept improving: N=500 {p500:.4} < 0.8 x N=100 {p100:.4}"
        ));
    }
    Ok(detail)
}

fn criterion_4_epbp_rate(bench: &GridBench) -> CriterionResult {
    let xs: Vec<f64> = bench.particles.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = bench
        .particles
        .iter()
        .map(|&n| bench.med("epbp", n, |r| r.mean_l1))
        .collect();
    let slope = log_log_slope(&xs, &ys);
    if (-0.75..=-0.25).contains(&slope) {
        Ok(format!("slope {slope:.3}, medians {ys:.4?}"))
    } else {
        Err(format!("slope {slope:.3} outside [-0.75, -0.25]"))
    }
}

fn criterion_5_subquad_parity(bench: &GridBench) -> CriterionResult {
    let mut detail = String::new();
    for &n in &bench.particles {
        let full = bench.med("epbp", n, |r| r.mean_l1);
        let sub = bench.med("epbp-subquad", n, |r| r.mean_l1);
        detail += &format!("N={n}: {:.2}x; ", sub / full);
        if sub > 1.5 * full {
            return Err(format!(
                "subquad median {sub:.4} > 1.5 x full {full:.4} at N={n}"
            ));
        }
    }
    for &n in &[200usize, 500] {
        let full = bench.med("epbp", n, |r| r.wall_ms);
        let sub = bench.med("epbp-subquad", n, |r| r.wall_ms);
        if sub >= full {
            return Err(format!(
                "subquad wall {sub:.1} ms not below full {full:.1} ms at N={n}"
            ));
        }
        detail += &format!("wall N={n}: {sub:.0}/{full:.0} ms; ");
    }
    Ok(detail)
}

fn criterion_6_speedup(bench: &GridBench) -> CriterionResult {
    let e = bench.med("epbp", 100, |r| r.wall_ms);
    let p = bench.med("pbp", 100, |r| r.wall_ms);
    if e <= p / 10.0 {
        Ok(format!("epbp {e:.0} ms vs pbp {p:.0} ms ({:.1}x)", p / e))
    } else {
        Err(format!(
            "epbp {e:.0} ms > pbp {p:.0} ms / 10 ({:.1}x)",
            p / e
        ))
    }
}

fn criterion_7_tree_baselines() -> CriterionResult {
    let mut cfg = ExperimentConfig::default();
    cfg.graph.kind = epbp_cli::config::GraphKind::Tree;
    cfg.bench.methods = vec!["epbp".into(), "pbp-after-ep".into(), "ep".into()];
    cfg.bench.particles = vec![100];
    let exp = cfg.build().map_err(|e| e.to_string())?;
    let outcome = run_accuracy_bench(&exp).map_err(|e| e.to_string())?;
    if !outcome.failures.is_empty() {
        return Err(format!("{:?}", outcome.failures));
    }
    let med = |method: &str| {
        median_of(
            outcome.rows.iter().filter(|r| r.method == method),
            |r| r.mean_l1,
        )
    };
    let epbp = med("epbp");
    let after_ep = med("pbp-after-ep");
    let pure_ep = med("ep");
    if epbp >= after_ep {
        return Err(format!("epbp {epbp:.4} not below pbp-after-ep {after_ep:.4}"));
    }
    if epbp >= pure_ep {
        return Err(format!("epbp {epbp:.4} not below ep {pure_ep:.4}"));
    }
    Ok(format!(
        "epbp {epbp:.4} < pbp-after-ep {after_ep:.4}, ep {pure_ep:.4}"
    ))
}

fn criterion_8_subsample_unbiased() -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 50;
    let particles: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let kernel = DensityKernel::laplace(0.0, 2.0).map_err(|e| e.to_string())?;
    let message =
        ParticleMessage::new(0, 1, particles, weights, kernel).map_err(|e| e.to_string())?;
    let x = 0.7;
    let full = message.log_eval(x).exp();
    let reps = 10_000;
    let m = 10;
    let mut acc = 0.0;
    for _ in 0..reps {
        acc += message.clone().subsample(m, &mut rng).log_eval(x).exp();
    }
    let mc = acc / reps as f64;
    let rel = (mc - full).abs() / full;
    if rel <= 0.01 {
        Ok(format!("relative error {rel:.5} over {reps} draws"))
    } else {
        Err(format!("relative error {rel:.5} > 1%"))
    }
}

fn criterion_9_ep_fixed_point() -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let tm = rng.gen_range(-1.5..1.5);
        let ts = rng.gen_range(0.7..1.5);
        let cm = rng.gen_range(-1.0..1.0);
        let cs = rng.gen_range(1.0..2.0);
        let target = GaussianFactor::from_moments(tm, ts * ts);
        let cavity = GaussianFactor::from_moments(cm, cs * cs);
        let quad = Quadrature::for_cavity(&cavity, (-12.0, 12.0));
        match project_tilted(|x| target.log_density_unnorm(x), cavity, &quad)
            .map_err(|e| e.to_string())?
        {
            Projection::Updated(f) => {
                worst = worst
                    .max((f.precision() - target.precision()).abs())
                    .max((f.shift() - target.shift()).abs());
            }
            Projection::Revert => return Err("unexpected revert".into()),
        }
    }
    if worst <= 1e-6 {
        Ok(format!("worst natural-parameter error {worst:.2e}"))
    } else {
        Err(format!("worst natural-parameter error {worst:.2e} > 1e-6"))
    }
}

fn criterion_10_denoising() -> CriterionResult {
    let start = Instant::now();
    let clean = synthetic_image(50, 50);
    let noisy = add_gaussian_noise(&clean, 0.1, 0);
    let (recovered, _) =
        denoise(&noisy, &DenoiseOptions::default()).map_err(|e| e.to_string())?;
    let before = noisy.mean_abs_diff(&clean).map_err(|e| e.to_string())?;
    let after = recovered.mean_abs_diff(&clean).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if after >= before {
        return Err(format!("mean error {after:.4} not below noisy {before:.4}"));
    }
    if elapsed > Duration::from_secs(600) {
        return Err(format!("took {elapsed:.2?} > 10 min"));
    }
    Ok(format!(
        "mean error {before:.4} -> {after:.4} in {elapsed:.2?}"
    ))
}

#[test]
fn acceptance_criteria() {
    let mut failures = Vec::new();
    let mut report = |id: usize, name: &str, result: CriterionResult| {
        match result {
            Ok(detail) => println!("[PASS] criterion {id:2} ({name}): {detail}"),
            Err(detail) => {
                println!("[FAIL] criterion {id:2} ({name}): {detail}");
                failures.push(format!("criterion {id} ({name}): {detail}"));
            }
        }
    };

    report(1, "tree oracle equivalence", criterion_1_tree_oracle());
    report(2, "2-node message consistency", criterion_2_message_consistency());

    match GridBench::compute() {
        Ok(bench) => {
            println!(
                "[info] grid bench matrix: {} rows in {:.1?}",
                bench.rows.len(),
                bench.wall
            );
            report(3, "grid accuracy ordering", criterion_3_grid_ordering(&bench));
            report(4, "EPBP 1/sqrt(N) rate", criterion_4_epbp_rate(&bench));
            report(5, "sub-quadratic parity", criterion_5_subquad_parity(&bench));
            report(6, "EPBP/PBP speedup", criterion_6_speedup(&bench));
        }
        Err(e) => {
            for (id, name) in [
                (3, "grid accuracy ordering"),
                (4, "EPBP 1/sqrt(N) rate"),
                (5, "sub-quadratic parity"),
                (6, "EPBP/PBP speedup"),
            ] {
                report(id, name, Err(format!("grid bench failed: {e}")));
            }
        }
    }

    report(7, "tree baseline ordering", criterion_7_tree_baselines());
    report(8, "subsampled-message unbiasedness", criterion_8_subsample_unbiased());
    report(9, "EP projection fixed point", criterion_9_ep_fixed_point());
    report(10, "denoising improvement", criterion_10_denoising());

    assert!(
        failures.is_empty(),
        "{} acceptance criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
