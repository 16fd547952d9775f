//! Accuracy and timing benchmarks against the mesh-LBP ground truth, plus the
//! CSV output formats.

use std::io::Write;
use std::time::Instant;

use epbp_core::mesh_oracle::{run_mesh_lbp, Mesh, MeshBelief};
use epbp_core::samplers::{
    run_pure_ep, Diagnostics, EpbpConfig, EpbpRunner, PbpConfig, PbpProposal, PbpRunner,
    PureEpRunner,
};

use crate::config::{Experiment, Method};
use crate::error::{Error, Result};

/// Mean over nodes of the L1 distance between normalized mesh beliefs.
/// Both belief sets must live on the same mesh and node set.
pub fn l1_error(
    estimate: &[MeshBelief],
    estimate_mesh: &Mesh,
    truth: &[MeshBelief],
    truth_mesh: &Mesh,
) -> Result<f64> {
    if estimate_mesh != truth_mesh {
        return Err(epbp_core::Error::MeshMismatch(format!(
            "[{}, {}] x {} vs [{}, {}] x {}",
            estimate_mesh.lo(),
            estimate_mesh.hi(),
            estimate_mesh.len(),
            truth_mesh.lo(),
            truth_mesh.hi(),
            truth_mesh.len()
        ))
        .into());
    }
    if estimate.len() != truth.len() {
        return Err(epbp_core::Error::MeshMismatch(format!(
            "{} estimated nodes vs {} truth nodes",
            estimate.len(),
            truth.len()
        ))
        .into());
    }
    let mut total = 0.0;
    for (a, b) in estimate.iter().zip(truth) {
        if a.node() != b.node() {
            return Err(epbp_core::Error::MeshMismatch(format!(
                "node order mismatch: {} vs {}",
                a.node(),
                b.node()
            ))
            .into());
        }
        total += a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            * estimate_mesh.spacing();
    }
    Ok(total / estimate.len() as f64)
}

/// One completed (method, N, seed, iteration) cell.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub m: Option<usize>,
    pub seed: u64,
    pub iteration: usize,
    pub mean_l1: f64,
    pub wall_ms: f64,
}

/// Benchmark output: completed rows plus per-cell failures (the bench keeps
/// going when a cell errors; the exit code reflects any failure).
#[derive(Debug, Default)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<String>,
}

fn run_method_once(
    exp: &Experiment,
    method: Method,
    n: usize,
    m: Option<usize>,
    iterations: usize,
    seed: u64,
    ep_proposals: &mut Option<Vec<epbp_core::gaussian_ep::GaussianFactor>>,
) -> Result<(Vec<MeshBelief>, f64, Diagnostics)> {
    let mrf = &exp.mrf;
    let mesh = &exp.mesh;
    let schedule = &exp.schedule;
    match method {
        Method::Epbp | Method::EpbpSubquad => {
            let start = Instant::now();
            let (beliefs, diags) = epbp_core::samplers::run_epbp(
                mrf, mesh, n, iterations, schedule, m, seed,
            )?;
            Ok((beliefs, start.elapsed().as_secs_f64() * 1e3, diags))
        }
        Method::Pbp => {
            let start = Instant::now();
            let (beliefs, diags) = epbp_core::samplers::run_pbp(
                mrf,
                mesh,
                n,
                iterations,
                schedule,
                seed,
                PbpProposal::LastBelief,
            )?;
            Ok((beliefs, start.elapsed().as_secs_f64() * 1e3, diags))
        }
        Method::PbpAfterEp => {
            // The EP proposals are deterministic; compute them once per
            // experiment and time only the PBP pass.
            if ep_proposals.is_none() {
                *ep_proposals =
                    Some(run_pure_ep(mrf, mesh, iterations, schedule)?.node_products);
            }
            let gaussians = ep_proposals.clone().expect("just filled");
            let start = Instant::now();
            let (beliefs, diags) = epbp_core::samplers::run_pbp(
                mrf,
                mesh,
                n,
                iterations,
                schedule,
                seed,
                PbpProposal::FixedGaussians(gaussians),
            )?;
            Ok((beliefs, start.elapsed().as_secs_f64() * 1e3, diags))
        }
        Method::PureEp => {
            let start = Instant::now();
            let result = run_pure_ep(mrf, mesh, iterations, schedule)?;
            Ok((
                result.beliefs,
                start.elapsed().as_secs_f64() * 1e3,
                result.diagnostics,
            ))
        }
    }
}

/// Runs every (method, N, seed) cell of the bench matrix and scores each
/// against the mesh-LBP truth at the configured iteration count.
pub fn run_accuracy_bench(exp: &Experiment) -> Result<BenchOutcome> {
    let methods = exp.config.bench_methods()?;
    let bench = &exp.config.bench;
    let truth = run_mesh_lbp(&exp.mrf, &exp.mesh, bench.iterations, &exp.schedule)?;

    let mut outcome = BenchOutcome::default();
    let mut ep_proposals = None;
    for &method in &methods {
        for &n in &bench.particles {
            let m = match method {
                Method::EpbpSubquad => bench.subquad_for(n),
                _ => None,
            };
            for &seed in &bench.seeds {
                match run_method_once(
                    exp,
                    method,
                    n,
                    m,
                    bench.iterations,
                    seed,
                    &mut ep_proposals,
                ) {
                    Ok((beliefs, wall_ms, _)) => {
                        let mean_l1 = l1_error(&beliefs, &exp.mesh, &truth, &exp.mesh)?;
                        outcome.rows.push(BenchRow {
                            method: method.to_string(),
                            n,
                            m,
                            seed,
                            iteration: bench.iterations,
                            mean_l1,
                            wall_ms,
                        });
                    }
                    Err(e) => outcome
                        .failures
                        .push(format!("{method} N={n} seed={seed}: {e}")),
                }
            }
        }
    }
    Ok(outcome)
}

/// Error-versus-iteration trace at a fixed particle count. Iteration 0 scores
/// the prior beliefs (node potentials alone); wall_ms is the cumulative
/// inference time, excluding belief rendering.
pub fn run_iteration_trace(exp: &Experiment) -> Result<BenchOutcome> {
    let methods = exp.config.bench_methods()?;
    let bench = &exp.config.bench;
    let n = bench.trace_particles;
    let truth = run_mesh_lbp(&exp.mrf, &exp.mesh, bench.iterations, &exp.schedule)?;

    let mut outcome = BenchOutcome::default();
    let mut ep_proposals: Option<Vec<epbp_core::gaussian_ep::GaussianFactor>> = None;
    for &method in &methods {
        let m = match method {
            Method::EpbpSubquad => match bench.subquad_for(n) {
                Some(m) => Some(m),
                None => {
                    return Err(Error::Usage(format!(
                        "subquad map has no entry for trace particle count N={n}"
                    )))
                }
            },
            _ => None,
        };
        for &seed in &bench.seeds {
            let result = trace_one(exp, method, n, m, seed, &truth, &mut ep_proposals);
            match result {
                Ok(rows) => outcome.rows.extend(rows),
                Err(e) => outcome
                    .failures
                    .push(format!("{method} N={n} seed={seed}: {e}")),
            }
        }
    }
    Ok(outcome)
}

fn trace_one(
    exp: &Experiment,
    method: Method,
    n: usize,
    m: Option<usize>,
    seed: u64,
    truth: &[MeshBelief],
    ep_proposals: &mut Option<Vec<epbp_core::gaussian_ep::GaussianFactor>>,
) -> Result<Vec<BenchRow>> {
    let iterations = exp.config.bench.iterations;
    let mut rows = Vec::with_capacity(iterations + 1);
    let mut push = |iteration: usize, beliefs: &[MeshBelief], wall_ms: f64| -> Result<()> {
        rows.push(BenchRow {
            method: method.to_string(),
            n,
            m,
            seed,
            iteration,
            mean_l1: l1_error(beliefs, &exp.mesh, truth, &exp.mesh)?,
            wall_ms,
        });
        Ok(())
    };

    match method {
        Method::Epbp | Method::EpbpSubquad => {
            let mut runner = EpbpRunner::new(
                &exp.mrf,
                &exp.schedule,
                exp.mesh.range(),
                EpbpConfig {
                    particles: n,
                    subquad: m,
                    seed,
                },
            )?;
            push(0, &runner.beliefs(&exp.mesh)?, 0.0)?;
            let mut wall = 0.0;
            for t in 1..=iterations {
                let start = Instant::now();
                runner.sweep()?;
                wall += start.elapsed().as_secs_f64() * 1e3;
                push(t, &runner.beliefs(&exp.mesh)?, wall)?;
            }
        }
        Method::Pbp | Method::PbpAfterEp => {
            let proposal = match method {
                Method::Pbp => PbpProposal::LastBelief,
                _ => {
                    if ep_proposals.is_none() {
                        *ep_proposals = Some(
                            run_pure_ep(&exp.mrf, &exp.mesh, iterations, &exp.schedule)?
                                .node_products,
                        );
                    }
                    PbpProposal::FixedGaussians(ep_proposals.clone().expect("filled"))
                }
            };
            let mut runner = PbpRunner::new(
                &exp.mrf,
                &exp.schedule,
                PbpConfig {
                    particles: n,
                    seed,
                    mh_steps: exp.config.run.mh_steps,
                    mh_proposal_std: exp.config.run.mh_proposal_std,
                    proposal,
                },
            )?;
            push(0, &runner.beliefs(&exp.mesh)?, 0.0)?;
            let mut wall = 0.0;
            for t in 1..=iterations {
                let start = Instant::now();
                runner.sweep()?;
                wall += start.elapsed().as_secs_f64() * 1e3;
                push(t, &runner.beliefs(&exp.mesh)?, wall)?;
            }
        }
        Method::PureEp => {
            let mut runner = PureEpRunner::new(&exp.mrf, &exp.schedule, &exp.mesh)?;
            push(0, &runner.beliefs()?, 0.0)?;
            let mut wall = 0.0;
            for t in 1..=iterations {
                let start = Instant::now();
                runner.sweep();
                wall += start.elapsed().as_secs_f64() * 1e3;
                push(t, &runner.beliefs()?, wall)?;
            }
        }
    }
    Ok(rows)
}

/// The stable bench CSV schema.
pub const BENCH_CSV_HEADER: &str = "method,N,M,seed,iteration,mean_l1,wall_ms";

pub fn write_bench_csv<W: Write>(
    mut w: W,
    rows: &[BenchRow],
    config_hash: &str,
    seeds: &[u64],
) -> std::io::Result<()> {
    writeln!(w, "# config_sha256={config_hash}")?;
    let seed_list: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
    writeln!(w, "# seeds={}", seed_list.join(","))?;
    writeln!(w, "{BENCH_CSV_HEADER}")?;
    for r in rows {
        let m = r.m.map(|m| m.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.method, r.n, m, r.seed, r.iteration, r.mean_l1, r.wall_ms
        )?;
    }
    Ok(())
}

/// Per-node belief export: `node,x,density` rows.
pub fn write_belief_csv<W: Write>(
    mut w: W,
    beliefs: &[MeshBelief],
    mesh: &Mesh,
    config_hash: &str,
    master_seed: u64,
) -> std::io::Result<()> {
    writeln!(w, "# config_sha256={config_hash}")?;
    writeln!(w, "# master_seed={master_seed}")?;
    writeln!(w, "node,x,density")?;
    for b in beliefs {
        for (x, v) in mesh.points().iter().zip(b.values()) {
            writeln!(w, "{},{},{}", b.node(), x, v)?;
        }
    }
    Ok(())
}

/// Diagnostics stream export: one row per (iteration, node).
pub fn write_diagnostics_csv<W: Write>(mut w: W, diags: &Diagnostics) -> std::io::Result<()> {
    writeln!(w, "iteration,node,wall_us,min_ess,ep_reverts")?;
    for r in &diags.rows {
        let ess = r.min_ess.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            r.iteration, r.node, r.wall_us, ess, r.ep_reverts
        )?;
    }
    Ok(())
}
