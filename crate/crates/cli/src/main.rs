use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use epbp_cli::bench::{
    run_accuracy_bench, run_iteration_trace, write_belief_csv, write_bench_csv,
    write_diagnostics_csv,
};
use epbp_cli::config::ExperimentConfig;
use epbp_cli::denoise::{denoise, DenoiseOptions};
use epbp_cli::image::{add_gaussian_noise, synthetic_image};
use epbp_cli::pgm::{read_pgm, write_pgm};
use epbp_core::mesh_oracle::run_mesh_lbp;
use epbp_core::samplers::{run_epbp, run_pbp, run_pure_ep, Diagnostics, PbpProposal};

/// Inference and benchmarks for continuous-state pairwise MRFs.
#[derive(Parser)]
#[command(name = "epbp", version, about)]
struct Cli {
    /// Experiment config file (TOML); built-in defaults when absent.
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,

    /// Particles per node.
    #[arg(long, value_name = "N", global = true)]
    particles: Option<usize>,

    /// Evaluate messages through M multinomially drawn components.
    #[arg(long, value_name = "M", global = true)]
    subquad: Option<usize>,

    /// Number of full node-update sweeps.
    #[arg(long, value_name = "K", global = true)]
    iterations: Option<usize>,

    /// Master seed for the run.
    #[arg(long, value_name = "S", global = true)]
    seed: Option<u64>,

    /// Output path (stdout when omitted; required for denoise).
    #[arg(long, value_name = "PATH", global = true)]
    out: Option<PathBuf>,

    /// Number of mesh points for beliefs and ground truth.
    #[arg(long, value_name = "K", global = true)]
    mesh_points: Option<usize>,

    /// Mesh range as two values LO HI.
    #[arg(long, value_name = "X", num_args = 2, global = true)]
    mesh_range: Option<Vec<f64>>,

    /// Restrict bench/trace to a single method.
    #[arg(long, value_name = "NAME", global = true)]
    method: Option<String>,

    /// Write the per-(iteration, node) diagnostics stream to this CSV.
    #[arg(long, value_name = "PATH", global = true)]
    diag: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic-mesh LBP ground truth, exported as a belief CSV.
    Oracle,
    /// EPBP beliefs (sub-quadratic when --subquad is set).
    Epbp,
    /// Particle BP with MCMC-sampled belief proposals.
    Pbp,
    /// Pure Gaussian EP.
    Ep,
    /// Particle BP drawing from fixed pure-EP proposals.
    PbpAfterEp,
    /// Accuracy/timing matrix over (method, N, seed) cells.
    Bench,
    /// Mean-L1 error after every iteration at a fixed particle count.
    Trace,
    /// Denoise a grayscale PGM with sub-quadratic EPBP.
    Denoise(DenoiseArgs),
}

#[derive(Args)]
struct DenoiseArgs {
    /// Noisy input image (P2 or P5 PGM).
    #[arg(long, value_name = "PATH", conflicts_with = "synthetic")]
    input: Option<PathBuf>,

    /// Generate a synthetic clean/noisy pair instead of reading a file,
    /// report error-to-clean before and after.
    #[arg(long)]
    synthetic: bool,

    #[arg(long, value_name = "W", default_value_t = 50)]
    width: usize,

    #[arg(long, value_name = "H", default_value_t = 50)]
    height: usize,

    /// Noise standard deviation for --synthetic.
    #[arg(long, value_name = "SIGMA", default_value_t = 0.1)]
    noise_sigma: f64,

    #[arg(long, value_name = "SEED", default_value_t = 0)]
    noise_seed: u64,

    /// Save the synthetic noisy input here.
    #[arg(long, value_name = "PATH")]
    save_noisy: Option<PathBuf>,

    /// Save the synthetic clean image here.
    #[arg(long, value_name = "PATH")]
    save_clean: Option<PathBuf>,

    /// Edge-potential truncation half-width.
    #[arg(long, value_name = "LAMBDA")]
    lambda: Option<f64>,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.particles {
        config.run.particles = n;
    }
    if let Some(m) = cli.subquad {
        config.run.subquad = Some(m);
    }
    if let Some(k) = cli.iterations {
        config.run.iterations = k;
    }
    if let Some(s) = cli.seed {
        config.run.seed = s;
    }
    if let Some(k) = cli.mesh_points {
        config.mesh.points = k;
    }
    if let Some(range) = &cli.mesh_range {
        config.mesh.lo = Some(range[0]);
        config.mesh.hi = Some(range[1]);
    }
    if let Some(method) = &cli.method {
        config.bench.methods = vec![method.clone()];
    }
    Ok(config)
}

fn output_writer(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_diag(path: &Option<PathBuf>, diags: &Diagnostics) -> anyhow::Result<()> {
    if let Some(path) = path {
        let file = File::create(path)?;
        write_diagnostics_csv(BufWriter::new(file), diags)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Oracle => {
            let exp = config.build()?;
            let beliefs =
                run_mesh_lbp(&exp.mrf, &exp.mesh, config.run.iterations, &exp.schedule)?;
            let w = output_writer(&cli.out)?;
            write_belief_csv(w, &beliefs, &exp.mesh, &exp.config_hash, config.run.seed)?;
        }
        Command::Epbp => {
            let exp = config.build()?;
            let (beliefs, diags) = run_epbp(
                &exp.mrf,
                &exp.mesh,
                config.run.particles,
                config.run.iterations,
                &exp.schedule,
                config.run.subquad,
                config.run.seed,
            )?;
            write_belief_csv(
                output_writer(&cli.out)?,
                &beliefs,
                &exp.mesh,
                &exp.config_hash,
                config.run.seed,
            )?;
            write_diag(&cli.diag, &diags)?;
        }
        Command::Pbp | Command::PbpAfterEp => {
            let exp = config.build()?;
            let proposal = match cli.command {
                Command::Pbp => PbpProposal::LastBelief,
                _ => {
                    let ep = run_pure_ep(
                        &exp.mrf,
                        &exp.mesh,
                        config.run.iterations,
                        &exp.schedule,
                    )?;
                    PbpProposal::FixedGaussians(ep.node_products)
                }
            };
            let (beliefs, diags) = run_pbp(
                &exp.mrf,
                &exp.mesh,
                config.run.particles,
                config.run.iterations,
                &exp.schedule,
                config.run.seed,
                proposal,
            )?;
            write_belief_csv(
                output_writer(&cli.out)?,
                &beliefs,
                &exp.mesh,
                &exp.config_hash,
                config.run.seed,
            )?;
            write_diag(&cli.diag, &diags)?;
        }
        Command::Ep => {
            let exp = config.build()?;
            let result =
                run_pure_ep(&exp.mrf, &exp.mesh, config.run.iterations, &exp.schedule)?;
            write_belief_csv(
                output_writer(&cli.out)?,
                &result.beliefs,
                &exp.mesh,
                &exp.config_hash,
                config.run.seed,
            )?;
            write_diag(&cli.diag, &result.diagnostics)?;
        }
        Command::Bench | Command::Trace => {
            let exp = config.build()?;
            let outcome = match cli.command {
                Command::Bench => run_accuracy_bench(&exp)?,
                _ => run_iteration_trace(&exp)?,
            };
            let w = output_writer(&cli.out)?;
            write_bench_csv(w, &outcome.rows, &exp.config_hash, &config.bench.seeds)?;
            if !outcome.failures.is_empty() {
                for failure in &outcome.failures {
                    eprintln!("cell failed: {failure}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Denoise(args) => {
            let out = cli
                .out
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("denoise requires --out PATH"))?;
            let (noisy, clean) = if args.synthetic {
                let clean = synthetic_image(args.width, args.height);
                let noisy = add_gaussian_noise(&clean, args.noise_sigma, args.noise_seed);
                (noisy, Some(clean))
            } else {
                let path = args
                    .input
                    .as_ref()
                    .ok_or_else(|| anyhow::anyhow!("denoise needs --input PATH or --synthetic"))?;
                (read_pgm(path)?, None)
            };
            if let Some(path) = &args.save_noisy {
                write_pgm(&noisy, path)?;
            }
            if let (Some(path), Some(clean)) = (&args.save_clean, &clean) {
                write_pgm(clean, path)?;
            }
            let opts = DenoiseOptions {
                particles: cli.particles.unwrap_or(30),
                subquad: cli.subquad.unwrap_or(5),
                iterations: cli.iterations.unwrap_or(10),
                seed: cli.seed.unwrap_or(0),
                lambda: args.lambda.unwrap_or(epbp_core::model::DENOISE_LAMBDA),
            };
            let (recovered, diags) = denoise(&noisy, &opts)?;
            write_pgm(&recovered, out)?;
            write_diag(&cli.diag, &diags)?;
            if let Some(clean) = &clean {
                println!("noisy  mean|err| = {:.5}", noisy.mean_abs_diff(clean)?);
                println!("output mean|err| = {:.5}", recovered.mean_abs_diff(clean)?);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
