use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use genlap::harness::{self, CorrectionMode, ExperimentConfig};
use genlap::inference::{self, DEFAULT_C_EXPONENT};
use genlap::laplacian::{self, RegularizationParams};
use genlap::model::{self, AdjacencyInstance, SimulationDesign};
use genlap::{io, spectral, Error, Result};

#[derive(Parser)]
#[command(
    name = "genlap",
    version,
    about = "Spectral inference for generalized Laplacian matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one network from a mixed-membership design and write it out.
    Simulate(SimulateArgs),
    /// Estimate spikes, biases and standard deviations for a matrix file.
    Infer(InferArgs),
    /// Run a Monte-Carlo experiment from a JSON config.
    Montecarlo(MonteCarloArgs),
    /// Estimate the number of strong spikes of a matrix file.
    Rank(RankArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Design JSON; the 3000-node standard design when omitted.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    theta: f64,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; `.mtx` selects Matrix Market, anything else the binary format.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RegArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-4)]
    tau: f64,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long = "c-exponent", default_value_t = DEFAULT_C_EXPONENT)]
    c_exponent: f64,
}

#[derive(Args)]
struct InferArgs {
    matrix: PathBuf,
    #[command(flatten)]
    reg: RegArgs,
    /// Number of spikes to analyse; the rank estimate when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    mode: Option<CorrectionMode>,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    matrix: PathBuf,
    #[command(flatten)]
    reg: RegArgs,
}

fn load(path: &Path) -> Result<AdjacencyInstance> {
    let m = io::read_matrix(path)?;
    let mut x = AdjacencyInstance::observed(m)?;
    x.spec_ref = Some(path.display().to_string());
    Ok(x)
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let design = match &args.design {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str::<SimulationDesign>(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
        }
        None => SimulationDesign::standard(args.theta, args.rho),
    };
    let spec = design.to_spec()?;
    let h = model::build_dcmm_mean(&spec)?;
    let x = model::sample_adjacency(&h, spec.noise(), args.seed);
    io::write_matrix(&args.out, &x.matrix)?;
    info!("wrote {}x{} matrix to {}", x.n(), x.n(), args.out.display());
    Ok(())
}

fn infer(args: InferArgs) -> Result<()> {
    let x = load(&args.matrix)?;
    let reg = RegularizationParams::uniform(x.n(), args.reg.tau, args.reg.lambda, args.reg.alpha)?;
    let report = inference::infer(&x, &reg, args.k, args.reg.c_exponent)?;
    write_json(&report, args.out.as_deref())
}

fn rank(args: RankArgs) -> Result<()> {
    let x = load(&args.matrix)?;
    let reg = RegularizationParams::uniform(x.n(), args.reg.tau, args.reg.lambda, args.reg.alpha)?;
    let l = laplacian::build_l(&x, &reg)?;
    let lap = laplacian::generalized_laplacian(&x, &l, reg.alpha)?;
    let eigs = spectral::eigenvalues_by_magnitude(&lap)?;
    let est = inference::estimate_k0(&eigs, &l.diag, &x, reg.alpha, args.reg.c_exponent)?;
    write_json(&est, None)
}

fn montecarlo(args: MonteCarloArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json_file(&args.config)?;
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Some(m) = args.mode {
        cfg.correction_mode = m;
    }
    if let Some(d) = args.output_dir {
        cfg.output_dir = d;
    }
    let out = harness::run_montecarlo(&cfg)?;
    for p in harness::emit(&cfg, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Infer(a) => infer(a),
        Command::Montecarlo(a) => montecarlo(a),
        Command::Rank(a) => rank(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
