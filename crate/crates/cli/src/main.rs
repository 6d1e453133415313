use std::path::PathBuf;
use std::process::ExitCode;

use chance_design::risk::Estimator;
use chance_design_cli::commands;
use chance_design_cli::run::{output_root, RunDir};
use chance_design_cli::{CliError, CliResult, RunConfig};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chance-design", version, about = "Design under uncertainty for a porous heat-shield model")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving run folders (default: $CHANCE_DESIGN_OUTPUT_ROOT, then ./runs).
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    /// Worker threads for the data-parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Quad,
    Mc,
    Cv,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Quad => Estimator::Quad,
            EstimatorArg::Mc => Estimator::Mc,
            EstimatorArg::Cv => Estimator::Cv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw parameter-field samples and export them as VTK.
    SampleField {
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the coupled state at the uniform design and mean parameter.
    SolveForward,
    /// Estimate mean and variance of the thermal compliance.
    EstimateMoments {
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        neig: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Finite-difference checks of gradients and Hessian actions.
    VerifyGradient {
        /// Flip the sign of the analytic gradients (exercises the failure path).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Run the continuation optimizer.
    Optimize,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SampleField { .. } => "sample-field",
            Command::SolveForward => "solve-forward",
            Command::EstimateMoments { .. } => "estimate-moments",
            Command::VerifyGradient { .. } => "verify-gradient",
            Command::Optimize => "optimize",
        }
    }

    /// Folds command-line overrides into the configuration so they are part
    /// of the recorded hash.
    fn apply(&self, cfg: &mut RunConfig) {
        match *self {
            Command::SampleField { seed: Some(s), .. } => cfg.seed = s,
            Command::EstimateMoments { estimator, samples, neig, seed } => {
                if let Some(e) = estimator {
                    cfg.estimator = e.into();
                }
                if let Some(s) = samples {
                    cfg.samples = s;
                }
                if let Some(k) = neig {
                    cfg.eig.n_eig = k;
                }
                if let Some(s) = seed {
                    cfg.seed = s;
                }
            }
            _ => {}
        }
    }
}

fn init_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the parallel feature; ignoring --threads {n}");
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads(cli.threads)?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cli.command.apply(&mut cfg);
    cfg.validate()?;
    let root = output_root(cli.output_root.as_deref());
    let mut dir = RunDir::create(&root, cli.command.name(), &cfg)?;
    log::info!("writing to {}", dir.path().display());
    let mut failure = None;
    let solves = match cli.command {
        Command::SampleField { count, .. } => commands::sample_field(&cfg, &mut dir, count)?,
        Command::SolveForward => commands::solve_forward(&cfg, &mut dir)?,
        Command::EstimateMoments { .. } => commands::estimate(&cfg, &mut dir)?,
        Command::VerifyGradient { inject_fault } => {
            let (solves, pass) = commands::verify(&cfg, &mut dir, inject_fault)?;
            if !pass {
                failure = Some(CliError::Verification(format!(
                    "finite-difference checks failed; see {}",
                    dir.path().join("report.json").display()
                )));
            }
            solves
        }
        Command::Optimize => commands::optimize(&cfg, &mut dir)?,
    };
    let path = dir.path().to_path_buf();
    dir.finish(solves)?;
    println!("{}", path.display());
    failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
