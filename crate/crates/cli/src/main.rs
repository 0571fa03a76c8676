use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use conformal_morph::conformal::QiemConfig;
use conformal_morph::linalg::use_sequential_solvers;
use conformal_morph::pipeline::{self, OutputSet, PipelineConfig, PipelineError, Session};

#[derive(Parser)]
#[command(name = "conformal-morph", version, about = "Conformal surface morphing pipeline")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for frame reconstruction.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Keep files already written when a command fails.
    #[arg(long, global = true)]
    keep_partial: bool,
    /// Reconstruction stopping tolerance (overrides the config).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map a disk-like mesh conformally onto the unit disk.
    Parameterize {
        mesh: PathBuf,
        /// Output CSV of per-vertex u, v, lambda; the angle-distortion
        /// histogram goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Match adjacent keyframes and report matching energies.
    Match,
    /// Build the geodesic feature frames and disk partitions.
    Frame,
    /// Reconstruct the morphing sequence at the configured times.
    Morph,
    /// Compare emitted frames with the reference surfaces.
    Metrics,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let path = cli.config.as_deref().ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let mut config = PipelineConfig::load(path)?;
    if let Some(tol) = cli.tol {
        config.reconstruction.tol = Some(tol);
        config.validate()?;
    }
    Ok(config)
}

fn qiem_for(cli: &Cli) -> Result<QiemConfig, PipelineError> {
    match &cli.config {
        Some(_) => Ok(load_config(cli)?.qiem),
        None => Ok(QiemConfig::default()),
    }
}

fn with_outputs<T>(
    config: PipelineConfig,
    keep_partial: bool,
    run: impl FnOnce(&Session, &mut OutputSet) -> Result<T, PipelineError>,
) -> Result<Vec<PathBuf>, PipelineError> {
    let dir = config.output.clone();
    let session = Session::open(config)?;
    let mut out = OutputSet::new(&dir)?;
    match run(&session, &mut out) {
        Ok(_) => Ok(out.written().to_vec()),
        Err(e) => {
            if !keep_partial {
                out.discard();
            }
            Err(e)
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, PipelineError> {
    match &cli.command {
        Command::Parameterize { mesh, out } => pipeline::cmd_parameterize(mesh, out, &qiem_for(cli)?),
        Command::Match => with_outputs(load_config(cli)?, cli.keep_partial, pipeline::cmd_match),
        Command::Frame => with_outputs(load_config(cli)?, cli.keep_partial, pipeline::cmd_frame),
        Command::Morph => with_outputs(load_config(cli)?, cli.keep_partial, pipeline::cmd_morph),
        Command::Metrics => with_outputs(load_config(cli)?, cli.keep_partial, pipeline::cmd_metrics),
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MORPH_LOG", "warn")).init();
    let cli = Cli::parse();
    use_sequential_solvers();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cli::thread pool failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(paths) => {
            print_written(&paths);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
