mod commands;
mod dataset;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pweaver_core::{NoiseSpec, RunConfig, SolverMode};

use crate::commands::Common;
use crate::failure::Failure;

#[derive(Parser)]
#[command(
    name = "pweaver",
    version,
    about = "Joint pose estimation and part segmentation from score maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; keys left out keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Assembly solver, overriding the config file.
    #[arg(long, global = true, value_enum)]
    solver: Option<SolverArg>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Also write PPM overlays of parts and skeletons (infer).
    #[arg(long, global = true)]
    overlay: bool,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Heuristic,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Clean,
    Moderate,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of scenes, score maps and boxes.
    Synth {
        /// Number of scenes.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Noise preset, overriding the config file.
        #[arg(long, value_enum)]
        noise: Option<NoiseArg>,
    },
    /// Fit the pairwise model on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the full pipeline on every scene of a dataset.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Score predictions against a dataset's ground truth.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `infer`.
        #[arg(long)]
        pred: PathBuf,
    },
    /// Compare whole-scene and per-box solving.
    Bench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_json(&dataset::read_text(path)?)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.solver {
        cfg.solver.mode = match mode {
            SolverArg::Exact => SolverMode::Exact,
            SolverArg::Heuristic => SolverMode::Heuristic,
            SolverArg::Oracle => SolverMode::Oracle,
        };
    }
    if let Command::Synth { noise: Some(n), .. } = cli.command {
        cfg.synth.noise = match n {
            NoiseArg::Clean => NoiseSpec::clean(),
            NoiseArg::Moderate => NoiseSpec::moderate(),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    if cli.jobs == Some(0) {
        return Err(Failure::input("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::internal(format!("thread pool: {e}")))?;
    let common = Common {
        cfg,
        out_dir: cli.out_dir.clone(),
        overlay: cli.overlay,
    };
    pool.install(|| match &cli.command {
        Command::Synth { count, .. } => commands::synth(&common, *count),
        Command::Train { data } => commands::train(&common, data),
        Command::Infer { data, model } => commands::infer(&common, data, model),
        Command::Eval { data, pred } => commands::eval(&common, data, pred),
        Command::Bench { data, model } => commands::bench(&common, data, model),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PWEAVER_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::input(e.render().to_string().trim_end());
            eprintln!("{}", f.to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::debug!("{f:?}");
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
