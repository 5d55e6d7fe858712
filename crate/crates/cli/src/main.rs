use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use homodefect::cache::{resolve_cache_dir, CorrectorCache};
use homodefect::commands::{
    run_compare_command, run_corrector, run_oracle_check, run_potential, run_solve, run_study_command, run_tensor,
    CorrectorConfig, Outcome, PotentialConfig, SolveConfig, TensorConfig,
};
use homodefect::study::{StudyConfig, Verdict};
use homodefect::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_FAIL: u8 = 4;

#[derive(Parser)]
#[command(name = "homodefect", version, about = "Homogenization of periodic media with a localized defect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Corrector cache directory (HOMODEFECT_CACHE is used when absent).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Worker threads for independent eps values.
    #[arg(long)]
    threads: Option<usize>,
    /// Lift the memory gate and allow 3D runs.
    #[arg(long)]
    allow_large: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Periodic and defect correctors.
    Corrector(Common),
    /// Homogenized tensor, optionally with the defect invariance probe.
    Tensor(Common),
    /// Flux residuals and their antisymmetric potentials.
    Potential(Common),
    /// One two-scale run at a single eps.
    Solve(Common),
    /// Convergence-rate study over an eps sweep.
    RateStudy(Common),
    /// Full versus periodic-only corrector comparison.
    Compare(Common),
    /// 1D study checked against the closed-form solution.
    OracleCheck(Common),
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

fn read_config(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn open_cache(common: &Common, from_config: Option<&Path>) -> Result<Option<CorrectorCache>, Failure> {
    match resolve_cache_dir(common.cache_dir.as_deref(), from_config) {
        Some(dir) => Ok(Some(CorrectorCache::new(dir)?)),
        None => Ok(None),
    }
}

fn study_config(common: &Common) -> Result<StudyConfig, Failure> {
    let mut cfg = StudyConfig::from_json_str(&read_config(&common.config)?)?;
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    if common.allow_large {
        cfg.allow_large = true;
    }
    cfg.output_dir = Some(common.out.clone());
    Ok(cfg)
}

fn run(command: &Command) -> Result<(Outcome, bool), Failure> {
    Ok(match command {
        Command::Corrector(c) => {
            let cfg = CorrectorConfig::from_json_str(&read_config(&c.config)?)?;
            let cache = open_cache(c, cfg.cache_dir.as_deref())?;
            (run_corrector(&cfg, &c.out, cache.as_ref())?, false)
        }
        Command::Tensor(c) => {
            let cfg = TensorConfig::from_json_str(&read_config(&c.config)?)?;
            (run_tensor(&cfg, &c.out)?, false)
        }
        Command::Potential(c) => {
            let cfg = PotentialConfig::from_json_str(&read_config(&c.config)?)?;
            let cache = open_cache(c, cfg.cache_dir.as_deref())?;
            (run_potential(&cfg, &c.out, cache.as_ref())?, false)
        }
        Command::Solve(c) => {
            let mut cfg = SolveConfig::from_json_str(&read_config(&c.config)?)?;
            cfg.allow_large |= c.allow_large;
            let cache = open_cache(c, cfg.cache_dir.as_deref())?;
            (run_solve(&cfg, &c.out, cache.as_ref())?.1, false)
        }
        Command::RateStudy(c) => {
            let cfg = study_config(c)?;
            let cache = open_cache(c, cfg.cache_dir.as_deref())?;
            (run_study_command(&cfg, &c.out, cache.as_ref())?.1, true)
        }
        Command::Compare(c) => {
            let cfg = study_config(c)?;
            let cache = open_cache(c, cfg.cache_dir.as_deref())?;
            (run_compare_command(&cfg, &c.out, cache.as_ref())?.1, true)
        }
        Command::OracleCheck(c) => {
            let cfg = study_config(c)?;
            let cache = open_cache(c, cfg.cache_dir.as_deref())?;
            (run_oracle_check(&cfg, &c.out, cache.as_ref())?.1, false)
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok((outcome, graded)) => {
            for f in &outcome.files {
                info!("wrote {}", f.display());
            }
            match outcome.verdict {
                Some(v) => println!("verdict: {}", v.as_str()),
                None => println!("done"),
            }
            if graded && outcome.verdict == Some(Verdict::Fail) {
                ExitCode::from(EXIT_FAIL)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Failure::Config(msg)) => {
            error!("{msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(msg)) => {
            error!("{msg}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}
