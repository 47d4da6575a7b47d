use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slreset::config::{parse_config, Overrides, SimConfig};
use slreset::output::{check_dir, reference_to_dir, run_to_dir, sweep_to_dir};
use slreset::Error;

/// Stochastic-Lagrangian 2D Navier-Stokes with ensemble resetting.
///
/// Configuration comes from an optional TOML file (sections [grid] n,
/// [ensemble] copies/replicas/epsilon/check_every, [physics] nu, [time]
/// dt/t_final, [output] record_every/snapshot_every/checkpoint_every,
/// [solver] newton_tol/newton_max_iter, [initial] kind/...; top-level seed)
/// and is overridden by flags. Defaults: n = 64, copies = 16, replicas = 1,
/// nu = 0.05, epsilon = 0.5, dt = 0.01, t_final = 1, check_every = 1,
/// record_every = 1, seed = 0, Taylor-Green initial data.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the particle system.
    Run {
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint directory (only --t-final is honored).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the deterministic pseudo-spectral solver.
    Reference {
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of independent configurations, one subdirectory each.
    Sweep {
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        out: PathBuf,
        /// Parameter values as key=v1,v2,... (repeatable; cartesian product).
        #[arg(long, required = true)]
        vary: Vec<String>,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check invariants over a run directory and write summary.json.
    Check { dir: PathBuf },
}

#[derive(Args)]
struct Params {
    /// TOML config, or a run manifest.json to reproduce.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid points per side (power of two).
    #[arg(long)]
    n: Option<usize>,
    /// Copies N per ensemble.
    #[arg(long)]
    copies: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    /// Reset tolerance, in (0,1).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    /// Independent replicas M.
    #[arg(long)]
    replicas: Option<usize>,
    /// Steps between reset checks.
    #[arg(long)]
    check_every: Option<u64>,
}

impl Params {
    fn load(&self) -> slreset::Result<SimConfig> {
        let o = Overrides {
            seed: self.seed,
            n: self.n,
            copies: self.copies,
            nu: self.nu,
            epsilon: self.epsilon,
            dt: self.dt,
            t_final: self.t_final,
            replicas: self.replicas,
            check_every: self.check_every,
        };
        parse_config(self.config.as_deref(), &o)
    }
}

fn dispatch(cli: Cli) -> slreset::Result<bool> {
    match cli.command {
        Command::Run {
            params,
            out,
            resume,
        } => {
            let cfg = match &resume {
                Some(ck) => {
                    let mut cfg = slreset::checkpoint::load_checkpoint(ck)?.config;
                    if let Some(t) = params.t_final {
                        cfg.t_final = t;
                    }
                    cfg
                }
                None => params.load()?,
            };
            let m = run_to_dir(&cfg, &out, resume.as_deref())?;
            println!("{}", serde_json::to_string(&m)?);
            Ok(true)
        }
        Command::Reference { params, out } => {
            let m = reference_to_dir(&params.load()?, &out)?;
            println!("{}", serde_json::to_string(&m)?);
            Ok(true)
        }
        Command::Sweep {
            params,
            out,
            vary,
            jobs,
        } => {
            let entries = sweep_to_dir(&params.load()?, &vary, &out, jobs)?;
            println!("{}", serde_json::to_string(&entries)?);
            Ok(entries.iter().all(|e| e.error.is_none()))
        }
        Command::Check { dir } => {
            let s = check_dir(&dir)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(s.all_pass)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            let err: &Error = &e;
            let msg = serde_json::json!({ "error": err.kind(), "message": err.to_string() });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
