use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info};
use subdiff_core::timefrac::BoundaryTrace;
use subdiff_harness::config::{Case, Preset, Stage};
use subdiff_harness::pipeline::{self, sha256_hex};
use subdiff_harness::{Config, Scenario};

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Inverse problems for time-fractional diffusion on the unit square")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    case: Option<Case>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem and write h and h*.
    Forward(Common),
    /// Fit the fractional order from small-time data.
    RecoverOrder {
        #[command(flatten)]
        common: Common,
        /// Sample windows [t0/100, t0]; repeatable.
        #[arg(long)]
        t0: Vec<f64>,
        /// True orders used to generate the data; repeatable.
        #[arg(long = "alpha-true")]
        alpha_true: Vec<f64>,
    },
    /// Continue the measured trace past the split and write the reduced data.
    Continue {
        #[command(flatten)]
        common: Common,
        /// Measured trace CSV used instead of a forward solve.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Recover the inclusion by the level-set method.
    RecoverInterface {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Convergence study of the solver against the modal references.
    OracleCheck {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "alpha", value_delimiter = ',', default_values_t = [0.3, 0.5, 0.8])]
        alphas: Vec<f64>,
    },
    /// Run the configured stages end to end.
    Run {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of forward, order, continuation, recovery.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(Config, String)> {
    let (mut cfg, hash) = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = Config::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
            (cfg, sha256_hex(text.as_bytes()))
        }
        None => (Config::default(), sha256_hex(b"")),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = common.preset {
        cfg.preset = p;
    }
    if let Some(c) = common.case {
        cfg.case = c;
    }
    cfg.validate()?;
    Ok((cfg, hash))
}

fn read_trace(path: &Option<PathBuf>) -> Result<Option<BoundaryTrace>> {
    path.as_ref()
        .map(|p| {
            let file = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            BoundaryTrace::read_csv(std::io::BufReader::new(file)).with_context(|| format!("parsing {}", p.display()))
        })
        .transpose()
}

fn run_stages(common: &Common, stages: &[Stage], trace: &Option<PathBuf>, name: &str, cfg: Config, hash: &str) -> Result<()> {
    let sc = Scenario::build(&cfg)?;
    let measured = read_trace(trace)?;
    let report = pipeline::run(&sc, stages, measured, &common.out, name, hash)?;
    for (k, v) in &report.summary {
        println!("{k} = {v:e}");
    }
    info!("artifacts in {}", common.out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Forward(common) => {
            let (cfg, hash) = load(&common)?;
            run_stages(&common, &[Stage::Forward], &None, "forward", cfg, &hash)
        }
        Command::RecoverOrder { common, t0, alpha_true } => {
            let (mut cfg, hash) = load(&common)?;
            if !t0.is_empty() {
                cfg.order.t0 = t0;
            }
            if !alpha_true.is_empty() {
                cfg.order.alphas = alpha_true;
            }
            cfg.validate()?;
            let sc = Scenario::build(&cfg)?;
            let report = pipeline::run(&sc, &[Stage::Order], None, &common.out, "recover-order", &hash)?;
            println!("alpha_true  t0        alpha_hat");
            for r in &report.order {
                println!("{:<10}  {:<8.0e}  {:.4}", r.alpha_true, r.t0, r.alpha_hat);
            }
            Ok(())
        }
        Command::Continue { common, trace } => {
            let (cfg, hash) = load(&common)?;
            run_stages(&common, &[Stage::Continuation], &trace, "continue", cfg, &hash)
        }
        Command::RecoverInterface { common, trace } => {
            let (cfg, hash) = load(&common)?;
            run_stages(&common, &[Stage::Recovery], &trace, "recover-interface", cfg, &hash)
        }
        Command::OracleCheck { out, alphas } => {
            let rows = pipeline::oracle_check(&alphas, &out, &sha256_hex(b""))?;
            println!("alpha  n    N     error       ratio");
            for r in rows {
                println!(
                    "{:<5}  {:<3}  {:<4}  {:.3e}  {}",
                    r.alpha,
                    r.n,
                    r.steps,
                    r.error,
                    r.ratio.map_or("-".into(), |v| format!("{v:.3}"))
                );
            }
            Ok(())
        }
        Command::Run { common, stages, trace } => {
            let (cfg, hash) = load(&common)?;
            let mut stages = stages.unwrap_or_else(|| cfg.stages.clone());
            stages.sort();
            stages.dedup();
            run_stages(&common, &stages, &trace, "run", cfg, &hash)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
