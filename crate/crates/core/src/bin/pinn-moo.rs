use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use pinn_moo::harness::{self, ExperimentConfig};
use pinn_moo::Error;

#[derive(Parser)]
#[command(name = "pinn-moo", version, about = "Multi-objective training of physics-informed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of concurrent runs.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config over its noise levels.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run several configs on one problem and compare their fronts.
    Compare {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Check the optimisers against the analytic bi-quadratic front.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn load(path: &Path, common: &Common) -> pinn_moo::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&ExperimentConfig>, fallback: &str) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn workers(common: &Common, cfg: Option<&ExperimentConfig>) -> pinn_moo::Result<usize> {
    let n = common
        .workers
        .or_else(|| cfg.and_then(|c| c.workers))
        .unwrap_or_else(default_workers);
    if n == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    Ok(n)
}

fn execute(cli: Cli) -> pinn_moo::Result<bool> {
    match cli.command {
        Command::Run { config, common } => {
            let cfg = load(&config, &common)?;
            let out = out_dir(&common, Some(&cfg), "out");
            let report = harness::run_experiment(&cfg, &out, workers(&common, Some(&cfg))?)?;
            for s in &report.sigmas {
                info!(
                    "sigma={}: {} non-dominated of {} points, {} failed runs",
                    s.sigma,
                    s.front.filtered.len(),
                    s.front.raw.len(),
                    s.front.failures.len()
                );
            }
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Compare { configs, common } => {
            let cfgs = configs.iter().map(|p| load(p, &common)).collect::<pinn_moo::Result<Vec<_>>>()?;
            let out = out_dir(&common, cfgs.first(), "out");
            let report = harness::compare_methods(&cfgs, &out, workers(&common, cfgs.first())?)?;
            for e in &report.entries {
                println!("{}: hypervolume {:.6e}", e.label, e.hypervolume);
            }
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Selftest { common } => {
            let out = out_dir(&common, None, "selftest");
            let report = harness::selftest(&out, common.seed.unwrap_or(0), workers(&common, None)?)?;
            println!("ws max front error: {:.3e}", report.ws_front_error);
            println!("mgda max criticality: {:.3e}", report.mgda_max_critical);
            for e in &report.compare.entries {
                println!(
                    "{}: hypervolume / analytic = {:.4}",
                    e.label,
                    e.hypervolume / report.analytic_hypervolume
                );
            }
            let ok = report.passed();
            println!("selftest {}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
