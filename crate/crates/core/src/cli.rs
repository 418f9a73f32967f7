//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::ingest::{load_csv_report, log_returns};
use crate::pipeline::{self, RETURNS_FILE};
use crate::synth::crash_scenario;

#[derive(Debug, Parser)]
#[command(
    name = "finsync",
    version,
    about = "Correlation-network synchronization pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a price CSV, align it and cache log-returns in the output directory.
    Ingest(Common),
    /// Write a synthetic calm/crash/calm price panel.
    Synth(SynthArgs),
    /// Build rolling networks, compute metrics and simulate synchronization.
    Analyze(Common),
    /// Fit the structure-to-synchronization model on disjoint windows.
    Regress(Common),
    /// ingest, analyze and regress in sequence.
    All(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// drop-ticker or intersect-dates
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    step: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    t_max: Option<String>,
    #[arg(long)]
    tail_fraction: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// normal:MEAN:STD, uniform:LOW:HIGH or delta:VALUE
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    ensemble: Option<String>,
    /// Histogram bins for the strength entropy, or `auto`.
    #[arg(long)]
    bins: Option<String>,
    /// bisquare or huber
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    /// Write one `t,r` file per window.
    #[arg(long)]
    trajectories: bool,
    /// csv or binary
    #[arg(long)]
    dump_networks: Option<String>,
    #[arg(long)]
    workers: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    n_stocks: usize,
    #[arg(long, default_value_t = 200)]
    calm_days: usize,
    #[arg(long, default_value_t = 200)]
    crash_days: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path).map_err(|e| match e {
                Error::Io { .. } => Error::Config(e.to_string()),
                other => other,
            })?;
        }
        let flags = [
            ("input", &self.input),
            ("out_dir", &self.out_dir),
            ("policy", &self.policy),
            ("width", &self.width),
            ("step", &self.step),
            ("lambda", &self.lambda),
            ("alpha", &self.alpha),
            ("dt", &self.dt),
            ("t_max", &self.t_max),
            ("tail_fraction", &self.tail_fraction),
            ("seed", &self.seed),
            ("omega", &self.omega),
            ("ensemble", &self.ensemble),
            ("bins", &self.bins),
            ("estimator", &self.estimator),
            ("tolerance", &self.tolerance),
            ("max_iter", &self.max_iter),
            ("dump_networks", &self.dump_networks),
            ("workers", &self.workers),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.trajectories {
            cfg.trajectories = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn in_pool<T: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match cfg.workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(f),
    }
}

fn ingest(cfg: &PipelineConfig) -> Result<()> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("--input is required".into()))?;
    let report = load_csv_report(input, cfg.policy)?;
    let returns = log_returns(&report.panel)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| Error::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let path = cfg.out_dir.join(RETURNS_FILE);
    returns.save_csv(&path)?;
    pipeline::write_sidecar(&path, "ingest", cfg)?;
    println!(
        "N={} T={} dropped={}",
        report.panel.n_tickers(),
        report.panel.n_dates(),
        report.dropped_tickers.len()
    );
    Ok(())
}

fn analyze(cfg: &PipelineConfig) -> Result<()> {
    let summary = in_pool(cfg, || pipeline::run_analyze(cfg))?;
    println!("windows={} bins={}", summary.windows, summary.bins);
    Ok(())
}

fn regress(cfg: &PipelineConfig) -> Result<()> {
    let report = pipeline::run_regress(cfg)?;
    let fmt = |b: &[f64; 4]| {
        b.iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!(
        "samples={} ols=[{}] {}=[{}] converged={} iterations={}",
        report.windows.len(),
        fmt(&report.ols.beta),
        report.estimator,
        fmt(&report.robust.beta),
        report.robust.converged,
        report.robust.iterations
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(c) => ingest(&c.resolve()?),
        Command::Analyze(c) => analyze(&c.resolve()?),
        Command::Regress(c) => regress(&c.resolve()?),
        Command::All(c) => {
            let cfg = c.resolve()?;
            ingest(&cfg)?;
            analyze(&cfg)?;
            regress(&cfg)
        }
        Command::Synth(s) => {
            let panel = crash_scenario(s.n_stocks, s.calm_days, s.crash_days, s.seed)?;
            if let Some(dir) = s.output.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                    path: dir.to_owned(),
                    source,
                })?;
            }
            panel.save_csv(&s.output)?;
            println!(
                "wrote {} stocks x {} dates to {}",
                panel.n_tickers(),
                panel.n_dates(),
                s.output.display()
            );
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind().exit_code()
        }
    }
}
