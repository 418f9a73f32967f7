//! End-to-end stages: windows -> networks -> metrics + synchronization ->
//! disjoint-window regression, plus the CSV/JSON artifacts each stage writes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DumpFormat, PipelineConfig};
use crate::corrnet::{build_network_shared, window_sequence, DistanceNetwork, Window, WindowSpec};
use crate::error::{Error, Result};
use crate::ingest::ReturnsPanel;
use crate::kuramoto::{simulate, SimulationConfig, SyncRecord, SyncResult};
use crate::metrics::{compute_metrics, default_bins, MetricsRecord};
use crate::regress::{
    irls_robust_fit, normal_prob_plot, ols_fit, select_disjoint, RegressionSample, RobustFit,
};

pub const RETURNS_FILE: &str = "returns.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SYNC_FILE: &str = "sync.csv";
pub const FIT_FILE: &str = "fit_report.json";
pub const NORMAL_PLOT_FILE: &str = "normal_plot.csv";
pub const TRAJECTORY_DIR: &str = "trajectories";
pub const METRICS_HEADER: &str = "window,start_date,end_date,H,C,ell,bins";
pub const SYNC_HEADER: &str = "window,start_date,end_date,terminal_r,seed,t_max,dt";

/// Windows handed to the worker pool at once; results are written in order
/// before the next chunk starts.
const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct WindowOutcome {
    pub window: Window,
    pub metrics: MetricsRecord,
    pub sync: SyncResult,
    pub network: Option<DistanceNetwork>,
}

pub fn analyze_window(
    returns: &ReturnsPanel,
    tickers: Arc<Vec<String>>,
    window: Window,
    bins: usize,
    sim: &SimulationConfig,
    keep_network: bool,
) -> Result<WindowOutcome> {
    let net = build_network_shared(returns, tickers, window)?;
    let metrics = compute_metrics(&net, bins)?;
    let sync = simulate(&net, sim)?;
    Ok(WindowOutcome {
        window,
        metrics,
        sync,
        network: keep_network.then_some(net),
    })
}

/// Runs every window, in parallel, feeding outcomes to `sink` in window order.
pub fn analyze_streaming(
    returns: &ReturnsPanel,
    spec: WindowSpec,
    bins: Option<usize>,
    sim: &SimulationConfig,
    keep_networks: bool,
    mut sink: impl FnMut(WindowOutcome) -> Result<()>,
) -> Result<()> {
    sim.validate()?;
    let windows = window_sequence(returns.len(), spec)?;
    let bins = bins.unwrap_or_else(|| default_bins(returns.n_tickers()));
    let tickers = Arc::new(returns.tickers().to_vec());
    for chunk in windows.chunks(CHUNK) {
        let outcomes: Vec<Result<WindowOutcome>> = chunk
            .par_iter()
            .map(|&w| analyze_window(returns, tickers.clone(), w, bins, sim, keep_networks))
            .collect();
        for outcome in outcomes {
            sink(outcome?)?;
        }
    }
    Ok(())
}

pub fn analyze_collect(
    returns: &ReturnsPanel,
    spec: WindowSpec,
    bins: Option<usize>,
    sim: &SimulationConfig,
) -> Result<Vec<WindowOutcome>> {
    let mut out = Vec::new();
    analyze_streaming(returns, spec, bins, sim, false, |o| {
        out.push(o);
        Ok(())
    })?;
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    stage: &'a str,
    file: &'a str,
    config: &'a PipelineConfig,
}

/// Writes `<file>.config.json` next to an artifact.
pub fn write_sidecar(path: &Path, stage: &str, config: &PipelineConfig) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let sidecar = sidecar_path(path);
    let body = serde_json::to_string_pretty(&Provenance {
        stage,
        file: &file_name,
        config,
    })
    .expect("provenance serializes");
    fs::write(&sidecar, body + "\n").map_err(io_err(&sidecar))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_owned();
    name.push(".config.json");
    path.with_file_name(name)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Summary of an `analyze` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalyzeSummary {
    pub windows: usize,
    pub bins: usize,
}

/// Reads the cached returns under `out_dir` and writes the metrics and sync
/// CSVs, plus optional trajectories and network dumps.
pub fn run_analyze(config: &PipelineConfig) -> Result<AnalyzeSummary> {
    config.validate()?;
    let returns_path = config.out_dir.join(RETURNS_FILE);
    let returns = ReturnsPanel::load_csv(&returns_path)?;
    analyze_to_dir(&returns, config)
}

pub fn analyze_to_dir(returns: &ReturnsPanel, config: &PipelineConfig) -> Result<AnalyzeSummary> {
    config.validate()?;
    // fail on short input before creating any output
    window_sequence(returns.len(), config.window)?;
    let out = &config.out_dir;
    ensure_dir(out)?;
    let metrics_path = out.join(METRICS_FILE);
    let sync_path = out.join(SYNC_FILE);
    let mut metrics_out = create(&metrics_path)?;
    let mut sync_out = create(&sync_path)?;
    writeln!(metrics_out, "{METRICS_HEADER}").map_err(io_err(&metrics_path))?;
    writeln!(sync_out, "{SYNC_HEADER}").map_err(io_err(&sync_path))?;

    let traj_dir = out.join(TRAJECTORY_DIR);
    if config.trajectories {
        ensure_dir(&traj_dir)?;
    }
    let dump_path = match config.dump_networks {
        Some(DumpFormat::Csv) => Some(out.join("networks.csv")),
        Some(DumpFormat::Binary) => Some(out.join("networks.bin")),
        None => None,
    };
    let mut dump = dump_path.as_deref().map(create).transpose()?;

    let dates = returns.dates();
    let bins = config
        .bins
        .unwrap_or_else(|| default_bins(returns.n_tickers()));
    let sim = &config.simulation;
    let mut count = 0;

    analyze_streaming(
        returns,
        config.window,
        Some(bins),
        sim,
        dump.is_some(),
        |o| {
            let start_date = &dates[o.window.start];
            let end_date = &dates[o.window.end - 1];
            let m = &o.metrics;
            writeln!(
                metrics_out,
                "{},{},{},{},{},{},{}",
                m.window, start_date, end_date, m.entropy, m.clustering, m.path_length, m.bins
            )
            .map_err(io_err(&metrics_path))?;
            writeln!(
                sync_out,
                "{},{},{},{},{},{},{}",
                o.sync.window, start_date, end_date, o.sync.terminal_r, sim.seed, sim.t_max, sim.dt
            )
            .map_err(io_err(&sync_path))?;
            if config.trajectories {
                let path = traj_dir.join(format!("window_{:06}.csv", o.window.index));
                let mut f = create(&path)?;
                let mut body = String::from("t,r\n");
                for p in &o.sync.trajectory {
                    body.push_str(&format!("{},{}\n", p.t, p.r));
                }
                f.write_all(body.as_bytes()).map_err(io_err(&path))?;
            }
            if let (Some(w), Some(net), Some(path)) = (dump.as_mut(), &o.network, &dump_path) {
                match config.dump_networks {
                    Some(DumpFormat::Csv) => net.write_csv_record(w, start_date, end_date),
                    _ => net.write_binary_record(w, start_date, end_date),
                }
                .map_err(io_err(path))?;
            }
            count += 1;
            Ok(())
        },
    )?;

    metrics_out.flush().map_err(io_err(&metrics_path))?;
    sync_out.flush().map_err(io_err(&sync_path))?;
    if let (Some(mut w), Some(path)) = (dump, dump_path.as_ref()) {
        w.flush().map_err(io_err(path))?;
        write_sidecar(path, "analyze", config)?;
    }
    write_sidecar(&metrics_path, "analyze", config)?;
    write_sidecar(&sync_path, "analyze", config)?;
    Ok(AnalyzeSummary {
        windows: count,
        bins,
    })
}

fn read_table(path: &Path, header: &str) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_owned(),
            source,
        })?;
    let found = rdr
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_owned(),
            source,
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(Error::Malformed(format!(
            "{}: expected header {header:?}, found {found:?}",
            path.display()
        )));
    }
    rdr.records()
        .map(|r| {
            r.map_err(|source| Error::Csv {
                path: path.to_owned(),
                source,
            })
        })
        .collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let cell = rec.get(idx).unwrap_or_default();
    cell.parse().map_err(|_| Error::BadNumber {
        column: name.to_owned(),
        row: rec.position().map_or(0, |p| p.line() as usize),
        cell: cell.to_owned(),
    })
}

/// Parses a metrics CSV. Window boundaries are reconstructed from `spec`.
pub fn read_metrics_csv(path: &Path, spec: WindowSpec) -> Result<Vec<MetricsRecord>> {
    read_table(path, METRICS_HEADER)?
        .iter()
        .map(|rec| {
            let window: usize = field(rec, 0, "window")?;
            Ok(MetricsRecord {
                window,
                start: window * spec.step,
                end: window * spec.step + spec.width,
                entropy: field(rec, 3, "H")?,
                clustering: field(rec, 4, "C")?,
                path_length: field(rec, 5, "ell")?,
                bins: field(rec, 6, "bins")?,
            })
        })
        .collect()
}

pub fn read_sync_csv(path: &Path, spec: WindowSpec) -> Result<Vec<SyncRecord>> {
    read_table(path, SYNC_HEADER)?
        .iter()
        .map(|rec| {
            let window: usize = field(rec, 0, "window")?;
            Ok(SyncRecord {
                window,
                start: window * spec.step,
                end: window * spec.step + spec.width,
                terminal_r: field(rec, 3, "terminal_r")?,
                seed: field(rec, 4, "seed")?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub estimator: String,
    pub windows: Vec<usize>,
    pub ols: RobustFit,
    pub robust: RobustFit,
    pub config: PipelineConfig,
}

/// Window spec recorded by `analyze` in the metrics sidecar, if any.
fn recorded_window_spec(metrics_path: &Path) -> Result<Option<WindowSpec>> {
    let sidecar = sidecar_path(metrics_path);
    let Ok(text) = fs::read_to_string(&sidecar) else {
        return Ok(None);
    };
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Malformed(format!("{}: {e}", sidecar.display())))?;
    let spec = serde_json::from_value(value["config"]["window"].clone())
        .map_err(|e| Error::Malformed(format!("{}: {e}", sidecar.display())))?;
    Ok(Some(spec))
}

pub fn fit_sample(sample: &RegressionSample, config: &PipelineConfig) -> Result<FitReport> {
    let ols = ols_fit(sample)?;
    let robust = irls_robust_fit(sample, config.estimator, config.tolerance, config.max_iter)?;
    Ok(FitReport {
        estimator: robust.estimator.clone(),
        windows: sample.windows(),
        ols,
        robust,
        config: config.clone(),
    })
}

/// Disjoint-window regression over the `analyze` outputs in `out_dir`.
pub fn run_regress(config: &PipelineConfig) -> Result<FitReport> {
    config.validate()?;
    let out = &config.out_dir;
    let metrics_path = out.join(METRICS_FILE);
    let sync_path = out.join(SYNC_FILE);
    if let Some(recorded) = recorded_window_spec(&metrics_path)? {
        if recorded != config.window {
            return Err(Error::Config(format!(
                "metrics were produced with width {} step {}, but regress was asked for width {} step {}",
                recorded.width, recorded.step, config.window.width, config.window.step
            )));
        }
    }
    let metrics = read_metrics_csv(&metrics_path, config.window)?;
    let sync = read_sync_csv(&sync_path, config.window)?;
    let sample = select_disjoint(&metrics, &sync, config.window.width)?;
    let report = fit_sample(&sample, config)?;

    let fit_path = out.join(FIT_FILE);
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&fit_path, body + "\n").map_err(io_err(&fit_path))?;

    let plot_path = out.join(NORMAL_PLOT_FILE);
    let points = normal_prob_plot(&sample.response())?;
    let mut plot = String::from("quantile,value\n");
    for (q, v) in points {
        plot.push_str(&format!("{q},{v}\n"));
    }
    fs::write(&plot_path, plot).map_err(io_err(&plot_path))?;
    write_sidecar(&plot_path, "regress", config)?;
    Ok(report)
}
