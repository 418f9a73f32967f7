//! Price panel ingestion and log-return computation.
//!
//! The CSV layout is `date,TICKER1,TICKER2,...` followed by one row per
//! trading day. Date labels are opaque strings that must sort strictly
//! increasing; no calendar arithmetic is done on them.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How to handle cells with no price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Remove every ticker that lacks a value on any date.
    #[default]
    DropTicker,
    /// Keep only the dates on which all tickers have a value.
    IntersectDates,
}

impl FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop-ticker" => Ok(MissingPolicy::DropTicker),
            "intersect-dates" => Ok(MissingPolicy::IntersectDates),
            other => Err(Error::Config(format!(
                "unknown missing-data policy {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for MissingPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MissingPolicy::DropTicker => "drop-ticker",
            MissingPolicy::IntersectDates => "intersect-dates",
        })
    }
}

/// Fully aligned matrix of closing prices, one row per ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    dates: Vec<String>,
    prices: Vec<Vec<f64>>,
}

impl PricePanel {
    pub fn new(tickers: Vec<String>, dates: Vec<String>, prices: Vec<Vec<f64>>) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::NoTickers);
        }
        if dates.is_empty() {
            return Err(Error::NoDataRows);
        }
        if prices.len() != tickers.len() {
            return Err(Error::Dimension(format!(
                "{} tickers but {} price rows",
                tickers.len(),
                prices.len()
            )));
        }
        check_dates(&dates)?;
        for (ticker, row) in tickers.iter().zip(&prices) {
            if row.len() != dates.len() {
                return Err(Error::Dimension(format!(
                    "{ticker} has {} prices for {} dates",
                    row.len(),
                    dates.len()
                )));
            }
            for (date, &value) in dates.iter().zip(row) {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::NonPositivePrice {
                        ticker: ticker.clone(),
                        date: date.clone(),
                        value,
                    });
                }
            }
        }
        Ok(PricePanel {
            tickers,
            dates,
            prices,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn prices(&self) -> &[Vec<f64>] {
        &self.prices
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_matrix_csv(writer, &self.tickers, &self.dates, &self.prices)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Log-returns derived from a [`PricePanel`]. `dates[t]` labels the day
/// on which return `t` is realised (the later of the two prices).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    tickers: Vec<String>,
    dates: Vec<String>,
    returns: Vec<Vec<f64>>,
}

impl ReturnsPanel {
    pub fn new(tickers: Vec<String>, dates: Vec<String>, returns: Vec<Vec<f64>>) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::NoTickers);
        }
        if returns.len() != tickers.len() {
            return Err(Error::Dimension(format!(
                "{} tickers but {} return rows",
                tickers.len(),
                returns.len()
            )));
        }
        check_dates(&dates)?;
        for (ticker, row) in tickers.iter().zip(&returns) {
            if row.len() != dates.len() {
                return Err(Error::Dimension(format!(
                    "{ticker} has {} returns for {} dates",
                    row.len(),
                    dates.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Malformed(format!("non-finite return for {ticker}")));
            }
        }
        Ok(ReturnsPanel {
            tickers,
            dates,
            returns,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn returns(&self) -> &[Vec<f64>] {
        &self.returns
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_matrix_csv(writer, &self.tickers, &self.dates, &self.returns)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads a returns cache written by [`ReturnsPanel::save_csv`].
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let raw = read_raw(file).map_err(|e| with_path(e, path))?;
        let mut returns = vec![Vec::with_capacity(raw.dates.len()); raw.tickers.len()];
        for (row_idx, row) in raw.cells.iter().enumerate() {
            for (col, cell) in row.iter().enumerate() {
                let value = cell.ok_or_else(|| Error::BadNumber {
                    column: raw.tickers[col].clone(),
                    row: row_idx + 2,
                    cell: String::new(),
                })?;
                returns[col].push(value);
            }
        }
        ReturnsPanel::new(raw.tickers, raw.dates, returns)
    }
}

/// Outcome of a CSV load, including the tickers removed by the policy.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub panel: PricePanel,
    pub dropped_tickers: Vec<String>,
    pub dropped_dates: usize,
}

pub fn load_csv(path: &Path, policy: MissingPolicy) -> Result<PricePanel> {
    load_csv_report(path, policy).map(|r| r.panel)
}

pub fn load_csv_report(path: &Path, policy: MissingPolicy) -> Result<LoadReport> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    read_prices(file, policy).map_err(|e| with_path(e, path))
}

/// Parses a price CSV from any reader and applies the missing-data policy.
pub fn read_prices<R: Read>(reader: R, policy: MissingPolicy) -> Result<LoadReport> {
    let raw = read_raw(reader)?;
    let n_rows = raw.dates.len();

    for (row_idx, row) in raw.cells.iter().enumerate() {
        for (col, cell) in row.iter().enumerate() {
            if let Some(value) = *cell {
                if value <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        ticker: raw.tickers[col].clone(),
                        date: raw.dates[row_idx].clone(),
                        value,
                    });
                }
            }
        }
    }

    let (keep_cols, keep_rows): (Vec<usize>, Vec<usize>) = match policy {
        MissingPolicy::DropTicker => {
            let cols = (0..raw.tickers.len())
                .filter(|&c| raw.cells.iter().all(|row| row[c].is_some()))
                .collect();
            (cols, (0..n_rows).collect())
        }
        MissingPolicy::IntersectDates => {
            let rows = (0..n_rows)
                .filter(|&r| raw.cells[r].iter().all(Option::is_some))
                .collect();
            ((0..raw.tickers.len()).collect(), rows)
        }
    };
    if keep_cols.is_empty() {
        return Err(Error::NoTickers);
    }
    if keep_rows.is_empty() {
        return Err(Error::NoDataRows);
    }

    let dropped_tickers = (0..raw.tickers.len())
        .filter(|c| !keep_cols.contains(c))
        .map(|c| raw.tickers[c].clone())
        .collect();
    let tickers = keep_cols.iter().map(|&c| raw.tickers[c].clone()).collect();
    let dates = keep_rows.iter().map(|&r| raw.dates[r].clone()).collect();
    let prices = keep_cols
        .iter()
        .map(|&c| {
            keep_rows
                .iter()
                .map(|&r| raw.cells[r][c].expect("policy retains only complete cells"))
                .collect()
        })
        .collect();

    Ok(LoadReport {
        panel: PricePanel::new(tickers, dates, prices)?,
        dropped_tickers,
        dropped_dates: n_rows - keep_rows.len(),
    })
}

/// `returns[i][t] = ln P[i][t+1] - ln P[i][t]`.
pub fn log_returns(panel: &PricePanel) -> Result<ReturnsPanel> {
    if panel.n_dates() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            actual: panel.n_dates(),
        });
    }
    let returns = panel
        .prices
        .iter()
        .map(|row| row.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
        .collect();
    ReturnsPanel::new(panel.tickers.clone(), panel.dates[1..].to_vec(), returns)
}

struct RawTable {
    tickers: Vec<String>,
    dates: Vec<String>,
    /// Row-major: `cells[row][ticker]`.
    cells: Vec<Vec<Option<f64>>>,
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "n/a"
    )
}

fn read_raw<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Err(Error::NoDataRows),
        Some(rec) => rec.map_err(|e| Error::Malformed(e.to_string()))?,
    };
    if header.len() < 2 {
        return Err(Error::Malformed(
            "header must be `date` followed by at least one ticker".into(),
        ));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();

    let mut dates = Vec::new();
    let mut cells = Vec::new();
    for (idx, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Malformed(e.to_string()))?;
        // Header is line 1.
        let line = idx + 2;
        if rec.len() > tickers.len() + 1 {
            return Err(Error::Malformed(format!(
                "row {line} has {} fields, header has {}",
                rec.len(),
                tickers.len() + 1
            )));
        }
        if rec.iter().all(str::is_empty) {
            continue;
        }
        dates.push(rec.get(0).unwrap_or_default().to_owned());
        let row = (0..tickers.len())
            .map(|c| match rec.get(c + 1) {
                None => Ok(None),
                Some(cell) if is_missing(cell) => Ok(None),
                Some(cell) => cell.parse::<f64>().map(Some).map_err(|_| Error::BadNumber {
                    column: tickers[c].clone(),
                    row: line,
                    cell: cell.to_owned(),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    if dates.is_empty() {
        return Err(Error::NoDataRows);
    }
    check_dates(&dates)?;
    Ok(RawTable {
        tickers,
        dates,
        cells,
    })
}

fn check_dates(dates: &[String]) -> Result<()> {
    if let Some(pair) = dates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::Malformed(format!(
            "dates must be strictly increasing: {:?} then {:?}",
            pair[0], pair[1]
        )));
    }
    Ok(())
}

fn write_matrix_csv<W: Write>(
    writer: W,
    tickers: &[String],
    dates: &[String],
    values: &[Vec<f64>],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Malformed(format!("csv write failed: {e}"));
    let mut header = Vec::with_capacity(tickers.len() + 1);
    header.push("date".to_owned());
    header.extend(tickers.iter().cloned());
    wtr.write_record(&header).map_err(to_err)?;
    for (t, date) in dates.iter().enumerate() {
        let mut row = Vec::with_capacity(tickers.len() + 1);
        row.push(date.clone());
        row.extend(values.iter().map(|r| r[t].to_string()));
        wtr.write_record(&row).map_err(to_err)?;
    }
    wtr.flush()
        .map_err(|e| Error::Malformed(format!("csv write failed: {e}")))?;
    Ok(())
}

fn with_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Malformed(msg) => Error::Malformed(format!("{}: {msg}", path.display())),
        other => other,
    }
}
