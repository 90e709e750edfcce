//! OHLCV ingestion, technical indicators, aligned panels and dataset splits.
//!
//! CSV files carry the header `date,open,high,low,close,volume`, one file per
//! asset, dates as `YYYY-MM-DD`. The asset id is the file stem.

pub mod indicators;
mod split;
pub mod synth;

pub use indicators::{compute_indicators, DmiParams, IndicatorKind, IndicatorParams, IndicatorSet};
pub use split::{make_split, DatasetSplit, Panel, SplitPanels, SplitSpec};

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{path}:{line}: {msg}")]
    Malformed { path: PathBuf, line: u64, msg: String },
    #[error("{asset} {date}: {msg}")]
    InvalidBar {
        asset: String,
        date: NaiveDate,
        msg: String,
    },
    #[error("{asset}: date {date} does not follow {previous} (dates must be strictly increasing)")]
    NonMonotone {
        asset: String,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("{asset}: {indicator} needs at least {required} rows, series has {actual}")]
    TooShort {
        asset: String,
        indicator: &'static str,
        required: usize,
        actual: usize,
    },
    #[error("asset {asset} has no row for {date}")]
    CoverageGap { asset: String, date: NaiveDate },
    #[error("no data between {start} and {end}")]
    EmptyRange { start: NaiveDate, end: NaiveDate },
    #[error("training range ends {train_end}, which is not before test start {test_start}")]
    Leakage {
        train_end: NaiveDate,
        test_start: NaiveDate,
    },
    #[error("empty asset set")]
    EmptyAssetSet,
    #[error("unknown split id `{0}` (expected test1..test5)")]
    UnknownSplit(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid generator setting: {0}")]
    InvalidSynth(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

pub const CSV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];
pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    fn check(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(format!("prices must be positive, got {prices:?}"));
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err(format!("volume must be non-negative, got {}", self.volume));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} below max(open, close) = {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} above min(open, close) = {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        Ok(())
    }
}

/// Daily bars for one asset with strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcvSeries {
    asset: String,
    bars: Vec<Bar>,
}

impl OhlcvSeries {
    pub fn new(asset: impl Into<String>, bars: Vec<Bar>) -> Result<Self> {
        let asset = asset.into();
        for (i, bar) in bars.iter().enumerate() {
            bar.check().map_err(|msg| DataError::InvalidBar {
                asset: asset.clone(),
                date: bar.date,
                msg,
            })?;
            if i > 0 && bar.date <= bars[i - 1].date {
                return Err(DataError::NonMonotone {
                    asset: asset.clone(),
                    date: bar.date,
                    previous: bars[i - 1].date,
                });
            }
        }
        Ok(Self { asset, bars })
    }

    pub fn asset(&self) -> &str {
        &self.asset
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.bars.first().map(|b| b.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.bars.last().map(|b| b.date)
    }

    /// Prefix ending at (and including) row `end`.
    pub fn truncated(&self, end: usize) -> Self {
        Self {
            asset: self.asset.clone(),
            bars: self.bars[..=end].to_vec(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Reads one asset file. The asset id is the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<OhlcvSeries> {
    let path = path.as_ref();
    let asset = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header = reader.headers().map_err(|e| io_err(path, e))?.clone();
    let mut cols = [0usize; 6];
    for (slot, name) in cols.iter_mut().zip(CSV_HEADER) {
        *slot = header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(DataError::MissingColumn {
                path: path.to_path_buf(),
                column: name,
            })?;
    }

    let mut bars = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            DataError::Malformed {
                path: path.to_path_buf(),
                line,
                msg: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |msg: String| DataError::Malformed {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let field = |i: usize| record.get(cols[i]).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(0), DATE_FORMAT)
            .map_err(|e| malformed(format!("bad date `{}`: {e}", field(0))))?;
        let mut nums = [0.0; 5];
        for (k, v) in nums.iter_mut().enumerate() {
            let raw = field(k + 1);
            *v = raw
                .parse::<f64>()
                .map_err(|_| malformed(format!("bad {} value `{raw}`", CSV_HEADER[k + 1])))?;
        }
        bars.push(Bar {
            date,
            open: nums[0],
            high: nums[1],
            low: nums[2],
            close: nums[3],
            volume: nums[4],
        });
    }
    OhlcvSeries::new(asset, bars)
}

/// Writes a series in the ingestion format.
pub fn write_csv(series: &OhlcvSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("date,open,high,low,close,volume\n");
    for b in series.bars() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.date.format(DATE_FORMAT),
            b.open,
            b.high,
            b.low,
            b.close,
            b.volume
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Loads every `*.csv` in `dir`, sorted by file name.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<OhlcvSeries>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DataError::EmptyAssetSet);
    }
    paths.iter().map(load_csv).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const HEADER: &str = "date,open,high,low,close,volume\n";

    #[test]
    fn three_valid_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "AAA.csv",
            &format!(
                "{HEADER}2020-01-02,10,11,9,10.5,1000\n2020-01-03,10.5,11,10,10.8,900\n2020-01-06,10.8,11.2,10.1,11,1200\n"
            ),
        );
        let s = load_csv(&p).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.asset(), "AAA");
        assert_eq!(s.closes(), vec![10.5, 10.8, 11.0]);
    }

    #[test]
    fn high_below_low_names_date() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "B.csv",
            &format!("{HEADER}2020-01-02,10,11,9,10.5,1\n2020-01-03,10,9,11,10,1\n"),
        );
        let err = load_csv(&p).unwrap_err();
        assert!(matches!(err, DataError::InvalidBar { .. }));
        assert!(err.to_string().contains("2020-01-03"), "{err}");
    }

    #[test]
    fn duplicate_and_backwards_dates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write(
            dir.path(),
            "D.csv",
            &format!("{HEADER}2020-01-02,10,11,9,10,1\n2020-01-02,10,11,9,10,1\n"),
        );
        assert!(matches!(load_csv(&dup), Err(DataError::NonMonotone { .. })));
        let back = write(
            dir.path(),
            "E.csv",
            &format!("{HEADER}2020-01-03,10,11,9,10,1\n2020-01-02,10,11,9,10,1\n"),
        );
        assert!(matches!(load_csv(&back), Err(DataError::NonMonotone { .. })));
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "M.csv",
            &format!("{HEADER}2020-01-02,10,11,9,10,1\n2020-01-03,ten,11,9,10,1\n"),
        );
        match load_csv(&p).unwrap_err() {
            DataError::Malformed { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "C.csv", "date,open,high,low,close\n2020-01-02,1,1,1,1\n");
        assert!(matches!(
            load_csv(&p),
            Err(DataError::MissingColumn { column: "volume", .. })
        ));
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_dir(dir.path()).unwrap_err(), DataError::EmptyAssetSet);
    }
}
