use std::collections::BTreeSet;
use std::ops::Range;

use chrono::NaiveDate;

use super::{Bar, DataError, OhlcvSeries, Result};

/// Train and test date ranges, both inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: (NaiveDate, NaiveDate),
    pub test: (NaiveDate, NaiveDate),
}

const TABLE: [(&str, [&str; 4]); 5] = [
    ("test1", ["2002-01-02", "2009-04-16", "2010-03-15", "2010-07-21"]),
    ("test2", ["2002-01-02", "2012-12-06", "2013-11-04", "2014-03-14"]),
    ("test3", ["2002-01-02", "2016-08-01", "2017-06-28", "2017-11-02"]),
    ("test4", ["2002-01-02", "2018-10-19", "2019-06-09", "2019-10-16"]),
    ("test5", ["2002-01-02", "2019-06-23", "2019-11-12", "2020-03-24"]),
];

impl DatasetSplit {
    pub fn new(train: (NaiveDate, NaiveDate), test: (NaiveDate, NaiveDate)) -> Result<Self> {
        for (name, (a, b)) in [("train", train), ("test", test)] {
            if a > b {
                return Err(DataError::InvalidRange(format!(
                    "{name} range starts {a} after it ends {b}"
                )));
            }
        }
        if train.1 >= test.0 {
            return Err(DataError::Leakage {
                train_end: train.1,
                test_start: test.0,
            });
        }
        Ok(Self { train, test })
    }

    /// One of the five published back-test windows, `test1` to `test5`.
    pub fn named(id: &str) -> Result<Self> {
        let key = id.to_ascii_lowercase().replace([' ', '_', '-'], "");
        let (_, d) = TABLE
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| DataError::UnknownSplit(id.to_string()))?;
        let p = |s: &str| NaiveDate::parse_from_str(s, super::DATE_FORMAT).expect("table date");
        Self::new((p(d[0]), p(d[1])), (p(d[2]), p(d[3])))
    }

    pub fn named_ids() -> impl Iterator<Item = &'static str> {
        TABLE.iter().map(|(k, _)| *k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitSpec {
    Named(String),
    Explicit {
        train: (NaiveDate, NaiveDate),
        test: (NaiveDate, NaiveDate),
    },
}

impl SplitSpec {
    pub fn resolve(&self) -> Result<DatasetSplit> {
        match self {
            SplitSpec::Named(id) => DatasetSplit::named(id),
            SplitSpec::Explicit { train, test } => DatasetSplit::new(*train, *test),
        }
    }
}

/// Several assets sharing exactly the same trading dates.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    dates: Vec<NaiveDate>,
    series: Vec<OhlcvSeries>,
}

impl Panel {
    /// Restricts every series to `[start, end]` and checks that all of them
    /// trade on every date any of them trades on.
    pub fn align(series: &[OhlcvSeries], start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if series.is_empty() {
            return Err(DataError::EmptyAssetSet);
        }
        let in_range = |b: &&Bar| b.date >= start && b.date <= end;
        let dates: BTreeSet<NaiveDate> = series
            .iter()
            .flat_map(|s| s.bars().iter().filter(in_range).map(|b| b.date))
            .collect();
        if dates.is_empty() {
            return Err(DataError::EmptyRange { start, end });
        }
        let dates: Vec<NaiveDate> = dates.into_iter().collect();
        let mut out = Vec::with_capacity(series.len());
        for s in series {
            let bars: Vec<Bar> = s.bars().iter().filter(in_range).copied().collect();
            if let Some(date) = first_missing(&dates, &bars) {
                return Err(DataError::CoverageGap {
                    asset: s.asset().to_string(),
                    date,
                });
            }
            out.push(OhlcvSeries::new(s.asset(), bars)?);
        }
        Ok(Self { dates, series: out })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn num_assets(&self) -> usize {
        self.series.len()
    }

    pub fn assets(&self) -> Vec<&str> {
        self.series.iter().map(|s| s.asset()).collect()
    }

    pub fn series(&self) -> &[OhlcvSeries] {
        &self.series
    }

    pub fn bar(&self, asset: usize, t: usize) -> &Bar {
        &self.series[asset].bars()[t]
    }

    pub fn close(&self, asset: usize, t: usize) -> f64 {
        self.bar(asset, t).close
    }

    /// Index range of the dates falling inside `[start, end]`.
    pub fn index_range(&self, start: NaiveDate, end: NaiveDate) -> Range<usize> {
        let lo = self.dates.partition_point(|d| *d < start);
        let hi = self.dates.partition_point(|d| *d <= end);
        lo..hi.max(lo)
    }
}

fn first_missing(dates: &[NaiveDate], bars: &[Bar]) -> Option<NaiveDate> {
    let mut j = 0;
    for &d in dates {
        if j < bars.len() && bars[j].date == d {
            j += 1;
        } else {
            return Some(d);
        }
    }
    None
}

/// One aligned panel spanning train start to test end, with the index ranges
/// of each part. Rows between the two ranges stay in the panel so the test
/// period has history for indicator warm-up and look-back windows.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPanels {
    pub split: DatasetSplit,
    pub panel: Panel,
    pub train: Range<usize>,
    pub test: Range<usize>,
}

pub fn make_split(series: &[OhlcvSeries], spec: &SplitSpec) -> Result<SplitPanels> {
    if series.is_empty() {
        return Err(DataError::EmptyAssetSet);
    }
    let split = spec.resolve()?;
    let panel = Panel::align(series, split.train.0, split.test.1)?;
    let train = panel.index_range(split.train.0, split.train.1);
    let test = panel.index_range(split.test.0, split.test.1);
    for (r, (start, end)) in [(&train, split.train), (&test, split.test)] {
        if r.is_empty() {
            return Err(DataError::EmptyRange { start, end });
        }
    }
    Ok(SplitPanels {
        split,
        panel,
        train,
        test,
    })
}
