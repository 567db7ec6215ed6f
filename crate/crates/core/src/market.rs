//! Daily market data: ingestion, validation, summary statistics and the
//! in-sample / out-of-sample split.
//!
//! Returns are log-returns scaled by 100. The `rv` column is taken to be
//! realized volatility already expressed in the same percentage units
//! (square root of a realized variance measure); no transformation is applied.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Aligned daily series of close-to-close return, overnight return and
/// realized volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSeries {
    dates: Vec<NaiveDate>,
    r: Vec<f64>,
    oc: Vec<f64>,
    rv: Vec<f64>,
}

impl MarketSeries {
    pub fn new(dates: Vec<NaiveDate>, r: Vec<f64>, oc: Vec<f64>, rv: Vec<f64>) -> Result<Self> {
        let n = dates.len();
        if r.len() != n || oc.len() != n || rv.len() != n {
            return Err(Error::InvalidArgument(format!(
                "column lengths differ: dates {}, r {}, oc {}, rv {}",
                n,
                r.len(),
                oc.len(),
                rv.len()
            )));
        }
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "a market series needs at least 2 rows, got {n}"
            )));
        }
        for i in 1..n {
            if dates[i] <= dates[i - 1] {
                return Err(Error::NonMonotoneDates { row: i });
            }
        }
        for i in 0..n {
            if !(r[i].is_finite() && oc[i].is_finite() && rv[i].is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
            if rv[i] < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "negative realized volatility {} at index {i}",
                    rv[i]
                )));
            }
        }
        Ok(Self { dates, r, oc, rv })
    }

    /// Builds a series with consecutive calendar dates starting at
    /// 2000-01-03. Used for synthetic data.
    pub fn with_synthetic_dates(r: Vec<f64>, oc: Vec<f64>, rv: Vec<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        let dates = start.iter_days().take(r.len()).collect();
        Self::new(dates, r, oc, rv)
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn oc(&self) -> &[f64] {
        &self.oc
    }

    pub fn rv(&self) -> &[f64] {
        &self.rv
    }

    pub fn field(&self, field: Field) -> &[f64] {
        match field {
            Field::R => &self.r,
            Field::Oc => &self.oc,
            Field::Rv => &self.rv,
        }
    }

    /// Rows `[0, end)` as a new series.
    pub fn truncate(&self, end: usize) -> Result<Self> {
        let end = end.min(self.len());
        Self::new(
            self.dates[..end].to_vec(),
            self.r[..end].to_vec(),
            self.oc[..end].to_vec(),
            self.rv[..end].to_vec(),
        )
    }

    /// Writes the series using the `date,r,oc,rv` layout. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "r", "oc", "rv"])?;
        for i in 0..self.len() {
            w.write_record(&[
                self.dates[i].format(DATE_FORMAT).to_string(),
                self.r[i].to_string(),
                self.oc[i].to_string(),
                self.rv[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    R,
    Oc,
    Rv,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::R, Field::Oc, Field::Rv];

    pub fn label(self) -> &'static str {
        match self {
            Field::R => "r",
            Field::Oc => "oc",
            Field::Rv => "rv",
        }
    }
}

/// Column names used to locate fields in an input CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub date: String,
    pub r: String,
    pub oc: String,
    pub rv: String,
    pub open: String,
    pub close: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            date: "date".into(),
            r: "r".into(),
            oc: "oc".into(),
            rv: "rv".into(),
            open: "open".into(),
            close: "close".into(),
        }
    }
}

/// Which layout was detected in the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Schema {
    /// `date,r,oc,rv`: returns supplied directly.
    Returns,
    /// `date,open,close,rv`: returns computed from prices.
    Prices,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub series: MarketSeries,
    pub schema: Schema,
    /// Rows dropped because at least one field was missing.
    pub dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "n/a"
    )
}

fn parse_num(cell: &str, line: usize, name: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row: line,
        message: format!("cannot parse `{}` in column `{name}`", cell.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row: line,
            message: format!("non-finite value in column `{name}`"),
        });
    }
    Ok(v)
}

pub fn ingest_csv(path: &Path, columns: &ColumnMap) -> Result<Ingested> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    f.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    ingest_reader(text.as_bytes(), columns)
}

/// Parses a market CSV from any reader. Line numbers in errors are 1-based
/// file lines (the header is line 1).
pub fn ingest_reader<R: Read>(reader: R, columns: &ColumnMap) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let date_idx = find(&columns.date).ok_or_else(|| Error::MissingColumn(columns.date.clone()))?;
    let rv_idx = find(&columns.rv).ok_or_else(|| Error::MissingColumn(columns.rv.clone()))?;
    let schema = match (find(&columns.r), find(&columns.oc)) {
        (Some(_), Some(_)) => Schema::Returns,
        _ => match (find(&columns.open), find(&columns.close)) {
            (Some(_), Some(_)) => Schema::Prices,
            _ => {
                let missing = if find(&columns.r).is_none() {
                    columns.r.clone()
                } else {
                    columns.oc.clone()
                };
                return Err(Error::MissingColumn(missing));
            }
        },
    };
    let (a_idx, b_idx, a_name, b_name) = match schema {
        Schema::Returns => (
            find(&columns.r).unwrap(),
            find(&columns.oc).unwrap(),
            &columns.r,
            &columns.oc,
        ),
        Schema::Prices => (
            find(&columns.open).unwrap(),
            find(&columns.close).unwrap(),
            &columns.open,
            &columns.close,
        ),
    };

    // (line, date, a, b, rv)
    let mut rows: Vec<(usize, NaiveDate, f64, f64, f64)> = Vec::new();
    let mut dropped = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row: line,
            message: e.to_string(),
        })?;
        let cells = [
            rec.get(date_idx).unwrap_or(""),
            rec.get(a_idx).unwrap_or(""),
            rec.get(b_idx).unwrap_or(""),
            rec.get(rv_idx).unwrap_or(""),
        ];
        if cells.iter().any(|c| is_missing(c)) {
            dropped += 1;
            continue;
        }
        let date = NaiveDate::parse_from_str(cells[0], DATE_FORMAT).map_err(|_| Error::Parse {
            row: line,
            message: format!("cannot parse date `{}`", cells[0]),
        })?;
        let a = parse_num(cells[1], line, a_name)?;
        let b = parse_num(cells[2], line, b_name)?;
        let rv = parse_num(cells[3], line, &columns.rv)?;
        if rv < 0.0 {
            return Err(Error::Parse {
                row: line,
                message: format!("negative realized volatility {rv}"),
            });
        }
        if schema == Schema::Prices && (a <= 0.0 || b <= 0.0) {
            return Err(Error::Parse {
                row: line,
                message: "prices must be positive".into(),
            });
        }
        if let Some(prev) = rows.last() {
            if date <= prev.1 {
                return Err(Error::NonMonotoneDates { row: line });
            }
        }
        rows.push((line, date, a, b, rv));
    }
    if rows.is_empty() {
        return Err(Error::Empty);
    }

    let (dates, r, oc, rv) = match schema {
        Schema::Returns => {
            let dates = rows.iter().map(|x| x.1).collect();
            let r = rows.iter().map(|x| x.2).collect();
            let oc = rows.iter().map(|x| x.3).collect();
            let rv = rows.iter().map(|x| x.4).collect();
            (dates, r, oc, rv)
        }
        Schema::Prices => {
            let mut dates = Vec::with_capacity(rows.len());
            let mut r = Vec::with_capacity(rows.len());
            let mut oc = Vec::with_capacity(rows.len());
            let mut rv = Vec::with_capacity(rows.len());
            for w in rows.windows(2) {
                let (_, _, _, close_prev, _) = w[0];
                let (_, date, open, close, rvol) = w[1];
                let (r_t, oc_t) = price_returns(close_prev, open, close);
                dates.push(date);
                r.push(r_t);
                oc.push(oc_t);
                rv.push(rvol);
            }
            if dates.is_empty() {
                return Err(Error::Empty);
            }
            (dates, r, oc, rv)
        }
    };
    let series = MarketSeries::new(dates, r, oc, rv)?;
    Ok(Ingested {
        series,
        schema,
        dropped,
    })
}

/// Close-to-close and overnight log-returns (×100) from consecutive prices.
pub fn price_returns(close_prev: f64, open: f64, close: f64) -> (f64, f64) {
    let lc = close_prev.ln();
    (100.0 * (close.ln() - lc), 100.0 * (open.ln() - lc))
}

/// Table-style summary of one column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// `None` when the series has zero variance.
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    pub min: f64,
    pub max: f64,
}

/// Mean, sample standard deviation, moment-ratio skewness and excess
/// kurtosis, minimum and maximum of one column.
pub fn summarize(series: &MarketSeries, field: Field) -> Result<SummaryStats> {
    summarize_values(series.field(field))
}

pub fn summarize_values(xs: &[f64]) -> Result<SummaryStats> {
    let n = xs.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "summary statistics need at least 4 values, got {n}"
        )));
    }
    let mean = stats::mean(xs);
    let nf = n as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = (m2 / (nf - 1.0)).sqrt();
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0))
    } else {
        (None, None)
    };
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SummaryStats {
        n,
        mean,
        std,
        skewness,
        excess_kurtosis,
        min,
        max,
    })
}

/// Writes summary rows in the `field,n,mean,std,skewness,excess_kurtosis,min,max`
/// layout; undefined moments are written as empty cells.
pub fn write_summary_csv<W: Write>(rows: &[(String, SummaryStats)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "field",
        "n",
        "mean",
        "std",
        "skewness",
        "excess_kurtosis",
        "min",
        "max",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for (label, s) in rows {
        w.write_record(&[
            label.clone(),
            s.n.to_string(),
            format!("{:.4}", s.mean),
            format!("{:.4}", s.std),
            opt(s.skewness),
            opt(s.excess_kurtosis),
            format!("{:.4}", s.min),
            format!("{:.4}", s.max),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Partition of a series into `n` in-sample and `m` out-of-sample rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSplit {
    pub n: usize,
    pub m: usize,
}

impl SampleSplit {
    pub fn total(&self) -> usize {
        self.n + self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Number of in-sample rows.
    Index(usize),
    /// Last in-sample date; rows dated on or before it are in-sample.
    Date(NaiveDate),
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    /// A row count (`2500`) or a `YYYY-MM-DD` date.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(n) = s.parse::<usize>() {
            return Ok(Boundary::Index(n));
        }
        NaiveDate::parse_from_str(s, DATE_FORMAT)
            .map(Boundary::Date)
            .map_err(|_| Error::InvalidArgument(format!("split `{s}` is neither a row count nor a date")))
    }
}

pub fn split(series: &MarketSeries, boundary: Boundary) -> Result<SampleSplit> {
    let len = series.len();
    let n = match boundary {
        Boundary::Index(k) => k,
        Boundary::Date(d) => series.dates().partition_point(|x| *x <= d),
    };
    if n == 0 {
        return Err(Error::InvalidArgument(
            "split boundary precedes the first observation".into(),
        ));
    }
    if n >= len {
        return Err(Error::InvalidArgument(format!(
            "split boundary leaves no out-of-sample rows (n = {n}, length = {len})"
        )));
    }
    Ok(SampleSplit { n, m: len - n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_parsing() {
        assert_eq!("250".parse::<Boundary>().unwrap(), Boundary::Index(250));
        assert_eq!(
            "2019-12-31".parse::<Boundary>().unwrap(),
            Boundary::Date(NaiveDate::from_ymd_opt(2019, 12, 31).unwrap())
        );
        assert!("last week".parse::<Boundary>().is_err());
    }

    fn cols() -> ColumnMap {
        ColumnMap::default()
    }

    #[test]
    fn identical_prices_give_zero_return() {
        let csv = "date,open,close,rv\n2020-01-01,100,100,0.5\n2020-01-02,100,100,0.5\n2020-01-03,100,100,0.4\n";
        let ing = ingest_reader(csv.as_bytes(), &cols()).unwrap();
        assert_eq!(ing.schema, Schema::Prices);
        assert_eq!(ing.series.len(), 2);
        assert_eq!(ing.series.r()[0], 0.0);
        assert_eq!(ing.series.oc()[0], 0.0);
    }

    #[test]
    fn price_returns_match_log_formulas() {
        let csv = "date,open,close,rv\n2020-01-01,99,100,0.5\n2020-01-02,101,102,0.6\n";
        let err = ingest_reader(csv.as_bytes(), &cols()).unwrap_err();
        // one row after differencing is below the 2-row minimum
        assert!(matches!(err, Error::InsufficientData(_)));

        let (r, oc) = price_returns(100.0, 101.0, 102.0);
        // 100 ln(1.01), 100 ln(1.02) from a 30-digit evaluation
        assert!((oc - 0.995033085316808284821535754425).abs() < 1e-12);
        assert!((r - 1.98026272961797130260290668851).abs() < 1e-12);
    }

    #[test]
    fn missing_cell_drops_row_and_counts() {
        let csv = "date,r,oc,rv\n2020-01-01,0.1,0.0,0.5\n2020-01-02,0.2,0.1,\n2020-01-03,-0.3,0.2,0.4\n";
        let ing = ingest_reader(csv.as_bytes(), &cols()).unwrap();
        assert_eq!(ing.dropped, 1);
        assert_eq!(ing.series.len(), 2);
        assert_eq!(ing.series.r(), &[0.1, -0.3]);
    }

    #[test]
    fn unparsable_row_reports_line() {
        let csv = "date,r,oc,rv\n2020-01-01,0.1,0.0,0.5\n2020-01-02,abc,0.1,0.3\n";
        match ingest_reader(csv.as_bytes(), &cols()).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn non_monotone_dates_rejected() {
        let csv = "date,r,oc,rv\n2020-01-02,0.1,0.0,0.5\n2020-01-01,0.2,0.1,0.3\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &cols()).unwrap_err(),
            Error::NonMonotoneDates { row: 3 }
        ));
    }

    #[test]
    fn empty_file_rejected() {
        let csv = "date,r,oc,rv\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &cols()).unwrap_err(),
            Error::Empty
        ));
    }

    #[test]
    fn missing_column_named() {
        let csv = "date,r,rv\n2020-01-01,0.1,0.5\n";
        match ingest_reader(csv.as_bytes(), &cols()).unwrap_err() {
            Error::MissingColumn(c) => assert_eq!(c, "oc"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn column_map_override() {
        let csv = "day,ret,overnight,vol\n2020-01-01,0.1,0.0,0.5\n2020-01-02,0.2,0.1,0.3\n";
        let map = ColumnMap {
            date: "day".into(),
            r: "ret".into(),
            oc: "overnight".into(),
            rv: "vol".into(),
            ..ColumnMap::default()
        };
        let ing = ingest_reader(csv.as_bytes(), &map).unwrap();
        assert_eq!(ing.series.oc(), &[0.0, 0.1]);
    }

    #[test]
    fn summary_of_constant_series() {
        let s = summarize_values(&[5.0; 4]).unwrap();
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.min, 5.0);
        assert_eq!(s.max, 5.0);
        assert!(s.skewness.is_none() && s.excess_kurtosis.is_none());
    }

    #[test]
    fn summary_of_small_series() {
        let s = summarize_values(&[-1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(s.mean, 0.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.std - 0.8165).abs() < 1e-4);
        assert_eq!(s.skewness, Some(0.0));
        // m4/m2^2 = 0.5 / 0.25 = 2
        assert!((s.excess_kurtosis.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn summary_needs_four_points() {
        assert!(summarize_values(&[1.0, 2.0, 3.0]).is_err());
    }

    fn ten_rows() -> MarketSeries {
        let r: Vec<f64> = (0..10).map(|i| i as f64 * 0.1 - 0.5).collect();
        MarketSeries::with_synthetic_dates(r, vec![0.0; 10], vec![0.3; 10]).unwrap()
    }

    #[test]
    fn split_by_index() {
        let s = ten_rows();
        assert_eq!(split(&s, Boundary::Index(7)).unwrap(), SampleSplit { n: 7, m: 3 });
        assert!(split(&s, Boundary::Index(10)).is_err());
        assert!(split(&s, Boundary::Index(0)).is_err());
    }

    #[test]
    fn split_by_date() {
        let csv = "date,r,oc,rv\n2020-01-02,0.1,0,0.5\n2020-01-03,0.1,0,0.5\n2020-01-06,0.1,0,0.5\n2020-01-07,0.1,0,0.5\n";
        let s = ingest_reader(csv.as_bytes(), &cols()).unwrap().series;
        // a Saturday boundary splits after Friday
        let sat = NaiveDate::from_ymd_opt(2020, 1, 4).unwrap();
        assert_eq!(split(&s, Boundary::Date(sat)).unwrap(), SampleSplit { n: 2, m: 2 });
        let last = NaiveDate::from_ymd_opt(2020, 1, 7).unwrap();
        assert!(split(&s, Boundary::Date(last)).is_err());
    }
}
