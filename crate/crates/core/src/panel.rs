//! Price and return panels.
//!
//! A panel is a date-indexed matrix with one column per asset. Dates are
//! opaque ordered labels: ISO-8601 strings compare correctly as strings, and
//! no calendar arithmetic ever happens here. Rows are re-sorted ascending on
//! load and duplicate dates are rejected.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Daily close prices, rows sorted by date, one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<String>,
    assets: Vec<String>,
    closes: Array2<f64>,
}

/// Log returns derived from a [`PricePanel`]; row t is the return from
/// price day t to day t+1 and carries the later date.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<String>,
    assets: Vec<String>,
    returns: Array2<f64>,
}

/// Inclusive date window `[start, end]`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PeriodWindow {
    pub start: String,
    pub end: String,
}

impl PeriodWindow {
    pub fn new(start: impl Into<String>, end: impl Into<String>) -> Result<Self> {
        let w = PeriodWindow {
            start: start.into(),
            end: end.into(),
        };
        if w.start > w.end {
            return Err(Error::Contract(format!(
                "window start {} is after end {}",
                w.start, w.end
            )));
        }
        Ok(w)
    }

    pub fn contains(&self, date: &str) -> bool {
        self.start.as_str() <= date && date <= self.end.as_str()
    }
}

fn is_missing(field: &str) -> bool {
    let t = field.trim();
    t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("null")
}

/// Cheap shape check for ISO-8601 calendar dates; content stays opaque.
fn looks_like_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| matches!(i, 4 | 7) || c.is_ascii_digit())
}

struct RawRows {
    assets: Vec<String>,
    // (csv line number, date, fields)
    rows: Vec<(usize, String, Vec<String>)>,
}

fn read_rows<R: Read>(reader: R) -> Result<RawRows> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Validation(
            "header must be `date,<ticker>,...` with at least one ticker".into(),
        ));
    }
    if !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::Validation(format!(
            "first header column must be `date`, found `{}`",
            &header[0]
        )));
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    {
        let mut seen = BTreeSet::new();
        for a in &assets {
            if !seen.insert(a) {
                return Err(Error::Validation(format!("duplicate ticker column `{a}`")));
            }
        }
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // header is line 1
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != assets.len() + 1 {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "expected {} fields, found {}",
                    assets.len() + 1,
                    rec.len()
                ),
            });
        }
        let date = rec[0].to_string();
        if !looks_like_iso_date(&date) {
            return Err(Error::Parse {
                line,
                msg: format!("`{date}` is not an ISO-8601 date (YYYY-MM-DD)"),
            });
        }
        rows.push((line, date, rec.iter().skip(1).map(str::to_owned).collect()));
    }
    Ok(RawRows { assets, rows })
}

fn assemble(
    raw: RawRows,
    drop_missing: bool,
) -> Result<(PricePanel, Vec<String>)> {
    let RawRows { assets, mut rows } = raw;
    rows.sort_by(|a, b| a.1.cmp(&b.1));
    for w in rows.windows(2) {
        if w[0].1 == w[1].1 {
            return Err(Error::Validation(format!("duplicate date {}", w[0].1)));
        }
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 price rows, found {}",
            rows.len()
        )));
    }

    // First pass: find columns with any missing cell.
    let mut has_missing = vec![false; assets.len()];
    for (_, _, fields) in &rows {
        for (c, f) in fields.iter().enumerate() {
            if is_missing(f) {
                has_missing[c] = true;
            }
        }
    }
    if !drop_missing {
        if let Some(c) = has_missing.iter().position(|&m| m) {
            let (_, date, _) = rows
                .iter()
                .find(|(_, _, fields)| is_missing(&fields[c]))
                .expect("flagged column has a missing cell");
            return Err(Error::Validation(format!(
                "missing value for `{}` on {date}; no imputation is performed",
                assets[c]
            )));
        }
    }
    let keep: Vec<usize> = (0..assets.len()).filter(|&c| !has_missing[c]).collect();
    let dropped: Vec<String> = (0..assets.len())
        .filter(|&c| has_missing[c])
        .map(|c| assets[c].clone())
        .collect();
    if keep.is_empty() {
        return Err(Error::Validation(
            "every asset column has missing values".into(),
        ));
    }

    let mut closes = Array2::zeros((rows.len(), keep.len()));
    let mut dates = Vec::with_capacity(rows.len());
    for (r, (line, date, fields)) in rows.iter().enumerate() {
        for (k, &c) in keep.iter().enumerate() {
            let f = &fields[c];
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: *line,
                msg: format!("`{f}` is not a number (column `{}`)", assets[c]),
            })?;
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Validation(format!(
                    "non-positive price {v} for `{}` on {date}",
                    assets[c]
                )));
            }
            closes[[r, k]] = v;
        }
        dates.push(date.clone());
    }
    let kept_assets = keep.into_iter().map(|c| assets[c].clone()).collect();
    Ok((
        PricePanel {
            dates,
            assets: kept_assets,
            closes,
        },
        dropped,
    ))
}

impl PricePanel {
    /// Strict loader: any missing cell is an error, no imputation.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        Ok(assemble(read_rows(reader)?, false)?.0)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    /// Lenient loader: assets with any missing value are dropped; the list of
    /// dropped tickers is returned so the caller can report it.
    pub fn from_csv_dropping<R: Read>(reader: R) -> Result<(Self, Vec<String>)> {
        assemble(read_rows(reader)?, true)
    }

    pub fn from_csv_path_dropping(path: impl AsRef<Path>) -> Result<(Self, Vec<String>)> {
        Self::from_csv_dropping(std::fs::File::open(path)?)
    }

    /// Builds a panel from already-validated parts. Rows must be sorted by
    /// date with no duplicates and all prices strictly positive.
    pub fn from_parts(dates: Vec<String>, assets: Vec<String>, closes: Array2<f64>) -> Result<Self> {
        if closes.nrows() != dates.len() || closes.ncols() != assets.len() {
            return Err(Error::Contract(format!(
                "close matrix is {}x{} but there are {} dates and {} assets",
                closes.nrows(),
                closes.ncols(),
                dates.len(),
                assets.len()
            )));
        }
        for w in dates.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Contract(format!(
                    "dates must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if closes.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::Contract("prices must be finite and positive".into()));
        }
        Ok(PricePanel {
            dates,
            assets,
            closes,
        })
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn closes(&self) -> &Array2<f64> {
        &self.closes
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn column(&self, asset: usize) -> ArrayView1<'_, f64> {
        self.closes.column(asset)
    }

    pub fn asset_index(&self, ticker: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == ticker)
    }

    /// Writes the panel in the same `date,<ticker>,...` format the loaders
    /// read. Floats use the shortest round-trip representation.
    pub fn to_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        write!(w, "date")?;
        for a in &self.assets {
            write!(w, ",{a}")?;
        }
        writeln!(w)?;
        for (t, d) in self.dates.iter().enumerate() {
            write!(w, "{d}")?;
            for i in 0..self.assets.len() {
                write!(w, ",{}", self.closes[[t, i]])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Rows whose date falls inside `window` (inclusive).
    pub fn slice(&self, window: &PeriodWindow) -> Result<PricePanel> {
        if window.start > window.end {
            return Err(Error::Contract(format!(
                "window start {} is after end {}",
                window.start, window.end
            )));
        }
        let idx: Vec<usize> = (0..self.dates.len())
            .filter(|&i| window.contains(&self.dates[i]))
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyWindow(format!(
                "[{}, {}] selects no rows",
                window.start, window.end
            )));
        }
        Ok(PricePanel {
            dates: idx.iter().map(|&i| self.dates[i].clone()).collect(),
            assets: self.assets.clone(),
            closes: ndarray::stack(
                ndarray::Axis(0),
                &idx.iter().map(|&i| self.closes.row(i)).collect::<Vec<_>>(),
            )
            .expect("rows share shape"),
        })
    }

    /// Restricts the panel to the given dates (which must all be present).
    pub fn restrict_to_dates(&self, dates: &[String]) -> Result<PricePanel> {
        let idx: Vec<usize> = dates
            .iter()
            .map(|d| {
                self.dates
                    .binary_search(d)
                    .map_err(|_| Error::Contract(format!("date {d} not in panel")))
            })
            .collect::<Result<_>>()?;
        let rows: Vec<_> = idx.iter().map(|&i| self.closes.row(i)).collect();
        Ok(PricePanel {
            dates: dates.to_vec(),
            assets: self.assets.clone(),
            closes: ndarray::stack(ndarray::Axis(0), &rows).expect("rows share shape"),
        })
    }

    /// Dates present in both panels, ascending.
    pub fn common_dates(&self, other: &PricePanel) -> Vec<String> {
        let set: BTreeSet<&String> = other.dates.iter().collect();
        self.dates
            .iter()
            .filter(|d| set.contains(d))
            .cloned()
            .collect()
    }

    /// Log returns r[t][i] = ln(close[t+1][i]) - ln(close[t][i]).
    pub fn log_returns(&self) -> Result<ReturnPanel> {
        if self.n_days() < 2 {
            return Err(Error::InsufficientData(
                "need at least 2 price rows to form returns".into(),
            ));
        }
        let t = self.n_days() - 1;
        let mut returns = Array2::zeros((t, self.n_assets()));
        for r in 0..t {
            for c in 0..self.n_assets() {
                returns[[r, c]] = self.closes[[r + 1, c]].ln() - self.closes[[r, c]].ln();
            }
        }
        Ok(ReturnPanel {
            dates: self.dates[1..].to_vec(),
            assets: self.assets.clone(),
            returns,
        })
    }
}

impl ReturnPanel {
    pub fn from_parts(
        dates: Vec<String>,
        assets: Vec<String>,
        returns: Array2<f64>,
    ) -> Result<Self> {
        if returns.nrows() != dates.len() || returns.ncols() != assets.len() {
            return Err(Error::Contract(format!(
                "return matrix is {}x{} but there are {} dates and {} assets",
                returns.nrows(),
                returns.ncols(),
                dates.len(),
                assets.len()
            )));
        }
        for w in dates.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Contract(format!(
                    "dates must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(ReturnPanel {
            dates,
            assets,
            returns,
        })
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn returns(&self) -> &Array2<f64> {
        &self.returns
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn column(&self, asset: usize) -> ArrayView1<'_, f64> {
        self.returns.column(asset)
    }

    pub fn row(&self, day: usize) -> ArrayView1<'_, f64> {
        self.returns.row(day)
    }

    /// Rows whose date falls inside `window` (inclusive).
    pub fn slice(&self, window: &PeriodWindow) -> Result<ReturnPanel> {
        if window.start > window.end {
            return Err(Error::Contract(format!(
                "window start {} is after end {}",
                window.start, window.end
            )));
        }
        let idx: Vec<usize> = (0..self.dates.len())
            .filter(|&i| window.contains(&self.dates[i]))
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyWindow(format!(
                "[{}, {}] selects no rows",
                window.start, window.end
            )));
        }
        let rows: Vec<_> = idx.iter().map(|&i| self.returns.row(i)).collect();
        Ok(ReturnPanel {
            dates: idx.iter().map(|&i| self.dates[i].clone()).collect(),
            assets: self.assets.clone(),
            returns: ndarray::stack(ndarray::Axis(0), &rows).expect("rows share shape"),
        })
    }
}
