use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::MeanCi;

/// One aggregated result, keyed by (system, noise, snr_db, N, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub system: String,
    pub noise: String,
    pub snr_db: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub metric: String,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub count: usize,
}

impl ResultRow {
    pub fn from_ci(system: &str, noise: &str, snr_db: f64, n: usize, metric: &str, ci: &MeanCi) -> Self {
        Self {
            system: system.to_owned(),
            noise: noise.to_owned(),
            snr_db,
            n,
            metric: metric.to_owned(),
            value: ci.mean,
            ci_lo: ci.ci_lo,
            ci_hi: ci.ci_hi,
            count: ci.n,
        }
    }

    /// Row without an interval (the bounds repeat the value).
    pub fn point(system: &str, noise: &str, snr_db: f64, n: usize, metric: &str, value: f64, count: usize) -> Self {
        Self {
            system: system.to_owned(),
            noise: noise.to_owned(),
            snr_db,
            n,
            metric: metric.to_owned(),
            value,
            ci_lo: value,
            ci_hi: value,
            count,
        }
    }

    fn key(&self) -> (String, String, u64, usize, String) {
        (
            self.system.clone(),
            self.noise.clone(),
            self.snr_db.to_bits(),
            self.n,
            self.metric.clone(),
        )
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }

    fn rounded(&self) -> Self {
        Self {
            snr_db: round_sig(self.snr_db),
            value: round_sig(self.value),
            ci_lo: round_sig(self.ci_lo),
            ci_hi: round_sig(self.ci_hi),
            ..self.clone()
        }
    }
}

/// Formats with 6 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{x:.5e}")
}

fn round_sig(x: f64) -> f64 {
    fmt_sig(x).parse().unwrap_or(x)
}

/// Results in insertion order with unique keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

pub const CSV_COLUMNS: [&str; 9] = ["system", "noise", "snr_db", "N", "metric", "value", "ci_lo", "ci_hi", "count"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ResultRow) -> Result<()> {
        let key = row.key();
        if self.rows.iter().any(|r| r.key() == key) {
            return Err(Error::invalid(format!(
                "duplicate result key ({}, {}, {}, {}, {})",
                row.system, row.noise, row.snr_db, row.n, row.metric
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ResultRow>) -> Result<()> {
        rows.into_iter().try_for_each(|r| self.push(r))
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn find(&self, system: &str, noise: &str, snr_db: f64, n: usize, metric: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.system == system && r.noise == noise && r.snr_db == snr_db && r.n == n && r.metric == metric)
    }

    pub fn filter_metric<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("refusing to emit an empty result table"));
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            out.write_record([
                r.system.clone(),
                r.noise.clone(),
                fmt_sig(r.snr_db),
                r.n.to_string(),
                r.metric.clone(),
                fmt_sig(r.value),
                fmt_sig(r.ci_lo),
                fmt_sig(r.ci_hi),
                r.count.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(CSV_COLUMNS) {
            return Err(Error::format("unexpected result table columns"));
        }
        let mut table = Self::new();
        for row in rdr.deserialize() {
            table.push(row?)?;
        }
        Ok(table)
    }

    /// JSON array of rows, numbers rounded to 6 significant digits.
    pub fn to_json(&self) -> Result<String> {
        if self.is_empty() {
            return Err(Error::invalid("refusing to emit an empty result table"));
        }
        let rounded: Vec<ResultRow> = self.rows.iter().map(ResultRow::rounded).collect();
        Ok(serde_json::to_string_pretty(&rounded)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rows: Vec<ResultRow> = serde_json::from_str(s)?;
        let mut table = Self::new();
        table.extend(rows)?;
        Ok(table)
    }

    /// Rows as rounded for emission, for comparing emitted formats.
    pub fn rounded(&self) -> Self {
        Self {
            rows: self.rows.iter().map(ResultRow::rounded).collect(),
        }
    }
}

/// Writes `<stem>.csv` and/or `<stem>.json` into `dir`.
pub fn emit_report(table: &ResultTable, dir: &Path, stem: &str, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    if table.is_empty() {
        return Err(Error::invalid("refusing to emit an empty result table"));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let unique: HashSet<_> = formats.iter().collect();
    for f in formats {
        if !unique.contains(f) {
            continue;
        }
        let path = match f {
            ReportFormat::Csv => {
                let p = dir.join(format!("{stem}.csv"));
                table.write_csv(fs::File::create(&p)?)?;
                p
            }
            ReportFormat::Json => {
                let p = dir.join(format!("{stem}.json"));
                fs::write(&p, table.to_json()?)?;
                p
            }
        };
        if !written.contains(&path) {
            written.push(path);
        }
    }
    Ok(written)
}
