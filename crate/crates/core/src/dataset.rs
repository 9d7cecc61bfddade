//! Flow CSV output and input, class summaries and summary comparison.
//!
//! CSV files are RFC-4180, UTF-8, LF-terminated and have no BOM.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use crate::record::{Feature, FlowRecord};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("unknown feature `{name}`; valid features are: {}", valid_feature_names())]
    UnknownFeature { name: String },
    #[error("feature selection is empty")]
    EmptySelection,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Arity { line: u64, expected: usize, found: usize },
    #[error("line {line}, column {column}: {message}")]
    Value { line: u64, column: String, message: String },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("file has no header row")]
    MissingHeader,
}

fn valid_feature_names() -> String {
    Feature::ALL.iter().map(|f| f.name()).collect::<Vec<_>>().join(", ")
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

/// Resolves feature names into an ordered selection.
pub fn select_features<S: AsRef<str>>(names: &[S]) -> Result<Vec<Feature>, DatasetError> {
    if names.is_empty() {
        return Err(DatasetError::EmptySelection);
    }
    names
        .iter()
        .map(|n| {
            let n = n.as_ref().trim();
            Feature::from_name(n).ok_or_else(|| DatasetError::UnknownFeature { name: n.to_string() })
        })
        .collect()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// Streaming flow CSV writer.
pub struct FlowCsvWriter<W: Write> {
    csv: csv::Writer<W>,
    features: Vec<Feature>,
    rows: u64,
}

impl<W: Write> FlowCsvWriter<W> {
    /// Writes the header row for `features`.
    pub fn new(out: W, features: Vec<Feature>) -> Result<Self, DatasetError> {
        if features.is_empty() {
            return Err(DatasetError::EmptySelection);
        }
        let mut csv = csv_writer(out);
        csv.write_record(features.iter().map(|f| f.name()))?;
        Ok(FlowCsvWriter { csv, features, rows: 0 })
    }

    pub fn write(&mut self, record: &FlowRecord) -> Result<(), DatasetError> {
        self.csv.write_record(self.features.iter().map(|f| record.field_text(*f)))?;
        self.rows += 1;
        Ok(())
    }

    /// Flushes and returns the number of data rows written.
    pub fn finish(mut self) -> Result<u64, DatasetError> {
        self.csv.flush().map_err(|e| DatasetError::Csv(e.into()))?;
        Ok(self.rows)
    }
}

/// Writes `records` with the named features, returning the row count.
pub fn write_csv<S: AsRef<str>>(records: &[FlowRecord], selected: &[S], path: impl AsRef<Path>) -> Result<u64, DatasetError> {
    let path = path.as_ref();
    let features = select_features(selected)?;
    let file = File::create(path).map_err(io_error(path))?;
    let mut writer = FlowCsvWriter::new(BufWriter::new(file), features)?;
    for r in records {
        writer.write(r)?;
    }
    writer.finish()
}

/// A column of a flow CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Feature(Feature),
    /// Unrecognized column, kept as opaque text.
    Extra(String),
}

impl Column {
    pub fn name(&self) -> &str {
        match self {
            Column::Feature(f) => f.name(),
            Column::Extra(name) => name,
        }
    }
}

/// Contents of a flow CSV file. Features absent from the file keep their
/// default values in `records`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowDataset {
    pub columns: Vec<Column>,
    pub records: Vec<FlowRecord>,
    /// Values of the `Extra` columns, per row, in column order.
    pub extras: Vec<Vec<String>>,
}

pub fn read_flow_csv_from<R: Read>(reader: R) -> Result<FlowDataset, DatasetError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = csv.headers()?.clone();
    if header.is_empty() {
        return Err(DatasetError::MissingHeader);
    }
    let columns: Vec<Column> = header
        .iter()
        .map(|h| Feature::from_name(h).map(Column::Feature).unwrap_or_else(|| Column::Extra(h.to_string())))
        .collect();
    let mut data = FlowDataset { columns, ..FlowDataset::default() };
    for row in csv.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != data.columns.len() {
            return Err(DatasetError::Arity { line, expected: data.columns.len(), found: row.len() });
        }
        let mut record = FlowRecord::default();
        let mut extras = Vec::new();
        for (column, text) in data.columns.iter().zip(row.iter()) {
            match column {
                Column::Feature(f) => record.set_field(*f, text).map_err(|message| DatasetError::Value {
                    line,
                    column: f.name().to_string(),
                    message,
                })?,
                Column::Extra(_) => extras.push(text.to_string()),
            }
        }
        data.records.push(record);
        data.extras.push(extras);
    }
    Ok(data)
}

pub fn read_flow_csv(path: impl AsRef<Path>) -> Result<FlowDataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_error(path))?;
    read_flow_csv_from(io::BufReader::new(file))
}

/// Per-class record counts of one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSummary {
    pub name: String,
    /// Descending by count, ties by label.
    pub class_counts: Vec<(String, u64)>,
    pub total: u64,
}

impl DatasetSummary {
    pub fn from_counts<I, S>(name: impl Into<String>, counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut merged: BTreeMap<String, u64> = BTreeMap::new();
        for (label, n) in counts {
            *merged.entry(label.into()).or_insert(0) += n;
        }
        let mut class_counts: Vec<(String, u64)> = merged.into_iter().collect();
        class_counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total = class_counts.iter().map(|(_, n)| n).sum();
        DatasetSummary { name: name.into(), class_counts, total }
    }

    pub fn count(&self, label: &str) -> u64 {
        self.class_counts.iter().find(|(l, _)| l == label).map(|(_, n)| *n).unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        {
            let mut w = csv_writer(&mut out);
            w.write_record(["label", "count"]).expect("in-memory write");
            for (label, n) in &self.class_counts {
                w.write_record([label.as_str(), &n.to_string()]).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        String::from_utf8(out).expect("csv output is UTF-8")
    }

    pub fn to_text(&self) -> String {
        let mut rows: Vec<[String; 2]> = self.class_counts.iter().map(|(l, n)| [l.clone(), n.to_string()]).collect();
        rows.push(["Total".into(), self.total.to_string()]);
        render_table(&["Class", &self.name], &rows)
    }

    /// Reads a `label,count` summary file.
    pub fn read_csv(name: impl Into<String>, path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_error(path))?;
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(io::BufReader::new(file));
        let header = csv.headers()?.clone();
        if header.iter().ne(["label", "count"]) {
            return Err(DatasetError::MissingColumn("label,count".into()));
        }
        let mut counts = Vec::new();
        for row in csv.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let n = row[1].trim().parse::<u64>().map_err(|e| DatasetError::Value {
                line,
                column: "count".into(),
                message: e.to_string(),
            })?;
            counts.push((row[0].to_string(), n));
        }
        Ok(Self::from_counts(name, counts))
    }
}

/// Summarizes labelled records by their `GTLabel`.
pub fn summarize(name: impl Into<String>, records: &[FlowRecord]) -> DatasetSummary {
    DatasetSummary::from_counts(name, records.iter().map(|r| (r.gt_label.as_str(), 1)))
}

/// Summarizes any CSV file by the values of `label_column`.
pub fn summarize_csv(path: impl AsRef<Path>, label_column: &str) -> Result<DatasetSummary, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_error(path))?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(io::BufReader::new(file));
    let header = csv.headers()?.clone();
    let index = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingColumn(label_column.to_string()))?;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for row in csv.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let label = row.get(index).ok_or(DatasetError::Arity { line, expected: header.len(), found: row.len() })?;
        *counts.entry(label.to_string()).or_insert(0) += 1;
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(DatasetSummary::from_counts(name, counts))
}

/// b/a count ratio. A zero denominator is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    Infinite,
}

impl Ratio {
    pub fn of(b: u64, a: u64) -> Self {
        if a == 0 {
            Ratio::Infinite
        } else {
            Ratio::Finite(b as f64 / a as f64)
        }
    }

    /// How far the ratio is from parity, as a factor >= 1.
    fn divergence(self) -> f64 {
        match self {
            Ratio::Finite(r) if r > 0.0 => r.max(1.0 / r),
            _ => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Finite(r) => write!(f, "{r:.4}"),
            Ratio::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub a: u64,
    pub b: u64,
    /// b − a.
    pub difference: i64,
    /// b / a.
    pub ratio: Ratio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a_name: String,
    pub b_name: String,
    pub rows: Vec<ComparisonRow>,
    /// Label whose counts differ by the largest factor.
    pub largest_divergence: Option<String>,
}

/// Side-by-side class counts of two summaries over the union of labels.
pub fn compare_summaries(a: &DatasetSummary, b: &DatasetSummary) -> Comparison {
    let mut labels: Vec<&str> = a.class_counts.iter().map(|(l, _)| l.as_str()).collect();
    for (l, _) in &b.class_counts {
        if !labels.contains(&l.as_str()) {
            labels.push(l);
        }
    }
    let rows: Vec<ComparisonRow> = labels
        .into_iter()
        .map(|label| {
            let (ca, cb) = (a.count(label), b.count(label));
            ComparisonRow { label: label.to_string(), a: ca, b: cb, difference: cb as i64 - ca as i64, ratio: Ratio::of(cb, ca) }
        })
        .collect();
    let mut largest: Option<(&ComparisonRow, f64)> = None;
    for row in &rows {
        let d = row.ratio.divergence();
        if d > 1.0 && largest.is_none_or(|(_, best)| d > best) {
            largest = Some((row, d));
        }
    }
    Comparison {
        a_name: a.name.clone(),
        b_name: b.name.clone(),
        largest_divergence: largest.map(|(r, _)| r.label.clone()),
        rows,
    }
}

impl Comparison {
    fn cells(&self) -> Vec<[String; 5]> {
        let mut rows: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| [r.label.clone(), r.a.to_string(), r.b.to_string(), r.difference.to_string(), r.ratio.to_string()])
            .collect();
        let (ta, tb): (u64, u64) = (self.rows.iter().map(|r| r.a).sum(), self.rows.iter().map(|r| r.b).sum());
        rows.push(["Total".into(), ta.to_string(), tb.to_string(), (tb as i64 - ta as i64).to_string(), Ratio::of(tb, ta).to_string()]);
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        {
            let mut w = csv_writer(&mut out);
            w.write_record(["label", &self.a_name, &self.b_name, "difference", "ratio"]).expect("in-memory write");
            for row in self.cells() {
                w.write_record(&row).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        String::from_utf8(out).expect("csv output is UTF-8")
    }

    pub fn to_text(&self) -> String {
        let mut text = render_table(&["Class", &self.a_name, &self.b_name, "Difference", "Ratio"], &self.cells());
        if let Some(label) = &self.largest_divergence {
            let _ = writeln!(text, "Largest divergence: {label}");
        }
        text
    }
}

/// Left-aligns the first column and right-aligns the rest.
fn render_table<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut widths = header.map(str::len);
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, cell) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = widths[i]);
            }
        }
        out.push('\n');
    };
    line(&mut out, header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in rows {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
