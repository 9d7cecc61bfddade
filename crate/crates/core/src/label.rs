//! Ground-truth labelling of flow records.
//!
//! Rules come from a CSV file with the header
//! `start,end,proto,src_ip,src_port,dst_ip,dst_port,label`. A record takes
//! the label of the first rule, in file order, whose protocol and endpoints
//! match (in either orientation) and whose time span overlaps the record's.

use std::collections::BTreeMap;
use std::io::Read;
use std::net::IpAddr;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::packet::Protocol;
use crate::record::{FlowRecord, BENIGN};

pub const GROUND_TRUTH_HEADER: [&str; 8] = ["start", "end", "proto", "src_ip", "src_port", "dst_ip", "dst_port", "label"];

#[derive(Debug, thiserror::Error)]
pub enum GroundTruthError {
    #[error("cannot read ground truth {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ground truth header must be `{}`, found `{found}`", GROUND_TRUTH_HEADER.join(","))]
    Header { found: String },
    #[error("ground truth line {line}: {message}")]
    Row { line: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtoMatch {
    Any,
    Exact(Protocol),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern<T> {
    Any,
    Exact(T),
}

impl<T: PartialEq> Pattern<T> {
    pub fn matches(&self, value: &T) -> bool {
        match self {
            Pattern::Any => true,
            Pattern::Exact(v) => v == value,
        }
    }
}

/// One attack window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthRule {
    /// Inclusive bounds, microseconds since the Unix epoch (UTC).
    pub start_ts: i64,
    pub end_ts: i64,
    pub proto: ProtoMatch,
    pub src_ip: Pattern<IpAddr>,
    pub src_port: Pattern<u16>,
    pub dst_ip: Pattern<IpAddr>,
    pub dst_port: Pattern<u16>,
    pub label: String,
}

impl GroundTruthRule {
    fn endpoints_match(&self, a_ip: &IpAddr, a_port: u16, b_ip: &IpAddr, b_port: u16) -> bool {
        self.src_ip.matches(a_ip) && self.src_port.matches(&a_port) && self.dst_ip.matches(b_ip) && self.dst_port.matches(&b_port)
    }

    pub fn matches(&self, r: &FlowRecord) -> bool {
        let proto_ok = match self.proto {
            ProtoMatch::Any => true,
            ProtoMatch::Exact(p) => p == r.proto,
        };
        proto_ok
            && (self.endpoints_match(&r.src_addr, r.sport, &r.dst_addr, r.dport)
                || self.endpoints_match(&r.dst_addr, r.dport, &r.src_addr, r.sport))
            && overlaps((r.start_time, r.last_time), (self.start_ts, self.end_ts))
    }
}

/// Whether two closed intervals share at least one instant.
pub fn overlaps(a: (i64, i64), b: (i64, i64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Parses an ISO-8601 date-time. Values without an embedded offset are local
/// times `tz_offset_s` seconds ahead of UTC.
pub fn parse_time(text: &str, tz_offset_s: i64) -> Option<i64> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.timestamp_micros());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f%:z", "%Y-%m-%d %H:%M:%S%.f%:z", "%Y-%m-%dT%H:%M:%S%.f%z"] {
        if let Ok(t) = DateTime::parse_from_str(text, fmt) {
            return Some(t.timestamp_micros());
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(t.and_utc().timestamp_micros() - tz_offset_s * 1_000_000);
        }
    }
    None
}

fn wildcard<T: std::str::FromStr>(text: &str, what: &str) -> Result<Pattern<T>, String> {
    let text = text.trim();
    if text == "*" {
        Ok(Pattern::Any)
    } else {
        text.parse().map(Pattern::Exact).map_err(|_| format!("invalid {what} `{text}`"))
    }
}

fn parse_rule(fields: &csv::StringRecord, tz_offset_s: i64) -> Result<GroundTruthRule, String> {
    if fields.len() != GROUND_TRUTH_HEADER.len() {
        return Err(format!("expected {} fields, found {}", GROUND_TRUTH_HEADER.len(), fields.len()));
    }
    let start_ts = parse_time(&fields[0], tz_offset_s).ok_or_else(|| format!("invalid start time `{}`", &fields[0]))?;
    let end_ts = parse_time(&fields[1], tz_offset_s).ok_or_else(|| format!("invalid end time `{}`", &fields[1]))?;
    if start_ts > end_ts {
        return Err("end time precedes start time".into());
    }
    let proto = match fields[2].trim() {
        p if p.eq_ignore_ascii_case("any") || p == "*" => ProtoMatch::Any,
        p => ProtoMatch::Exact(p.parse().map_err(|e: crate::packet::UnknownProtocol| e.to_string())?),
    };
    let label = fields[7].trim().to_string();
    if label.is_empty() {
        return Err("empty label".into());
    }
    if label == BENIGN {
        return Err(format!("label `{BENIGN}` is the default and cannot be a rule label"));
    }
    Ok(GroundTruthRule {
        start_ts,
        end_ts,
        proto,
        src_ip: wildcard(&fields[3], "source address")?,
        src_port: wildcard(&fields[4], "source port")?,
        dst_ip: wildcard(&fields[5], "destination address")?,
        dst_port: wildcard(&fields[6], "destination port")?,
        label,
    })
}

/// Reads rules from any reader holding ground-truth CSV.
pub fn read_ground_truth<R: Read>(reader: R, tz_offset_s: i64) -> Result<Vec<GroundTruthRule>, GroundTruthError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| GroundTruthError::Row { line: 1, message: e.to_string() })?
        .clone();
    let normalized: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if normalized.iter().map(String::as_str).ne(GROUND_TRUTH_HEADER.iter().copied()) {
        return Err(GroundTruthError::Header { found: header.iter().collect::<Vec<_>>().join(",") });
    }
    let mut rules = Vec::new();
    for row in csv.records() {
        let row = row.map_err(|e| GroundTruthError::Row {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        rules.push(parse_rule(&row, tz_offset_s).map_err(|message| GroundTruthError::Row { line, message })?);
    }
    Ok(rules)
}

pub fn parse_ground_truth(path: impl AsRef<Path>, tz_offset_s: i64) -> Result<Vec<GroundTruthRule>, GroundTruthError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| GroundTruthError::Io { path: path.display().to_string(), source })?;
    read_ground_truth(std::io::BufReader::new(file), tz_offset_s)
}

/// Label of the first matching rule, or [`BENIGN`].
pub fn match_label<'a>(r: &FlowRecord, rules: &'a [GroundTruthRule]) -> &'a str {
    rules.iter().find(|rule| rule.matches(r)).map(|rule| rule.label.as_str()).unwrap_or(BENIGN)
}

/// Per-label record counts.
pub type ClassCounts = BTreeMap<String, u64>;

/// Streaming labeller that keeps class counts.
#[derive(Debug, Clone)]
pub struct Labeller {
    rules: Vec<GroundTruthRule>,
    counts: ClassCounts,
}

impl Labeller {
    pub fn new(rules: Vec<GroundTruthRule>) -> Self {
        Labeller { rules, counts: ClassCounts::new() }
    }

    pub fn label(&mut self, record: &mut FlowRecord) {
        let label = match_label(record, &self.rules);
        *self.counts.entry(label.to_string()).or_insert(0) += 1;
        record.gt_label = label.to_string();
    }

    pub fn counts(&self) -> &ClassCounts {
        &self.counts
    }

    pub fn into_counts(self) -> ClassCounts {
        self.counts
    }
}

/// Labels every record and returns the class counts.
pub fn label_dataset(records: &mut [FlowRecord], rules: &[GroundTruthRule]) -> ClassCounts {
    let mut labeller = Labeller::new(rules.to_vec());
    for r in records.iter_mut() {
        labeller.label(r);
    }
    labeller.into_counts()
}
