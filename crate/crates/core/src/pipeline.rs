//! End-to-end conversion: captures → flows → features → labels → CSV.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::capture::{open_capture, Capture, CaptureError, CaptureTotals};
use crate::dataset::{select_features, DatasetError, DatasetSummary, FlowCsvWriter};
use crate::flow::{EngineStats, FlowConfig, FlowTable, MICROS_PER_SEC};
use crate::label::{parse_ground_truth, GroundTruthError, Labeller};
use crate::record::{Feature, FlowRecord};

pub const DEFAULT_INTERVAL_S: f64 = 60.0;
pub const DEFAULT_IDLE_TIMEOUT_S: f64 = 60.0;
pub const DEFAULT_ACTIVE_THRESHOLD_S: f64 = 5.0;
pub const MIN_INTERVAL_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("interval must be at least {MIN_INTERVAL_S} second (got {0})")]
    IntervalTooSmall(f64),
    #[error("{key} must be a positive number of seconds (got {value})")]
    NotPositive { key: &'static str, value: f64 },
    #[error("at least one --input capture is required")]
    MissingInputs,
    #[error("an output path (--out) is required")]
    MissingOutput,
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid value for {key}: `{value}`")]
    InvalidValue { key: String, value: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("{0}")]
    Features(String),
}

/// Which features are written to the flow CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureChoice {
    All,
    Named(Vec<String>),
}

impl FeatureChoice {
    pub fn parse(text: &str) -> Self {
        if text.trim().eq_ignore_ascii_case("all") {
            FeatureChoice::All
        } else {
            FeatureChoice::Named(text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        }
    }

    pub fn resolve(&self) -> Result<Vec<Feature>, DatasetError> {
        match self {
            FeatureChoice::All => Ok(Feature::ALL.to_vec()),
            FeatureChoice::Named(names) => select_features(names),
        }
    }
}

/// Validated pipeline settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub interval_s: f64,
    pub idle_timeout_s: f64,
    pub active_threshold_s: f64,
    pub features: FeatureChoice,
    pub ground_truth: Option<PathBuf>,
    /// Offset of ground-truth local times from UTC, seconds.
    pub tz_offset_s: i64,
    pub output: PathBuf,
    pub summary_output: Option<PathBuf>,
}

impl PipelineConfig {
    /// Config with default settings for the given inputs and output.
    pub fn new(inputs: Vec<PathBuf>, output: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            inputs,
            interval_s: DEFAULT_INTERVAL_S,
            idle_timeout_s: DEFAULT_IDLE_TIMEOUT_S,
            active_threshold_s: DEFAULT_ACTIVE_THRESHOLD_S,
            features: FeatureChoice::All,
            ground_truth: None,
            tz_offset_s: 0,
            output: output.into(),
            summary_output: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.inputs.is_empty() {
            return Err(ConfigError::MissingInputs);
        }
        if self.output.as_os_str().is_empty() {
            return Err(ConfigError::MissingOutput);
        }
        if !self.interval_s.is_finite() || self.interval_s < MIN_INTERVAL_S {
            return Err(ConfigError::IntervalTooSmall(self.interval_s));
        }
        for (key, value) in [("idle-timeout", self.idle_timeout_s), ("active-threshold", self.active_threshold_s)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(ConfigError::NotPositive { key, value });
            }
        }
        self.features.resolve().map_err(|e| ConfigError::Features(e.to_string()))?;
        Ok(())
    }

    pub fn flow_config(&self) -> FlowConfig {
        let us = |s: f64| (s * MICROS_PER_SEC as f64).round() as i64;
        FlowConfig {
            interval_us: us(self.interval_s),
            idle_timeout_us: us(self.idle_timeout_s),
            idle_threshold_us: us(self.active_threshold_s),
            ..FlowConfig::default()
        }
    }
}

/// Settings from one source (a config file or the command line); unset
/// fields fall through to the next source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialConfig {
    pub inputs: Vec<PathBuf>,
    pub interval_s: Option<f64>,
    pub idle_timeout_s: Option<f64>,
    pub active_threshold_s: Option<f64>,
    pub features: Option<FeatureChoice>,
    pub ground_truth: Option<PathBuf>,
    pub tz_offset_s: Option<i64>,
    pub output: Option<PathBuf>,
    pub summary_output: Option<PathBuf>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::InvalidValue { key: key.to_string(), value: value.to_string() })
}

impl PartialConfig {
    /// Parses `key = value` lines. `#` starts a comment; `input` may repeat.
    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PartialConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, message: format!("expected key=value, found `{line}`") })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::InvalidValue { key: "config".into(), value: format!("{}: {e}", path.display()) })?;
        Self::from_kv(&text)
    }

    /// Applies one setting. Keys mirror the command-line flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "input" => self.inputs.push(PathBuf::from(value)),
            "interval" => self.interval_s = Some(parse_value(key, value)?),
            "idle-timeout" => self.idle_timeout_s = Some(parse_value(key, value)?),
            "active-threshold" => self.active_threshold_s = Some(parse_value(key, value)?),
            "features" => self.features = Some(FeatureChoice::parse(value)),
            "ground-truth" => self.ground_truth = Some(PathBuf::from(value)),
            "tz-offset" => self.tz_offset_s = Some(parse_value(key, value)?),
            "out" => self.output = Some(PathBuf::from(value)),
            "summary" => self.summary_output = Some(PathBuf::from(value)),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Layers `self` over `lower`: set fields of `self` win, and non-empty
    /// `inputs` replace the lower list.
    pub fn over(self, lower: PartialConfig) -> PartialConfig {
        PartialConfig {
            inputs: if self.inputs.is_empty() { lower.inputs } else { self.inputs },
            interval_s: self.interval_s.or(lower.interval_s),
            idle_timeout_s: self.idle_timeout_s.or(lower.idle_timeout_s),
            active_threshold_s: self.active_threshold_s.or(lower.active_threshold_s),
            features: self.features.or(lower.features),
            ground_truth: self.ground_truth.or(lower.ground_truth),
            tz_offset_s: self.tz_offset_s.or(lower.tz_offset_s),
            output: self.output.or(lower.output),
            summary_output: self.summary_output.or(lower.summary_output),
        }
    }

    /// Fills defaults and validates.
    pub fn build(self) -> Result<PipelineConfig, ConfigError> {
        let config = PipelineConfig {
            inputs: self.inputs,
            interval_s: self.interval_s.unwrap_or(DEFAULT_INTERVAL_S),
            idle_timeout_s: self.idle_timeout_s.unwrap_or(DEFAULT_IDLE_TIMEOUT_S),
            active_threshold_s: self.active_threshold_s.unwrap_or(DEFAULT_ACTIVE_THRESHOLD_S),
            features: self.features.unwrap_or(FeatureChoice::All),
            ground_truth: self.ground_truth,
            tz_offset_s: self.tz_offset_s.unwrap_or(0),
            output: self.output.unwrap_or_default(),
            summary_output: self.summary_output,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Capture {
        path: String,
        #[source]
        source: CaptureError,
    },
    #[error(transparent)]
    GroundTruth(#[from] GroundTruthError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Statistics of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub captures: CaptureTotals,
    pub engine: EngineStats,
    pub records_written: u64,
    pub summary: DatasetSummary,
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let c = &self.captures;
        let e = &self.engine;
        let mut out = String::new();
        let _ = writeln!(out, "packets read:       {}", c.read);
        let _ = writeln!(out, "packets decoded:    {}", c.decoded);
        let _ = writeln!(
            out,
            "packets skipped:    {} (non-ip {}, fragments {}, stacked vlan {}, malformed {}, truncated {})",
            c.skipped, c.non_ip, c.fragments, c.stacked_vlan, c.malformed, c.truncated
        );
        let _ = writeln!(out, "flows:              {}", e.flows_created);
        let _ = writeln!(out, "records:            {}", self.records_written);
        let _ = writeln!(out, "peak live flows:    {}", e.peak_live_flows);
        let _ = writeln!(out, "timestamp anomalies: {}", e.timestamp_anomalies);
        let _ = writeln!(out, "handshake anomalies: {}", e.handshake_anomalies);
        out.push_str(&self.summary.to_text());
        out
    }
}

/// Removes the listed files unless disarmed.
struct Cleanup(Vec<PathBuf>);

impl Drop for Cleanup {
    fn drop(&mut self) {
        for path in &self.0 {
            let _ = std::fs::remove_file(path);
        }
    }
}

type NamedCapture = (String, Capture<BufReader<File>>);

fn open_all(inputs: &[PathBuf]) -> Result<Vec<NamedCapture>, PipelineError> {
    inputs
        .iter()
        .map(|p| {
            let name = p.display().to_string();
            open_capture(p).map(|c| (name.clone(), c)).map_err(|source| PipelineError::Capture { path: name, source })
        })
        .collect()
}

/// Runs the whole conversion. Inputs are processed in order through one
/// flow table. On failure no output files are left behind.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let features = config.features.resolve()?;
    let rules = match &config.ground_truth {
        Some(path) => parse_ground_truth(path, config.tz_offset_s)?,
        None => Vec::new(),
    };
    let captures = open_all(&config.inputs)?;

    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| PipelineError::Io { path, source }
    };
    let mut cleanup = Cleanup(vec![config.output.clone()]);
    let file = File::create(&config.output).map_err(io_err(&config.output))?;
    let mut writer = FlowCsvWriter::new(BufWriter::new(file), features)?;
    let mut table = FlowTable::new(config.flow_config());
    let mut labeller = Labeller::new(rules);
    let mut totals = CaptureTotals::default();
    let mut pending: Vec<FlowRecord> = Vec::new();

    let mut emit = |records: &mut Vec<FlowRecord>, writer: &mut FlowCsvWriter<_>| -> Result<(), PipelineError> {
        for mut r in records.drain(..) {
            labeller.label(&mut r);
            writer.write(&r)?;
        }
        Ok(())
    };

    for (name, mut capture) in captures {
        for packet in capture.by_ref() {
            let packet = packet.map_err(|source| PipelineError::Capture { path: name.clone(), source })?;
            table.ingest_into(&packet, &mut pending);
            if !pending.is_empty() {
                emit(&mut pending, &mut writer)?;
            }
        }
        totals.merge(&capture.totals());
    }
    pending.extend(table.close_all());
    emit(&mut pending, &mut writer)?;
    let records_written = writer.finish()?;

    let name = config.output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let summary = DatasetSummary::from_counts(name, labeller.into_counts());
    if let Some(path) = &config.summary_output {
        cleanup.0.push(path.clone());
        std::fs::write(path, summary.to_csv()).map_err(io_err(path))?;
    }
    cleanup.0.clear();
    Ok(RunReport { captures: totals, engine: table.stats(), records_written, summary })
}
