use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flowset_core::dataset::summarize_csv;
use flowset_core::{compare_summaries, run_pipeline, DatasetSummary, PartialConfig};

/// Convert packet captures into labelled flow datasets.
#[derive(Parser, Debug)]
#[command(name = "flowset", version, args_conflicts_with_subcommands = true, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Capture file (pcap or pcapng); repeat to concatenate in order
    #[arg(long, value_name = "PATH")]
    input: Vec<String>,
    /// Flow record interval in seconds (at least 1)
    #[arg(long, value_name = "SECONDS")]
    interval: Option<String>,
    /// Idle time after which a flow is evicted, in seconds
    #[arg(long, value_name = "SECONDS")]
    idle_timeout: Option<String>,
    /// Gap that ends an active period, in seconds
    #[arg(long, value_name = "SECONDS")]
    active_threshold: Option<String>,
    /// `all` or a comma-separated list of feature names
    #[arg(long, value_name = "LIST")]
    features: Option<String>,
    /// Ground-truth rules CSV
    #[arg(long, value_name = "PATH")]
    ground_truth: Option<String>,
    /// Offset of ground-truth local times from UTC, in seconds
    #[arg(long, value_name = "SECONDS")]
    tz_offset: Option<String>,
    /// Flow CSV to write
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
    /// Class-count summary CSV to write
    #[arg(long, value_name = "PATH")]
    summary: Option<String>,
    /// key=value file; command-line flags take precedence
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count records per class in a flow CSV
    Summarize {
        csv: PathBuf,
        #[arg(long, default_value = "GTLabel")]
        label_column: String,
        /// Write `label,count` CSV here instead of printing a table
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the class proportions of two datasets
    Compare {
        /// Flow CSV or `label,count` summary
        a: PathBuf,
        /// Flow CSV or `label,count` summary
        b: PathBuf,
        #[arg(long, default_value = "GTLabel")]
        label_column: String,
        /// Write the comparison as CSV here instead of printing a table
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl RunArgs {
    fn to_partial(&self) -> Result<PartialConfig> {
        let mut cfg = PartialConfig::default();
        for input in &self.input {
            cfg.set("input", input)?;
        }
        let single = [
            ("interval", &self.interval),
            ("idle-timeout", &self.idle_timeout),
            ("active-threshold", &self.active_threshold),
            ("features", &self.features),
            ("ground-truth", &self.ground_truth),
            ("tz-offset", &self.tz_offset),
            ("out", &self.out),
            ("summary", &self.summary),
        ];
        for (key, value) in single {
            if let Some(value) = value {
                cfg.set(key, value)?;
            }
        }
        Ok(cfg)
    }
}

fn convert(args: &RunArgs) -> Result<()> {
    let mut partial = args.to_partial()?;
    if let Some(path) = &args.config {
        let file = PartialConfig::from_file(path)?;
        partial = partial.over(file);
    }
    let config = partial.build()?;
    let report = run_pipeline(&config)?;
    eprint!("{}", report.to_text());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Accepts either a `label,count` summary or a flow CSV.
fn load_summary(path: &Path, label_column: &str) -> Result<DatasetSummary> {
    if let Ok(summary) = DatasetSummary::read_csv(stem(path), path) {
        return Ok(summary);
    }
    let mut summary = summarize_csv(path, label_column).with_context(|| format!("summarizing {}", path.display()))?;
    summary.name = stem(path);
    Ok(summary)
}

fn emit(text: String, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        None => convert(&cli.run),
        Some(Command::Summarize { csv, label_column, out }) => {
            let mut summary = summarize_csv(&csv, &label_column).with_context(|| format!("summarizing {}", csv.display()))?;
            summary.name = stem(&csv);
            let text = if out.is_some() { summary.to_csv() } else { summary.to_text() };
            emit(text, out.as_deref())
        }
        Some(Command::Compare { a, b, label_column, out }) => {
            if a == b {
                bail!("compare needs two different datasets");
            }
            let cmp = compare_summaries(&load_summary(&a, &label_column)?, &load_summary(&b, &label_column)?);
            let text = if out.is_some() { cmp.to_csv() } else { cmp.to_text() };
            emit(text, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
