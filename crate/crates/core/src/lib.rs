//! Turns packet captures into labelled, windowed flow records.
//!
//! The stages are independent and can be driven separately: [`capture`]
//! reads pcap/pcapng files into [`PacketRecord`]s, [`flow::FlowTable`]
//! assembles them into [`FlowRecord`]s, [`label`] attaches ground-truth
//! classes and [`dataset`] writes, reads and compares flow CSV files.
//! [`pipeline::run_pipeline`] chains all of them.

pub mod capture;
pub mod craft;
pub mod dataset;
pub mod decode;
pub mod features;
pub mod flow;
pub mod label;
pub mod packet;
pub mod pipeline;
pub mod record;

pub use capture::{open_capture, Capture, CaptureError, CaptureTotals};
pub use dataset::{
    compare_summaries, read_flow_csv, select_features, summarize, write_csv, Comparison, DatasetError,
    DatasetSummary, FlowCsvWriter, FlowDataset, Ratio,
};
pub use decode::{decode_packet, Decoded, LinkType, SkipReason};
pub use flow::{Direction, EngineStats, FlowConfig, FlowKey, FlowTable};
pub use label::{label_dataset, match_label, parse_ground_truth, GroundTruthRule, Labeller};
pub use packet::{PacketRecord, Protocol, TcpFlags, TcpInfo};
pub use pipeline::{run_pipeline, PartialConfig, PipelineConfig, PipelineError, RunReport};
pub use record::{Feature, FlowRecord, TransactionState, BENIGN};
