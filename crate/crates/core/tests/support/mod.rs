#![allow(dead_code)]

pub mod golden;
pub mod wire;

use std::io::Cursor;
use std::path::PathBuf;

use flowset_core::craft::{pcap_bytes, SyntheticPacket};
use flowset_core::{Capture, CaptureTotals, EngineStats, FlowConfig, FlowRecord, FlowTable, LinkType};

use oracle::{OracleConfig, OracleRecord};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn to_pcap(packets: &[SyntheticPacket]) -> Vec<u8> {
    pcap_bytes(packets, LinkType::Ethernet)
}

pub struct EngineRun {
    pub records: Vec<FlowRecord>,
    pub totals: CaptureTotals,
    pub stats: EngineStats,
}

/// Streams capture bytes through the library reader and flow table.
pub fn run_engine(bytes: &[u8], config: FlowConfig) -> EngineRun {
    let mut capture = Capture::new(Cursor::new(bytes.to_vec())).expect("capture header");
    let mut table = FlowTable::new(config);
    let mut records = Vec::new();
    for packet in capture.by_ref() {
        table.ingest_into(&packet.expect("packet"), &mut records);
    }
    records.extend(table.close_all());
    EngineRun { records, totals: capture.totals(), stats: table.stats() }
}

pub fn flow_config(cfg: &OracleConfig) -> FlowConfig {
    FlowConfig {
        interval_us: cfg.interval_us,
        idle_timeout_us: cfg.idle_timeout_us,
        idle_threshold_us: cfg.idle_threshold_us,
        ..FlowConfig::default()
    }
}

/// Field-by-field comparison: integers exactly, floats within `tol`.
pub fn compare(e: &FlowRecord, o: &OracleRecord, tol: f64) -> Result<(), String> {
    let mut diffs = Vec::new();
    macro_rules! exact {
        ($name:literal, $a:expr, $b:expr) => {
            if $a != $b {
                diffs.push(format!("{} engine={:?} oracle={:?}", $name, $a, $b));
            }
        };
    }
    macro_rules! close {
        ($name:literal, $a:expr, $b:expr) => {
            if ($a - $b).abs() > tol {
                diffs.push(format!("{} engine={} oracle={}", $name, $a, $b));
            }
        };
    }
    exact!("FlowID", e.flow_id, o.flow_id);
    exact!("Rank", e.rank, o.rank);
    exact!("StartTime", e.start_time, o.start_time);
    exact!("LastTime", e.last_time, o.last_time);
    exact!("SrcAddr", e.src_addr, o.src_addr);
    exact!("Sport", e.sport, o.sport);
    exact!("DstAddr", e.dst_addr, o.dst_addr);
    exact!("Dport", e.dport, o.dport);
    exact!("Proto", e.proto.to_string(), o.proto);
    exact!("State", e.state.to_string(), o.state.to_string());
    exact!("SrcPkts", e.src_pkts, o.src_pkts);
    exact!("DstPkts", e.dst_pkts, o.dst_pkts);
    exact!("SrcBytes", e.src_bytes, o.src_bytes);
    exact!("DstBytes", e.dst_bytes, o.dst_bytes);
    exact!("sTtl", e.s_ttl, o.s_ttl);
    exact!("dTtl", e.d_ttl, o.d_ttl);
    exact!("SrcLoss", e.src_loss, o.src_loss);
    exact!("DstLoss", e.dst_loss, o.dst_loss);
    exact!("SrcWin", e.src_win, o.src_win);
    exact!("DstWin", e.dst_win, o.dst_win);
    exact!("SrcTCPBase", e.src_tcp_base, o.src_base);
    exact!("DstTCPBase", e.dst_tcp_base, o.dst_base);
    close!("Dur", e.dur, o.dur);
    close!("SrcLoad", e.src_load, o.src_load);
    close!("DstLoad", e.dst_load, o.dst_load);
    close!("sMeanPktSz", e.s_mean_pkt_sz, o.s_mean);
    close!("dMeanPktSz", e.d_mean_pkt_sz, o.d_mean);
    close!("SIntPkt", e.s_int_pkt_ms, o.s_iat[0]);
    close!("SIntPktMax", e.s_int_pkt_max_ms, o.s_iat[1]);
    close!("SIntPktMin", e.s_int_pkt_min_ms, o.s_iat[2]);
    close!("DIntPkt", e.d_int_pkt_ms, o.d_iat[0]);
    close!("DIntPktMax", e.d_int_pkt_max_ms, o.d_iat[1]);
    close!("DIntPktMin", e.d_int_pkt_min_ms, o.d_iat[2]);
    close!("SrcJitter", e.src_jitter_ms, o.src_jitter);
    close!("DstJitter", e.dst_jitter_ms, o.dst_jitter);
    close!("SynAck", e.syn_ack_ms, o.syn_ack);
    close!("AckDat", e.ack_dat_ms, o.ack_dat);
    close!("TcpRtt", e.tcp_rtt_ms, o.tcp_rtt);
    close!("Mean", e.active_mean_ms, o.active[0]);
    close!("StdDev", e.active_std_ms, o.active[1]);
    close!("Max", e.active_max_ms, o.active[2]);
    close!("Min", e.active_min_ms, o.active[3]);
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(format!("flow {} rank {}: {}", o.flow_id, o.rank, diffs.join("; ")))
    }
}

/// Compares whole record sequences, order included.
pub fn compare_all(engine: &[FlowRecord], oracle: &[OracleRecord], tol: f64) -> Result<(), String> {
    if engine.len() != oracle.len() {
        return Err(format!("record count: engine={} oracle={}", engine.len(), oracle.len()));
    }
    for (i, (e, o)) in engine.iter().zip(oracle).enumerate() {
        compare(e, o, tol).map_err(|m| format!("record #{i}: {m}"))?;
    }
    Ok(())
}
