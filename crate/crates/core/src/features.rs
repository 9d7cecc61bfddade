//! Per-window feature computations.
//!
//! All functions are pure. Timestamps are microseconds; durations reported
//! in milliseconds are computed from integer microsecond differences.

use crate::flow::{Direction, FlowConfig, FlowState};
use crate::packet::Protocol;
use crate::record::{FlowRecord, TransactionState};

const US_PER_MS: f64 = 1_000.0;
const US_PER_S: f64 = 1_000_000.0;

fn assert_sorted(timestamps: &[i64]) {
    debug_assert!(
        timestamps.windows(2).all(|w| w[0] <= w[1]),
        "timestamps must be sorted non-decreasing"
    );
}

/// Mean, maximum and minimum inter-arrival gap, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InterPacket {
    pub mean_ms: f64,
    pub max_ms: f64,
    pub min_ms: f64,
}

/// Inter-arrival statistics over a sorted timestamp list. Fewer than two
/// timestamps give all zeros.
pub fn interpkt_stats(timestamps: &[i64]) -> InterPacket {
    assert_sorted(timestamps);
    if timestamps.len() < 2 {
        return InterPacket::default();
    }
    let mut sum: i64 = 0;
    let mut max = i64::MIN;
    let mut min = i64::MAX;
    for w in timestamps.windows(2) {
        let gap = w[1] - w[0];
        sum += gap;
        max = max.max(gap);
        min = min.min(gap);
    }
    let n = (timestamps.len() - 1) as f64;
    InterPacket { mean_ms: sum as f64 / n / US_PER_MS, max_ms: max as f64 / US_PER_MS, min_ms: min as f64 / US_PER_MS }
}

/// Mean absolute difference between consecutive inter-arrival gaps, in
/// milliseconds. Fewer than three timestamps give zero.
pub fn jitter_ms(timestamps: &[i64]) -> f64 {
    assert_sorted(timestamps);
    if timestamps.len() < 3 {
        return 0.0;
    }
    let total: i64 = timestamps
        .windows(3)
        .map(|w| ((w[2] - w[1]) - (w[1] - w[0])).abs())
        .sum();
    total as f64 / (timestamps.len() - 2) as f64 / US_PER_MS
}

/// Bits per second. Durations under one microsecond report zero.
pub fn load_bps(bytes: u64, dur_s: f64) -> f64 {
    if dur_s < 1e-6 {
        0.0
    } else {
        8.0 * bytes as f64 / dur_s
    }
}

/// TCP connection setup timings, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SetupTimes {
    pub syn_ack_ms: f64,
    pub ack_dat_ms: f64,
    pub tcp_rtt_ms: f64,
    /// Set when all stages were present but out of order; the timings are
    /// then zero.
    pub disordered: bool,
}

/// SYN to SYN+ACK, SYN+ACK to ACK, and their sum. Any missing stage gives
/// zeros.
pub fn tcp_setup_times(syn: Option<i64>, synack: Option<i64>, ack: Option<i64>) -> SetupTimes {
    let (Some(syn), Some(synack), Some(ack)) = (syn, synack, ack) else {
        return SetupTimes::default();
    };
    if syn > synack || synack > ack {
        return SetupTimes { disordered: true, ..SetupTimes::default() };
    }
    let syn_ack_ms = (synack - syn) as f64 / US_PER_MS;
    let ack_dat_ms = (ack - synack) as f64 / US_PER_MS;
    SetupTimes { syn_ack_ms, ack_dat_ms, tcp_rtt_ms: syn_ack_ms + ack_dat_ms, disordered: false }
}

/// Serial-number comparison on 32-bit sequence space.
fn seq_lt(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) < 0
}

/// Tracks the highest sequence number covered by data in one direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RetransmissionTracker {
    max_end: Option<u32>,
}

impl RetransmissionTracker {
    /// Returns true when `[seq, seq + payload_len)` starts below data already
    /// seen in this direction. Zero-length segments are never retransmissions
    /// and leave the state unchanged.
    pub fn observe(&mut self, seq: u32, payload_len: u32) -> bool {
        if payload_len == 0 {
            return false;
        }
        let end = seq.wrapping_add(payload_len);
        match self.max_end {
            None => {
                self.max_end = Some(end);
                false
            }
            Some(max_end) => {
                let retransmitted = seq_lt(seq, max_end);
                if seq_lt(max_end, end) {
                    self.max_end = Some(end);
                }
                retransmitted
            }
        }
    }
}

/// Sticky connection-state flags of a flow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StateFlags {
    pub syn_seen: bool,
    pub synack_seen: bool,
    pub established: bool,
    /// FIN sent by the initiator.
    pub fin_init: bool,
    /// FIN sent by the responder.
    pub fin_resp: bool,
    /// Initiator FIN acknowledged by the responder.
    pub fin_init_acked: bool,
    /// Responder FIN acknowledged by the initiator.
    pub fin_resp_acked: bool,
    pub rst_seen: bool,
    pub init_seen: bool,
    pub resp_seen: bool,
}

impl StateFlags {
    pub fn fin_complete(&self) -> bool {
        self.fin_init_acked && self.fin_resp_acked
    }
}

pub fn transaction_state(flags: &StateFlags, proto: Protocol) -> TransactionState {
    if proto == Protocol::Tcp {
        if flags.rst_seen {
            TransactionState::Rst
        } else if flags.fin_complete() {
            TransactionState::Fin
        } else if flags.established {
            TransactionState::Con
        } else if flags.syn_seen {
            TransactionState::Req
        } else {
            TransactionState::Int
        }
    } else if flags.init_seen && flags.resp_seen {
        TransactionState::Con
    } else {
        TransactionState::Int
    }
}

/// Statistics of active-period durations, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActiveStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub max_ms: f64,
    pub min_ms: f64,
}

/// Splits sorted timestamps into maximal runs whose consecutive gaps are
/// below `idle_threshold_us` and summarizes the run durations (population
/// standard deviation).
pub fn active_idle_stats(timestamps: &[i64], idle_threshold_us: i64) -> ActiveStats {
    assert_sorted(timestamps);
    let Some(&first) = timestamps.first() else {
        return ActiveStats::default();
    };
    let mut durations = Vec::new();
    let mut run_start = first;
    let mut prev = first;
    for &t in &timestamps[1..] {
        if t - prev >= idle_threshold_us {
            durations.push(prev - run_start);
            run_start = t;
        }
        prev = t;
    }
    durations.push(prev - run_start);

    let n = durations.len() as f64;
    let mean_us = durations.iter().sum::<i64>() as f64 / n;
    let var = durations.iter().map(|&d| (d as f64 - mean_us).powi(2)).sum::<f64>() / n;
    ActiveStats {
        mean_ms: mean_us / US_PER_MS,
        std_ms: var.sqrt() / US_PER_MS,
        max_ms: *durations.iter().max().unwrap() as f64 / US_PER_MS,
        min_ms: *durations.iter().min().unwrap() as f64 / US_PER_MS,
    }
}

fn merge_sorted(a: &[i64], b: &[i64]) -> Vec<i64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn mean_size(bytes: u64, packets: u64) -> f64 {
    if packets == 0 {
        0.0
    } else {
        bytes as f64 / packets as f64
    }
}

/// Builds the record for the current window of `fs`. The label is left
/// empty.
///
/// Panics if the window holds no packets; the flow table never finalizes an
/// empty window.
pub fn finalize_record(fs: &FlowState, config: &FlowConfig) -> FlowRecord {
    let src = &fs.window[Direction::Forward.index()];
    let dst = &fs.window[Direction::Reverse.index()];
    assert!(src.packets + dst.packets > 0, "finalizing an empty window");

    let start_time = fs.window_start_ts;
    let last_time = src.timestamps.last().copied().unwrap_or(i64::MIN).max(dst.timestamps.last().copied().unwrap_or(i64::MIN));
    let dur = (last_time - start_time) as f64 / US_PER_S;

    let s_iat = interpkt_stats(&src.timestamps);
    let d_iat = interpkt_stats(&dst.timestamps);
    let setup = tcp_setup_times(fs.handshake.syn_ts, fs.handshake.synack_ts, fs.handshake.ack_ts);
    let active = active_idle_stats(&merge_sorted(&src.timestamps, &dst.timestamps), config.idle_threshold_us);
    let init = &fs.sticky[Direction::Forward.index()];
    let resp = &fs.sticky[Direction::Reverse.index()];

    FlowRecord {
        flow_id: fs.flow_id,
        rank: fs.rank,
        start_time,
        last_time,
        dur,
        src_addr: fs.key.init_ip,
        dst_addr: fs.key.resp_ip,
        sport: fs.key.init_port,
        dport: fs.key.resp_port,
        proto: fs.key.proto,
        state: transaction_state(&fs.flags, fs.key.proto),
        src_pkts: src.packets,
        dst_pkts: dst.packets,
        src_bytes: src.bytes,
        dst_bytes: dst.bytes,
        src_load: load_bps(src.bytes, dur),
        dst_load: load_bps(dst.bytes, dur),
        s_mean_pkt_sz: mean_size(src.bytes, src.packets),
        d_mean_pkt_sz: mean_size(dst.bytes, dst.packets),
        s_int_pkt_ms: s_iat.mean_ms,
        s_int_pkt_max_ms: s_iat.max_ms,
        s_int_pkt_min_ms: s_iat.min_ms,
        d_int_pkt_ms: d_iat.mean_ms,
        d_int_pkt_max_ms: d_iat.max_ms,
        d_int_pkt_min_ms: d_iat.min_ms,
        src_jitter_ms: jitter_ms(&src.timestamps),
        dst_jitter_ms: jitter_ms(&dst.timestamps),
        s_ttl: init.ttl.unwrap_or(0),
        d_ttl: resp.ttl.unwrap_or(0),
        src_loss: src.loss,
        dst_loss: dst.loss,
        src_win: init.window.unwrap_or(0),
        dst_win: resp.window.unwrap_or(0),
        src_tcp_base: init.tcp_base.unwrap_or(0),
        dst_tcp_base: resp.tcp_base.unwrap_or(0),
        syn_ack_ms: setup.syn_ack_ms,
        ack_dat_ms: setup.ack_dat_ms,
        tcp_rtt_ms: setup.tcp_rtt_ms,
        active_mean_ms: active.mean_ms,
        active_std_ms: active.std_ms,
        active_max_ms: active.max_ms,
        active_min_ms: active.min_ms,
        gt_label: String::new(),
    }
}
