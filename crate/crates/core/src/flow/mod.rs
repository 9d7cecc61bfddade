//! Streaming bidirectional flow table.
//!
//! Packets are folded into flows keyed by their canonical 5-tuple. A flow
//! emits a status record whenever a packet arrives `interval` or more after
//! the start of its current window, when TCP teardown completes, when it has
//! been idle for `idle_timeout` (measured in capture time), and at the end of
//! the capture.

mod state;

use std::collections::{BTreeSet, HashMap};

pub use state::{DirSticky, DirWindow, Direction, FlowKey, FlowState, Handshake};

use crate::features::finalize_record;
use crate::packet::PacketRecord;
use crate::record::FlowRecord;

pub const MICROS_PER_SEC: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowConfig {
    /// Status-record interval. At least one second.
    pub interval_us: i64,
    pub idle_timeout_us: i64,
    /// Gap that separates active periods.
    pub idle_threshold_us: i64,
    /// Timestamp regression tolerated before clamping.
    pub reorder_tolerance_us: i64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            interval_us: 60 * MICROS_PER_SEC,
            idle_timeout_us: 60 * MICROS_PER_SEC,
            idle_threshold_us: 5 * MICROS_PER_SEC,
            reorder_tolerance_us: 1_000,
        }
    }
}

/// Counters maintained by a [`FlowTable`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub packets_admitted: u64,
    pub flows_created: u64,
    pub records_emitted: u64,
    /// Timestamp regressions beyond the reorder tolerance.
    pub timestamp_anomalies: u64,
    /// Handshakes whose stages were out of order.
    pub handshake_anomalies: u64,
    pub peak_live_flows: usize,
}

/// Single-writer flow table.
#[derive(Debug)]
pub struct FlowTable {
    config: FlowConfig,
    flows: HashMap<FlowKey, FlowState>,
    /// Live flows ordered by (last_ts, flow_id) for idle eviction.
    by_activity: BTreeSet<(i64, u64)>,
    keys_by_id: HashMap<u64, FlowKey>,
    next_flow_id: u64,
    /// Largest timestamp admitted so far.
    clock: Option<i64>,
    stats: EngineStats,
}

impl FlowTable {
    pub fn new(config: FlowConfig) -> Self {
        FlowTable {
            config,
            flows: HashMap::new(),
            by_activity: BTreeSet::new(),
            keys_by_id: HashMap::new(),
            next_flow_id: 1,
            clock: None,
            stats: EngineStats::default(),
        }
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn get(&self, key: &FlowKey) -> Option<&FlowState> {
        self.flows.get(key)
    }

    /// Resolves the flow `p` belongs to. When neither orientation is live,
    /// returns a new key with `p`'s source as initiator.
    pub fn canonical_key(&self, p: &PacketRecord) -> (FlowKey, Direction) {
        let key = FlowKey::from_packet(p);
        if self.flows.contains_key(&key) {
            return (key, Direction::Forward);
        }
        let reversed = key.reversed();
        if self.flows.contains_key(&reversed) {
            return (reversed, Direction::Reverse);
        }
        (key, Direction::Forward)
    }

    /// Folds one packet into the table and returns every record this caused
    /// to be emitted, ordered by window start (then flow id).
    pub fn ingest_packet(&mut self, p: &PacketRecord) -> Vec<FlowRecord> {
        let mut out = Vec::new();
        self.ingest_into(p, &mut out);
        out
    }

    /// Like [`ingest_packet`](Self::ingest_packet), appending to `out`.
    pub fn ingest_into(&mut self, p: &PacketRecord, out: &mut Vec<FlowRecord>) {
        let first_new = out.len();
        let now = self.advance_clock(p.ts_us);
        self.evict_idle_into(now, out);

        let (key, dir) = self.canonical_key(p);
        let mut fs = match self.flows.remove(&key) {
            Some(fs) => {
                self.by_activity.remove(&(fs.last_ts, fs.flow_id));
                fs
            }
            None => {
                let id = self.next_flow_id;
                self.next_flow_id += 1;
                self.stats.flows_created += 1;
                self.keys_by_id.insert(id, key);
                FlowState::new(key, id, now)
            }
        };
        // keeps per-flow timestamps monotone under tolerated reordering
        let ts = now.max(fs.last_ts);

        if fs.window_packets() > 0 && ts - fs.window_start_ts >= self.config.interval_us {
            out.push(self.finalize(&fs));
            fs.start_window(ts);
        }
        fs.update(dir, p, ts);
        self.stats.packets_admitted += 1;

        if fs.is_terminated() {
            out.push(self.finalize(&fs));
            self.keys_by_id.remove(&fs.flow_id);
        } else {
            self.by_activity.insert((fs.last_ts, fs.flow_id));
            self.flows.insert(key, fs);
            self.stats.peak_live_flows = self.stats.peak_live_flows.max(self.flows.len());
        }

        out[first_new..].sort_by_key(|r| (r.start_time, r.flow_id));
    }

    /// Applies the reorder policy to an arriving timestamp and returns the
    /// timestamp to use.
    fn advance_clock(&mut self, ts: i64) -> i64 {
        match self.clock {
            None => {
                self.clock = Some(ts);
                ts
            }
            Some(clock) if ts >= clock => {
                self.clock = Some(ts);
                ts
            }
            Some(clock) if clock - ts <= self.config.reorder_tolerance_us => ts,
            Some(clock) => {
                self.stats.timestamp_anomalies += 1;
                clock
            }
        }
    }

    fn finalize(&mut self, fs: &FlowState) -> FlowRecord {
        if fs.handshake.is_disordered() {
            self.stats.handshake_anomalies += 1;
        }
        self.stats.records_emitted += 1;
        finalize_record(fs, &self.config)
    }

    fn remove_by_id(&mut self, flow_id: u64) -> Option<FlowState> {
        let key = self.keys_by_id.remove(&flow_id)?;
        let fs = self.flows.remove(&key)?;
        self.by_activity.remove(&(fs.last_ts, fs.flow_id));
        Some(fs)
    }

    /// Finalizes and removes every flow idle for at least the idle timeout
    /// at `now`. Records are ordered by flow id.
    pub fn evict_idle(&mut self, now: i64) -> Vec<FlowRecord> {
        let mut out = Vec::new();
        self.evict_idle_into(now, &mut out);
        out
    }

    fn evict_idle_into(&mut self, now: i64, out: &mut Vec<FlowRecord>) {
        let cutoff = now - self.config.idle_timeout_us;
        let mut expired: Vec<u64> = self
            .by_activity
            .iter()
            .take_while(|(last_ts, _)| *last_ts <= cutoff)
            .map(|(_, id)| *id)
            .collect();
        expired.sort_unstable();
        for id in expired {
            if let Some(fs) = self.remove_by_id(id) {
                out.push(self.finalize(&fs));
            }
        }
    }

    /// Flushes every live flow, ordered by flow id. The table is empty
    /// afterwards.
    pub fn close_all(&mut self) -> Vec<FlowRecord> {
        let mut ids: Vec<u64> = self.keys_by_id.keys().copied().collect();
        ids.sort_unstable();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            if let Some(fs) = self.remove_by_id(id) {
                out.push(self.finalize(&fs));
            }
        }
        out
    }
}
