use std::net::IpAddr;

use crate::features::{RetransmissionTracker, StateFlags};
use crate::packet::{PacketRecord, Protocol};

/// Bidirectional flow identity. The initiator is the source of the first
/// packet observed for the 5-tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub proto: Protocol,
    pub init_ip: IpAddr,
    pub init_port: u16,
    pub resp_ip: IpAddr,
    pub resp_port: u16,
}

impl FlowKey {
    /// Key with `p`'s source as initiator.
    pub fn from_packet(p: &PacketRecord) -> Self {
        FlowKey { proto: p.proto, init_ip: p.src_ip, init_port: p.src_port, resp_ip: p.dst_ip, resp_port: p.dst_port }
    }

    pub fn reversed(&self) -> Self {
        FlowKey {
            proto: self.proto,
            init_ip: self.resp_ip,
            init_port: self.resp_port,
            resp_ip: self.init_ip,
            resp_port: self.init_port,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Initiator to responder.
    Forward,
    Reverse,
}

impl Direction {
    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Reverse => 1,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// Statistics of one direction that reset with every record window.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirWindow {
    pub timestamps: Vec<i64>,
    pub bytes: u64,
    pub packets: u64,
    pub loss: u64,
}

/// Per-direction values that persist for the lifetime of the flow.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirSticky {
    pub ttl: Option<u8>,
    pub window: Option<u16>,
    pub tcp_base: Option<u32>,
    pub retrans: RetransmissionTracker,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Handshake {
    pub syn_ts: Option<i64>,
    pub synack_ts: Option<i64>,
    pub ack_ts: Option<i64>,
    /// Direction of the opening SYN.
    pub syn_dir: Option<Direction>,
}

impl Handshake {
    pub fn is_disordered(&self) -> bool {
        matches!(
            (self.syn_ts, self.synack_ts, self.ack_ts),
            (Some(s), Some(sa), Some(a)) if s > sa || sa > a
        )
    }
}

/// Accumulating state of one live flow.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub key: FlowKey,
    pub flow_id: u64,
    /// Number of records already emitted for this flow.
    pub rank: u32,
    pub start_ts: i64,
    pub last_ts: i64,
    pub window_start_ts: i64,
    pub window: [DirWindow; 2],
    pub sticky: [DirSticky; 2],
    pub handshake: Handshake,
    pub flags: StateFlags,
}

impl FlowState {
    pub fn new(key: FlowKey, flow_id: u64, ts: i64) -> Self {
        FlowState {
            key,
            flow_id,
            rank: 0,
            start_ts: ts,
            last_ts: ts,
            window_start_ts: ts,
            window: Default::default(),
            sticky: Default::default(),
            handshake: Handshake::default(),
            flags: StateFlags::default(),
        }
    }

    pub fn window_packets(&self) -> u64 {
        self.window[0].packets + self.window[1].packets
    }

    /// Starts a fresh record window at `ts`, keeping sticky state.
    pub fn start_window(&mut self, ts: i64) {
        for w in &mut self.window {
            w.timestamps.clear();
            w.bytes = 0;
            w.packets = 0;
            w.loss = 0;
        }
        self.window_start_ts = ts;
        self.rank += 1;
    }

    /// Folds packet `p`, observed at `ts`, into the state of direction `dir`.
    pub fn update(&mut self, dir: Direction, p: &PacketRecord, ts: i64) {
        let i = dir.index();
        self.last_ts = ts;
        let w = &mut self.window[i];
        w.timestamps.push(ts);
        w.bytes += u64::from(p.ip_bytes);
        w.packets += 1;

        let sticky = &mut self.sticky[i];
        sticky.ttl.get_or_insert(p.ttl);
        match dir {
            Direction::Forward => self.flags.init_seen = true,
            Direction::Reverse => self.flags.resp_seen = true,
        }

        let Some(tcp) = p.tcp else { return };
        sticky.window.get_or_insert(tcp.window);
        sticky.tcp_base.get_or_insert(tcp.seq);
        if sticky.retrans.observe(tcp.seq, p.payload_len) {
            w.loss += 1;
        }

        let f = tcp.flags;
        let hs = &mut self.handshake;
        if f.syn && !f.ack {
            if hs.syn_ts.is_none() {
                hs.syn_ts = Some(ts);
                hs.syn_dir = Some(dir);
                self.flags.syn_seen = true;
            }
        } else if f.syn && f.ack {
            if hs.syn_dir == Some(dir.opposite()) && hs.synack_ts.is_none() {
                hs.synack_ts = Some(ts);
                self.flags.synack_seen = true;
            }
        } else if f.ack && hs.synack_ts.is_some() && hs.ack_ts.is_none() && hs.syn_dir == Some(dir) {
            hs.ack_ts = Some(ts);
            self.flags.established = true;
        }

        // an ACK acknowledges a FIN the other side sent earlier
        if f.ack {
            match dir {
                Direction::Forward if self.flags.fin_resp => self.flags.fin_resp_acked = true,
                Direction::Reverse if self.flags.fin_init => self.flags.fin_init_acked = true,
                _ => {}
            }
        }
        if f.fin {
            match dir {
                Direction::Forward => self.flags.fin_init = true,
                Direction::Reverse => self.flags.fin_resp = true,
            }
        }
        if f.rst {
            self.flags.rst_seen = true;
        }
    }

    /// Whether TCP teardown (RST, or both FINs acknowledged) has completed.
    pub fn is_terminated(&self) -> bool {
        self.key.proto == Protocol::Tcp && (self.flags.rst_seen || self.flags.fin_complete())
    }
}
