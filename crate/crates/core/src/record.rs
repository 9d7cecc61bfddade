//! Flow records and the feature dictionary used for CSV output.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Utc};

use crate::packet::Protocol;

/// Label given to records no ground-truth rule matches.
pub const BENIGN: &str = "Benign";

/// Transaction state of a flow at the time a record is emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransactionState {
    /// Established (TCP) or bidirectional (other protocols).
    Con,
    /// Unidirectional or no recognizable setup.
    Int,
    /// Connection request seen without completed handshake.
    Req,
    /// Both FINs acknowledged.
    Fin,
    /// Reset.
    Rst,
}

impl fmt::Display for TransactionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransactionState::Con => "CON",
            TransactionState::Int => "INT",
            TransactionState::Req => "REQ",
            TransactionState::Fin => "FIN",
            TransactionState::Rst => "RST",
        })
    }
}

impl FromStr for TransactionState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CON" => Ok(TransactionState::Con),
            "INT" => Ok(TransactionState::Int),
            "REQ" => Ok(TransactionState::Req),
            "FIN" => Ok(TransactionState::Fin),
            "RST" => Ok(TransactionState::Rst),
            other => Err(format!("unknown state `{other}`")),
        }
    }
}

/// One status record for a flow window: identity, window bounds, the full
/// feature vector and the ground-truth label.
///
/// Times are microseconds since the Unix epoch; `*_ms` features are
/// milliseconds; loads are bits per second; byte counts are IP-layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub flow_id: u64,
    pub rank: u32,
    pub start_time: i64,
    pub last_time: i64,
    /// Seconds.
    pub dur: f64,
    pub src_addr: IpAddr,
    pub dst_addr: IpAddr,
    pub sport: u16,
    pub dport: u16,
    pub proto: Protocol,
    pub state: TransactionState,
    pub src_pkts: u64,
    pub dst_pkts: u64,
    pub src_bytes: u64,
    pub dst_bytes: u64,
    pub src_load: f64,
    pub dst_load: f64,
    pub s_mean_pkt_sz: f64,
    pub d_mean_pkt_sz: f64,
    pub s_int_pkt_ms: f64,
    pub s_int_pkt_max_ms: f64,
    pub s_int_pkt_min_ms: f64,
    pub d_int_pkt_ms: f64,
    pub d_int_pkt_max_ms: f64,
    pub d_int_pkt_min_ms: f64,
    pub src_jitter_ms: f64,
    pub dst_jitter_ms: f64,
    pub s_ttl: u8,
    pub d_ttl: u8,
    pub src_loss: u64,
    pub dst_loss: u64,
    pub src_win: u16,
    pub dst_win: u16,
    pub src_tcp_base: u32,
    pub dst_tcp_base: u32,
    pub syn_ack_ms: f64,
    pub ack_dat_ms: f64,
    pub tcp_rtt_ms: f64,
    pub active_mean_ms: f64,
    pub active_std_ms: f64,
    pub active_max_ms: f64,
    pub active_min_ms: f64,
    pub gt_label: String,
}

impl Default for FlowRecord {
    fn default() -> Self {
        let unspecified = IpAddr::V4(Ipv4Addr::UNSPECIFIED);
        FlowRecord {
            flow_id: 0,
            rank: 0,
            start_time: 0,
            last_time: 0,
            dur: 0.0,
            src_addr: unspecified,
            dst_addr: unspecified,
            sport: 0,
            dport: 0,
            proto: Protocol::Udp,
            state: TransactionState::Int,
            src_pkts: 0,
            dst_pkts: 0,
            src_bytes: 0,
            dst_bytes: 0,
            src_load: 0.0,
            dst_load: 0.0,
            s_mean_pkt_sz: 0.0,
            d_mean_pkt_sz: 0.0,
            s_int_pkt_ms: 0.0,
            s_int_pkt_max_ms: 0.0,
            s_int_pkt_min_ms: 0.0,
            d_int_pkt_ms: 0.0,
            d_int_pkt_max_ms: 0.0,
            d_int_pkt_min_ms: 0.0,
            src_jitter_ms: 0.0,
            dst_jitter_ms: 0.0,
            s_ttl: 0,
            d_ttl: 0,
            src_loss: 0,
            dst_loss: 0,
            src_win: 0,
            dst_win: 0,
            src_tcp_base: 0,
            dst_tcp_base: 0,
            syn_ack_ms: 0.0,
            ack_dat_ms: 0.0,
            tcp_rtt_ms: 0.0,
            active_mean_ms: 0.0,
            active_std_ms: 0.0,
            active_max_ms: 0.0,
            active_min_ms: 0.0,
            gt_label: String::new(),
        }
    }
}

macro_rules! features {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// Every exportable feature, in default column order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Feature {
            $($variant),+
        }

        impl Feature {
            pub const ALL: &'static [Feature] = &[$(Feature::$variant),+];

            /// Column name used in CSV headers.
            pub fn name(self) -> &'static str {
                match self {
                    $(Feature::$variant => $name),+
                }
            }

            pub fn from_name(name: &str) -> Option<Feature> {
                match name {
                    $($name => Some(Feature::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

features! {
    FlowId => "FlowID",
    Rank => "Rank",
    SrcAddr => "SrcAddr",
    Sport => "Sport",
    DstAddr => "DstAddr",
    Dport => "Dport",
    Proto => "Proto",
    State => "State",
    Dur => "Dur",
    SrcBytes => "SrcBytes",
    DstBytes => "DstBytes",
    STtl => "sTtl",
    DTtl => "dTtl",
    SrcLoss => "SrcLoss",
    DstLoss => "DstLoss",
    SrcLoad => "SrcLoad",
    DstLoad => "DstLoad",
    SrcPkts => "SrcPkts",
    DstPkts => "DstPkts",
    SrcWin => "SrcWin",
    DstWin => "DstWin",
    SrcTcpBase => "SrcTCPBase",
    DstTcpBase => "DstTCPBase",
    SMeanPktSz => "sMeanPktSz",
    DMeanPktSz => "dMeanPktSz",
    SrcJitter => "SrcJitter",
    DstJitter => "DstJitter",
    SIntPkt => "SIntPkt",
    SIntPktMax => "SIntPktMax",
    SIntPktMin => "SIntPktMin",
    DIntPkt => "DIntPkt",
    DIntPktMax => "DIntPktMax",
    DIntPktMin => "DIntPktMin",
    StartTime => "StartTime",
    LastTime => "LastTime",
    TcpRtt => "TcpRtt",
    SynAck => "SynAck",
    AckDat => "AckDat",
    Mean => "Mean",
    StdDev => "StdDev",
    Max => "Max",
    Min => "Min",
    GtLabel => "GTLabel",
}

/// Kind of value a feature column holds, as needed to parse it back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Integer,
    Float,
    Timestamp,
    Address,
    Text,
}

impl Feature {
    pub fn kind(self) -> FeatureKind {
        use Feature::*;
        match self {
            StartTime | LastTime => FeatureKind::Timestamp,
            SrcAddr | DstAddr => FeatureKind::Address,
            Proto | State | GtLabel => FeatureKind::Text,
            Dur | SrcLoad | DstLoad | SMeanPktSz | DMeanPktSz | SrcJitter | DstJitter | SIntPkt | SIntPktMax
            | SIntPktMin | DIntPkt | DIntPktMax | DIntPktMin | TcpRtt | SynAck | AckDat | Mean | StdDev | Max
            | Min => FeatureKind::Float,
            _ => FeatureKind::Integer,
        }
    }
}

/// Formats a timestamp as ISO-8601 UTC with microseconds.
pub fn format_timestamp(ts_us: i64) -> String {
    match DateTime::<Utc>::from_timestamp_micros(ts_us) {
        Some(t) => t.format("%Y-%m-%dT%H:%M:%S%.6fZ").to_string(),
        None => ts_us.to_string(),
    }
}

/// Parses the output of [`format_timestamp`] (the trailing `Z` is optional).
pub fn parse_timestamp(text: &str) -> Option<i64> {
    let trimmed = text.trim().trim_end_matches('Z');
    NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .map(|t| t.and_utc().timestamp_micros())
}

fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

impl FlowRecord {
    /// Text rendering of one feature as written to CSV.
    pub fn field_text(&self, feature: Feature) -> String {
        use Feature::*;
        match feature {
            FlowId => self.flow_id.to_string(),
            Rank => self.rank.to_string(),
            SrcAddr => self.src_addr.to_string(),
            Sport => self.sport.to_string(),
            DstAddr => self.dst_addr.to_string(),
            Dport => self.dport.to_string(),
            Proto => self.proto.to_string(),
            State => self.state.to_string(),
            Dur => fixed6(self.dur),
            SrcBytes => self.src_bytes.to_string(),
            DstBytes => self.dst_bytes.to_string(),
            STtl => self.s_ttl.to_string(),
            DTtl => self.d_ttl.to_string(),
            SrcLoss => self.src_loss.to_string(),
            DstLoss => self.dst_loss.to_string(),
            SrcLoad => fixed6(self.src_load),
            DstLoad => fixed6(self.dst_load),
            SrcPkts => self.src_pkts.to_string(),
            DstPkts => self.dst_pkts.to_string(),
            SrcWin => self.src_win.to_string(),
            DstWin => self.dst_win.to_string(),
            SrcTcpBase => self.src_tcp_base.to_string(),
            DstTcpBase => self.dst_tcp_base.to_string(),
            SMeanPktSz => fixed6(self.s_mean_pkt_sz),
            DMeanPktSz => fixed6(self.d_mean_pkt_sz),
            SrcJitter => fixed6(self.src_jitter_ms),
            DstJitter => fixed6(self.dst_jitter_ms),
            SIntPkt => fixed6(self.s_int_pkt_ms),
            SIntPktMax => fixed6(self.s_int_pkt_max_ms),
            SIntPktMin => fixed6(self.s_int_pkt_min_ms),
            DIntPkt => fixed6(self.d_int_pkt_ms),
            DIntPktMax => fixed6(self.d_int_pkt_max_ms),
            DIntPktMin => fixed6(self.d_int_pkt_min_ms),
            StartTime => format_timestamp(self.start_time),
            LastTime => format_timestamp(self.last_time),
            TcpRtt => fixed6(self.tcp_rtt_ms),
            SynAck => fixed6(self.syn_ack_ms),
            AckDat => fixed6(self.ack_dat_ms),
            Mean => fixed6(self.active_mean_ms),
            StdDev => fixed6(self.active_std_ms),
            Max => fixed6(self.active_max_ms),
            Min => fixed6(self.active_min_ms),
            GtLabel => self.gt_label.clone(),
        }
    }

    /// Sets one feature from its CSV text.
    pub fn set_field(&mut self, feature: Feature, text: &str) -> Result<(), String> {
        use Feature::*;
        fn num<T: FromStr>(text: &str) -> Result<T, String> {
            text.trim().parse().map_err(|_| format!("invalid number `{text}`"))
        }
        fn time(text: &str) -> Result<i64, String> {
            parse_timestamp(text).ok_or_else(|| format!("invalid timestamp `{text}`"))
        }
        match feature {
            FlowId => self.flow_id = num(text)?,
            Rank => self.rank = num(text)?,
            SrcAddr => self.src_addr = num(text)?,
            Sport => self.sport = num(text)?,
            DstAddr => self.dst_addr = num(text)?,
            Dport => self.dport = num(text)?,
            Proto => self.proto = text.parse().map_err(|e: crate::packet::UnknownProtocol| e.to_string())?,
            State => self.state = text.parse()?,
            Dur => self.dur = num(text)?,
            SrcBytes => self.src_bytes = num(text)?,
            DstBytes => self.dst_bytes = num(text)?,
            STtl => self.s_ttl = num(text)?,
            DTtl => self.d_ttl = num(text)?,
            SrcLoss => self.src_loss = num(text)?,
            DstLoss => self.dst_loss = num(text)?,
            SrcLoad => self.src_load = num(text)?,
            DstLoad => self.dst_load = num(text)?,
            SrcPkts => self.src_pkts = num(text)?,
            DstPkts => self.dst_pkts = num(text)?,
            SrcWin => self.src_win = num(text)?,
            DstWin => self.dst_win = num(text)?,
            SrcTcpBase => self.src_tcp_base = num(text)?,
            DstTcpBase => self.dst_tcp_base = num(text)?,
            SMeanPktSz => self.s_mean_pkt_sz = num(text)?,
            DMeanPktSz => self.d_mean_pkt_sz = num(text)?,
            SrcJitter => self.src_jitter_ms = num(text)?,
            DstJitter => self.dst_jitter_ms = num(text)?,
            SIntPkt => self.s_int_pkt_ms = num(text)?,
            SIntPktMax => self.s_int_pkt_max_ms = num(text)?,
            SIntPktMin => self.s_int_pkt_min_ms = num(text)?,
            DIntPkt => self.d_int_pkt_ms = num(text)?,
            DIntPktMax => self.d_int_pkt_max_ms = num(text)?,
            DIntPktMin => self.d_int_pkt_min_ms = num(text)?,
            StartTime => self.start_time = time(text)?,
            LastTime => self.last_time = time(text)?,
            TcpRtt => self.tcp_rtt_ms = num(text)?,
            SynAck => self.syn_ack_ms = num(text)?,
            AckDat => self.ack_dat_ms = num(text)?,
            Mean => self.active_mean_ms = num(text)?,
            StdDev => self.active_std_ms = num(text)?,
            Max => self.active_max_ms = num(text)?,
            Min => self.active_min_ms = num(text)?,
            GtLabel => self.gt_label = text.to_string(),
        }
        Ok(())
    }
}
