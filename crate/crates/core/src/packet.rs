//! Normalized per-packet records produced by the capture decoder.

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

/// Transport protocol of a packet or flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Tcp,
    Udp,
    /// ICMP for IPv4 and ICMPv6 for IPv6.
    Icmp,
    Other(u8),
}

impl Protocol {
    pub fn from_ip_proto(code: u8) -> Self {
        match code {
            6 => Protocol::Tcp,
            17 => Protocol::Udp,
            1 | 58 => Protocol::Icmp,
            other => Protocol::Other(other),
        }
    }

    /// Whether packets of this protocol carry port numbers.
    pub fn has_ports(self) -> bool {
        matches!(self, Protocol::Tcp | Protocol::Udp)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Tcp => f.write_str("tcp"),
            Protocol::Udp => f.write_str("udp"),
            Protocol::Icmp => f.write_str("icmp"),
            Protocol::Other(code) => write!(f, "{code}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown protocol token `{0}`")]
pub struct UnknownProtocol(pub String);

impl FromStr for Protocol {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tcp" => Ok(Protocol::Tcp),
            "udp" => Ok(Protocol::Udp),
            "icmp" | "ipv6-icmp" | "icmpv6" => Ok(Protocol::Icmp),
            other => other
                .parse::<u8>()
                .map(Protocol::from_ip_proto)
                .map_err(|_| UnknownProtocol(s.to_string())),
        }
    }
}

/// TCP control bits relevant to flow tracking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TcpFlags {
    pub syn: bool,
    pub ack: bool,
    pub fin: bool,
    pub rst: bool,
    pub psh: bool,
    pub urg: bool,
}

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;

    pub fn from_bits(bits: u8) -> Self {
        TcpFlags {
            syn: bits & Self::SYN != 0,
            ack: bits & Self::ACK != 0,
            fin: bits & Self::FIN != 0,
            rst: bits & Self::RST != 0,
            psh: bits & Self::PSH != 0,
            urg: bits & Self::URG != 0,
        }
    }

    pub fn bits(self) -> u8 {
        let mut bits = 0;
        if self.fin {
            bits |= Self::FIN;
        }
        if self.syn {
            bits |= Self::SYN;
        }
        if self.rst {
            bits |= Self::RST;
        }
        if self.psh {
            bits |= Self::PSH;
        }
        if self.ack {
            bits |= Self::ACK;
        }
        if self.urg {
            bits |= Self::URG;
        }
        bits
    }
}

/// TCP header fields carried on a [`PacketRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpInfo {
    pub seq: u32,
    pub ack: u32,
    pub flags: TcpFlags,
    pub window: u16,
}

/// One decoded IP packet.
///
/// `ip_bytes` counts from the start of the IP header through the end of the
/// payload, as declared by the IP length fields. Portless protocols carry
/// zero ports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    /// Capture timestamp, microseconds since the Unix epoch.
    pub ts_us: i64,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Protocol,
    pub ip_bytes: u32,
    pub payload_len: u32,
    pub ttl: u8,
    pub tcp: Option<TcpInfo>,
}
