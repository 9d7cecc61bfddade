//! Link, network and transport header decoding for a single captured frame.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use crate::packet::{PacketRecord, Protocol, TcpFlags, TcpInfo};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;

const ETHERNET_HEADER_LEN: usize = 14;
const VLAN_TAG_LEN: usize = 4;
const IPV6_HEADER_LEN: usize = 40;

/// Capture link types understood by the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkType {
    Ethernet,
    RawIp,
}

impl LinkType {
    pub const ETHERNET: u32 = 1;
    pub const RAW: u32 = 101;

    pub fn from_code(code: u32) -> Result<Self, DecodeError> {
        match code {
            Self::ETHERNET => Ok(LinkType::Ethernet),
            Self::RAW => Ok(LinkType::RawIp),
            other => Err(DecodeError::UnsupportedLinkType(other)),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            LinkType::Ethernet => Self::ETHERNET,
            LinkType::RawIp => Self::RAW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unsupported link type {0}; only Ethernet (1) and raw IP (101) are handled")]
    UnsupportedLinkType(u32),
}

/// Why a frame did not yield a [`PacketRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    NonIp,
    /// Non-initial IP fragment.
    Fragment,
    /// Stacked (QinQ) VLAN tags.
    StackedVlan,
    /// Header lengths inconsistent with the frame.
    Malformed,
    /// Final frame cut short by end of file.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Packet(PacketRecord),
    Skip(SkipReason),
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes one frame captured on `link` at `ts_us`.
pub fn decode_packet(ts_us: i64, frame: &[u8], link: LinkType) -> Decoded {
    match link {
        LinkType::Ethernet => decode_ethernet(ts_us, frame),
        LinkType::RawIp => match frame.first().map(|b| b >> 4) {
            Some(4) => decode_ipv4(ts_us, frame),
            Some(6) => decode_ipv6(ts_us, frame),
            Some(_) => Decoded::Skip(SkipReason::NonIp),
            None => Decoded::Skip(SkipReason::Malformed),
        },
    }
}

fn decode_ethernet(ts_us: i64, frame: &[u8]) -> Decoded {
    if frame.len() < ETHERNET_HEADER_LEN {
        return Decoded::Skip(SkipReason::Malformed);
    }
    let mut ethertype = be16(frame, 12);
    let mut offset = ETHERNET_HEADER_LEN;
    if ethertype == ETHERTYPE_QINQ {
        return Decoded::Skip(SkipReason::StackedVlan);
    }
    if ethertype == ETHERTYPE_VLAN {
        if frame.len() < offset + VLAN_TAG_LEN {
            return Decoded::Skip(SkipReason::Malformed);
        }
        ethertype = be16(frame, offset + 2);
        offset += VLAN_TAG_LEN;
        if ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
            return Decoded::Skip(SkipReason::StackedVlan);
        }
    }
    match ethertype {
        ETHERTYPE_IPV4 => decode_ipv4(ts_us, &frame[offset..]),
        ETHERTYPE_IPV6 => decode_ipv6(ts_us, &frame[offset..]),
        _ => Decoded::Skip(SkipReason::NonIp),
    }
}

fn decode_ipv4(ts_us: i64, ip: &[u8]) -> Decoded {
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return Decoded::Skip(SkipReason::Malformed);
    }
    let header_len = usize::from(ip[0] & 0x0f) * 4;
    let total_len = usize::from(be16(ip, 2));
    if header_len < 20 || header_len > ip.len() || total_len < header_len {
        return Decoded::Skip(SkipReason::Malformed);
    }
    let fragment_offset = be16(ip, 6) & 0x1fff;
    if fragment_offset != 0 {
        return Decoded::Skip(SkipReason::Fragment);
    }
    let ttl = ip[8];
    let proto_code = ip[9];
    let src = IpAddr::V4(Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]));
    let dst = IpAddr::V4(Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]));
    let declared_payload = total_len - header_len;
    let captured = &ip[header_len..ip.len().min(total_len)];
    decode_transport(
        ts_us,
        TransportInput {
            src,
            dst,
            ttl,
            proto_code,
            ip_bytes: total_len as u32,
            declared_payload,
            captured,
        },
    )
}

fn decode_ipv6(ts_us: i64, ip: &[u8]) -> Decoded {
    if ip.len() < IPV6_HEADER_LEN || ip[0] >> 4 != 6 {
        return Decoded::Skip(SkipReason::Malformed);
    }
    let payload_len = usize::from(be16(ip, 4));
    let mut next = ip[6];
    if payload_len == 0 && next == 0 {
        // jumbogram: the real length lives in a hop-by-hop option
        return Decoded::Skip(SkipReason::Malformed);
    }
    let hop_limit = ip[7];
    let mut src = [0u8; 16];
    let mut dst = [0u8; 16];
    src.copy_from_slice(&ip[8..24]);
    dst.copy_from_slice(&ip[24..40]);

    let end = ip.len().min(IPV6_HEADER_LEN + payload_len);
    let mut offset = IPV6_HEADER_LEN;
    loop {
        match next {
            // hop-by-hop, routing, destination options
            0 | 43 | 60 => {
                if offset + 8 > end {
                    return Decoded::Skip(SkipReason::Malformed);
                }
                let len = (usize::from(ip[offset + 1]) + 1) * 8;
                next = ip[offset];
                offset += len;
            }
            44 => {
                if offset + 8 > end {
                    return Decoded::Skip(SkipReason::Malformed);
                }
                if be16(ip, offset + 2) >> 3 != 0 {
                    return Decoded::Skip(SkipReason::Fragment);
                }
                next = ip[offset];
                offset += 8;
            }
            _ => break,
        }
        if offset > IPV6_HEADER_LEN + payload_len {
            return Decoded::Skip(SkipReason::Malformed);
        }
    }
    decode_transport(
        ts_us,
        TransportInput {
            src: IpAddr::V6(Ipv6Addr::from(src)),
            dst: IpAddr::V6(Ipv6Addr::from(dst)),
            ttl: hop_limit,
            proto_code: next,
            ip_bytes: (IPV6_HEADER_LEN + payload_len) as u32,
            declared_payload: IPV6_HEADER_LEN + payload_len - offset,
            captured: &ip[offset.min(end)..end],
        },
    )
}

struct TransportInput<'a> {
    src: IpAddr,
    dst: IpAddr,
    ttl: u8,
    proto_code: u8,
    ip_bytes: u32,
    /// Transport bytes according to the IP length fields.
    declared_payload: usize,
    /// Transport bytes actually present in the frame.
    captured: &'a [u8],
}

fn decode_transport(ts_us: i64, t: TransportInput<'_>) -> Decoded {
    let proto = Protocol::from_ip_proto(t.proto_code);
    let mut record = PacketRecord {
        ts_us,
        src_ip: t.src,
        dst_ip: t.dst,
        src_port: 0,
        dst_port: 0,
        proto,
        ip_bytes: t.ip_bytes,
        payload_len: 0,
        ttl: t.ttl,
        tcp: None,
    };
    let seg = t.captured;
    match proto {
        Protocol::Tcp => {
            if seg.len() < 20 {
                return Decoded::Skip(SkipReason::Malformed);
            }
            let data_offset = usize::from(seg[12] >> 4) * 4;
            if data_offset < 20 || data_offset > t.declared_payload {
                return Decoded::Skip(SkipReason::Malformed);
            }
            record.src_port = be16(seg, 0);
            record.dst_port = be16(seg, 2);
            record.payload_len = (t.declared_payload - data_offset) as u32;
            record.tcp = Some(TcpInfo {
                seq: be32(seg, 4),
                ack: be32(seg, 8),
                flags: TcpFlags::from_bits(seg[13]),
                window: be16(seg, 14),
            });
        }
        Protocol::Udp => {
            if seg.len() < 8 || t.declared_payload < 8 {
                return Decoded::Skip(SkipReason::Malformed);
            }
            record.src_port = be16(seg, 0);
            record.dst_port = be16(seg, 2);
            record.payload_len = (t.declared_payload - 8) as u32;
        }
        Protocol::Icmp => {
            record.payload_len = t.declared_payload.saturating_sub(8) as u32;
        }
        Protocol::Other(_) => {
            record.payload_len = t.declared_payload as u32;
        }
    }
    Decoded::Packet(record)
}
