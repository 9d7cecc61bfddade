//! Synthetic workloads shared by the criterion benches.

use std::net::{IpAddr, Ipv4Addr};

use flowset_core::craft::{pcap_bytes, SyntheticPacket, Transport};
use flowset_core::{LinkType, TcpFlags};

/// `flows` concurrent TCP conversations with `per_flow` packets each,
/// interleaved round-robin 1 ms apart.
pub fn interleaved_tcp(flows: u32, per_flow: u32) -> Vec<SyntheticPacket> {
    let server = IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1));
    let mut out = Vec::with_capacity((flows * per_flow) as usize);
    let mut ts = 1_500_000_000_000_000i64;
    for k in 0..per_flow {
        for f in 0..flows {
            let client = IpAddr::V4(Ipv4Addr::from(0x0a01_0000 + f));
            let from_client = k % 2 == 0;
            let (src, dst) = if from_client { (client, server) } else { (server, client) };
            let (sp, dp) = if from_client { (40_000, 443) } else { (443, 40_000) };
            let flags = match k {
                0 => TcpFlags::SYN,
                1 => TcpFlags::SYN | TcpFlags::ACK,
                _ => TcpFlags::PSH | TcpFlags::ACK,
            };
            let payload_len = if k < 3 { 0 } else { 200 + (k % 7) as u16 * 100 };
            out.push(SyntheticPacket::new(
                ts,
                src,
                dst,
                Transport::Tcp { src_port: sp, dst_port: dp, seq: k * 1_000, ack: 0, flags: TcpFlags::from_bits(flags), window: 64_000, payload_len },
            ));
            ts += 1_000;
        }
    }
    out
}

pub fn capture(packets: &[SyntheticPacket]) -> Vec<u8> {
    pcap_bytes(packets, LinkType::Ethernet)
}
