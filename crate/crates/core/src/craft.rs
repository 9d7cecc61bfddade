//! Synthetic packet construction and capture writing.
//!
//! Used to build fixtures, randomized test captures and benchmark inputs.
//! Frames are well-formed apart from transport checksums, which are left zero.

use std::io::{self, Write};
use std::net::IpAddr;

use crate::decode::LinkType;
use crate::packet::TcpFlags;

const SRC_MAC: [u8; 6] = [0x02, 0x00, 0x00, 0x00, 0x00, 0x01];
const DST_MAC: [u8; 6] = [0x02, 0x00, 0x00, 0x00, 0x00, 0x02];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Tcp {
        src_port: u16,
        dst_port: u16,
        seq: u32,
        ack: u32,
        flags: TcpFlags,
        window: u16,
        payload_len: u16,
    },
    Udp {
        src_port: u16,
        dst_port: u16,
        payload_len: u16,
    },
    Icmp {
        icmp_type: u8,
        code: u8,
        payload_len: u16,
    },
    Other {
        proto: u8,
        payload_len: u16,
    },
}

impl Transport {
    fn proto_code(&self, ipv6: bool) -> u8 {
        match self {
            Transport::Tcp { .. } => 6,
            Transport::Udp { .. } => 17,
            Transport::Icmp { .. } if ipv6 => 58,
            Transport::Icmp { .. } => 1,
            Transport::Other { proto, .. } => *proto,
        }
    }

    fn encode(&self) -> Vec<u8> {
        match *self {
            Transport::Tcp { src_port, dst_port, seq, ack, flags, window, payload_len } => {
                let mut out = Vec::with_capacity(20 + usize::from(payload_len));
                out.extend_from_slice(&src_port.to_be_bytes());
                out.extend_from_slice(&dst_port.to_be_bytes());
                out.extend_from_slice(&seq.to_be_bytes());
                out.extend_from_slice(&ack.to_be_bytes());
                out.push(5 << 4);
                out.push(flags.bits());
                out.extend_from_slice(&window.to_be_bytes());
                out.extend_from_slice(&[0, 0, 0, 0]);
                fill_payload(&mut out, payload_len);
                out
            }
            Transport::Udp { src_port, dst_port, payload_len } => {
                let mut out = Vec::with_capacity(8 + usize::from(payload_len));
                out.extend_from_slice(&src_port.to_be_bytes());
                out.extend_from_slice(&dst_port.to_be_bytes());
                out.extend_from_slice(&(8 + payload_len).to_be_bytes());
                out.extend_from_slice(&[0, 0]);
                fill_payload(&mut out, payload_len);
                out
            }
            Transport::Icmp { icmp_type, code, payload_len } => {
                let mut out = vec![icmp_type, code, 0, 0, 0, 1, 0, 1];
                fill_payload(&mut out, payload_len);
                out
            }
            Transport::Other { payload_len, .. } => {
                let mut out = Vec::new();
                fill_payload(&mut out, payload_len);
                out
            }
        }
    }
}

fn fill_payload(out: &mut Vec<u8>, len: u16) {
    out.extend((0..len).map(|i| (i % 251) as u8));
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u32::from(u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)])))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// A packet description that can be rendered to frame bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPacket {
    pub ts_us: i64,
    pub src: IpAddr,
    pub dst: IpAddr,
    pub ttl: u8,
    pub vlan: Option<u16>,
    pub transport: Transport,
}

impl SyntheticPacket {
    /// Panics if `src` and `dst` are of different address families.
    pub fn new(ts_us: i64, src: IpAddr, dst: IpAddr, transport: Transport) -> Self {
        assert_eq!(src.is_ipv4(), dst.is_ipv4(), "mixed address families");
        SyntheticPacket { ts_us, src, dst, ttl: 64, vlan: None, transport }
    }

    pub fn with_ttl(mut self, ttl: u8) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn with_vlan(mut self, vlan: u16) -> Self {
        self.vlan = Some(vlan);
        self
    }

    /// The IP packet (header through payload).
    pub fn raw_ip_packet(&self) -> Vec<u8> {
        let body = self.transport.encode();
        match (self.src, self.dst) {
            (IpAddr::V4(src), IpAddr::V4(dst)) => {
                let total = (20 + body.len()) as u16;
                let mut out = Vec::with_capacity(usize::from(total));
                out.extend_from_slice(&[0x45, 0]);
                out.extend_from_slice(&total.to_be_bytes());
                out.extend_from_slice(&[0, 0, 0x40, 0]);
                out.push(self.ttl);
                out.push(self.transport.proto_code(false));
                out.extend_from_slice(&[0, 0]);
                out.extend_from_slice(&src.octets());
                out.extend_from_slice(&dst.octets());
                let csum = ipv4_checksum(&out);
                out[10..12].copy_from_slice(&csum.to_be_bytes());
                out.extend_from_slice(&body);
                out
            }
            (IpAddr::V6(src), IpAddr::V6(dst)) => {
                let mut out = Vec::with_capacity(40 + body.len());
                out.extend_from_slice(&[0x60, 0, 0, 0]);
                out.extend_from_slice(&(body.len() as u16).to_be_bytes());
                out.push(self.transport.proto_code(true));
                out.push(self.ttl);
                out.extend_from_slice(&src.octets());
                out.extend_from_slice(&dst.octets());
                out.extend_from_slice(&body);
                out
            }
            _ => unreachable!("address families checked at construction"),
        }
    }

    /// The packet wrapped in an Ethernet II header (with an 802.1Q tag when
    /// `vlan` is set).
    pub fn ethernet_frame(&self) -> Vec<u8> {
        let ip = self.raw_ip_packet();
        let mut out = Vec::with_capacity(18 + ip.len());
        out.extend_from_slice(&DST_MAC);
        out.extend_from_slice(&SRC_MAC);
        if let Some(vid) = self.vlan {
            out.extend_from_slice(&0x8100u16.to_be_bytes());
            out.extend_from_slice(&(vid & 0x0fff).to_be_bytes());
        }
        let ethertype: u16 = if self.src.is_ipv4() { 0x0800 } else { 0x86dd };
        out.extend_from_slice(&ethertype.to_be_bytes());
        out.extend_from_slice(&ip);
        out
    }

    pub fn frame(&self, link: LinkType) -> Vec<u8> {
        match link {
            LinkType::Ethernet => self.ethernet_frame(),
            LinkType::RawIp => self.raw_ip_packet(),
        }
    }
}

/// An Ethernet ARP request (who-has 10.0.0.2 tell 10.0.0.1).
pub fn arp_frame() -> Vec<u8> {
    let mut out = Vec::with_capacity(42);
    out.extend_from_slice(&[0xff; 6]);
    out.extend_from_slice(&SRC_MAC);
    out.extend_from_slice(&0x0806u16.to_be_bytes());
    out.extend_from_slice(&[0, 1, 0x08, 0, 6, 4, 0, 1]);
    out.extend_from_slice(&SRC_MAC);
    out.extend_from_slice(&[10, 0, 0, 1]);
    out.extend_from_slice(&[0; 6]);
    out.extend_from_slice(&[10, 0, 0, 2]);
    out
}

/// Writes little-endian, microsecond-resolution classic PCAP.
pub struct PcapWriter<W: Write> {
    out: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut out: W, link: LinkType) -> io::Result<Self> {
        out.write_all(&0xa1b2_c3d4u32.to_le_bytes())?;
        out.write_all(&2u16.to_le_bytes())?;
        out.write_all(&4u16.to_le_bytes())?;
        out.write_all(&0i32.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&65535u32.to_le_bytes())?;
        out.write_all(&link.code().to_le_bytes())?;
        Ok(PcapWriter { out })
    }

    pub fn write_frame(&mut self, ts_us: i64, frame: &[u8]) -> io::Result<()> {
        let secs = ts_us.div_euclid(1_000_000) as u32;
        let micros = ts_us.rem_euclid(1_000_000) as u32;
        self.out.write_all(&secs.to_le_bytes())?;
        self.out.write_all(&micros.to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(frame)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Writes little-endian PCAPNG with a single interface.
///
/// `tsresol` is the raw `if_tsresol` option byte (6 = microseconds,
/// 9 = nanoseconds).
pub struct PcapNgWriter<W: Write> {
    out: W,
    units_per_sec: u64,
}

impl<W: Write> PcapNgWriter<W> {
    pub fn new(mut out: W, link: LinkType, tsresol: u8) -> io::Result<Self> {
        assert!(tsresol & 0x80 == 0 && tsresol <= 9, "decimal resolutions up to ns only");
        // section header block
        let mut shb = Vec::new();
        shb.extend_from_slice(&0x1a2b_3c4du32.to_le_bytes());
        shb.extend_from_slice(&1u16.to_le_bytes());
        shb.extend_from_slice(&0u16.to_le_bytes());
        shb.extend_from_slice(&(-1i64).to_le_bytes());
        write_block(&mut out, 0x0a0d_0d0a, &shb)?;

        let mut idb = Vec::new();
        idb.extend_from_slice(&(link.code() as u16).to_le_bytes());
        idb.extend_from_slice(&0u16.to_le_bytes());
        idb.extend_from_slice(&65535u32.to_le_bytes());
        // if_tsresol option, padded to 4 bytes, then opt_endofopt
        idb.extend_from_slice(&9u16.to_le_bytes());
        idb.extend_from_slice(&1u16.to_le_bytes());
        idb.extend_from_slice(&[tsresol, 0, 0, 0]);
        idb.extend_from_slice(&[0, 0, 0, 0]);
        write_block(&mut out, 1, &idb)?;
        Ok(PcapNgWriter { out, units_per_sec: 10u64.pow(u32::from(tsresol)) })
    }

    pub fn write_frame(&mut self, ts_us: i64, frame: &[u8]) -> io::Result<()> {
        let units = (ts_us as u128 * u128::from(self.units_per_sec) / 1_000_000) as u64;
        let mut epb = Vec::with_capacity(20 + frame.len() + 3);
        epb.extend_from_slice(&0u32.to_le_bytes());
        epb.extend_from_slice(&((units >> 32) as u32).to_le_bytes());
        epb.extend_from_slice(&(units as u32).to_le_bytes());
        epb.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        epb.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        epb.extend_from_slice(frame);
        while epb.len() % 4 != 0 {
            epb.push(0);
        }
        write_block(&mut self.out, 6, &epb)
    }

    /// Writes a block type the reader is expected to ignore.
    pub fn write_opaque_block(&mut self, block_type: u32, body: &[u8]) -> io::Result<()> {
        let mut padded = body.to_vec();
        while !padded.len().is_multiple_of(4) {
            padded.push(0);
        }
        write_block(&mut self.out, block_type, &padded)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn write_block<W: Write>(out: &mut W, block_type: u32, body: &[u8]) -> io::Result<()> {
    let total = (12 + body.len()) as u32;
    out.write_all(&block_type.to_le_bytes())?;
    out.write_all(&total.to_le_bytes())?;
    out.write_all(body)?;
    out.write_all(&total.to_le_bytes())
}

/// Renders `packets` into an in-memory classic PCAP file.
pub fn pcap_bytes(packets: &[SyntheticPacket], link: LinkType) -> Vec<u8> {
    let mut writer = PcapWriter::new(Vec::new(), link).expect("writing to a Vec cannot fail");
    for p in packets {
        writer.write_frame(p.ts_us, &p.frame(link)).expect("writing to a Vec cannot fail");
    }
    writer.into_inner()
}
