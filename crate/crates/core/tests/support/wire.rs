//! Reference capture reader and frame decoder, written separately from the
//! library's so the two can be checked against each other.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefTcp {
    pub seq: u32,
    pub flags: u8,
    pub window: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefPacket {
    pub ts_us: i64,
    pub src: IpAddr,
    pub dst: IpAddr,
    pub sport: u16,
    pub dport: u16,
    /// IP protocol number as found on the wire.
    pub proto: u8,
    pub ip_bytes: u32,
    pub payload_len: u32,
    pub ttl: u8,
    pub tcp: Option<RefTcp>,
}

impl RefPacket {
    /// Protocol name as it appears in flow CSV files.
    pub fn proto_name(&self) -> String {
        proto_name(self.proto)
    }
}

pub fn proto_name(code: u8) -> String {
    match code {
        6 => "tcp".into(),
        17 => "udp".into(),
        1 | 58 => "icmp".into(),
        n => n.to_string(),
    }
}

pub struct RawCapture {
    pub link: u32,
    pub frames: Vec<(i64, Vec<u8>)>,
}

fn u16_at(b: &[u8], at: usize, big: bool) -> u16 {
    let x = [b[at], b[at + 1]];
    if big { u16::from_be_bytes(x) } else { u16::from_le_bytes(x) }
}

fn u32_at(b: &[u8], at: usize, big: bool) -> u32 {
    let x = [b[at], b[at + 1], b[at + 2], b[at + 3]];
    if big { u32::from_be_bytes(x) } else { u32::from_le_bytes(x) }
}

/// Classic PCAP only. A trailing partial record is dropped.
pub fn read_pcap(bytes: &[u8]) -> RawCapture {
    let (big, nanos) = match bytes[..4] {
        [0xd4, 0xc3, 0xb2, 0xa1] => (false, false),
        [0xa1, 0xb2, 0xc3, 0xd4] => (true, false),
        [0x4d, 0x3c, 0xb2, 0xa1] => (false, true),
        [0xa1, 0xb2, 0x3c, 0x4d] => (true, true),
        _ => panic!("not a classic pcap file"),
    };
    let link = u32_at(bytes, 20, big);
    let mut frames = Vec::new();
    let mut at = 24;
    while at + 16 <= bytes.len() {
        let sec = i64::from(u32_at(bytes, at, big));
        let frac = i64::from(u32_at(bytes, at + 4, big));
        let caplen = u32_at(bytes, at + 8, big) as usize;
        at += 16;
        if at + caplen > bytes.len() {
            break;
        }
        let us = if nanos { frac / 1000 } else { frac };
        frames.push((sec * 1_000_000 + us, bytes[at..at + caplen].to_vec()));
        at += caplen;
    }
    RawCapture { link, frames }
}

/// Decodes one frame. `None` for anything that is not a usable IP packet.
pub fn decode(ts_us: i64, frame: &[u8], link: u32) -> Option<RefPacket> {
    let ip = match link {
        101 => frame,
        1 => {
            if frame.len() < 14 {
                return None;
            }
            let mut ethertype = u16_at(frame, 12, true);
            let mut off = 14;
            if ethertype == 0x8100 || ethertype == 0x88a8 {
                if frame.len() < 18 {
                    return None;
                }
                ethertype = u16_at(frame, 16, true);
                off = 18;
                if ethertype == 0x8100 || ethertype == 0x88a8 {
                    return None;
                }
            }
            if ethertype != 0x0800 && ethertype != 0x86dd {
                return None;
            }
            &frame[off..]
        }
        other => panic!("link type {other} not handled by the reference decoder"),
    };
    match ip.first()? >> 4 {
        4 => ipv4(ts_us, ip),
        6 => ipv6(ts_us, ip),
        _ => None,
    }
}

fn ipv4(ts_us: i64, ip: &[u8]) -> Option<RefPacket> {
    if ip.len() < 20 {
        return None;
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    let total = u16_at(ip, 2, true);
    if ihl < 20 || ihl > ip.len() || usize::from(total) < ihl {
        return None;
    }
    if u16_at(ip, 6, true) & 0x1fff != 0 {
        return None;
    }
    let src = IpAddr::V4(Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]));
    let dst = IpAddr::V4(Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]));
    let declared = u32::from(total) - ihl as u32;
    let end = ip.len().min(usize::from(total));
    transport(ts_us, src, dst, ip[9], ip[8], u32::from(total), declared, &ip[ihl..end])
}

fn ipv6(ts_us: i64, ip: &[u8]) -> Option<RefPacket> {
    if ip.len() < 40 {
        return None;
    }
    let payload = u32::from(u16_at(ip, 4, true));
    let mut next = ip[6];
    let hop = ip[7];
    let mut a = [0u8; 16];
    let mut b = [0u8; 16];
    a.copy_from_slice(&ip[8..24]);
    b.copy_from_slice(&ip[24..40]);
    let (src, dst) = (IpAddr::V6(Ipv6Addr::from(a)), IpAddr::V6(Ipv6Addr::from(b)));
    let mut off = 40usize;
    loop {
        match next {
            0 | 43 | 60 => {
                let h = ip.get(off..off + 2)?;
                next = h[0];
                off += (usize::from(h[1]) + 1) * 8;
            }
            44 => {
                let h = ip.get(off..off + 8)?;
                if u16_at(h, 2, true) >> 3 != 0 {
                    return None;
                }
                next = h[0];
                off += 8;
            }
            _ => break,
        }
    }
    let ext = (off - 40) as u32;
    if ext > payload || off > ip.len() {
        return None;
    }
    let end = ip.len().min(40 + payload as usize);
    transport(ts_us, src, dst, next, hop, 40 + payload, payload - ext, &ip[off..end])
}

#[allow(clippy::too_many_arguments)]
fn transport(ts_us: i64, src: IpAddr, dst: IpAddr, proto: u8, ttl: u8, ip_bytes: u32, declared: u32, seg: &[u8]) -> Option<RefPacket> {
    let mut p = RefPacket { ts_us, src, dst, sport: 0, dport: 0, proto, ip_bytes, payload_len: declared, ttl, tcp: None };
    match proto {
        6 => {
            if seg.len() < 20 {
                return None;
            }
            let data_off = u32::from(seg[12] >> 4) * 4;
            if data_off < 20 || data_off > declared {
                return None;
            }
            p.sport = u16_at(seg, 0, true);
            p.dport = u16_at(seg, 2, true);
            p.payload_len = declared - data_off;
            p.tcp = Some(RefTcp { seq: u32_at(seg, 4, true), flags: seg[13] & 0x3f, window: u16_at(seg, 14, true) });
        }
        17 => {
            if seg.len() < 8 || declared < 8 {
                return None;
            }
            p.sport = u16_at(seg, 0, true);
            p.dport = u16_at(seg, 2, true);
            p.payload_len = declared - 8;
        }
        1 | 58 => p.payload_len = declared.saturating_sub(8),
        _ => {}
    }
    Some(p)
}

/// Reads a classic PCAP file and decodes every frame.
pub fn decode_capture(bytes: &[u8]) -> (Vec<RefPacket>, usize) {
    let raw = read_pcap(bytes);
    let mut skipped = 0;
    let mut out = Vec::new();
    for (ts, frame) in &raw.frames {
        match decode(*ts, frame, raw.link) {
            Some(p) => out.push(p),
            None => skipped += 1,
        }
    }
    (out, skipped)
}
