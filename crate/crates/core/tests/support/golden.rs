//! The committed pipeline fixture: a small capture with every kind of
//! conversation the exporter distinguishes, plus ground-truth rules for it.

use std::net::IpAddr;

use flowset_core::craft::{arp_frame, PcapWriter, SyntheticPacket, Transport};
use flowset_core::{LinkType, TcpFlags};

use super::oracle::{self, OracleConfig, OracleRule};

/// 2017-07-04T12:00:00Z
pub const T0: i64 = 1_499_169_600_000_000;
const MS: i64 = 1_000;
const S: i64 = 1_000_000;

/// Ground-truth times in the rules file are local times four hours behind
/// UTC.
pub const TZ_OFFSET_S: i64 = -4 * 3600;

pub const CAPTURE: &str = "golden.pcap";
pub const RULES: &str = "golden_rules.csv";
pub const FLOWS: &str = "golden_flows.csv";

pub const EXPECTED_COUNTS: [(&str, u64); 5] =
    [("Benign", 5), ("DoS", 1), ("FTP-Patator", 1), ("Probe", 1), ("SSH-Patator", 1)];

fn ip(s: &str) -> IpAddr {
    s.parse().unwrap()
}

struct Tcp {
    client: IpAddr,
    server: IpAddr,
    cport: u16,
    sport: u16,
    cseq: u32,
    sseq: u32,
}

impl Tcp {
    fn pkt(&mut self, ts: i64, from_client: bool, flags: u8, len: u16) -> SyntheticPacket {
        let (src, dst, sp, dp) = if from_client {
            (self.client, self.server, self.cport, self.sport)
        } else {
            (self.server, self.client, self.sport, self.cport)
        };
        let (seq, ack) = if from_client { (self.cseq, self.sseq) } else { (self.sseq, self.cseq) };
        let advance = u32::from(len) + u32::from(flags & (TcpFlags::SYN | TcpFlags::FIN) != 0);
        if from_client {
            self.cseq = self.cseq.wrapping_add(advance);
        } else {
            self.sseq = self.sseq.wrapping_add(advance);
        }
        let window = if from_client { 29_200 } else { 65_535 };
        let ttl = if from_client { 64 } else { 128 };
        SyntheticPacket::new(
            ts,
            src,
            dst,
            Transport::Tcp { src_port: sp, dst_port: dp, seq, ack, flags: TcpFlags::from_bits(flags), window, payload_len: len },
        )
        .with_ttl(ttl)
    }
}

fn udp(ts: i64, src: &str, sp: u16, dst: &str, dp: u16, len: u16) -> SyntheticPacket {
    SyntheticPacket::new(ts, ip(src), ip(dst), Transport::Udp { src_port: sp, dst_port: dp, payload_len: len })
}

fn icmp(ts: i64, src: &str, dst: &str, icmp_type: u8) -> SyntheticPacket {
    SyntheticPacket::new(ts, ip(src), ip(dst), Transport::Icmp { icmp_type, code: 0, payload_len: 56 }).with_ttl(63)
}

/// Frames of the fixture in capture order; `None` marks an ARP frame.
pub fn packets() -> Vec<Option<SyntheticPacket>> {
    const SYN: u8 = TcpFlags::SYN;
    const SA: u8 = TcpFlags::SYN | TcpFlags::ACK;
    const A: u8 = TcpFlags::ACK;
    const PA: u8 = TcpFlags::PSH | TcpFlags::ACK;
    const FA: u8 = TcpFlags::FIN | TcpFlags::ACK;
    const R: u8 = TcpFlags::RST;

    let mut web = Tcp { client: ip("192.168.10.5"), server: ip("192.168.10.50"), cport: 50_000, sport: 80, cseq: 1_000, sseq: 4_000_000_000 };
    let mut ftp = Tcp { client: ip("172.16.0.1"), server: ip("192.168.10.50"), cport: 44_321, sport: 21, cseq: 77_000, sseq: 900 };
    let mut ssh = Tcp { client: ip("172.16.0.1"), server: ip("192.168.10.51"), cport: 44_400, sport: 22, cseq: 5, sseq: 123_456 };

    let mut out: Vec<(i64, Option<SyntheticPacket>)> = Vec::new();
    let mut push = |p: SyntheticPacket| out.push((p.ts_us, Some(p)));

    // web: handshake, request, response, retransmitted response, graceful close
    push(web.pkt(T0, true, SYN, 0));
    push(web.pkt(T0 + 10 * MS, false, SA, 0));
    push(web.pkt(T0 + 15 * MS, true, A, 0));
    push(web.pkt(T0 + 20 * MS, true, PA, 320));
    push(web.pkt(T0 + 32 * MS, false, A, 0));
    push(web.pkt(T0 + 41 * MS, false, PA, 1_200));
    let resend = web.sseq;
    push(web.pkt(T0 + 43 * MS, false, PA, 800));
    push(web.pkt(T0 + 47 * MS, true, A, 0));
    web.sseq = resend;
    push(web.pkt(T0 + 250 * MS, false, PA, 800).with_vlan(10));
    push(web.pkt(T0 + 256 * MS, true, A, 0));
    push(web.pkt(T0 + 300 * MS, true, FA, 0));
    push(web.pkt(T0 + 306 * MS, false, A, 0));
    push(web.pkt(T0 + 311 * MS, false, FA, 0));
    push(web.pkt(T0 + 318 * MS, true, A, 0));

    // ftp: handshake, a few login attempts, reset by the client
    let f0 = T0 + S;
    push(ftp.pkt(f0, true, SYN, 0));
    push(ftp.pkt(f0 + 2 * MS, false, SA, 0));
    push(ftp.pkt(f0 + 3 * MS, true, A, 0));
    for i in 0..3 {
        let t = f0 + 100 * MS + i * 400 * MS;
        push(ftp.pkt(t, false, PA, 34));
        push(ftp.pkt(t + 50 * MS, true, PA, 16));
        push(ftp.pkt(t + 180 * MS, false, PA, 22));
    }
    push(ftp.pkt(f0 + 1_500 * MS, true, R, 0));

    // ssh: long-lived session crossing the 60 s interval, never closed
    let s0 = T0 + 5 * S;
    push(ssh.pkt(s0, true, SYN, 0));
    push(ssh.pkt(s0 + 40 * MS, false, SA, 0));
    push(ssh.pkt(s0 + 80 * MS, true, A, 0));
    for (t, from_client, len) in [(1, true, 21), (2, false, 41), (30, true, 512), (31, false, 64), (66, true, 96), (67, false, 128), (90, true, 48), (97, false, 48)] {
        push(ssh.pkt(s0 + t * S, from_client, PA, len));
    }

    // dns: two queries on one socket
    push(udp(T0 + 500 * MS, "192.168.10.5", 53_001, "8.8.8.8", 53, 33));
    push(udp(T0 + 530 * MS, "8.8.8.8", 53, "192.168.10.5", 53_001, 97));
    push(udp(T0 + 2_800 * MS, "192.168.10.5", 53_001, "8.8.8.8", 53, 35));
    push(udp(T0 + 2_826 * MS, "8.8.8.8", 53, "192.168.10.5", 53_001, 135));

    // ntp: one exchange, silence past the idle timeout, then another
    for (t, fwd) in [(2_000, true), (2_050, true), (2_051, false), (85_000, true), (85_004, false)] {
        let p = if fwd {
            udp(T0 + t * MS, "192.168.10.9", 123, "192.168.10.3", 123, 48)
        } else {
            udp(T0 + t * MS, "192.168.10.3", 123, "192.168.10.9", 123, 48)
        };
        push(p);
    }

    // ping pair over IPv4
    push(icmp(T0 + 3 * S, "192.168.10.5", "192.168.10.1", 8));
    push(icmp(T0 + 3 * S + 700, "192.168.10.1", "192.168.10.5", 0));
    push(icmp(T0 + 4 * S, "192.168.10.5", "192.168.10.1", 8).with_vlan(10));
    push(icmp(T0 + 4 * S + 650, "192.168.10.1", "192.168.10.5", 0));

    // IPv6 udp, one direction only
    for i in 0..3 {
        push(SyntheticPacket::new(
            T0 + 6 * S + i * 250 * MS,
            ip("fe80::1"),
            ip("ff02::fb"),
            Transport::Udp { src_port: 5353, dst_port: 5353, payload_len: 60 },
        ).with_ttl(255));
    }

    out.push((T0 + 700 * MS, None));
    out.push((T0 + 45 * S, None));
    out.sort_by_key(|(t, _)| *t);
    out.into_iter().map(|(_, p)| p).collect()
}

pub fn capture_bytes() -> Vec<u8> {
    let mut w = PcapWriter::new(Vec::new(), LinkType::Ethernet).unwrap();
    let frames = packets();
    let mut last_ts = T0;
    for p in &frames {
        match p {
            Some(p) => {
                w.write_frame(p.ts_us, &p.ethernet_frame()).unwrap();
                last_ts = p.ts_us;
            }
            None => w.write_frame(last_ts + 1, &arp_frame()).unwrap(),
        }
    }
    w.into_inner()
}

pub fn rules() -> Vec<OracleRule> {
    let utc = |local_s: i64| local_s * S - TZ_OFFSET_S * S;
    // local midnight-relative seconds on 2017-07-04
    let day = T0 / S - 12 * 3600;
    let at = |h: i64, m: i64, s: i64| utc(day + h * 3600 + m * 60 + s);
    vec![
        OracleRule { start: at(8, 0, 1), end: at(8, 0, 2), proto: Some("tcp"), src: Some(ip("172.16.0.1")), sport: None, dst: Some(ip("192.168.10.50")), dport: Some(21), label: "FTP-Patator" },
        OracleRule { start: at(8, 0, 0), end: at(8, 1, 0), proto: Some("tcp"), src: Some(ip("172.16.0.1")), sport: None, dst: Some(ip("192.168.10.51")), dport: Some(22), label: "SSH-Patator" },
        OracleRule { start: at(8, 0, 3), end: at(8, 0, 4), proto: Some("icmp"), src: Some(ip("192.168.10.1")), sport: None, dst: Some(ip("192.168.10.5")), dport: None, label: "Probe" },
        OracleRule { start: at(7, 0, 0), end: at(9, 0, 0), proto: None, src: Some(ip("172.16.0.1")), sport: None, dst: None, dport: None, label: "DoS" },
        // ends 1 µs before the web session starts
        OracleRule { start: at(7, 0, 0), end: T0 - 1, proto: Some("tcp"), src: None, sport: None, dst: Some(ip("192.168.10.50")), dport: Some(80), label: "Web Attack" },
    ]
}

fn local_text(utc_us: i64) -> String {
    let local = utc_us + TZ_OFFSET_S * S;
    let text = oracle::iso(local);
    text.trim_end_matches('Z').to_string()
}

/// The rules as ground-truth CSV with local (offset-free) times.
pub fn rules_csv() -> String {
    let mut out = String::from("start,end,proto,src_ip,src_port,dst_ip,dst_port,label\n");
    let opt = |v: Option<String>| v.unwrap_or_else(|| "*".into());
    for r in rules() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            local_text(r.start),
            local_text(r.end),
            r.proto.unwrap_or("any"),
            opt(r.src.map(|a| a.to_string())),
            opt(r.sport.map(|p| p.to_string())),
            opt(r.dst.map(|a| a.to_string())),
            opt(r.dport.map(|p| p.to_string())),
            r.label
        ));
    }
    out
}

/// Golden flow CSV: the oracle's records for the fixture, labelled by the
/// oracle's matcher.
pub fn flows_csv() -> String {
    let mut records = oracle::run_capture(&capture_bytes(), &OracleConfig::default());
    oracle::label(&mut records, &rules());
    oracle::csv(&records)
}
