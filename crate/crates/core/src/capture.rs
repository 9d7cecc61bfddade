//! Streaming readers for classic PCAP and PCAPNG capture files.
//!
//! A [`Capture`] yields decoded [`PacketRecord`]s in file order. Frames that
//! do not decode to an IP packet are counted in [`CaptureTotals`] and
//! skipped. Only Enhanced Packet Blocks and Interface Description Blocks are
//! honored in PCAPNG files; every other block type is ignored.

use std::fs::File;
use std::io::{self, BufReader, ErrorKind, Read};
use std::path::{Path, PathBuf};

use crate::decode::{decode_packet, DecodeError, Decoded, LinkType, SkipReason};
use crate::packet::PacketRecord;

const PCAPNG_SHB: [u8; 4] = [0x0a, 0x0d, 0x0d, 0x0a];
const PCAPNG_IDB: u32 = 1;
const PCAPNG_EPB: u32 = 6;
const PCAPNG_BYTE_ORDER_MAGIC: u32 = 0x1a2b_3c4d;

/// Frames larger than this are treated as file corruption.
const MAX_FRAME_LEN: usize = 256 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("cannot open capture {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unsupported capture format (magic {0:02x?})")]
    UnsupportedFormat([u8; 4]),
    #[error("capture file header is truncated")]
    TruncatedHeader,
    #[error(transparent)]
    Link(#[from] DecodeError),
    #[error("corrupt capture: {0}")]
    Corrupt(String),
    #[error("read error: {0}")]
    Io(#[from] io::Error),
}

/// Frame accounting for one capture. `decoded + skipped == read` always holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptureTotals {
    pub read: u64,
    pub decoded: u64,
    pub skipped: u64,
    pub non_ip: u64,
    pub fragments: u64,
    pub stacked_vlan: u64,
    pub malformed: u64,
    pub truncated: u64,
}

impl CaptureTotals {
    fn record_skip(&mut self, reason: SkipReason) {
        self.skipped += 1;
        match reason {
            SkipReason::NonIp => self.non_ip += 1,
            SkipReason::Fragment => self.fragments += 1,
            SkipReason::StackedVlan => self.stacked_vlan += 1,
            SkipReason::Malformed => self.malformed += 1,
            SkipReason::Truncated => self.truncated += 1,
        }
    }

    pub fn merge(&mut self, other: &CaptureTotals) {
        self.read += other.read;
        self.decoded += other.decoded;
        self.skipped += other.skipped;
        self.non_ip += other.non_ip;
        self.fragments += other.fragments;
        self.stacked_vlan += other.stacked_vlan;
        self.malformed += other.malformed;
        self.truncated += other.truncated;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u16(self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        match self {
            Endian::Little => u16::from_le_bytes(a),
            Endian::Big => u16::from_be_bytes(a),
        }
    }

    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(a),
            Endian::Big => u32::from_be_bytes(a),
        }
    }

    fn u64(self, b: &[u8]) -> u64 {
        let mut a = [0u8; 8];
        a.copy_from_slice(&b[..8]);
        match self {
            Endian::Little => u64::from_le_bytes(a),
            Endian::Big => u64::from_be_bytes(a),
        }
    }
}

#[derive(Debug, Clone)]
struct Interface {
    link: Result<LinkType, u32>,
    /// Timestamp units per second.
    units_per_sec: u64,
    /// if_tsoffset, seconds.
    offset_s: i64,
}

#[derive(Debug)]
enum Format {
    Pcap { endian: Endian, nanos: bool, link: LinkType },
    PcapNg { endian: Endian, interfaces: Vec<Interface> },
}

/// Outcome of trying to fill a buffer.
enum Fill {
    Complete,
    Eof,
    Partial,
}

fn fill<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<Fill> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(if filled == buf.len() {
        Fill::Complete
    } else if filled == 0 {
        Fill::Eof
    } else {
        Fill::Partial
    })
}

/// Iterator over the IP packets of one capture file.
pub struct Capture<R> {
    reader: R,
    format: Format,
    totals: CaptureTotals,
    frame: Vec<u8>,
    done: bool,
}

/// Opens a capture file, detecting classic PCAP or PCAPNG by magic number.
pub fn open_capture(path: impl AsRef<Path>) -> Result<Capture<BufReader<File>>, CaptureError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CaptureError::Open { path: path.to_path_buf(), source })?;
    Capture::new(BufReader::with_capacity(1 << 16, file))
}

impl<R: Read> Capture<R> {
    pub fn new(mut reader: R) -> Result<Self, CaptureError> {
        let mut magic = [0u8; 4];
        match fill(&mut reader, &mut magic)? {
            Fill::Complete => {}
            _ => return Err(CaptureError::UnsupportedFormat(magic)),
        }
        let format = match magic {
            [0xd4, 0xc3, 0xb2, 0xa1] => Self::pcap_header(&mut reader, Endian::Little, false)?,
            [0xa1, 0xb2, 0xc3, 0xd4] => Self::pcap_header(&mut reader, Endian::Big, false)?,
            [0x4d, 0x3c, 0xb2, 0xa1] => Self::pcap_header(&mut reader, Endian::Little, true)?,
            [0xa1, 0xb2, 0x3c, 0x4d] => Self::pcap_header(&mut reader, Endian::Big, true)?,
            PCAPNG_SHB => {
                let endian = Self::section_header_rest(&mut reader)?;
                Format::PcapNg { endian, interfaces: Vec::new() }
            }
            other => return Err(CaptureError::UnsupportedFormat(other)),
        };
        Ok(Capture { reader, format, totals: CaptureTotals::default(), frame: Vec::new(), done: false })
    }

    fn pcap_header(reader: &mut R, endian: Endian, nanos: bool) -> Result<Format, CaptureError> {
        let mut rest = [0u8; 20];
        match fill(reader, &mut rest)? {
            Fill::Complete => {}
            _ => return Err(CaptureError::TruncatedHeader),
        }
        // upper bits of the link-type field carry FCS metadata
        let link = LinkType::from_code(endian.u32(&rest[16..20]) & 0xffff)?;
        Ok(Format::Pcap { endian, nanos, link })
    }

    /// Reads the remainder of a section header block whose type has already
    /// been consumed, returning the section byte order.
    fn section_header_rest(reader: &mut R) -> Result<Endian, CaptureError> {
        let mut head = [0u8; 8];
        match fill(reader, &mut head)? {
            Fill::Complete => {}
            _ => return Err(CaptureError::TruncatedHeader),
        }
        let endian = if u32::from_le_bytes([head[4], head[5], head[6], head[7]]) == PCAPNG_BYTE_ORDER_MAGIC {
            Endian::Little
        } else if u32::from_be_bytes([head[4], head[5], head[6], head[7]]) == PCAPNG_BYTE_ORDER_MAGIC {
            Endian::Big
        } else {
            return Err(CaptureError::Corrupt("bad section byte-order magic".into()));
        };
        let total = endian.u32(&head[0..4]) as usize;
        if total < 28 || !total.is_multiple_of(4) {
            return Err(CaptureError::Corrupt(format!("section header length {total}")));
        }
        let mut rest = vec![0u8; total - 12];
        match fill(reader, &mut rest)? {
            Fill::Complete => Ok(endian),
            _ => Err(CaptureError::TruncatedHeader),
        }
    }

    pub fn totals(&self) -> CaptureTotals {
        self.totals
    }

    fn truncated(&mut self) {
        self.totals.read += 1;
        self.totals.record_skip(SkipReason::Truncated);
        self.done = true;
    }

    /// Reads the next captured frame into `self.frame`, returning its
    /// timestamp and link type, or `None` at end of file.
    fn next_frame(&mut self) -> Result<Option<(i64, LinkType)>, CaptureError> {
        match &mut self.format {
            Format::Pcap { endian, nanos, link } => {
                let (endian, nanos, link) = (*endian, *nanos, *link);
                let mut hdr = [0u8; 16];
                match fill(&mut self.reader, &mut hdr)? {
                    Fill::Complete => {}
                    Fill::Eof => return Ok(None),
                    Fill::Partial => {
                        self.truncated();
                        return Ok(None);
                    }
                }
                let secs = i64::from(endian.u32(&hdr[0..4]));
                let frac = i64::from(endian.u32(&hdr[4..8]));
                let incl = endian.u32(&hdr[8..12]) as usize;
                if incl > MAX_FRAME_LEN {
                    return Err(CaptureError::Corrupt(format!("frame length {incl}")));
                }
                self.frame.resize(incl, 0);
                match fill(&mut self.reader, &mut self.frame)? {
                    Fill::Complete => {}
                    _ => {
                        self.truncated();
                        return Ok(None);
                    }
                }
                let sub_us = if nanos { frac / 1000 } else { frac };
                Ok(Some((secs * 1_000_000 + sub_us, link)))
            }
            Format::PcapNg { .. } => self.next_pcapng_frame(),
        }
    }

    fn next_pcapng_frame(&mut self) -> Result<Option<(i64, LinkType)>, CaptureError> {
        loop {
            let Format::PcapNg { endian, .. } = &self.format else { unreachable!() };
            let endian = *endian;
            let mut type_buf = [0u8; 4];
            match fill(&mut self.reader, &mut type_buf)? {
                Fill::Complete => {}
                Fill::Eof => return Ok(None),
                Fill::Partial => {
                    self.done = true;
                    return Ok(None);
                }
            }
            if type_buf == PCAPNG_SHB {
                let endian = match Self::section_header_rest(&mut self.reader) {
                    Ok(e) => e,
                    Err(CaptureError::TruncatedHeader) => {
                        self.done = true;
                        return Ok(None);
                    }
                    Err(e) => return Err(e),
                };
                self.format = Format::PcapNg { endian, interfaces: Vec::new() };
                continue;
            }
            let block_type = endian.u32(&type_buf);
            let mut len_buf = [0u8; 4];
            let complete = matches!(fill(&mut self.reader, &mut len_buf)?, Fill::Complete);
            let total = if complete { endian.u32(&len_buf) as usize } else { 0 };
            if complete && (total < 12 || !total.is_multiple_of(4) || total > MAX_FRAME_LEN) {
                return Err(CaptureError::Corrupt(format!("block length {total}")));
            }
            let mut body = vec![0u8; total.saturating_sub(8)];
            if !complete || !matches!(fill(&mut self.reader, &mut body)?, Fill::Complete) {
                if block_type == PCAPNG_EPB {
                    self.truncated();
                } else {
                    self.done = true;
                }
                return Ok(None);
            }
            // drop the trailing length copy
            body.truncate(body.len() - 4);
            match block_type {
                PCAPNG_IDB => {
                    let iface = parse_interface(endian, &body)?;
                    if let Format::PcapNg { interfaces, .. } = &mut self.format {
                        interfaces.push(iface);
                    }
                }
                PCAPNG_EPB => {
                    if body.len() < 20 {
                        return Err(CaptureError::Corrupt("enhanced packet block too short".into()));
                    }
                    let Format::PcapNg { interfaces, .. } = &self.format else { unreachable!() };
                    let if_id = endian.u32(&body[0..4]) as usize;
                    let iface = interfaces
                        .get(if_id)
                        .ok_or_else(|| CaptureError::Corrupt(format!("packet on undeclared interface {if_id}")))?;
                    let link = iface.link.map_err(DecodeError::UnsupportedLinkType)?;
                    let units = (u64::from(endian.u32(&body[4..8])) << 32) | u64::from(endian.u32(&body[8..12]));
                    let cap_len = endian.u32(&body[12..16]) as usize;
                    if 20 + cap_len > body.len() {
                        return Err(CaptureError::Corrupt("captured length exceeds block".into()));
                    }
                    let ts_us = (u128::from(units) * 1_000_000 / u128::from(iface.units_per_sec)) as i64
                        + iface.offset_s * 1_000_000;
                    self.frame.clear();
                    self.frame.extend_from_slice(&body[20..20 + cap_len]);
                    return Ok(Some((ts_us, link)));
                }
                _ => {}
            }
        }
    }
}

fn parse_interface(endian: Endian, body: &[u8]) -> Result<Interface, CaptureError> {
    if body.len() < 8 {
        return Err(CaptureError::Corrupt("interface description block too short".into()));
    }
    let code = u32::from(endian.u16(&body[0..2]));
    let mut iface = Interface { link: LinkType::from_code(code).map_err(|_| code), units_per_sec: 1_000_000, offset_s: 0 };
    let mut at = 8;
    while at + 4 <= body.len() {
        let opt = endian.u16(&body[at..at + 2]);
        let len = usize::from(endian.u16(&body[at + 2..at + 4]));
        let value_at = at + 4;
        if opt == 0 || value_at + len > body.len() {
            break;
        }
        match (opt, len) {
            (9, 1) => {
                let resol = body[value_at];
                let exp = u32::from(resol & 0x7f);
                iface.units_per_sec = if resol & 0x80 == 0 {
                    10u64.checked_pow(exp)
                } else {
                    2u64.checked_pow(exp)
                }
                .ok_or_else(|| CaptureError::Corrupt(format!("if_tsresol {resol:#x}")))?;
            }
            (14, 8) => iface.offset_s = endian.u64(&body[value_at..value_at + 8]) as i64,
            _ => {}
        }
        at = value_at + len.div_ceil(4) * 4;
    }
    Ok(iface)
}

impl<R: Read> Iterator for Capture<R> {
    type Item = Result<PacketRecord, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let (ts_us, link) = match self.next_frame() {
                Ok(Some(frame)) => frame,
                Ok(None) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            self.totals.read += 1;
            match decode_packet(ts_us, &self.frame, link) {
                Decoded::Packet(p) => {
                    self.totals.decoded += 1;
                    return Some(Ok(p));
                }
                Decoded::Skip(reason) => self.totals.record_skip(reason),
            }
        }
        None
    }
}
