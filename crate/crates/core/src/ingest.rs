//! Offline capture ingestion: classic pcap files carrying radiotap-encapsulated
//! 802.11 frames.
//!
//! Only headers are read. Radiotap supplies the signal strength, the 802.11
//! header supplies the transmitter address, and the frame body is never
//! touched.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Packet;

/// Radiotap link type in the pcap global header.
pub const LINKTYPE_IEEE802_11_RADIOTAP: u32 = 127;

const PCAP_MAGIC_MICROS: u32 = 0xA1B2_C3D4;
const PCAP_MAGIC_NANOS: u32 = 0xA1B2_3C4D;
const PCAP_GLOBAL_HEADER_LEN: usize = 24;
const PCAP_RECORD_HEADER_LEN: usize = 16;

const RADIOTAP_MIN_LEN: usize = 8;
const PRESENCE_EXT: u32 = 1 << 31;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unsupported radiotap version {0}")]
    UnsupportedVersion(u8),
    #[error("radiotap header length {0} is below the 8-byte minimum")]
    BadHeaderLength(u16),
    #[error("unrecognized pcap magic {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported link type {0} (only radiotap, 127)")]
    UnsupportedLinkType(u32),
    #[error("unsupported 802.11 frame type {0}")]
    UnsupportedFrameType(u8),
    #[error("invalid MAC address {0:?}")]
    BadMac(String),
    #[error("invalid anchor markers: {0}")]
    BadMarkers(String),
}

type ParseResult<T> = std::result::Result<T, ParseError>;

fn need(buf: &[u8], len: usize) -> ParseResult<()> {
    if buf.len() < len {
        Err(ParseError::Truncated {
            needed: len,
            available: buf.len(),
        })
    } else {
        Ok(())
    }
}

fn le_u16(buf: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([buf[at], buf[at + 1]])
}

fn le_u32(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl FromStr for MacAddr {
    type Err = ParseError;

    fn from_str(s: &str) -> ParseResult<Self> {
        let bad = || ParseError::BadMac(s.to_owned());
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for byte in &mut out {
            let part = parts.next().ok_or_else(bad)?;
            if part.len() != 2 {
                return Err(bad());
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| bad())?;
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Self(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RadiotapInfo {
    pub header_len: u16,
    pub tsft: Option<u64>,
    pub flags: Option<u8>,
    pub rate: Option<u8>,
    pub channel_mhz: Option<u16>,
    pub dbm_antenna_signal: Option<i8>,
}

/// Parses the radiotap header at the start of `buf`.
///
/// Fields for presence bits 0 through 5 are decoded with their natural
/// alignment; anything past that is skipped via the declared header length.
pub fn parse_radiotap(buf: &[u8]) -> ParseResult<RadiotapInfo> {
    need(buf, RADIOTAP_MIN_LEN)?;
    if buf[0] != 0 {
        return Err(ParseError::UnsupportedVersion(buf[0]));
    }
    let header_len = le_u16(buf, 2);
    if (header_len as usize) < RADIOTAP_MIN_LEN {
        return Err(ParseError::BadHeaderLength(header_len));
    }
    need(buf, header_len as usize)?;
    let header = &buf[..header_len as usize];

    let present = le_u32(header, 4);
    let mut offset = 8;
    let mut word = present;
    while word & PRESENCE_EXT != 0 {
        need(header, offset + 4)?;
        word = le_u32(header, offset);
        offset += 4;
    }

    let mut info = RadiotapInfo {
        header_len,
        ..RadiotapInfo::default()
    };
    // (bit, size, alignment)
    const FIELDS: [(u32, usize, usize); 6] =
        [(0, 8, 8), (1, 1, 1), (2, 1, 1), (3, 4, 2), (4, 2, 1), (5, 1, 1)];
    for (bit, size, align) in FIELDS {
        if present & (1 << bit) == 0 {
            continue;
        }
        offset = offset.next_multiple_of(align);
        need(header, offset + size)?;
        let field = &header[offset..offset + size];
        match bit {
            0 => info.tsft = Some(u64::from_le_bytes(field.try_into().unwrap())),
            1 => info.flags = Some(field[0]),
            2 => info.rate = Some(field[0]),
            3 => info.channel_mhz = Some(le_u16(field, 0)),
            4 => {}
            5 => info.dbm_antenna_signal = Some(field[0] as i8),
            _ => unreachable!(),
        }
        offset += size;
    }
    Ok(info)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameType {
    Management,
    Control,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameInfo {
    pub frame_type: FrameType,
    pub subtype: u8,
    /// Address 2. Absent for control frames that carry only a receiver.
    pub transmitter_mac: Option<MacAddr>,
}

const CTRL_WRAPPER: u8 = 7;
const CTRL_CTS: u8 = 12;
const CTRL_ACK: u8 = 13;

/// Parses the 802.11 MAC header that follows the radiotap header.
pub fn parse_frame(buf: &[u8]) -> ParseResult<FrameInfo> {
    // frame control, duration, address 1
    need(buf, 10)?;
    let fc = le_u16(buf, 0);
    let subtype = ((fc >> 4) & 0xF) as u8;
    let frame_type = match (fc >> 2) & 0x3 {
        0 => FrameType::Management,
        1 => FrameType::Control,
        2 => FrameType::Data,
        other => return Err(ParseError::UnsupportedFrameType(other as u8)),
    };
    let has_addr2 = match frame_type {
        FrameType::Control => !matches!(subtype, CTRL_CTS | CTRL_ACK | CTRL_WRAPPER) && subtype >= 8,
        _ => true,
    };
    let transmitter_mac = if has_addr2 {
        need(buf, 16)?;
        Some(MacAddr(buf[10..16].try_into().unwrap()))
    } else {
        None
    };
    Ok(FrameInfo {
        frame_type,
        subtype,
        transmitter_mac,
    })
}

/// One pcap record, borrowing its captured bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record<'a> {
    pub timestamp_us: u64,
    pub data: &'a [u8],
}

/// Iterator over the records of a classic pcap file held in memory.
///
/// Yields at most one error (a truncated trailing record) and then stops.
#[derive(Debug, Clone)]
pub struct PcapReader<'a> {
    buf: &'a [u8],
    offset: usize,
    big_endian: bool,
    nanos: bool,
    link_type: u32,
    done: bool,
}

impl<'a> PcapReader<'a> {
    pub fn new(buf: &'a [u8]) -> ParseResult<Self> {
        need(buf, PCAP_GLOBAL_HEADER_LEN)?;
        let magic = le_u32(buf, 0);
        let (big_endian, nanos) = match magic {
            PCAP_MAGIC_MICROS => (false, false),
            PCAP_MAGIC_NANOS => (false, true),
            m if m.swap_bytes() == PCAP_MAGIC_MICROS => (true, false),
            m if m.swap_bytes() == PCAP_MAGIC_NANOS => (true, true),
            m => return Err(ParseError::BadMagic(m)),
        };
        let mut reader = Self {
            buf,
            offset: PCAP_GLOBAL_HEADER_LEN,
            big_endian,
            nanos,
            link_type: 0,
            done: false,
        };
        reader.link_type = reader.u32_at(20);
        Ok(reader)
    }

    pub fn link_type(&self) -> u32 {
        self.link_type
    }

    fn u32_at(&self, at: usize) -> u32 {
        let v = le_u32(self.buf, at);
        if self.big_endian {
            v.swap_bytes()
        } else {
            v
        }
    }
}

impl<'a> Iterator for PcapReader<'a> {
    type Item = ParseResult<Record<'a>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done || self.offset == self.buf.len() {
            return None;
        }
        let rest = &self.buf[self.offset..];
        if let Err(e) = need(rest, PCAP_RECORD_HEADER_LEN) {
            self.done = true;
            return Some(Err(e));
        }
        let secs = self.u32_at(self.offset) as u64;
        let frac = self.u32_at(self.offset + 4) as u64;
        let incl_len = self.u32_at(self.offset + 8) as usize;
        let body = &rest[PCAP_RECORD_HEADER_LEN..];
        if let Err(e) = need(body, incl_len) {
            self.done = true;
            return Some(Err(e));
        }
        self.offset += PCAP_RECORD_HEADER_LEN + incl_len;
        let frac_us = if self.nanos { frac / 1_000 } else { frac };
        Some(Ok(Record {
            timestamp_us: secs * 1_000_000 + frac_us,
            data: &body[..incl_len],
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerInterval {
    pub anchor_id: String,
    pub t_start_us: u64,
    pub t_end_us: u64,
}

/// Dwell windows labelling which packets belong to which anchor. Intervals
/// are inclusive, ordered and disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorMarkers {
    intervals: Vec<MarkerInterval>,
}

impl AnchorMarkers {
    pub fn new(intervals: Vec<MarkerInterval>) -> ParseResult<Self> {
        if let Some(m) = intervals.iter().find(|m| m.t_start_us > m.t_end_us) {
            return Err(ParseError::BadMarkers(format!(
                "interval for {} ends before it starts",
                m.anchor_id
            )));
        }
        if let Some(w) = intervals.windows(2).find(|w| w[0].t_end_us >= w[1].t_start_us) {
            return Err(ParseError::BadMarkers(format!(
                "intervals for {} and {} overlap or are out of order",
                w[0].anchor_id, w[1].anchor_id
            )));
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[MarkerInterval] {
        &self.intervals
    }

    pub fn anchor_at(&self, ts_us: u64) -> Option<&str> {
        let k = self.intervals.partition_point(|m| m.t_end_us < ts_us);
        self.intervals
            .get(k)
            .filter(|m| m.t_start_us <= ts_us)
            .map(|m| m.anchor_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestDiagnostics {
    pub records: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub no_signal: usize,
    pub no_transmitter: usize,
    pub outside_markers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    pub packets: Vec<Packet>,
    pub diagnostics: IngestDiagnostics,
}

/// Extracts `(anchor, transmitter, rssi)` packets from a pcap capture.
///
/// Records that fail to parse are counted and skipped. Only a bad global
/// header or a non-radiotap link type fails the whole file.
pub fn ingest_pcap(bytes: &[u8], markers: &AnchorMarkers) -> ParseResult<IngestOutput> {
    let reader = PcapReader::new(bytes)?;
    if reader.link_type() != LINKTYPE_IEEE802_11_RADIOTAP {
        return Err(ParseError::UnsupportedLinkType(reader.link_type()));
    }
    let mut diag = IngestDiagnostics::default();
    let mut packets = Vec::new();
    for record in reader {
        diag.records += 1;
        let Ok(record) = record else {
            diag.malformed += 1;
            continue;
        };
        let Ok(radiotap) = parse_radiotap(record.data) else {
            diag.malformed += 1;
            continue;
        };
        let Ok(frame) = parse_frame(&record.data[radiotap.header_len as usize..]) else {
            diag.malformed += 1;
            continue;
        };
        let Some(signal) = radiotap.dbm_antenna_signal else {
            diag.no_signal += 1;
            continue;
        };
        let Some(mac) = frame.transmitter_mac else {
            diag.no_transmitter += 1;
            continue;
        };
        let Some(anchor) = markers.anchor_at(record.timestamp_us) else {
            diag.outside_markers += 1;
            continue;
        };
        diag.accepted += 1;
        packets.push(Packet {
            anchor_id: anchor.to_owned(),
            device_mac: mac.to_string(),
            rssi_dbm: f64::from(signal),
            ts_us: Some(record.timestamp_us),
        });
    }
    Ok(IngestOutput {
        packets,
        diagnostics: diag,
    })
}
