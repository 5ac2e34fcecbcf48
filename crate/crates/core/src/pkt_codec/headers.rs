// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::net::Ipv6Addr;
use std::str::FromStr;

use super::{CodecError, Layer};

pub const ETHERTYPE_IPV6: u16 = 0x86dd;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;
pub const PROTO_IPV6: u8 = 41;
pub const PROTO_ROUTING: u8 = 43;
pub const PROTO_ICMPV6: u8 = 58;
pub const ROUTING_TYPE_SRH: u8 = 4;

pub(crate) fn need(layer: Layer, buf: &[u8], needed: usize) -> Result<(), CodecError> {
    if buf.len() < needed {
        Err(CodecError::TruncatedHeader { layer, needed, available: buf.len() })
    } else {
        Ok(())
    }
}

fn be16(buf: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([buf[at], buf[at + 1]])
}

fn addr(buf: &[u8], at: usize) -> Ipv6Addr {
    let mut octets = [0u8; 16];
    octets.copy_from_slice(&buf[at..at + 16]);
    Ipv6Addr::from(octets)
}

/// A 48-bit Ethernet hardware address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const ZERO: MacAddr = MacAddr([0; 6]);
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            m[0], m[1], m[2], m[3], m[4], m[5]
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid MAC address `{0}`")]
pub struct MacParseError(pub String);

impl FromStr for MacAddr {
    type Err = MacParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for slot in out.iter_mut() {
            let part = parts.next().ok_or_else(|| MacParseError(s.to_owned()))?;
            if part.is_empty() || part.len() > 2 {
                return Err(MacParseError(s.to_owned()));
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| MacParseError(s.to_owned()))?;
        }
        if parts.next().is_some() {
            return Err(MacParseError(s.to_owned()));
        }
        Ok(MacAddr(out))
    }
}

/// Ethernet II framing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EthernetHeader {
    pub dst: MacAddr,
    pub src: MacAddr,
    pub ethertype: u16,
}

impl EthernetHeader {
    pub const LEN: usize = 14;

    pub fn ipv6(dst: MacAddr, src: MacAddr) -> Self {
        EthernetHeader { dst, src, ethertype: ETHERTYPE_IPV6 }
    }

    pub fn parse(buf: &[u8]) -> Result<Self, CodecError> {
        need(Layer::Ethernet, buf, Self::LEN)?;
        let mut dst = [0u8; 6];
        let mut src = [0u8; 6];
        dst.copy_from_slice(&buf[0..6]);
        src.copy_from_slice(&buf[6..12]);
        Ok(EthernetHeader { dst: MacAddr(dst), src: MacAddr(src), ethertype: be16(buf, 12) })
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.dst.0);
        out.extend_from_slice(&self.src.0);
        out.extend_from_slice(&self.ethertype.to_be_bytes());
    }
}

/// Fixed IPv6 header. Only version 6 is ever decoded into this type, so the
/// version nibble is implied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ipv6Header {
    pub traffic_class: u8,
    /// 20 bits.
    pub flow_label: u32,
    pub payload_length: u16,
    pub next_header: u8,
    pub hop_limit: u8,
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
}

impl Ipv6Header {
    pub const LEN: usize = 40;

    pub fn new(src: Ipv6Addr, dst: Ipv6Addr, next_header: u8, hop_limit: u8) -> Self {
        Ipv6Header {
            traffic_class: 0,
            flow_label: 0,
            payload_length: 0,
            next_header,
            hop_limit,
            src,
            dst,
        }
    }

    /// True when `buf` starts with a version-6 nibble and holds a full header.
    pub fn looks_like(buf: &[u8]) -> bool {
        buf.len() >= Self::LEN && buf[0] >> 4 == 6
    }

    pub fn parse(layer: Layer, buf: &[u8]) -> Result<Self, CodecError> {
        need(layer, buf, Self::LEN)?;
        let word = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]);
        Ok(Ipv6Header {
            traffic_class: ((word >> 20) & 0xff) as u8,
            flow_label: word & 0x000f_ffff,
            payload_length: be16(buf, 4),
            next_header: buf[6],
            hop_limit: buf[7],
            src: addr(buf, 8),
            dst: addr(buf, 24),
        })
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        let word = (6u32 << 28) | (u32::from(self.traffic_class) << 20) | (self.flow_label & 0x000f_ffff);
        out.extend_from_slice(&word.to_be_bytes());
        out.extend_from_slice(&self.payload_length.to_be_bytes());
        out.push(self.next_header);
        out.push(self.hop_limit);
        out.extend_from_slice(&self.src.octets());
        out.extend_from_slice(&self.dst.octets());
    }
}

/// IPv6 Segment Routing Header (routing type 4), without TLVs.
///
/// `segments` is kept in on-wire order: `segments[0]` is the last segment of
/// the path and `segments[segments_left]` is the active one. `hdr_ext_len`
/// and `last_entry` are derived from the list length, so the length
/// invariants cannot drift.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrhHeader {
    pub next_header: u8,
    pub segments_left: u8,
    pub flags: u8,
    pub tag: u16,
    pub segments: Vec<Ipv6Addr>,
}

impl SrhHeader {
    pub const FIXED_LEN: usize = 8;
    pub const MAX_SEGMENTS: usize = 127;

    /// Builds an SRH for a path given in traversal order, with the first
    /// segment active.
    pub fn for_path(path: &[Ipv6Addr], next_header: u8) -> Self {
        let segments: Vec<Ipv6Addr> = path.iter().rev().copied().collect();
        SrhHeader {
            next_header,
            segments_left: path.len().saturating_sub(1) as u8,
            flags: 0,
            tag: 0,
            segments,
        }
    }

    pub fn routing_type(&self) -> u8 {
        ROUTING_TYPE_SRH
    }

    pub fn hdr_ext_len(&self) -> u8 {
        (self.segments.len() * 2) as u8
    }

    pub fn last_entry(&self) -> u8 {
        self.segments.len().saturating_sub(1) as u8
    }

    pub fn wire_len(&self) -> usize {
        Self::FIXED_LEN + 16 * self.segments.len()
    }

    pub fn active_segment(&self) -> Option<Ipv6Addr> {
        self.segments.get(usize::from(self.segments_left)).copied()
    }

    /// Segments in traversal order (first hop first).
    pub fn path(&self) -> Vec<Ipv6Addr> {
        self.segments.iter().rev().copied().collect()
    }

    /// Decodes an SRH at the start of `buf`. The caller has already checked
    /// that the routing type is 4.
    pub fn parse(buf: &[u8]) -> Result<Self, CodecError> {
        need(Layer::Srh, buf, Self::FIXED_LEN)?;
        let hdr_ext_len = usize::from(buf[1]);
        let total = Self::FIXED_LEN + hdr_ext_len * 8;
        need(Layer::Srh, buf, total)?;
        if buf[2] != ROUTING_TYPE_SRH {
            return Err(CodecError::MalformedSrh("routing type is not 4"));
        }
        if hdr_ext_len == 0 || hdr_ext_len % 2 != 0 {
            return Err(CodecError::MalformedSrh("hdr_ext_len must be a non-zero multiple of 2"));
        }
        let count = hdr_ext_len / 2;
        let segments_left = buf[3];
        let last_entry = usize::from(buf[4]);
        if last_entry + 1 != count {
            return Err(CodecError::MalformedSrh("last_entry does not match segment list length"));
        }
        if usize::from(segments_left) > last_entry {
            return Err(CodecError::MalformedSrh("segments_left exceeds last_entry"));
        }
        let segments = (0..count).map(|i| addr(buf, Self::FIXED_LEN + 16 * i)).collect();
        Ok(SrhHeader {
            next_header: buf[0],
            segments_left,
            flags: buf[5],
            tag: be16(buf, 6),
            segments,
        })
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.push(self.next_header);
        out.push(self.hdr_ext_len());
        out.push(ROUTING_TYPE_SRH);
        out.push(self.segments_left);
        out.push(self.last_entry());
        out.push(self.flags);
        out.extend_from_slice(&self.tag.to_be_bytes());
        for seg in &self.segments {
            out.extend_from_slice(&seg.octets());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
    pub checksum: u16,
}

impl UdpHeader {
    pub const LEN: usize = 8;

    pub fn parse(layer: Layer, buf: &[u8]) -> Result<Self, CodecError> {
        need(layer, buf, Self::LEN)?;
        Ok(UdpHeader {
            src_port: be16(buf, 0),
            dst_port: be16(buf, 2),
            length: be16(buf, 4),
            checksum: be16(buf, 6),
        })
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.src_port.to_be_bytes());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&self.length.to_be_bytes());
        out.extend_from_slice(&self.checksum.to_be_bytes());
    }
}
