// SPDX-License-Identifier: Apache-2.0

//! The three SRv6 behaviors used for chaining: H.Encaps at chain entry, End
//! at every network function, and decapsulation when the packet returns to
//! the steering node.
//!
//! All functions work on IPv6 packets (no link header).

use std::net::Ipv6Addr;

use crate::pkt_codec::{CodecError, Ipv6Header, SrhHeader, PROTO_IPV6, PROTO_ROUTING, ROUTING_TYPE_SRH};

pub const DEFAULT_MTU: usize = 9000;
pub const DEFAULT_HOP_LIMIT: u8 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Srv6Error {
    #[error("EmptyPath")]
    EmptyPath,
    #[error("PathTooLong: {0} segments")]
    PathTooLong(usize),
    #[error("OversizeResult: {size} octets exceeds MTU {mtu}")]
    OversizeResult { size: usize, mtu: usize },
    #[error("NotIpv6Inner")]
    NotIpv6Inner,
    #[error("MissingSrh")]
    MissingSrh,
    #[error("NotMySegment: destination {0}")]
    NotMySegment(Ipv6Addr),
    #[error("NoMoreSegments")]
    NoMoreSegments,
    #[error("HopLimitExceeded")]
    HopLimitExceeded,
    #[error("NotChainEnd: segments_left={0}")]
    NotChainEnd(u8),
    #[error("WrongDestination: {0}")]
    WrongDestination(Ipv6Addr),
    #[error(transparent)]
    Malformed(#[from] CodecError),
}

/// SIDs in traversal order. Built with [`SegmentList::with_return`] the last
/// element is the steering node's own SID, so the final network function
/// hands the packet back through ordinary End processing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentList(Vec<Ipv6Addr>);

impl SegmentList {
    pub fn with_return(chain: &[Ipv6Addr], return_sid: Ipv6Addr) -> Self {
        let mut path = chain.to_vec();
        path.push(return_sid);
        SegmentList(path)
    }

    pub fn from_path(path: Vec<Ipv6Addr>) -> Result<Self, Srv6Error> {
        if path.is_empty() {
            return Err(Srv6Error::EmptyPath);
        }
        Ok(SegmentList(path))
    }

    pub fn path(&self) -> &[Ipv6Addr] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncapConfig {
    pub outer_src: Ipv6Addr,
    pub inca_sid: Ipv6Addr,
    pub hop_limit_initial: u8,
    pub traffic_class: u8,
    /// Largest IPv6 packet the encapsulation may produce.
    pub mtu: usize,
}

impl EncapConfig {
    pub fn new(outer_src: Ipv6Addr, inca_sid: Ipv6Addr) -> Self {
        EncapConfig {
            outer_src,
            inca_sid,
            hop_limit_initial: DEFAULT_HOP_LIMIT,
            traffic_class: 0,
            mtu: DEFAULT_MTU,
        }
    }
}

/// Pushes an outer IPv6 header and an SRH carrying `path` in front of
/// `inner`, which is copied unchanged.
pub fn h_encaps(inner: &[u8], path: &SegmentList, cfg: &EncapConfig) -> Result<Vec<u8>, Srv6Error> {
    let first = *path.path().first().ok_or(Srv6Error::EmptyPath)?;
    if path.len() > SrhHeader::MAX_SEGMENTS {
        return Err(Srv6Error::PathTooLong(path.len()));
    }
    if !Ipv6Header::looks_like(inner) {
        return Err(Srv6Error::NotIpv6Inner);
    }
    let srh = SrhHeader::for_path(path.path(), PROTO_IPV6);
    let payload = srh.wire_len() + inner.len();
    let size = Ipv6Header::LEN + payload;
    if size > cfg.mtu || payload > usize::from(u16::MAX) {
        return Err(Srv6Error::OversizeResult { size, mtu: cfg.mtu });
    }
    let mut outer = Ipv6Header::new(cfg.outer_src, first, PROTO_ROUTING, cfg.hop_limit_initial);
    outer.traffic_class = cfg.traffic_class;
    outer.payload_length = payload as u16;

    let mut out = Vec::with_capacity(size);
    outer.write(&mut out);
    srh.write(&mut out);
    out.extend_from_slice(inner);
    Ok(out)
}

const DST: std::ops::Range<usize> = 24..40;
const HOP_LIMIT: usize = 7;
const SRH_AT: usize = Ipv6Header::LEN;

/// Validates the outer header and SRH and returns them.
fn outer_and_srh(packet: &[u8]) -> Result<(Ipv6Header, SrhHeader), Srv6Error> {
    if !Ipv6Header::looks_like(packet) {
        return Err(Srv6Error::NotIpv6Inner);
    }
    let outer = Ipv6Header::parse(crate::pkt_codec::Layer::Ipv6, packet)?;
    if outer.next_header != PROTO_ROUTING || packet.len() < SRH_AT + 3 || packet[SRH_AT + 2] != ROUTING_TYPE_SRH {
        return Err(Srv6Error::MissingSrh);
    }
    let srh = SrhHeader::parse(&packet[SRH_AT..])?;
    Ok((outer, srh))
}

/// End behavior applied in place.
pub fn end_process_in_place(packet: &mut [u8], my_sid: Ipv6Addr) -> Result<(), Srv6Error> {
    let (outer, srh) = outer_and_srh(packet)?;
    if outer.dst != my_sid {
        return Err(Srv6Error::NotMySegment(outer.dst));
    }
    if srh.segments_left == 0 {
        return Err(Srv6Error::NoMoreSegments);
    }
    if outer.hop_limit <= 1 {
        return Err(Srv6Error::HopLimitExceeded);
    }
    let sl = srh.segments_left - 1;
    packet[SRH_AT + 3] = sl;
    packet[DST].copy_from_slice(&srh.segments[usize::from(sl)].octets());
    packet[HOP_LIMIT] = outer.hop_limit - 1;
    Ok(())
}

/// End behavior: decrements segments left, copies the newly active SID into
/// the destination address and decrements the hop limit.
pub fn end_process(packet: &[u8], my_sid: Ipv6Addr) -> Result<Vec<u8>, Srv6Error> {
    let mut out = packet.to_vec();
    end_process_in_place(&mut out, my_sid)?;
    Ok(out)
}

/// Strips the outer header and SRH at the end of the chain, returning the
/// encapsulated IPv6 packet exactly as it was handed to [`h_encaps`].
pub fn decap(packet: &[u8], inca_sid: Ipv6Addr) -> Result<Vec<u8>, Srv6Error> {
    let (outer, srh) = outer_and_srh(packet)?;
    if srh.segments_left != 0 {
        return Err(Srv6Error::NotChainEnd(srh.segments_left));
    }
    if outer.dst != inca_sid {
        return Err(Srv6Error::WrongDestination(outer.dst));
    }
    if srh.next_header != PROTO_IPV6 {
        return Err(Srv6Error::NotIpv6Inner);
    }
    let end = Ipv6Header::LEN + usize::from(outer.payload_length);
    if end > packet.len() {
        return Err(CodecError::TruncatedHeader {
            layer: crate::pkt_codec::Layer::Ipv6,
            needed: end,
            available: packet.len(),
        }
        .into());
    }
    let inner = &packet[SRH_AT + srh.wire_len()..end];
    if !Ipv6Header::looks_like(inner) {
        return Err(Srv6Error::NotIpv6Inner);
    }
    Ok(inner.to_vec())
}
