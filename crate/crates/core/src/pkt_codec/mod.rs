// SPDX-License-Identifier: Apache-2.0

//! Bit-exact parsing and serialization of the frames the pipeline handles:
//! Ethernet II, IPv6, the Segment Routing Header, UDP, GTP-U with the PDU
//! Session Container, and a summary of the user's inner IPv6 packet.
//!
//! Every layer is decoded only when its length fields agree exactly with the
//! bytes that contain it. Anything else is retained as opaque payload, so
//! re-encoding an unmodified [`ParsedPacket`] reproduces the original octets
//! and re-encoding a modified one recomputes the outer length fields.

mod checksum;
mod gtpu;
mod headers;

use std::fmt;
use std::net::Ipv6Addr;

pub use checksum::{compute_udp_checksum, fill_udp_checksum, transport_checksum, udp_checksum_residue};
pub use gtpu::{
    GtpuExtension, GtpuHeader, PduSessionContainer, EXT_PDU_SESSION_CONTAINER, GTPU_PORT, MSG_G_PDU,
    PDU_TYPE_DL, PDU_TYPE_UL,
};
pub use headers::{
    EthernetHeader, Ipv6Header, MacAddr, MacParseError, SrhHeader, UdpHeader, ETHERTYPE_IPV6, PROTO_ICMPV6,
    PROTO_IPV6, PROTO_ROUTING, PROTO_TCP, PROTO_UDP, ROUTING_TYPE_SRH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Ethernet,
    Ipv6,
    Srh,
    TunnelIpv6,
    Udp,
    Gtpu,
    GtpuExtension,
    InnerIpv6,
    InnerL4,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Ethernet => "ethernet",
            Layer::Ipv6 => "ipv6",
            Layer::Srh => "srh",
            Layer::TunnelIpv6 => "tunnel ipv6",
            Layer::Udp => "udp",
            Layer::Gtpu => "gtp-u",
            Layer::GtpuExtension => "gtp-u extension",
            Layer::InnerIpv6 => "inner ipv6",
            Layer::InnerL4 => "inner l4",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("TruncatedHeader: {layer} needs {needed} octets, {available} available")]
    TruncatedHeader { layer: Layer, needed: usize, available: usize },
    #[error("MalformedSrh: {0}")]
    MalformedSrh(&'static str),
    #[error("MalformedGtpu: {0}")]
    MalformedGtpu(&'static str),
    #[error("InconsistentLayers: {0}")]
    InconsistentLayers(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpSummary {
    pub src_port: u16,
    pub dst_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Icmpv6Summary {
    pub icmp_type: u8,
    pub code: u8,
}

/// Decoded view of the inner packet's transport header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerL4 {
    Udp(UdpHeader),
    Tcp(TcpSummary),
    Icmpv6(Icmpv6Summary),
    Other,
}

impl InnerL4 {
    /// (source, destination) ports; zero for port-less protocols.
    pub fn ports(&self) -> (u16, u16) {
        match self {
            InnerL4::Udp(u) => (u.src_port, u.dst_port),
            InnerL4::Tcp(t) => (t.src_port, t.dst_port),
            InnerL4::Icmpv6(_) | InnerL4::Other => (0, 0),
        }
    }
}

/// The user's own IPv6 packet carried inside the GTP-U tunnel. It is never
/// modified by the dataplane: `payload` is the full L4 segment verbatim and
/// [`InnerPacket::l4`] decodes a summary of its header on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerPacket {
    pub ipv6: Ipv6Header,
    pub payload: Vec<u8>,
}

impl InnerPacket {
    pub fn l4_proto(&self) -> u8 {
        self.ipv6.next_header
    }

    pub fn l4(&self) -> InnerL4 {
        let p = &self.payload;
        match self.ipv6.next_header {
            PROTO_UDP if p.len() >= UdpHeader::LEN => {
                InnerL4::Udp(UdpHeader::parse(Layer::InnerL4, p).expect("length checked"))
            }
            PROTO_TCP if p.len() >= 20 => InnerL4::Tcp(TcpSummary {
                src_port: u16::from_be_bytes([p[0], p[1]]),
                dst_port: u16::from_be_bytes([p[2], p[3]]),
            }),
            PROTO_ICMPV6 if p.len() >= 4 => InnerL4::Icmpv6(Icmpv6Summary { icmp_type: p[0], code: p[1] }),
            _ => InnerL4::Other,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Ipv6Header::LEN + self.payload.len());
        self.ipv6.write(&mut out);
        out.extend_from_slice(&self.payload);
        out
    }
}

/// Layered view of one Ethernet frame.
///
/// For a plain RAN-to-UPF frame the GTP-carrying IPv6 header is
/// `outer_ipv6`. For an SRv6-encapsulated frame `outer_ipv6` is the SR
/// header's carrier and the original GTP-carrying header is `tunnel_ipv6`.
#[derive(Debug, Clone)]
pub struct ParsedPacket {
    pub eth: EthernetHeader,
    pub outer_ipv6: Option<Ipv6Header>,
    pub srh: Option<SrhHeader>,
    pub tunnel_ipv6: Option<Ipv6Header>,
    pub transport: Option<UdpHeader>,
    pub gtpu: Option<GtpuHeader>,
    pub inner: Option<InnerPacket>,
    /// Undecoded octets after the deepest recognized layer.
    pub payload: Vec<u8>,
    /// Octets after the outer IPv6 payload, such as Ethernet padding.
    pub trailer: Vec<u8>,
    raw: Vec<u8>,
    layer_offsets: Vec<(Layer, usize)>,
}

impl PartialEq for ParsedPacket {
    /// Structural equality: compares decoded headers and opaque data, not the
    /// original octets.
    fn eq(&self, other: &Self) -> bool {
        self.eth == other.eth
            && self.outer_ipv6 == other.outer_ipv6
            && self.srh == other.srh
            && self.tunnel_ipv6 == other.tunnel_ipv6
            && self.transport == other.transport
            && self.gtpu == other.gtpu
            && self.inner == other.inner
            && self.payload == other.payload
            && self.trailer == other.trailer
    }
}

impl ParsedPacket {
    /// The octets this packet was parsed from.
    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    pub fn layer_offsets(&self) -> &[(Layer, usize)] {
        &self.layer_offsets
    }

    pub fn offset_of(&self, layer: Layer) -> Option<usize> {
        self.layer_offsets.iter().find(|(l, _)| *l == layer).map(|(_, at)| *at)
    }

    pub fn pdu_container(&self) -> Option<&PduSessionContainer> {
        self.gtpu.as_ref().and_then(GtpuHeader::pdu_session)
    }

    /// The IPv6 header that carries the UDP/GTP-U stack.
    pub fn gtp_ipv6(&self) -> Option<&Ipv6Header> {
        self.tunnel_ipv6.as_ref().or(self.outer_ipv6.as_ref())
    }

    /// Protocol number of the innermost decoded layer.
    pub fn innermost_proto(&self) -> Option<u8> {
        if let Some(inner) = &self.inner {
            return Some(inner.l4_proto());
        }
        if self.transport.is_some() {
            return Some(PROTO_UDP);
        }
        if let Some(t) = &self.tunnel_ipv6 {
            return Some(t.next_header);
        }
        if let Some(srh) = &self.srh {
            return Some(srh.next_header);
        }
        self.outer_ipv6.as_ref().map(|h| h.next_header)
    }

    /// The octets after the Ethernet header, as received.
    pub fn l3_bytes(&self) -> &[u8] {
        &self.raw[EthernetHeader::LEN..]
    }
}

/// Decodes as deep as the frame allows.
pub fn parse_frame(bytes: &[u8]) -> Result<ParsedPacket, CodecError> {
    let eth = EthernetHeader::parse(bytes)?;
    let mut pkt = ParsedPacket {
        eth,
        outer_ipv6: None,
        srh: None,
        tunnel_ipv6: None,
        transport: None,
        gtpu: None,
        inner: None,
        payload: Vec::new(),
        trailer: Vec::new(),
        raw: bytes.to_vec(),
        layer_offsets: vec![(Layer::Ethernet, 0)],
    };
    let mut at = EthernetHeader::LEN;
    let mut end = bytes.len();
    // Decoding stops at the first layer that is absent or does not fit; the
    // rest of the region becomes opaque payload.
    'layers: {
        if eth.ethertype != ETHERTYPE_IPV6 || !Ipv6Header::looks_like(&bytes[at..]) {
            break 'layers;
        }
        let outer = Ipv6Header::parse(Layer::Ipv6, &bytes[at..])?;
        let region = usize::from(outer.payload_length);
        headers::need(Layer::Ipv6, &bytes[at + Ipv6Header::LEN..], region)?;
        pkt.layer_offsets.push((Layer::Ipv6, at));
        pkt.outer_ipv6 = Some(outer);
        at += Ipv6Header::LEN;
        end = at + region;
        let mut next = outer.next_header;

        if next == PROTO_ROUTING && end - at >= 3 && bytes[at + 2] == ROUTING_TYPE_SRH {
            let srh = SrhHeader::parse(&bytes[at..end])?;
            pkt.layer_offsets.push((Layer::Srh, at));
            at += srh.wire_len();
            next = srh.next_header;
            pkt.srh = Some(srh);
        }

        if next == PROTO_IPV6 {
            if !Ipv6Header::looks_like(&bytes[at..end]) {
                break 'layers;
            }
            let tunnel = Ipv6Header::parse(Layer::TunnelIpv6, &bytes[at..end])?;
            let avail = end - at - Ipv6Header::LEN;
            let declared = usize::from(tunnel.payload_length);
            if declared > avail {
                return Err(CodecError::TruncatedHeader {
                    layer: Layer::TunnelIpv6,
                    needed: declared,
                    available: avail,
                });
            }
            if declared != avail {
                break 'layers;
            }
            pkt.layer_offsets.push((Layer::TunnelIpv6, at));
            pkt.tunnel_ipv6 = Some(tunnel);
            at += Ipv6Header::LEN;
            next = tunnel.next_header;
        }

        if next != PROTO_UDP || end - at < UdpHeader::LEN {
            break 'layers;
        }
        let udp = UdpHeader::parse(Layer::Udp, &bytes[at..end])?;
        let declared = usize::from(udp.length);
        if declared > end - at {
            return Err(CodecError::TruncatedHeader { layer: Layer::Udp, needed: declared, available: end - at });
        }
        if declared != end - at {
            break 'layers;
        }
        pkt.layer_offsets.push((Layer::Udp, at));
        pkt.transport = Some(udp);
        at += UdpHeader::LEN;

        if udp.dst_port != GTPU_PORT && udp.src_port != GTPU_PORT {
            break 'layers;
        }
        let (gtp, hdr_len) = GtpuHeader::parse(&bytes[at..end])?;
        if GtpuHeader::MANDATORY_LEN + usize::from(gtp.length) != end - at {
            break 'layers;
        }
        pkt.layer_offsets.push((Layer::Gtpu, at));
        let is_g_pdu = gtp.message_type == MSG_G_PDU;
        pkt.gtpu = Some(gtp);
        at += hdr_len;

        if !is_g_pdu || !Ipv6Header::looks_like(&bytes[at..end]) {
            break 'layers;
        }
        let ipv6 = Ipv6Header::parse(Layer::InnerIpv6, &bytes[at..end])?;
        let avail = end - at - Ipv6Header::LEN;
        let declared = usize::from(ipv6.payload_length);
        if declared > avail {
            return Err(CodecError::TruncatedHeader { layer: Layer::InnerIpv6, needed: declared, available: avail });
        }
        if declared != avail {
            break 'layers;
        }
        pkt.layer_offsets.push((Layer::InnerIpv6, at));
        let inner = InnerPacket { ipv6, payload: bytes[at + Ipv6Header::LEN..end].to_vec() };
        if inner.l4() != InnerL4::Other {
            pkt.layer_offsets.push((Layer::InnerL4, at + Ipv6Header::LEN));
        }
        pkt.inner = Some(inner);
        at = end;
    }
    pkt.payload = bytes[at..end].to_vec();
    pkt.trailer = bytes[end..].to_vec();
    Ok(pkt)
}

/// Encodes the packet, recomputing the outer IPv6 payload length, SRH
/// length, tunnel IPv6 payload length, UDP length and GTP-U length. The
/// inner packet and all checksums are written as stored.
pub fn serialize(pkt: &ParsedPacket) -> Result<Vec<u8>, CodecError> {
    use CodecError::InconsistentLayers as Bad;

    if pkt.outer_ipv6.is_none()
        && (pkt.srh.is_some() || pkt.tunnel_ipv6.is_some() || pkt.transport.is_some())
    {
        return Err(Bad("layers present without an outer IPv6 header"));
    }
    if pkt.gtpu.is_some() && pkt.transport.is_none() {
        return Err(Bad("GTP-U without UDP"));
    }
    if pkt.inner.is_some() && pkt.gtpu.is_none() {
        return Err(Bad("inner packet without GTP-U"));
    }
    if pkt.inner.is_some() && !pkt.payload.is_empty() {
        return Err(Bad("opaque payload after a decoded inner packet"));
    }

    let mut body = match &pkt.inner {
        Some(inner) => inner.to_bytes(),
        None => Vec::new(),
    };
    body.extend_from_slice(&pkt.payload);

    if let Some(gtp) = &pkt.gtpu {
        let mut buf = Vec::with_capacity(gtp.header_len() + body.len());
        gtp.write(&body, &mut buf)?;
        body = buf;
    }
    if let Some(udp) = &pkt.transport {
        let mut udp = *udp;
        udp.length = u16::try_from(UdpHeader::LEN + body.len()).map_err(|_| Bad("UDP length overflows 16 bits"))?;
        let mut buf = Vec::with_capacity(UdpHeader::LEN + body.len());
        udp.write(&mut buf);
        buf.extend_from_slice(&body);
        body = buf;
    }
    if let Some(tunnel) = &pkt.tunnel_ipv6 {
        let mut tunnel = *tunnel;
        tunnel.payload_length =
            u16::try_from(body.len()).map_err(|_| Bad("tunnel payload length overflows 16 bits"))?;
        let mut buf = Vec::with_capacity(Ipv6Header::LEN + body.len());
        tunnel.write(&mut buf);
        buf.extend_from_slice(&body);
        body = buf;
    }
    if let Some(srh) = &pkt.srh {
        if srh.segments.is_empty() || srh.segments.len() > SrhHeader::MAX_SEGMENTS {
            return Err(Bad("SRH segment list length out of range"));
        }
        if usize::from(srh.segments_left) >= srh.segments.len() {
            return Err(Bad("SRH segments_left exceeds last_entry"));
        }
        let mut buf = Vec::with_capacity(srh.wire_len() + body.len());
        srh.write(&mut buf);
        buf.extend_from_slice(&body);
        body = buf;
    }

    let mut out = Vec::with_capacity(EthernetHeader::LEN + Ipv6Header::LEN + body.len() + pkt.trailer.len());
    pkt.eth.write(&mut out);
    if let Some(outer) = &pkt.outer_ipv6 {
        let mut outer = *outer;
        outer.payload_length = u16::try_from(body.len()).map_err(|_| Bad("IPv6 payload length overflows 16 bits"))?;
        outer.write(&mut out);
    }
    out.extend_from_slice(&body);
    out.extend_from_slice(&pkt.trailer);
    Ok(out)
}

/// Decodes an IPv6 packet that has no link-layer header. The returned
/// packet carries an all-zero Ethernet header.
pub fn parse_packet(l3: &[u8]) -> Result<ParsedPacket, CodecError> {
    let mut frame = Vec::with_capacity(EthernetHeader::LEN + l3.len());
    EthernetHeader::ipv6(MacAddr::ZERO, MacAddr::ZERO).write(&mut frame);
    frame.extend_from_slice(l3);
    parse_frame(&frame)
}

/// Builds an IPv6/UDP packet with a valid checksum. Used by the traffic
/// generators and tests.
pub fn build_ipv6_udp(src: Ipv6Addr, dst: Ipv6Addr, sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
    let mut udp = Vec::with_capacity(UdpHeader::LEN + payload.len());
    UdpHeader { src_port: sport, dst_port: dport, length: (UdpHeader::LEN + payload.len()) as u16, checksum: 0 }
        .write(&mut udp);
    udp.extend_from_slice(payload);
    fill_udp_checksum(src, dst, &mut udp);
    let mut ip = Ipv6Header::new(src, dst, PROTO_UDP, 64);
    ip.payload_length = udp.len() as u16;
    let mut out = Vec::with_capacity(Ipv6Header::LEN + udp.len());
    ip.write(&mut out);
    out.extend_from_slice(&udp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> Ipv6Addr {
        s.parse().unwrap()
    }

    fn frame(l3: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        EthernetHeader::ipv6(MacAddr([2, 0, 0, 0, 0, 2]), MacAddr([2, 0, 0, 0, 0, 1])).write(&mut out);
        out.extend_from_slice(l3);
        out
    }

    fn gtp_frame(teid: u32, qfi: Option<u8>, inner: &[u8]) -> Vec<u8> {
        let mut gtp = Vec::new();
        GtpuHeader::g_pdu(teid, qfi.map(PduSessionContainer::uplink)).write(inner, &mut gtp).unwrap();
        frame(&build_ipv6_udp(a("2001:db8:1::1"), a("2001:db8:2::1"), 2152, GTPU_PORT, &gtp))
    }

    #[test]
    fn non_ipv6_frame_is_opaque() {
        let mut f = vec![0u8; 14];
        f[12] = 0x08;
        let p = parse_frame(&f).unwrap();
        assert_eq!(p.eth.ethertype, 0x0800);
        assert!(p.outer_ipv6.is_none() && p.srh.is_none() && p.gtpu.is_none() && p.inner.is_none());
        assert!(p.payload.is_empty());
        assert_eq!(serialize(&p).unwrap(), f);
    }

    #[test]
    fn short_frame_is_truncated() {
        assert!(matches!(
            parse_frame(&[0u8; 10]),
            Err(CodecError::TruncatedHeader { layer: Layer::Ethernet, .. })
        ));
    }

    #[test]
    fn gtp_length_beyond_buffer_is_truncated() {
        // 60 octets remain after the IPv6 header but GTP-U claims 500.
        let mut udp_payload = vec![0x30, 0xff, 0x01, 0xf4, 0, 0, 0, 1];
        udp_payload.resize(52, 0);
        let f = frame(&build_ipv6_udp(a("::1"), a("::2"), 2152, GTPU_PORT, &udp_payload));
        assert!(matches!(parse_frame(&f), Err(CodecError::TruncatedHeader { layer: Layer::Gtpu, .. })));
    }

    #[test]
    fn missing_container_reads_as_no_qfi() {
        let inner = build_ipv6_udp(a("2001:db8:3::1"), a("2001:db8:4::1"), 1, 2, &[0; 4]);
        let p = parse_frame(&gtp_frame(5, None, &inner)).unwrap();
        assert!(p.pdu_container().is_none());
        assert!(!p.gtpu.as_ref().unwrap().e_flag);
        assert_eq!(p.inner.as_ref().unwrap().to_bytes(), inner);
    }

    #[test]
    fn trailing_padding_is_kept() {
        let inner = build_ipv6_udp(a("::1"), a("::2"), 1, 2, &[]);
        let mut f = frame(&inner);
        f.extend_from_slice(&[0xee; 6]);
        let p = parse_frame(&f).unwrap();
        assert_eq!(p.trailer, vec![0xee; 6]);
        assert_eq!(serialize(&p).unwrap(), f);
    }

    #[test]
    fn mismatched_udp_length_stops_decoding() {
        let mut l3 = build_ipv6_udp(a("::1"), a("::2"), 2152, 2152, &[0; 12]);
        l3[40 + 5] -= 4;
        let f = frame(&l3);
        let p = parse_frame(&f).unwrap();
        assert!(p.transport.is_none());
        assert_eq!(p.payload.len(), 20);
        assert_eq!(serialize(&p).unwrap(), f);
    }

    #[test]
    fn non_srh_routing_header_is_opaque() {
        let mut ip = Ipv6Header::new(a("::1"), a("::2"), PROTO_ROUTING, 64);
        let rh = [PROTO_UDP, 0, 0, 0, 0, 0, 0, 0];
        ip.payload_length = 8;
        let mut l3 = Vec::new();
        ip.write(&mut l3);
        l3.extend_from_slice(&rh);
        let p = parse_frame(&frame(&l3)).unwrap();
        assert!(p.srh.is_none());
        assert_eq!(p.payload, rh);
    }

    #[test]
    fn gtp_on_wrong_version_is_malformed() {
        let mut gtp = Vec::new();
        GtpuHeader::g_pdu(1, None).write(&[], &mut gtp).unwrap();
        gtp[0] = 0x50;
        let f = frame(&build_ipv6_udp(a("::1"), a("::2"), 2152, GTPU_PORT, &gtp));
        assert!(matches!(parse_frame(&f), Err(CodecError::MalformedGtpu(_))));
    }

    #[test]
    fn inner_icmp_has_no_ports() {
        let mut ip = Ipv6Header::new(a("::1"), a("::2"), PROTO_ICMPV6, 64);
        ip.payload_length = 8;
        let mut inner = Vec::new();
        ip.write(&mut inner);
        inner.extend_from_slice(&[128, 0, 0, 0, 0, 1, 0, 1]);
        let p = parse_frame(&gtp_frame(1, Some(2), &inner)).unwrap();
        let inner = p.inner.unwrap();
        assert_eq!(inner.l4(), InnerL4::Icmpv6(Icmpv6Summary { icmp_type: 128, code: 0 }));
        assert_eq!(inner.l4().ports(), (0, 0));
    }

    #[test]
    fn serialize_rejects_impossible_layering() {
        let inner = build_ipv6_udp(a("::1"), a("::2"), 1, 2, &[]);
        let mut p = parse_frame(&gtp_frame(1, Some(1), &inner)).unwrap();
        p.transport = None;
        assert!(matches!(serialize(&p), Err(CodecError::InconsistentLayers(_))));

        let mut p = parse_frame(&gtp_frame(1, Some(1), &inner)).unwrap();
        p.gtpu.as_mut().unwrap().e_flag = false;
        assert!(matches!(serialize(&p), Err(CodecError::InconsistentLayers(_))));

        let mut p = parse_frame(&gtp_frame(1, Some(1), &inner)).unwrap();
        p.srh = Some(SrhHeader::for_path(&[], PROTO_UDP));
        assert!(matches!(serialize(&p), Err(CodecError::InconsistentLayers(_))));
    }
}
