// SPDX-License-Identifier: Apache-2.0

//! GTP-U tunnel endpoints of the RAN and the UPF.

use super::{NetsimError, NodeSpec};
use crate::pkt_codec::{
    build_ipv6_udp, parse_packet, GtpuHeader, Ipv6Header, Layer, PduSessionContainer, GTPU_PORT, MSG_G_PDU,
    PROTO_TCP, PROTO_UDP,
};

const EPHEMERAL_BASE: u16 = 0xc000;

/// FNV-1a, used to spread flows over the ephemeral port range.
fn fnv1a(bytes: &[u8]) -> u32 {
    bytes.iter().fold(0x811c_9dc5u32, |h, &b| (h ^ u32::from(b)).wrapping_mul(0x0100_0193))
}

/// Deterministic UDP source port for the tunnel carrying `inner`.
fn source_port(inner: &[u8]) -> u16 {
    let mut key = Vec::with_capacity(37);
    if inner.len() >= Ipv6Header::LEN {
        key.extend_from_slice(&inner[8..40]);
        key.push(inner[6]);
        if matches!(inner[6], PROTO_UDP | PROTO_TCP) && inner.len() >= Ipv6Header::LEN + 4 {
            key.extend_from_slice(&inner[40..44]);
        }
    }
    EPHEMERAL_BASE | (fnv1a(&key) as u16 & 0x3fff)
}

/// Wraps a user packet in IPv6/UDP/GTP-U towards the node's UPF peer. The
/// QFI is chosen by the inner protocol; without one the PDU Session
/// Container is left out.
pub fn ran_encapsulate(node: &NodeSpec, inner: &[u8]) -> Result<Vec<u8>, NetsimError> {
    let missing = || NetsimError::MissingTunnelConfig(node.name.clone());
    let tunnel = node.tunnel.as_ref().ok_or_else(missing)?;
    let src = *node.addresses.first().ok_or_else(missing)?;
    let proto = inner.get(6).copied().filter(|_| Ipv6Header::looks_like(inner));
    let qfi = match proto {
        Some(p) => tunnel.qfi_for(p),
        None => tunnel.qfi,
    };
    let gtp = GtpuHeader::g_pdu(tunnel.teid, qfi.map(PduSessionContainer::uplink));
    let mut body = Vec::with_capacity(inner.len() + 16);
    gtp.write(inner, &mut body).map_err(|_| missing())?;
    Ok(build_ipv6_udp(src, tunnel.peer, source_port(inner), GTPU_PORT, &body))
}

/// Extracts the user packet from a G-PDU addressed to the node.
pub fn upf_decapsulate(node: &NodeSpec, packet: &[u8]) -> Result<Vec<u8>, NetsimError> {
    let pkt = parse_packet(packet).map_err(|_| NetsimError::NotGtp)?;
    let (Some(gtp), Some(inner), Some(ip)) = (&pkt.gtpu, &pkt.inner, pkt.gtp_ipv6()) else {
        return Err(NetsimError::NotGtp);
    };
    if gtp.message_type != MSG_G_PDU {
        return Err(NetsimError::NotGtp);
    }
    if !node.owns(&ip.dst) {
        return Err(NetsimError::WrongDestination(ip.dst));
    }
    let at = pkt.offset_of(Layer::InnerIpv6).ok_or(NetsimError::NotGtp)?;
    let end = at + Ipv6Header::LEN + usize::from(inner.ipv6.payload_length);
    Ok(pkt.raw()[at..end].to_vec())
}
