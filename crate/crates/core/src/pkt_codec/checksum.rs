// SPDX-License-Identifier: Apache-2.0

use std::net::Ipv6Addr;

use super::headers::PROTO_UDP;

fn add_words(mut acc: u32, bytes: &[u8]) -> u32 {
    let mut chunks = bytes.chunks_exact(2);
    for w in &mut chunks {
        acc += u32::from(u16::from_be_bytes([w[0], w[1]]));
    }
    if let [last] = chunks.remainder() {
        acc += u32::from(*last) << 8;
    }
    acc
}

fn fold(mut acc: u32) -> u16 {
    while acc > 0xffff {
        acc = (acc & 0xffff) + (acc >> 16);
    }
    acc as u16
}

/// Folded one's-complement sum over the IPv6 pseudo-header and `udp_bytes`,
/// checksum field included. A segment carrying a correct checksum sums to
/// 0xffff.
pub fn udp_checksum_residue(src: Ipv6Addr, dst: Ipv6Addr, udp_bytes: &[u8]) -> u16 {
    fold(add_words(pseudo_header(src, dst, PROTO_UDP, udp_bytes.len()), udp_bytes))
}

fn pseudo_header(src: Ipv6Addr, dst: Ipv6Addr, proto: u8, len: usize) -> u32 {
    let mut acc = add_words(0, &src.octets());
    acc = add_words(acc, &dst.octets());
    let len = len as u32;
    acc += len >> 16;
    acc += len & 0xffff;
    acc + u32::from(proto)
}

/// Internet checksum of an upper-layer segment over the IPv6 pseudo-header,
/// treating the two octets at `field` as zero.
pub fn transport_checksum(src: Ipv6Addr, dst: Ipv6Addr, proto: u8, segment: &[u8], field: usize) -> u16 {
    let mut acc = pseudo_header(src, dst, proto, segment.len());
    if segment.len() >= field + 2 {
        acc = add_words(acc, &segment[..field]);
        acc = add_words(acc, &segment[field + 2..]);
    } else {
        acc = add_words(acc, segment);
    }
    !fold(acc)
}

/// UDP checksum over the IPv6 pseudo-header plus the segment. The checksum
/// field inside `udp_bytes` is treated as zero. A computed value of zero is
/// transmitted as 0xffff.
pub fn compute_udp_checksum(src: Ipv6Addr, dst: Ipv6Addr, udp_bytes: &[u8]) -> u16 {
    match transport_checksum(src, dst, PROTO_UDP, udp_bytes, 6) {
        0 => 0xffff,
        sum => sum,
    }
}

/// Recomputes and stores the checksum of the UDP segment in place.
pub fn fill_udp_checksum(src: Ipv6Addr, dst: Ipv6Addr, udp_bytes: &mut [u8]) {
    udp_bytes[6] = 0;
    udp_bytes[7] = 0;
    let sum = compute_udp_checksum(src, dst, udp_bytes);
    udp_bytes[6..8].copy_from_slice(&sum.to_be_bytes());
}
