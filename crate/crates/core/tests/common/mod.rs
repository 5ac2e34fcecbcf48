// SPDX-License-Identifier: Apache-2.0

//! Shared test support: a byte-level frame builder that does not use the
//! crate's codec, proptest strategies, and reference oracles.

#![allow(dead_code)]

use std::net::Ipv6Addr;

use etherparse::UdpHeader as OracleUdp;
use inca_core::classifier::{AddrMatch, FieldMatch, FlowTuple, MatchKey, RuleId, RuleMatch};
use inca_core::classifier::RuleTable;
use inca_core::ctrl::{apply, parse_command, ControlCommand, ControlResponse, RuleSpec};
use inca_core::pipeline::PipelineState;
use inca_core::srv6::EncapConfig;
use proptest::collection::vec;
use proptest::prelude::*;

pub const GTPU_PORT: u16 = 2152;

#[derive(Debug, Clone)]
pub struct IpSpec {
    pub src: [u8; 16],
    pub dst: [u8; 16],
    pub tc: u8,
    pub flow: u32,
    pub hlim: u8,
}

#[derive(Debug, Clone)]
pub struct SrhSpec {
    /// Travel order; the wire list is reversed.
    pub path: Vec<[u8; 16]>,
    pub sl: u8,
    pub flags: u8,
    pub tag: u16,
}

#[derive(Debug, Clone)]
pub enum InnerL4Spec {
    Udp { sport: u16, dport: u16, payload: Vec<u8> },
    Tcp { sport: u16, dport: u16, payload: Vec<u8> },
    Icmpv6 { icmp_type: u8, code: u8, body: Vec<u8> },
    Other { proto: u8, bytes: Vec<u8> },
}

#[derive(Debug, Clone)]
pub struct InnerSpec {
    pub ip: IpSpec,
    pub l4: InnerL4Spec,
}

#[derive(Debug, Clone)]
pub struct ContainerSpec {
    pub pdu_type: u8,
    pub type_flags: u8,
    pub qfi_flags: u8,
    pub qfi: u8,
}

#[derive(Debug, Clone)]
pub enum Tpdu {
    Inner(InnerSpec),
    Raw(Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct GtpSpec {
    pub teid: u32,
    pub seq: Option<u16>,
    pub container: Option<ContainerSpec>,
    /// Extension type and content, content length 4k-2.
    pub opaque: Option<(u8, Vec<u8>)>,
    pub tpdu: Tpdu,
}

#[derive(Debug, Clone)]
pub enum UdpBody {
    Gtp(GtpSpec),
    Raw(Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct UdpSpec {
    pub sport: u16,
    pub dport: u16,
    pub body: UdpBody,
}

#[derive(Debug, Clone)]
pub struct FrameSpec {
    pub dst_mac: [u8; 6],
    pub src_mac: [u8; 6],
    pub outer: IpSpec,
    pub srh: Option<SrhSpec>,
    pub tunnel: Option<IpSpec>,
    pub udp: UdpSpec,
    pub trailer: Vec<u8>,
}

pub fn ipv6_bytes(ip: &IpSpec, next_header: u8, payload_len: usize) -> Vec<u8> {
    let mut b = vec![
        0x60 | (ip.tc >> 4),
        ((ip.tc & 0x0f) << 4) | ((ip.flow >> 16) as u8 & 0x0f),
        (ip.flow >> 8) as u8,
        ip.flow as u8,
    ];
    b.extend_from_slice(&(payload_len as u16).to_be_bytes());
    b.push(next_header);
    b.push(ip.hlim);
    b.extend_from_slice(&ip.src);
    b.extend_from_slice(&ip.dst);
    b
}

pub fn srh_bytes(s: &SrhSpec, next_header: u8) -> Vec<u8> {
    let n = s.path.len();
    let mut b = vec![next_header, (2 * n) as u8, 4, s.sl, (n - 1) as u8, s.flags];
    b.extend_from_slice(&s.tag.to_be_bytes());
    for seg in s.path.iter().rev() {
        b.extend_from_slice(seg);
    }
    b
}

/// Internet checksum over the IPv6 pseudo-header, written independently
/// of the crate for ICMPv6 and TCP.
pub fn pseudo_checksum(src: &[u8; 16], dst: &[u8; 16], proto: u8, seg: &[u8]) -> u16 {
    let mut sum: u64 = 0;
    let mut add = |bytes: &[u8]| {
        for c in bytes.chunks(2) {
            let w = if c.len() == 2 { u16::from_be_bytes([c[0], c[1]]) } else { u16::from(c[0]) << 8 };
            sum += u64::from(w);
        }
    };
    add(src);
    add(dst);
    add(&(seg.len() as u32).to_be_bytes());
    add(&[0, 0, 0, proto]);
    add(seg);
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// UDP segment with its checksum computed by etherparse.
pub fn udp_segment(src: &[u8; 16], dst: &[u8; 16], sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
    let h = OracleUdp { source_port: sport, destination_port: dport, length: (8 + payload.len()) as u16, checksum: 0 };
    let checksum = h.calc_checksum_ipv6_raw(*src, *dst, payload).unwrap();
    let mut b = Vec::with_capacity(8 + payload.len());
    b.extend_from_slice(&sport.to_be_bytes());
    b.extend_from_slice(&dport.to_be_bytes());
    b.extend_from_slice(&h.length.to_be_bytes());
    b.extend_from_slice(&checksum.to_be_bytes());
    b.extend_from_slice(payload);
    b
}

pub fn inner_bytes(s: &InnerSpec) -> Vec<u8> {
    let (proto, seg) = match &s.l4 {
        InnerL4Spec::Udp { sport, dport, payload } => (17, udp_segment(&s.ip.src, &s.ip.dst, *sport, *dport, payload)),
        InnerL4Spec::Tcp { sport, dport, payload } => {
            let mut t = Vec::new();
            t.extend_from_slice(&sport.to_be_bytes());
            t.extend_from_slice(&dport.to_be_bytes());
            t.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 0, 0x50, 0x10, 0x20, 0x00, 0, 0, 0, 0]);
            t.extend_from_slice(payload);
            let c = pseudo_checksum(&s.ip.src, &s.ip.dst, 6, &t);
            t[16..18].copy_from_slice(&c.to_be_bytes());
            (6, t)
        }
        InnerL4Spec::Icmpv6 { icmp_type, code, body } => {
            let mut t = vec![*icmp_type, *code, 0, 0];
            t.extend_from_slice(body);
            let c = pseudo_checksum(&s.ip.src, &s.ip.dst, 58, &t);
            t[2..4].copy_from_slice(&c.to_be_bytes());
            (58, t)
        }
        InnerL4Spec::Other { proto, bytes } => (*proto, bytes.clone()),
    };
    let mut b = ipv6_bytes(&s.ip, proto, seg.len());
    b.extend_from_slice(&seg);
    b
}

pub fn gtp_bytes(g: &GtpSpec) -> Vec<u8> {
    let tpdu = match &g.tpdu {
        Tpdu::Inner(i) => inner_bytes(i),
        Tpdu::Raw(r) => r.clone(),
    };
    let mut exts: Vec<(u8, Vec<u8>)> = Vec::new();
    if let Some(c) = &g.container {
        exts.push((0x85, vec![(c.pdu_type << 4) | (c.type_flags & 0x0f), (c.qfi_flags << 6) | (c.qfi & 0x3f)]));
    }
    if let Some((t, content)) = &g.opaque {
        exts.push((*t, content.clone()));
    }
    let e = !exts.is_empty();
    let s = g.seq.is_some();
    let mut opt = Vec::new();
    if e || s {
        opt.extend_from_slice(&g.seq.unwrap_or(0).to_be_bytes());
        opt.push(0);
        opt.push(exts.first().map_or(0, |x| x.0));
        for (i, (_, content)) in exts.iter().enumerate() {
            opt.push(((content.len() + 2) / 4) as u8);
            opt.extend_from_slice(content);
            opt.push(exts.get(i + 1).map_or(0, |x| x.0));
        }
    }
    let mut b = vec![0x30 | if e { 0x04 } else { 0 } | if s { 0x02 } else { 0 }, 0xff];
    b.extend_from_slice(&((opt.len() + tpdu.len()) as u16).to_be_bytes());
    b.extend_from_slice(&g.teid.to_be_bytes());
    b.extend_from_slice(&opt);
    b.extend_from_slice(&tpdu);
    b
}

/// The IPv6 header that carries the UDP segment.
pub fn udp_host(f: &FrameSpec) -> &IpSpec {
    f.tunnel.as_ref().unwrap_or(&f.outer)
}

pub fn udp_bytes(f: &FrameSpec) -> Vec<u8> {
    let body = match &f.udp.body {
        UdpBody::Gtp(g) => gtp_bytes(g),
        UdpBody::Raw(r) => r.clone(),
    };
    let host = udp_host(f);
    udp_segment(&host.src, &host.dst, f.udp.sport, f.udp.dport, &body)
}

pub fn frame_bytes(f: &FrameSpec) -> Vec<u8> {
    let mut l4 = udp_bytes(f);
    if let Some(t) = &f.tunnel {
        let mut b = ipv6_bytes(t, 17, l4.len());
        b.extend_from_slice(&l4);
        l4 = b;
    }
    let inner_nh = if f.tunnel.is_some() { 41 } else { 17 };
    let mut body = Vec::new();
    let outer_nh = match &f.srh {
        Some(s) => {
            body.extend_from_slice(&srh_bytes(s, inner_nh));
            43
        }
        None => inner_nh,
    };
    body.extend_from_slice(&l4);
    let mut out = Vec::new();
    out.extend_from_slice(&f.dst_mac);
    out.extend_from_slice(&f.src_mac);
    out.extend_from_slice(&[0x86, 0xdd]);
    out.extend_from_slice(&ipv6_bytes(&f.outer, outer_nh, body.len()));
    out.extend_from_slice(&body);
    out.extend_from_slice(&f.trailer);
    out
}

pub fn addr(b: [u8; 16]) -> Ipv6Addr {
    Ipv6Addr::from(b)
}

// ---- strategies ----

/// Addresses from a small pool so that rules and keys collide often.
pub fn pool_addr() -> impl Strategy<Value = [u8; 16]> {
    (0u8..4, 0u8..4).prop_map(|(net, host)| {
        let mut a = [0u8; 16];
        a[0] = 0xfd;
        a[1] = 0x00;
        a[3] = net;
        a[15] = host;
        a
    })
}

pub fn any_addr() -> impl Strategy<Value = [u8; 16]> {
    prop_oneof![pool_addr(), any::<[u8; 16]>()]
}

pub fn ip_spec() -> impl Strategy<Value = IpSpec> {
    (any_addr(), any_addr(), any::<u8>(), 0u32..(1 << 20), any::<u8>())
        .prop_map(|(src, dst, tc, flow, hlim)| IpSpec { src, dst, tc, flow, hlim })
}

pub fn inner_l4() -> impl Strategy<Value = InnerL4Spec> {
    prop_oneof![
        (any::<u16>(), any::<u16>(), vec(any::<u8>(), 0..64))
            .prop_map(|(sport, dport, payload)| InnerL4Spec::Udp { sport, dport, payload }),
        (any::<u16>(), any::<u16>(), vec(any::<u8>(), 0..64))
            .prop_map(|(sport, dport, payload)| InnerL4Spec::Tcp { sport, dport, payload }),
        (any::<u8>(), any::<u8>(), vec(any::<u8>(), 4..48))
            .prop_map(|(icmp_type, code, body)| InnerL4Spec::Icmpv6 { icmp_type, code, body }),
        (prop_oneof![Just(50u8), Just(132), Just(253)], vec(any::<u8>(), 0..32))
            .prop_map(|(proto, bytes)| InnerL4Spec::Other { proto, bytes }),
    ]
}

pub fn inner_spec() -> impl Strategy<Value = InnerSpec> {
    (ip_spec(), inner_l4()).prop_map(|(ip, l4)| InnerSpec { ip, l4 })
}

pub fn container() -> impl Strategy<Value = ContainerSpec> {
    (0u8..2, 0u8..16, 0u8..4, 0u8..64)
        .prop_map(|(pdu_type, type_flags, qfi_flags, qfi)| ContainerSpec { pdu_type, type_flags, qfi_flags, qfi })
}

pub fn gtp_spec() -> impl Strategy<Value = GtpSpec> {
    (
        any::<u32>(),
        proptest::option::of(any::<u16>()),
        proptest::option::of(container()),
        proptest::option::weighted(0.2, (prop_oneof![Just(0x40u8), Just(0x81), Just(0xc0)], 0usize..3)),
        prop_oneof![4 => inner_spec().prop_map(Tpdu::Inner), 1 => vec(any::<u8>(), 0..40).prop_map(Tpdu::Raw)],
    )
        .prop_map(|(teid, seq, container, opaque, tpdu)| GtpSpec {
            teid,
            seq,
            container,
            opaque: opaque.map(|(t, k)| (t, (0..(4 * (k + 1) - 2)).map(|i| i as u8).collect())),
            tpdu,
        })
}

pub fn srh_spec() -> impl Strategy<Value = SrhSpec> {
    vec(any_addr(), 1..=8).prop_flat_map(|path| {
        let n = path.len() as u8;
        (Just(path), 0..n, any::<u8>(), any::<u16>()).prop_map(|(path, sl, flags, tag)| SrhSpec { path, sl, flags, tag })
    })
}

pub fn frame_spec() -> impl Strategy<Value = FrameSpec> {
    let udp = prop_oneof![
        3 => (any::<u16>(), gtp_spec()).prop_map(|(sport, g)| UdpSpec { sport, dport: GTPU_PORT, body: UdpBody::Gtp(g) }),
        1 => (any::<u16>().prop_filter("not GTP-U", |p| *p != GTPU_PORT),
              any::<u16>().prop_filter("not GTP-U", |p| *p != GTPU_PORT),
              vec(any::<u8>(), 0..48))
            .prop_map(|(sport, dport, r)| UdpSpec { sport, dport, body: UdpBody::Raw(r) }),
    ];
    (
        any::<[u8; 6]>(),
        any::<[u8; 6]>(),
        ip_spec(),
        proptest::option::of(srh_spec()),
        proptest::option::of(ip_spec()),
        udp,
        prop_oneof![3 => Just(Vec::new()), 1 => vec(Just(0u8), 1..12)],
    )
        .prop_map(|(dst_mac, src_mac, outer, srh, tunnel, udp, trailer)| FrameSpec {
            dst_mac,
            src_mac,
            outer,
            // A tunnel header only appears under an SRH, as H.Encaps builds it.
            tunnel: if srh.is_some() { tunnel } else { None },
            srh,
            udp,
            trailer,
        })
}

/// A G-PDU frame as the RAN would send it: outer IPv6, UDP, GTP-U and an
/// inner IPv6 packet.
pub fn gtp_frame_spec() -> impl Strategy<Value = FrameSpec> {
    (ip_spec(), any::<u16>(), gtp_spec(), inner_spec()).prop_map(|(outer, sport, mut g, inner)| {
        g.tpdu = Tpdu::Inner(inner);
        FrameSpec {
            dst_mac: [2, 0, 0, 0, 0, 1],
            src_mac: [2, 0, 0, 0, 0, 2],
            outer,
            srh: None,
            tunnel: None,
            udp: UdpSpec { sport, dport: GTPU_PORT, body: UdpBody::Gtp(g) },
            trailer: Vec::new(),
        }
    })
}

// ---- classifier oracle ----

pub fn small_field<T: Clone + std::fmt::Debug + 'static>(values: Vec<T>) -> impl Strategy<Value = FieldMatch<T>> {
    prop_oneof![2 => Just(FieldMatch::Any), 1 => proptest::sample::select(values).prop_map(FieldMatch::Exact)]
}

pub fn addr_match() -> impl Strategy<Value = AddrMatch> {
    prop_oneof![
        3 => Just(AddrMatch::Any),
        1 => pool_addr().prop_map(|a| AddrMatch::Exact(addr(a))),
        1 => (pool_addr(), prop_oneof![Just(0u8), Just(16), Just(32), Just(48), Just(120), Just(128), 0u8..=128])
            .prop_map(|(a, l)| AddrMatch::Prefix(addr(a), l)),
    ]
}

pub fn rule_match() -> impl Strategy<Value = RuleMatch> {
    (
        small_field(vec![1u32, 2, 3, 100]),
        small_field(vec![0u8, 1, 5, 9]),
        small_field(vec![0u16, 1, 2]),
        addr_match(),
        addr_match(),
        small_field(vec![6u8, 17, 58]),
        small_field(vec![0u16, 53, 443, 8080]),
        small_field(vec![0u16, 53, 443, 8080]),
    )
        .prop_map(|(teid, qfi, slice, src, dst, proto, sport, dport)| RuleMatch {
            teid,
            qfi,
            slice,
            src,
            dst,
            proto,
            sport,
            dport,
        })
}

pub fn match_key() -> impl Strategy<Value = MatchKey> {
    let flow = (pool_addr(), pool_addr(), proptest::sample::select(vec![6u8, 17, 58, 50]), proptest::sample::select(vec![0u16, 53, 443, 8080, 9999]), proptest::sample::select(vec![0u16, 53, 443, 8080, 9999]))
        .prop_map(|(s, d, proto, sp, dp)| FlowTuple { src: addr(s), dst: addr(d), proto, src_port: sp, dst_port: dp });
    (
        proptest::sample::select(vec![1u32, 2, 3, 100, 7]),
        proptest::sample::select(vec![0u8, 1, 5, 9, 63]),
        proptest::sample::select(vec![0u16, 1, 2, 3]),
        proptest::option::weighted(0.85, flow),
    )
        .prop_map(|(teid, qfi, slice_id, flow)| MatchKey { teid, qfi, slice_id, flow })
}

fn oracle_prefix(net: Ipv6Addr, len: u8, a: Ipv6Addr) -> bool {
    let bits = u32::from(len.min(128));
    (0..bits).all(|i| {
        let byte = (i / 8) as usize;
        let bit = 7 - (i % 8);
        (net.octets()[byte] >> bit) & 1 == (a.octets()[byte] >> bit) & 1
    })
}

fn oracle_field<T: PartialEq>(m: &FieldMatch<T>, v: &T) -> bool {
    match m {
        FieldMatch::Any => true,
        FieldMatch::Exact(x) => x == v,
    }
}

fn oracle_addr(m: &AddrMatch, a: Ipv6Addr) -> bool {
    match *m {
        AddrMatch::Any => true,
        AddrMatch::Exact(x) => x == a,
        AddrMatch::Prefix(net, len) => oracle_prefix(net, len, a),
    }
}

/// Whether a rule covers a key: every predicate holds, and a key without a
/// decodable inner flow only matches rules that leave all flow fields open.
pub fn oracle_matches(m: &RuleMatch, k: &MatchKey) -> bool {
    let tunnel = oracle_field(&m.teid, &k.teid) && oracle_field(&m.qfi, &k.qfi) && oracle_field(&m.slice, &k.slice_id);
    let flow = match &k.flow {
        Some(f) => {
            oracle_addr(&m.src, f.src)
                && oracle_addr(&m.dst, f.dst)
                && oracle_field(&m.proto, &f.proto)
                && oracle_field(&m.sport, &f.src_port)
                && oracle_field(&m.dport, &f.dst_port)
        }
        None => {
            matches!(m.src, AddrMatch::Any)
                && matches!(m.dst, AddrMatch::Any)
                && m.proto == FieldMatch::Any
                && m.sport == FieldMatch::Any
                && m.dport == FieldMatch::Any
        }
    };
    tunnel && flow
}

/// Linear scan: highest priority wins, then the lowest rule id.
pub fn oracle_lookup(rules: &[(RuleId, i32, RuleMatch)], k: &MatchKey) -> Option<RuleId> {
    let mut best: Option<(i32, RuleId)> = None;
    for (id, prio, m) in rules {
        if !oracle_matches(m, k) {
            continue;
        }
        best = match best {
            None => Some((*prio, *id)),
            Some((bp, bid)) if *prio > bp || (*prio == bp && *id < bid) => Some((*prio, *id)),
            keep => keep,
        };
    }
    best.map(|(_, id)| id)
}

/// Rule sets with unique ids and priorities drawn from a small range so
/// that ties are common.
pub fn rule_set(max: usize) -> impl Strategy<Value = Vec<(RuleId, i32, RuleMatch)>> {
    vec((1u32..2000, -3i32..4, rule_match()), 0..=max).prop_map(|mut v| {
        let mut seen = std::collections::BTreeSet::new();
        v.retain(|(id, _, _)| seen.insert(*id));
        v
    })
}

// ---- control commands ----

pub const NAMES: [&str; 4] = ["dash", "icmp", "video.v2", "x_1"];

pub fn name() -> impl Strategy<Value = String> {
    proptest::sample::select(NAMES.to_vec()).prop_map(str::to_owned)
}

pub fn rule_spec() -> impl Strategy<Value = RuleSpec> {
    (1u32..40, -3i32..4, rule_match(), name()).prop_map(|(id, priority, matcher, chain)| RuleSpec {
        id,
        priority,
        matcher,
        chain,
    })
}

pub fn sids(min: usize) -> impl Strategy<Value = Vec<Ipv6Addr>> {
    vec(pool_addr().prop_map(addr), min..4)
}

/// Commands that parse; some of them fail when applied.
pub fn command() -> impl Strategy<Value = ControlCommand> {
    prop_oneof![
        6 => rule_spec().prop_map(ControlCommand::AddRule),
        3 => (1u32..40).prop_map(ControlCommand::DelRule),
        3 => (name(), sids(1)).prop_map(|(name, sids)| ControlCommand::AddChain { name, sids }),
        1 => (any::<u32>(), any::<u16>()).prop_map(|(teid, slice)| ControlCommand::SliceMap { teid, slice }),
        1 => Just(ControlCommand::ListRules),
        1 => Just(ControlCommand::Stats),
        1 => Just(ControlCommand::Ping),
        1 => (0u32..5).prop_map(ControlCommand::Step),
    ]
}

/// Command lines as a client might send them, including malformed ones.
pub fn line() -> impl Strategy<Value = String> {
    prop_oneof![
        8 => command().prop_map(|c| c.to_string()),
        1 => "[A-Z-]{2,10}( [a-z]{1,5}=[0-9a-f:/]{0,8}){0,3}",
        1 => (rule_spec(), "[a-z]{1,6}=[0-9]{1,3}").prop_map(|(r, extra)| format!("ADD-RULE id={} {extra} chain={}", r.id, r.chain)),
        1 => Just("ADD-RULE id=0 prio=1 chain=dash".to_owned()),
        1 => Just("ADD-RULE id=5 prio=1 qfi=64 chain=dash".to_owned()),
        1 => Just("ADD-CHAIN dash =".to_owned()),
    ]
}

pub fn fresh_state() -> PipelineState {
    let sid: Ipv6Addr = "fc00::e".parse().unwrap();
    PipelineState::new(RuleTable::new(), EncapConfig::new(sid, sid))
}

/// Parses and applies one control line; syntax errors answer ERR.
pub fn send(state: &mut PipelineState, line: &str) -> ControlResponse {
    match parse_command(line) {
        Ok(cmd) => apply(&cmd, state),
        Err(e) => ControlResponse::Err(e.to_string()),
    }
}
