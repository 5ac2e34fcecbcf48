// SPDX-License-Identifier: Apache-2.0

//! The steering node: a three-port bump in the wire between the RAN and the
//! UPF. Uplink GTP-U frames that match a rule are encapsulated into an SRv6
//! chain and sent out the service port; frames returning from the chain are
//! decapsulated and forwarded to the UPF; everything else passes through
//! byte for byte.

use std::collections::BTreeMap;

use crate::classifier::{extract_key, RuleId, RuleTable};
use crate::pkt_codec::{parse_frame, EthernetHeader, Ipv6Header, MacAddr, PROTO_ROUTING};
use crate::srv6::{decap, h_encaps, EncapConfig, SegmentList, Srv6Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PortRole {
    RanFacing,
    UpfFacing,
    ServiceFacing,
}

impl PortRole {
    pub const ALL: [PortRole; 3] = [PortRole::RanFacing, PortRole::UpfFacing, PortRole::ServiceFacing];

    pub fn name(self) -> &'static str {
        match self {
            PortRole::RanFacing => "ran",
            PortRole::UpfFacing => "upf",
            PortRole::ServiceFacing => "service",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NoMoreSegments,
    HopLimit,
    Oversize,
    Malformed,
}

impl DropReason {
    pub const ALL: [DropReason; 4] =
        [DropReason::NoMoreSegments, DropReason::HopLimit, DropReason::Oversize, DropReason::Malformed];

    pub fn name(self) -> &'static str {
        match self {
            DropReason::NoMoreSegments => "no_more_segments",
            DropReason::HopLimit => "hop_limit",
            DropReason::Oversize => "oversize",
            DropReason::Malformed => "malformed",
        }
    }

    pub fn from_srv6(err: &Srv6Error) -> Self {
        match err {
            Srv6Error::NoMoreSegments => DropReason::NoMoreSegments,
            Srv6Error::HopLimitExceeded => DropReason::HopLimit,
            Srv6Error::OversizeResult { .. } => DropReason::Oversize,
            _ => DropReason::Malformed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Emit { port: PortRole, frame: Vec<u8> },
    Drop(DropReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortCounters {
    pub rx_packets: u64,
    pub rx_octets: u64,
    pub tx_packets: u64,
    pub tx_octets: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    ports: BTreeMap<PortRole, PortCounters>,
    rule_hits: BTreeMap<RuleId, u64>,
    drops: BTreeMap<DropReason, u64>,
}

impl Counters {
    pub fn port(&self, role: PortRole) -> PortCounters {
        self.ports.get(&role).copied().unwrap_or_default()
    }

    pub fn rule_hits(&self, id: RuleId) -> u64 {
        self.rule_hits.get(&id).copied().unwrap_or(0)
    }

    pub fn drops(&self, reason: DropReason) -> u64 {
        self.drops.get(&reason).copied().unwrap_or(0)
    }

    pub fn rx_total(&self) -> u64 {
        self.ports.values().map(|p| p.rx_packets).sum()
    }

    pub fn tx_total(&self) -> u64 {
        self.ports.values().map(|p| p.tx_packets).sum()
    }

    pub fn drop_total(&self) -> u64 {
        self.drops.values().sum()
    }

    pub fn forget_rule(&mut self, id: RuleId) {
        self.rule_hits.remove(&id);
    }

    fn rx(&mut self, role: PortRole, len: usize) {
        let p = self.ports.entry(role).or_default();
        p.rx_packets += 1;
        p.rx_octets += len as u64;
    }

    fn tx(&mut self, role: PortRole, len: usize) {
        let p = self.ports.entry(role).or_default();
        p.tx_packets += 1;
        p.tx_octets += len as u64;
    }

    /// Named counters in a stable order: `rx.<port>`, `rx.<port>.octets`,
    /// `tx.<port>`, `tx.<port>.octets`, `rule.<id>.hits`, `drop.<reason>`.
    pub fn entries(&self) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        for dir in ["rx", "tx"] {
            for role in PortRole::ALL {
                let p = self.port(role);
                let (packets, octets) =
                    if dir == "rx" { (p.rx_packets, p.rx_octets) } else { (p.tx_packets, p.tx_octets) };
                out.push((format!("{dir}.{}", role.name()), packets));
                out.push((format!("{dir}.{}.octets", role.name()), octets));
            }
        }
        for (id, hits) in &self.rule_hits {
            out.push((format!("rule.{id}.hits"), *hits));
        }
        for reason in DropReason::ALL {
            out.push((format!("drop.{}", reason.name()), self.drops(reason)));
        }
        out
    }
}

/// Link-layer addresses used when the node builds a new frame on a port.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortMacs {
    pub src: MacAddr,
    pub next_hop: MacAddr,
}

#[derive(Debug, Clone)]
pub struct PipelineState {
    pub table: RuleTable,
    pub cfg: EncapConfig,
    pub counters: Counters,
    pub macs: BTreeMap<PortRole, PortMacs>,
}

/// Prepends an Ethernet II header to an IPv6 packet.
pub fn rebuild_l2(packet: &[u8], next_hop_mac: MacAddr, src_mac: MacAddr) -> Vec<u8> {
    let mut out = Vec::with_capacity(EthernetHeader::LEN + packet.len());
    EthernetHeader::ipv6(next_hop_mac, src_mac).write(&mut out);
    out.extend_from_slice(packet);
    out
}

impl PipelineState {
    pub fn new(table: RuleTable, cfg: EncapConfig) -> Self {
        PipelineState { table, cfg, counters: Counters::default(), macs: BTreeMap::new() }
    }

    fn frame_for(&self, port: PortRole, packet: &[u8]) -> Vec<u8> {
        let macs = self.macs.get(&port).copied().unwrap_or_default();
        rebuild_l2(packet, macs.next_hop, macs.src)
    }

    /// Handles one frame. Every input yields exactly one verdict and the
    /// counters record it.
    pub fn process(&mut self, in_port: PortRole, frame: &[u8]) -> Verdict {
        self.counters.rx(in_port, frame.len());
        let verdict = match in_port {
            PortRole::RanFacing => self.uplink(frame),
            PortRole::ServiceFacing => self.chain_return(frame),
            PortRole::UpfFacing => Verdict::Emit { port: PortRole::RanFacing, frame: frame.to_vec() },
        };
        match &verdict {
            Verdict::Emit { port, frame } => self.counters.tx(*port, frame.len()),
            Verdict::Drop(reason) => *self.counters.drops.entry(*reason).or_default() += 1,
        }
        verdict
    }

    fn pass_to_upf(frame: &[u8]) -> Verdict {
        Verdict::Emit { port: PortRole::UpfFacing, frame: frame.to_vec() }
    }

    fn uplink(&mut self, frame: &[u8]) -> Verdict {
        // Frames the node cannot classify are not its business.
        let Ok(pkt) = parse_frame(frame) else {
            return Self::pass_to_upf(frame);
        };
        let Ok(key) = extract_key(&pkt, self.table.teid_to_slice()) else {
            return Self::pass_to_upf(frame);
        };
        let Some((rule_id, chain)) = self.table.lookup(&key) else {
            return Self::pass_to_upf(frame);
        };
        let path = SegmentList::with_return(chain.segments(), self.cfg.inca_sid);
        let l3 = &frame[EthernetHeader::LEN..frame.len() - pkt.trailer.len()];
        match h_encaps(l3, &path, &self.cfg) {
            Ok(encapsulated) => {
                *self.counters.rule_hits.entry(rule_id).or_default() += 1;
                Verdict::Emit {
                    port: PortRole::ServiceFacing,
                    frame: self.frame_for(PortRole::ServiceFacing, &encapsulated),
                }
            }
            Err(e) => Verdict::Drop(DropReason::from_srv6(&e)),
        }
    }

    fn chain_return(&mut self, frame: &[u8]) -> Verdict {
        let l3 = frame.get(EthernetHeader::LEN..).unwrap_or_default();
        let Ok(outer) = Ipv6Header::parse(crate::pkt_codec::Layer::Ipv6, l3) else {
            return Verdict::Drop(DropReason::Malformed);
        };
        if outer.dst != self.cfg.inca_sid || outer.next_header != PROTO_ROUTING {
            return Verdict::Drop(DropReason::Malformed);
        }
        match decap(l3, self.cfg.inca_sid) {
            Ok(original) => Verdict::Emit { port: PortRole::UpfFacing, frame: self.frame_for(PortRole::UpfFacing, &original) },
            Err(_) => Verdict::Drop(DropReason::Malformed),
        }
    }
}
