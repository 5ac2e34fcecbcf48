// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::io;
use std::net::Ipv6Addr;
use std::path::Path;

use serde::Serialize;

use super::{ran_encapsulate, upf_decapsulate, NetsimError, NfBehavior, NodeKind, Scenario, Topology};
use crate::classifier::RuleTable;
use crate::ctrl::load_rules_file;
use crate::pcap::{PcapRecord, PcapWriter};
use crate::pipeline::{rebuild_l2, DropReason, PipelineState, PortMacs, PortRole, Verdict};
use crate::pkt_codec::{parse_packet, EthernetHeader, Ipv6Header};
use crate::srv6::{end_process_in_place, EncapConfig};

/// Transmissions after which a packet is considered to be looping.
const MAX_TRANSMISSIONS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    InFlight,
    /// The packet as the terminal node received it, without L2.
    Delivered { node: String, packet: Vec<u8> },
    Dropped { node: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketTrace {
    /// Index into the scenario's injections.
    pub flow: usize,
    pub injected_at_us: u64,
    /// The packet as its origin emitted it, without L2.
    pub emitted: Vec<u8>,
    /// Nodes that handled the packet, origin first.
    pub traversal: Vec<String>,
    pub outcome: Outcome,
    transmissions: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraversalCount {
    pub path: Vec<String>,
    pub packets: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowReport {
    pub name: String,
    pub injected: u64,
    /// Traversal of the flow's first packet.
    pub traversal: Vec<String>,
    pub delivered: u64,
    pub delivered_at: BTreeMap<String, u64>,
    pub dropped_at: BTreeMap<String, u64>,
    /// Every distinct traversal, in order of first appearance.
    pub traversals: Vec<TraversalCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub flows: Vec<FlowReport>,
    pub counters: BTreeMap<String, u64>,
    #[serde(skip)]
    pub packets: Vec<PacketTrace>,
    /// Capture file name to records: `<a>-<b>.pcap` per link and
    /// `tap-<node>.pcap` per tapping NF.
    #[serde(skip)]
    pub captures: BTreeMap<String, Vec<PcapRecord>>,
}

impl ScenarioReport {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn capture(&self, name: &str) -> Option<&[PcapRecord]> {
        self.captures.get(name).map(Vec::as_slice)
    }

    pub fn capture_bytes(&self, name: &str) -> Option<Vec<u8>> {
        let records = self.captures.get(name)?;
        let mut w = PcapWriter::new(Vec::new()).ok()?;
        for r in records {
            w.write_record(r).ok()?;
        }
        Some(w.into_inner())
    }

    pub fn write_captures(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for name in self.captures.keys() {
            let bytes = self.capture_bytes(name).ok_or_else(|| io::Error::other("capture encoding failed"))?;
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

struct Scheduled {
    flow: usize,
    at_us: u64,
    node: usize,
    packet: Vec<u8>,
}

struct Arrival {
    link: usize,
    to: usize,
    pkt: usize,
    frame: Vec<u8>,
}

fn dst_of(l3: &[u8]) -> Option<Ipv6Addr> {
    Ipv6Header::looks_like(l3).then(|| {
        let b: [u8; 16] = l3[24..40].try_into().unwrap();
        Ipv6Addr::from(b)
    })
}

/// Event-driven simulator. Each scheduled injection is one step; a step
/// runs until no frame is left in flight.
pub struct Simulator {
    topo: Topology,
    inca: Option<(usize, PipelineState)>,
    flow_names: Vec<String>,
    schedule: Vec<Scheduled>,
    next: usize,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Arrival>,
    packets: Vec<PacketTrace>,
    link_captures: Vec<Vec<PcapRecord>>,
    taps: BTreeMap<usize, Vec<PcapRecord>>,
    counters: BTreeMap<String, u64>,
}

impl Simulator {
    pub fn new(topo: Topology, table: RuleTable, scenario: &Scenario) -> Result<Simulator, NetsimError> {
        let inca = topo.nodes.iter().position(|n| n.kind == NodeKind::Inca).map(|i| {
            let n = &topo.nodes[i];
            let cfg = EncapConfig::new(n.addresses[0], n.sid.expect("validated"));
            let mut state = PipelineState::new(table.clone(), cfg);
            for (link, peer) in topo.neighbors(i) {
                if let Some(role) = topo.nodes[peer].kind.port_role() {
                    let l = &topo.links[link];
                    state.macs.insert(role, PortMacs { src: l.mac_of(i), next_hop: l.mac_of(peer) });
                }
            }
            (i, state)
        });

        let mut schedule = Vec::new();
        let mut cursor = 0u64;
        for (flow, inj) in scenario.injections.iter().enumerate() {
            let node = topo.node_index(&inj.at).ok_or_else(|| NetsimError::UnknownNodeReference {
                path: format!("injections[{flow}].at"),
                name: inj.at.clone(),
            })?;
            let start = cursor.max(inj.start_us);
            let gap = inj.gap_us();
            for (k, packet) in inj.packets().into_iter().enumerate() {
                let at_us = start + k as u64 * gap;
                cursor = at_us + gap;
                schedule.push(Scheduled { flow, at_us, node, packet });
            }
        }

        let taps = topo
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.behavior == Some(NfBehavior::Tap))
            .map(|(i, _)| (i, Vec::new()))
            .collect();
        Ok(Simulator {
            link_captures: vec![Vec::new(); topo.links.len()],
            topo,
            inca,
            flow_names: scenario.injections.iter().map(|i| i.name.clone()).collect(),
            schedule,
            next: 0,
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            packets: Vec::new(),
            taps,
            counters: BTreeMap::new(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    /// The INCA node's dataplane state, for rule changes between steps.
    pub fn pipeline_mut(&mut self) -> Option<&mut PipelineState> {
        self.inca.as_mut().map(|(_, s)| s)
    }

    pub fn now_us(&self) -> u64 {
        self.now
    }

    pub fn steps_total(&self) -> usize {
        self.schedule.len()
    }

    pub fn steps_remaining(&self) -> usize {
        self.schedule.len() - self.next
    }

    /// Injects the next scheduled packet and runs to quiescence. Returns
    /// false when nothing was left to inject.
    pub fn step(&mut self) -> bool {
        let Some(s) = self.schedule.get(self.next) else {
            return false;
        };
        self.next += 1;
        self.now = self.now.max(s.at_us);
        let (node, packet) = (s.node, s.packet.clone());
        let pkt = self.packets.len();
        self.packets.push(PacketTrace {
            flow: s.flow,
            injected_at_us: self.now,
            emitted: packet.clone(),
            traversal: vec![self.topo.nodes[node].name.clone()],
            outcome: Outcome::InFlight,
            transmissions: 0,
        });
        self.bump(node, "injected");
        self.deliver_or_forward(node, pkt, packet);
        while let Some(((t, _), a)) = self.queue.pop_first() {
            self.now = t;
            self.arrive(a);
        }
        true
    }

    pub fn run(&mut self) {
        while self.step() {}
    }

    fn bump(&mut self, node: usize, what: &str) {
        *self.counters.entry(format!("{}.{what}", self.topo.nodes[node].name)).or_default() += 1;
    }

    fn deliver(&mut self, node: usize, pkt: usize, l3: Vec<u8>) {
        self.bump(node, "delivered");
        self.packets[pkt].outcome = Outcome::Delivered { node: self.topo.nodes[node].name.clone(), packet: l3 };
    }

    fn drop_packet(&mut self, node: usize, pkt: usize, reason: &str) {
        self.bump(node, &format!("drop.{reason}"));
        self.packets[pkt].outcome = Outcome::Dropped { node: self.topo.nodes[node].name.clone(), reason: reason.into() };
    }

    fn deliver_or_forward(&mut self, node: usize, pkt: usize, l3: Vec<u8>) {
        match dst_of(&l3) {
            Some(dst) if self.topo.nodes[node].owns(&dst) => self.deliver(node, pkt, l3),
            _ => self.forward(node, pkt, l3),
        }
    }

    /// Plain IPv6 forwarding on the destination address.
    fn forward(&mut self, node: usize, pkt: usize, l3: Vec<u8>) {
        let Some(dst) = dst_of(&l3) else {
            return self.drop_packet(node, pkt, "malformed");
        };
        match self.topo.next_hop(node, &dst) {
            Some(link) => self.transmit(node, link, pkt, l3),
            None => self.drop_packet(node, pkt, "no_route"),
        }
    }

    fn transmit(&mut self, from: usize, link: usize, pkt: usize, l3: Vec<u8>) {
        let trace = &mut self.packets[pkt];
        trace.transmissions += 1;
        if trace.transmissions > MAX_TRANSMISSIONS {
            return self.drop_packet(from, pkt, "loop");
        }
        let l = &self.topo.links[link];
        let to = l.other(from);
        let frame = rebuild_l2(&l3, l.mac_of(to), l.mac_of(from));
        self.link_captures[link].push(PcapRecord::new(self.now, frame.clone()));
        self.bump(from, "tx");
        let at = self.now + self.topo.latency_us;
        self.queue.insert((at, self.seq), Arrival { link, to, pkt, frame });
        self.seq += 1;
    }

    fn arrive(&mut self, a: Arrival) {
        let node = a.to;
        self.bump(node, "rx");
        let kind = self.topo.nodes[node].kind;
        if kind == NodeKind::Inca {
            return self.inca_receive(node, a);
        }
        let name = self.topo.nodes[node].name.clone();
        self.packets[a.pkt].traversal.push(name);
        let l3 = a.frame[EthernetHeader::LEN..].to_vec();
        let from = self.topo.links[a.link].other(node);
        match kind {
            NodeKind::Ran if self.topo.nodes[from].kind == NodeKind::Ue => {
                match ran_encapsulate(&self.topo.nodes[node], &l3) {
                    Ok(tunnelled) => self.forward(node, a.pkt, tunnelled),
                    Err(_) => self.drop_packet(node, a.pkt, "missing_tunnel_config"),
                }
            }
            NodeKind::Upf => match upf_decapsulate(&self.topo.nodes[node], &l3) {
                Ok(inner) => {
                    self.bump(node, "decap");
                    self.deliver_or_forward(node, a.pkt, inner);
                }
                Err(_) => self.deliver_or_forward(node, a.pkt, l3),
            },
            NodeKind::Nf => self.nf_receive(node, a.pkt, &a.frame, l3),
            _ => self.deliver_or_forward(node, a.pkt, l3),
        }
    }

    fn nf_receive(&mut self, node: usize, pkt: usize, frame: &[u8], mut l3: Vec<u8>) {
        let spec = &self.topo.nodes[node];
        let (sid, behavior) = (spec.sid.expect("validated"), spec.behavior.expect("validated"));
        if dst_of(&l3) != Some(sid) {
            return self.deliver_or_forward(node, pkt, l3);
        }
        if let Err(e) = end_process_in_place(&mut l3, sid) {
            return self.drop_packet(node, pkt, DropReason::from_srv6(&e).name());
        }
        match behavior {
            NfBehavior::Tap => {
                self.bump(node, "tap");
                let rec = PcapRecord::new(self.now, frame.to_vec());
                self.taps.entry(node).or_default().push(rec);
            }
            NfBehavior::Pass => {}
            NfBehavior::DropMatching(proto) => {
                if parse_packet(&l3).ok().and_then(|p| p.innermost_proto()) == Some(proto) {
                    return self.drop_packet(node, pkt, "filtered");
                }
            }
        }
        self.forward(node, pkt, l3)
    }

    fn inca_receive(&mut self, node: usize, a: Arrival) {
        let from = self.topo.links[a.link].other(node);
        let role = self.topo.nodes[from].kind.port_role().expect("validated");
        let l3 = &a.frame[EthernetHeader::LEN..];
        let sid = self.topo.nodes[node].sid;
        // The embedded switch delivers service-side frames for another
        // network function directly; the dataplane never sees them.
        if role == PortRole::ServiceFacing {
            if let Some(dst) = dst_of(l3).filter(|d| Some(*d) != sid) {
                let hairpin = self.topo.neighbors(node).find(|&(_, m)| {
                    let n = &self.topo.nodes[m];
                    n.kind == NodeKind::Nf && (n.owns(&dst) || n.sid == Some(dst))
                });
                if let Some((link, _)) = hairpin {
                    self.bump(node, "hairpin");
                    return self.transmit(node, link, a.pkt, l3.to_vec());
                }
            }
        }
        let name = self.topo.nodes[node].name.clone();
        self.packets[a.pkt].traversal.push(name);
        let (_, state) = self.inca.as_mut().expect("INCA node has a pipeline");
        match state.process(role, &a.frame) {
            Verdict::Emit { port, frame } => {
                let out = frame[EthernetHeader::LEN..].to_vec();
                match self.egress_link(node, port, dst_of(&out)) {
                    Some(link) => self.transmit(node, link, a.pkt, out),
                    None => self.drop_packet(node, a.pkt, "no_route"),
                }
            }
            Verdict::Drop(reason) => self.drop_packet(node, a.pkt, reason.name()),
        }
    }

    /// The link on `port` towards `dst`; with a single candidate link the
    /// destination does not matter.
    fn egress_link(&self, node: usize, port: PortRole, dst: Option<Ipv6Addr>) -> Option<usize> {
        let candidates: Vec<usize> = self
            .topo
            .neighbors(node)
            .filter(|&(_, m)| self.topo.nodes[m].kind.port_role() == Some(port))
            .map(|(l, _)| l)
            .collect();
        if let Some(link) = dst.and_then(|d| self.topo.next_hop(node, &d)).filter(|l| candidates.contains(l)) {
            return Some(link);
        }
        match candidates.as_slice() {
            [only] => Some(*only),
            _ => None,
        }
    }

    pub fn report(&self) -> ScenarioReport {
        let mut flows: Vec<FlowReport> = self
            .flow_names
            .iter()
            .map(|name| FlowReport {
                name: name.clone(),
                injected: 0,
                traversal: Vec::new(),
                delivered: 0,
                delivered_at: BTreeMap::new(),
                dropped_at: BTreeMap::new(),
                traversals: Vec::new(),
            })
            .collect();
        for p in &self.packets {
            let f = &mut flows[p.flow];
            if f.injected == 0 {
                f.traversal = p.traversal.clone();
            }
            f.injected += 1;
            match &p.outcome {
                Outcome::Delivered { node, .. } => {
                    f.delivered += 1;
                    *f.delivered_at.entry(node.clone()).or_default() += 1;
                }
                Outcome::Dropped { node, .. } => *f.dropped_at.entry(node.clone()).or_default() += 1,
                Outcome::InFlight => {}
            }
            match f.traversals.iter_mut().find(|t| t.path == p.traversal) {
                Some(t) => t.packets += 1,
                None => f.traversals.push(TraversalCount { path: p.traversal.clone(), packets: 1 }),
            }
        }

        let mut counters = self.counters.clone();
        if let Some((i, state)) = &self.inca {
            let name = &self.topo.nodes[*i].name;
            for (k, v) in state.counters.entries() {
                counters.insert(format!("{name}.{k}"), v);
            }
        }
        let mut captures = BTreeMap::new();
        for (i, recs) in self.link_captures.iter().enumerate() {
            counters.insert(format!("link.{}.frames", self.topo.link_name(i)), recs.len() as u64);
            captures.insert(format!("{}.pcap", self.topo.link_name(i)), recs.clone());
        }
        for (node, recs) in &self.taps {
            captures.insert(format!("tap-{}.pcap", self.topo.nodes[*node].name), recs.clone());
        }
        ScenarioReport { flows, counters, packets: self.packets.clone(), captures }
    }
}

/// Loads the rules and runs every injection of the scenario.
pub fn run_scenario(topology: &Topology, rules_text: &str, scenario: &Scenario) -> Result<ScenarioReport, NetsimError> {
    let table = load_rules_file(rules_text)?.build_table()?;
    let mut sim = Simulator::new(topology.clone(), table, scenario)?;
    sim.run();
    Ok(sim.report())
}
