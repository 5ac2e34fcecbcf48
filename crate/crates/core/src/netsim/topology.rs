// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::Ipv6Addr;

use serde::Deserialize;

use super::NetsimError;
use crate::classifier::prefix_contains;
use crate::pkt_codec::MacAddr;
use crate::pipeline::PortRole;

pub const DEFAULT_LATENCY_US: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    #[serde(alias = "Ue", alias = "UE")]
    Ue,
    #[serde(alias = "Ran", alias = "RAN")]
    Ran,
    #[serde(alias = "Inca", alias = "INCA")]
    Inca,
    #[serde(alias = "Nf", alias = "NF")]
    Nf,
    #[serde(alias = "Upf", alias = "UPF")]
    Upf,
    #[serde(alias = "Dn", alias = "DN")]
    Dn,
}

impl NodeKind {
    /// The INCA port role of a link towards a node of this kind.
    pub fn port_role(self) -> Option<PortRole> {
        match self {
            NodeKind::Ran => Some(PortRole::RanFacing),
            NodeKind::Upf => Some(PortRole::UpfFacing),
            NodeKind::Nf => Some(PortRole::ServiceFacing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfBehavior {
    /// Forward everything and keep a copy in the node's tap capture.
    Tap,
    Pass,
    /// Drop frames whose innermost decoded protocol is this number.
    DropMatching(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub prefix: Ipv6Addr,
    pub len: u8,
    /// Index of the next-hop node.
    pub via: usize,
}

/// Maps an inner protocol to the QoS flow it is carried in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosFlow {
    pub proto: u8,
    pub qfi: u8,
}

/// Static uplink tunnel of a RAN node, standing in for an established PDU
/// session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RanTunnel {
    pub teid: u32,
    /// QFI for traffic not listed in `qos_flows`; `None` omits the PDU
    /// Session Container.
    pub qfi: Option<u8>,
    pub qos_flows: Vec<QosFlow>,
    pub peer: Ipv6Addr,
}

impl RanTunnel {
    pub fn qfi_for(&self, proto: u8) -> Option<u8> {
        self.qos_flows.iter().find(|f| f.proto == proto).map(|f| f.qfi).or(self.qfi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
    pub addresses: Vec<Ipv6Addr>,
    pub sid: Option<Ipv6Addr>,
    pub behavior: Option<NfBehavior>,
    pub tunnel: Option<RanTunnel>,
    pub routes: Vec<Route>,
}

impl NodeSpec {
    pub fn owns(&self, addr: &Ipv6Addr) -> bool {
        self.addresses.contains(addr)
    }

    fn reachable_at(&self, addr: &Ipv6Addr) -> bool {
        self.owns(addr) || self.sid.as_ref() == Some(addr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub mac_a: MacAddr,
    pub mac_b: MacAddr,
}

impl Link {
    pub fn other(&self, node: usize) -> usize {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn mac_of(&self, node: usize) -> MacAddr {
        if node == self.a {
            self.mac_a
        } else {
            self.mac_b
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<Link>,
    pub latency_us: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    nodes: Vec<RawNode>,
    links: Vec<RawLink>,
    #[serde(default)]
    latency_us: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
    kind: NodeKind,
    #[serde(default)]
    addresses: Vec<Ipv6Addr>,
    sid: Option<Ipv6Addr>,
    behavior: Option<RawBehavior>,
    teid: Option<u32>,
    qfi: Option<u8>,
    #[serde(default)]
    qos_flows: Vec<QosFlow>,
    gtp_peer: Option<Ipv6Addr>,
    #[serde(default)]
    routes: Vec<RawRoute>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawBehavior {
    Named(String),
    #[serde(rename_all = "snake_case")]
    Drop { drop_proto: u8 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoute {
    prefix: Ipv6Addr,
    len: u8,
    via: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    a: String,
    b: String,
    mac_a: String,
    mac_b: String,
}

fn not_for_kind(path: &str, field: &str, kind: NodeKind) -> NetsimError {
    NetsimError::schema(format!("{path}.{field}"), format!("not allowed on a {kind:?} node"))
}

impl Topology {
    /// Parses and validates a topology document.
    pub fn from_json(text: &str) -> Result<Topology, NetsimError> {
        let raw: RawTopology = serde_json::from_str(text)
            .map_err(|e| NetsimError::schema(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
        Self::resolve(raw)
    }

    fn resolve(raw: RawTopology) -> Result<Topology, NetsimError> {
        let mut index = BTreeMap::new();
        for (i, n) in raw.nodes.iter().enumerate() {
            if n.name.is_empty() {
                return Err(NetsimError::schema(format!("nodes[{i}].name"), "must not be empty"));
            }
            if index.insert(n.name.clone(), i).is_some() {
                return Err(NetsimError::schema(format!("nodes[{i}].name"), format!("duplicate node name {:?}", n.name)));
            }
        }
        let lookup = |path: String, name: &str| {
            index.get(name).copied().ok_or_else(|| NetsimError::UnknownNodeReference { path, name: name.to_owned() })
        };

        let mut links = Vec::with_capacity(raw.links.len());
        let mut pairs = BTreeSet::new();
        for (i, l) in raw.links.iter().enumerate() {
            let a = lookup(format!("links[{i}].a"), &l.a)?;
            let b = lookup(format!("links[{i}].b"), &l.b)?;
            if a == b {
                return Err(NetsimError::schema(format!("links[{i}]"), "a node cannot link to itself"));
            }
            if !pairs.insert((a.min(b), a.max(b))) {
                return Err(NetsimError::schema(format!("links[{i}]"), "duplicate link"));
            }
            let mac = |field: &str, s: &str| {
                s.parse::<MacAddr>()
                    .map_err(|e| NetsimError::schema(format!("links[{i}].{field}"), format!("{e}: {s:?}")))
            };
            links.push(Link { a, b, mac_a: mac("mac_a", &l.mac_a)?, mac_b: mac("mac_b", &l.mac_b)? });
        }
        let adjacent = |x: usize, y: usize| pairs.contains(&(x.min(y), x.max(y)));

        let upfs: Vec<&RawNode> = raw.nodes.iter().filter(|n| n.kind == NodeKind::Upf).collect();
        let mut nodes = Vec::with_capacity(raw.nodes.len());
        let mut sids: BTreeMap<Ipv6Addr, String> = BTreeMap::new();
        let mut incas = 0;
        for (i, n) in raw.nodes.iter().enumerate() {
            let path = format!("nodes[{i}]");
            let kind = n.kind;
            let needs_sid = matches!(kind, NodeKind::Nf | NodeKind::Inca);
            match (needs_sid, n.sid) {
                (true, None) => return Err(NetsimError::schema(format!("{path}.sid"), "required")),
                (false, Some(_)) => return Err(not_for_kind(&path, "sid", kind)),
                _ => {}
            }
            if let Some(sid) = n.sid {
                if let Some(first) = sids.insert(sid, n.name.clone()) {
                    return Err(NetsimError::DuplicateSid { sid, first, second: n.name.clone() });
                }
            }
            let behavior = match (&n.behavior, kind) {
                (None, NodeKind::Nf) => return Err(NetsimError::schema(format!("{path}.behavior"), "required")),
                (None, _) => None,
                (Some(_), k) if k != NodeKind::Nf => return Err(not_for_kind(&path, "behavior", kind)),
                (Some(RawBehavior::Named(s)), _) => Some(match s.as_str() {
                    "tap" => NfBehavior::Tap,
                    "pass" => NfBehavior::Pass,
                    other => {
                        return Err(NetsimError::schema(
                            format!("{path}.behavior"),
                            format!("expected \"tap\", \"pass\" or {{\"drop_proto\": N}}, got {other:?}"),
                        ))
                    }
                }),
                (Some(RawBehavior::Drop { drop_proto }), _) => Some(NfBehavior::DropMatching(*drop_proto)),
            };
            let tunnel = if kind == NodeKind::Ran {
                let teid = n.teid.ok_or_else(|| NetsimError::schema(format!("{path}.teid"), "required"))?;
                for (field, q) in
                    n.qfi.iter().map(|q| ("qfi".to_owned(), *q)).chain(
                        n.qos_flows.iter().enumerate().map(|(j, f)| (format!("qos_flows[{j}].qfi"), f.qfi)),
                    )
                {
                    if q > 63 {
                        return Err(NetsimError::schema(format!("{path}.{field}"), "QFI must be 0..63"));
                    }
                }
                let peer = match (n.gtp_peer, upfs.as_slice()) {
                    (Some(p), _) => p,
                    (None, [upf]) => *upf.addresses.first().ok_or_else(|| {
                        NetsimError::schema(format!("{path}.gtp_peer"), "the UPF node has no address")
                    })?,
                    (None, _) => {
                        return Err(NetsimError::schema(
                            format!("{path}.gtp_peer"),
                            "required unless the topology has exactly one UPF",
                        ))
                    }
                };
                Some(RanTunnel { teid, qfi: n.qfi, qos_flows: n.qos_flows.clone(), peer })
            } else {
                if n.teid.is_some() {
                    return Err(not_for_kind(&path, "teid", kind));
                }
                if n.qfi.is_some() {
                    return Err(not_for_kind(&path, "qfi", kind));
                }
                if !n.qos_flows.is_empty() {
                    return Err(not_for_kind(&path, "qos_flows", kind));
                }
                if n.gtp_peer.is_some() {
                    return Err(not_for_kind(&path, "gtp_peer", kind));
                }
                None
            };
            if matches!(kind, NodeKind::Ran | NodeKind::Inca | NodeKind::Upf) && n.addresses.is_empty() {
                return Err(NetsimError::schema(format!("{path}.addresses"), "at least one address is required"));
            }
            if kind == NodeKind::Inca {
                incas += 1;
                if incas > 1 {
                    return Err(NetsimError::schema(path, "at most one INCA node is supported"));
                }
                for l in links.iter().filter(|l| l.a == i || l.b == i) {
                    let peer = &raw.nodes[l.other(i)];
                    if peer.kind.port_role().is_none() {
                        return Err(NetsimError::schema(
                            path.clone(),
                            format!("INCA can only link to RAN, UPF or NF nodes, not {}", peer.name),
                        ));
                    }
                }
            }
            let mut routes = Vec::with_capacity(n.routes.len());
            for (j, r) in n.routes.iter().enumerate() {
                let rpath = format!("{path}.routes[{j}]");
                if r.len > 128 {
                    return Err(NetsimError::schema(format!("{rpath}.len"), "prefix length must be 0..128"));
                }
                let via = lookup(format!("{rpath}.via"), &r.via)?;
                if !adjacent(i, via) {
                    return Err(NetsimError::schema(format!("{rpath}.via"), format!("{} is not a neighbor", r.via)));
                }
                routes.push(Route { prefix: r.prefix, len: r.len, via });
            }
            nodes.push(NodeSpec {
                name: n.name.clone(),
                kind,
                addresses: n.addresses.clone(),
                sid: n.sid,
                behavior,
                tunnel,
                routes,
            });
        }

        let topo = Topology { nodes, links, latency_us: raw.latency_us.unwrap_or(DEFAULT_LATENCY_US) };
        if !topo.is_connected() {
            return Err(NetsimError::schema("links", "the topology graph is not connected"));
        }
        Ok(topo)
    }

    fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(n) = queue.pop_front() {
            for (_, m) in self.neighbors(n) {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// `(link index, neighbor index)` pairs in link declaration order.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.links.iter().enumerate().filter(move |(_, l)| l.a == node || l.b == node).map(move |(i, l)| (i, l.other(node)))
    }

    pub fn link_between(&self, x: usize, y: usize) -> Option<usize> {
        self.links.iter().position(|l| (l.a == x && l.b == y) || (l.a == y && l.b == x))
    }

    /// Next-hop link for `dst` at `node`: longest matching prefix among the
    /// node's routes and implicit host routes to its neighbors' addresses
    /// and SIDs. Explicit routes win ties, earlier declarations first.
    pub fn next_hop(&self, node: usize, dst: &Ipv6Addr) -> Option<usize> {
        let mut best: Option<(u8, usize)> = None;
        for r in &self.nodes[node].routes {
            if prefix_contains(r.prefix, r.len, *dst) && best.is_none_or(|(len, _)| r.len > len) {
                best = Some((r.len, r.via));
            }
        }
        if best.is_none_or(|(len, _)| len < 128) {
            if let Some((_, m)) = self.neighbors(node).find(|&(_, m)| self.nodes[m].reachable_at(dst)) {
                best = Some((128, m));
            }
        }
        best.and_then(|(_, via)| self.link_between(node, via))
    }

    pub fn link_name(&self, link: usize) -> String {
        let l = &self.links[link];
        format!("{}-{}", self.nodes[l.a].name, self.nodes[l.b].name)
    }
}
