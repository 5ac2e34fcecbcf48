// SPDX-License-Identifier: Apache-2.0

//! Priority-ordered ternary match-action table over the traffic
//! identification key of a GTP-U frame: TEID, QFI, slice, and the inner
//! flow's 5-tuple.

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv6Addr;

use crate::pkt_codec::ParsedPacket;

pub type RuleId = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifierError {
    #[error("NotGtpTraffic")]
    NotGtpTraffic,
    #[error("DuplicateRuleId: {0}")]
    DuplicateRuleId(RuleId),
    #[error("UnknownRuleId: {0}")]
    UnknownRuleId(RuleId),
    #[error("UnknownChain: {0}")]
    UnknownChain(String),
    #[error("InvalidChain: {0}")]
    InvalidChain(&'static str),
}

/// The inner user flow. Absent when the tunnelled packet is not IPv6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowTuple {
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub proto: u8,
    pub src_port: u16,
    pub dst_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchKey {
    pub teid: u32,
    pub qfi: u8,
    pub slice_id: u16,
    pub flow: Option<FlowTuple>,
}

/// Builds the lookup key. QFI is 0 without a PDU Session Container and the
/// slice is 0 when the TEID has no mapping.
pub fn extract_key(pkt: &ParsedPacket, teid_to_slice: &BTreeMap<u32, u16>) -> Result<MatchKey, ClassifierError> {
    let gtp = pkt.gtpu.as_ref().ok_or(ClassifierError::NotGtpTraffic)?;
    let flow = pkt.inner.as_ref().map(|inner| {
        let (src_port, dst_port) = inner.l4().ports();
        FlowTuple { src: inner.ipv6.src, dst: inner.ipv6.dst, proto: inner.l4_proto(), src_port, dst_port }
    });
    Ok(MatchKey {
        teid: gtp.teid,
        qfi: pkt.pdu_container().map_or(0, |c| c.qfi),
        slice_id: teid_to_slice.get(&gtp.teid).copied().unwrap_or(0),
        flow,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldMatch<T> {
    #[default]
    Any,
    Exact(T),
}

impl<T: PartialEq> FieldMatch<T> {
    pub fn matches(&self, value: &T) -> bool {
        match self {
            FieldMatch::Any => true,
            FieldMatch::Exact(v) => v == value,
        }
    }

    pub fn is_any(&self) -> bool {
        matches!(self, FieldMatch::Any)
    }
}

/// Address match: prefixes are only meaningful on addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AddrMatch {
    #[default]
    Any,
    Exact(Ipv6Addr),
    /// Prefix lengths above 128 behave as 128.
    Prefix(Ipv6Addr, u8),
}

impl AddrMatch {
    pub fn matches(&self, addr: &Ipv6Addr) -> bool {
        match *self {
            AddrMatch::Any => true,
            AddrMatch::Exact(a) => a == *addr,
            AddrMatch::Prefix(net, len) => prefix_contains(net, len, *addr),
        }
    }

    pub fn is_any(&self) -> bool {
        matches!(self, AddrMatch::Any)
    }
}

pub fn prefix_contains(net: Ipv6Addr, len: u8, addr: Ipv6Addr) -> bool {
    let len = u32::from(len.min(128));
    if len == 0 {
        return true;
    }
    let mask = u128::MAX << (128 - len);
    (u128::from(net) & mask) == (u128::from(addr) & mask)
}

/// One predicate per key field; all must hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RuleMatch {
    pub teid: FieldMatch<u32>,
    pub qfi: FieldMatch<u8>,
    pub slice: FieldMatch<u16>,
    pub src: AddrMatch,
    pub dst: AddrMatch,
    pub proto: FieldMatch<u8>,
    pub sport: FieldMatch<u16>,
    pub dport: FieldMatch<u16>,
}

impl RuleMatch {
    fn constrains_flow(&self) -> bool {
        !(self.src.is_any()
            && self.dst.is_any()
            && self.proto.is_any()
            && self.sport.is_any()
            && self.dport.is_any())
    }

    pub fn matches(&self, key: &MatchKey) -> bool {
        if !(self.teid.matches(&key.teid) && self.qfi.matches(&key.qfi) && self.slice.matches(&key.slice_id)) {
            return false;
        }
        match &key.flow {
            Some(f) => {
                self.src.matches(&f.src)
                    && self.dst.matches(&f.dst)
                    && self.proto.matches(&f.proto)
                    && self.sport.matches(&f.src_port)
                    && self.dport.matches(&f.dst_port)
            }
            None => !self.constrains_flow(),
        }
    }
}

/// Writes the non-wildcard fields as `key=value` tokens in the rules-file
/// grammar, space separated.
impl fmt::Display for RuleMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut sep = "";
        let mut field = |f: &mut fmt::Formatter<'_>, name: &str, value: &dyn fmt::Display| {
            let r = write!(f, "{sep}{name}={value}");
            sep = " ";
            r
        };
        if let FieldMatch::Exact(v) = self.teid {
            field(f, "teid", &v)?;
        }
        if let FieldMatch::Exact(v) = self.qfi {
            field(f, "qfi", &v)?;
        }
        if let FieldMatch::Exact(v) = self.slice {
            field(f, "slice", &v)?;
        }
        for (name, m) in [("src", self.src), ("dst", self.dst)] {
            match m {
                AddrMatch::Any => {}
                AddrMatch::Exact(a) => field(f, name, &a)?,
                AddrMatch::Prefix(a, len) => field(f, name, &format_args!("{a}/{len}"))?,
            }
        }
        if let FieldMatch::Exact(v) = self.proto {
            field(f, "proto", &v)?;
        }
        if let FieldMatch::Exact(v) = self.sport {
            field(f, "sport", &v)?;
        }
        if let FieldMatch::Exact(v) = self.dport {
            field(f, "dport", &v)?;
        }
        Ok(())
    }
}

/// A named, ordered list of network-function SIDs. The return SID of the
/// steering node is not part of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainPolicy {
    name: String,
    segments: Vec<Ipv6Addr>,
}

impl ChainPolicy {
    pub fn new(name: impl Into<String>, segments: Vec<Ipv6Addr>) -> Result<Self, ClassifierError> {
        if segments.is_empty() {
            return Err(ClassifierError::InvalidChain("segment list is empty"));
        }
        if segments.windows(2).any(|w| w[0] == w[1]) {
            return Err(ClassifierError::InvalidChain("consecutive duplicate SIDs"));
        }
        Ok(ChainPolicy { name: name.into(), segments })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn segments(&self) -> &[Ipv6Addr] {
        &self.segments
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub id: RuleId,
    /// Higher wins.
    pub priority: i32,
    pub matcher: RuleMatch,
    pub action: ChainPolicy,
}

/// Rules are kept sorted by descending priority then ascending id, so the
/// first match is the answer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleTable {
    rules: Vec<Rule>,
    chains: BTreeMap<String, ChainPolicy>,
    teid_to_slice: BTreeMap<u32, u16>,
}

impl RuleTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn order(rule: &Rule) -> (Reverse<i32>, RuleId) {
        (Reverse(rule.priority), rule.id)
    }

    pub fn lookup(&self, key: &MatchKey) -> Option<(RuleId, &ChainPolicy)> {
        self.rules.iter().find(|r| r.matcher.matches(key)).map(|r| (r.id, &r.action))
    }

    pub fn add_rule(&mut self, rule: Rule) -> Result<(), ClassifierError> {
        if self.get(rule.id).is_some() {
            return Err(ClassifierError::DuplicateRuleId(rule.id));
        }
        let at = self.rules.partition_point(|r| Self::order(r) < Self::order(&rule));
        self.rules.insert(at, rule);
        Ok(())
    }

    pub fn remove_rule(&mut self, id: RuleId) -> Result<Rule, ClassifierError> {
        let at = self.rules.iter().position(|r| r.id == id).ok_or(ClassifierError::UnknownRuleId(id))?;
        Ok(self.rules.remove(at))
    }

    pub fn get(&self, id: RuleId) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Rules in lookup order.
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Defines or replaces a named chain. Rules already pointing at the name
    /// follow the new definition.
    pub fn define_chain(&mut self, chain: ChainPolicy) {
        for rule in self.rules.iter_mut().filter(|r| r.action.name == chain.name) {
            rule.action = chain.clone();
        }
        self.chains.insert(chain.name.clone(), chain);
    }

    pub fn chain(&self, name: &str) -> Option<&ChainPolicy> {
        self.chains.get(name)
    }

    pub fn chains(&self) -> impl Iterator<Item = &ChainPolicy> {
        self.chains.values()
    }

    /// Resolves `chain` by name and inserts the rule.
    pub fn add_rule_for_chain(
        &mut self,
        id: RuleId,
        priority: i32,
        matcher: RuleMatch,
        chain: &str,
    ) -> Result<(), ClassifierError> {
        let action = self.chain(chain).cloned().ok_or_else(|| ClassifierError::UnknownChain(chain.to_owned()))?;
        self.add_rule(Rule { id, priority, matcher, action })
    }

    pub fn map_slice(&mut self, teid: u32, slice: u16) {
        self.teid_to_slice.insert(teid, slice);
    }

    pub fn teid_to_slice(&self) -> &BTreeMap<u32, u16> {
        &self.teid_to_slice
    }
}
