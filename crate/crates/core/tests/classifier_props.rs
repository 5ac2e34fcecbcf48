// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;
use std::net::Ipv6Addr;

use common::*;
use inca_core::classifier::{extract_key, ChainPolicy, ClassifierError, FlowTuple, Rule, RuleId, RuleMatch, RuleTable};
use inca_core::pkt_codec::parse_frame;
use proptest::collection::vec;
use proptest::prelude::*;

fn chain_for(id: RuleId) -> ChainPolicy {
    ChainPolicy::new(format!("c{id}"), vec![Ipv6Addr::from(u128::from(id) + 1)]).unwrap()
}

fn table_of(rules: &[(RuleId, i32, RuleMatch)]) -> RuleTable {
    let mut t = RuleTable::new();
    for (id, prio, m) in rules {
        t.add_rule(Rule { id: *id, priority: *prio, matcher: *m, action: chain_for(*id) }).unwrap();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn lookup_equals_linear_scan(rules in rule_set(256), keys in vec(match_key(), 1..24)) {
        let t = table_of(&rules);
        for k in &keys {
            let got = t.lookup(k);
            prop_assert_eq!(got.map(|(id, _)| id), oracle_lookup(&rules, k));
            if let Some((id, chain)) = got {
                prop_assert_eq!(chain, &chain_for(id));
            }
        }
    }

    #[test]
    fn insertion_order_is_irrelevant(
        (rules, shuffled) in rule_set(64).prop_flat_map(|r| (Just(r.clone()), Just(r).prop_shuffle())),
        keys in vec(match_key(), 1..16),
    ) {
        let a = table_of(&rules);
        let b = table_of(&shuffled);
        prop_assert_eq!(a.rules(), b.rules());
        for k in &keys {
            prop_assert_eq!(a.lookup(k).map(|x| x.0), b.lookup(k).map(|x| x.0));
        }
    }

    #[test]
    fn removal_restores_the_oracle(
        rules in rule_set(64),
        drop_mask in vec(any::<bool>(), 64),
        keys in vec(match_key(), 1..16),
    ) {
        let mut t = table_of(&rules);
        let mut kept = Vec::new();
        for (i, r) in rules.iter().enumerate() {
            if drop_mask[i] {
                prop_assert_eq!(t.remove_rule(r.0).unwrap().id, r.0);
                prop_assert_eq!(t.remove_rule(r.0), Err(ClassifierError::UnknownRuleId(r.0)));
            } else {
                kept.push(*r);
            }
        }
        prop_assert_eq!(t.rules().len(), kept.len());
        for k in &keys {
            prop_assert_eq!(t.lookup(k).map(|x| x.0), oracle_lookup(&kept, k));
        }
    }

    #[test]
    fn duplicate_ids_are_refused(rules in rule_set(32).prop_filter("non-empty", |r| !r.is_empty())) {
        let mut t = table_of(&rules);
        let before = t.clone();
        let (id, prio, m) = rules[0];
        prop_assert_eq!(
            t.add_rule(Rule { id, priority: prio + 1, matcher: m, action: chain_for(id) }),
            Err(ClassifierError::DuplicateRuleId(id))
        );
        prop_assert_eq!(t, before);
    }

    #[test]
    fn keys_come_from_the_frame(spec in gtp_frame_spec(), slice in any::<u16>()) {
        let bytes = frame_bytes(&spec);
        let pkt = parse_frame(&bytes).unwrap();
        let UdpBody::Gtp(g) = &spec.udp.body else { unreachable!() };
        let Tpdu::Inner(inner) = &g.tpdu else { unreachable!() };
        let (proto, sport, dport) = match &inner.l4 {
            InnerL4Spec::Udp { sport, dport, .. } => (17, *sport, *dport),
            InnerL4Spec::Tcp { sport, dport, .. } => (6, *sport, *dport),
            InnerL4Spec::Icmpv6 { .. } => (58, 0, 0),
            InnerL4Spec::Other { proto, .. } => (*proto, 0, 0),
        };
        let want_flow = FlowTuple {
            src: addr(inner.ip.src),
            dst: addr(inner.ip.dst),
            proto,
            src_port: sport,
            dst_port: dport,
        };
        let mut slices = BTreeMap::new();
        let k = extract_key(&pkt, &slices).unwrap();
        prop_assert_eq!(k.teid, g.teid);
        prop_assert_eq!(k.qfi, g.container.as_ref().map_or(0, |c| c.qfi));
        prop_assert_eq!(k.slice_id, 0);
        prop_assert_eq!(k.flow, Some(want_flow));
        slices.insert(g.teid, slice);
        prop_assert_eq!(extract_key(&pkt, &slices).unwrap().slice_id, slice);
    }
}

#[test]
fn non_gtp_frames_have_no_key() {
    let inner = inner_bytes(&InnerSpec {
        ip: IpSpec { src: [1; 16], dst: [2; 16], tc: 0, flow: 0, hlim: 64 },
        l4: InnerL4Spec::Udp { sport: 1, dport: 2, payload: vec![] },
    });
    let mut frame = vec![0; 12];
    frame.extend_from_slice(&[0x86, 0xdd]);
    frame.extend_from_slice(&inner);
    let pkt = parse_frame(&frame).unwrap();
    assert_eq!(extract_key(&pkt, &BTreeMap::new()), Err(ClassifierError::NotGtpTraffic));
}

#[test]
fn opaque_inner_only_matches_flow_free_rules() {
    let key = inca_core::classifier::MatchKey { teid: 1, qfi: 1, slice_id: 0, flow: None };
    let open = RuleMatch { qfi: inca_core::classifier::FieldMatch::Exact(1), ..RuleMatch::default() };
    let mut with_proto = open;
    with_proto.proto = inca_core::classifier::FieldMatch::Exact(17);
    let rules = vec![(1, 5, with_proto), (2, 1, open)];
    assert_eq!(oracle_lookup(&rules, &key), Some(2));
    assert_eq!(table_of(&rules).lookup(&key).map(|x| x.0), Some(2));
}
