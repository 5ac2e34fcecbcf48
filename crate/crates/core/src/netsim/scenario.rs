// SPDX-License-Identifier: Apache-2.0

use std::net::Ipv6Addr;

use serde::Deserialize;

use super::NetsimError;
use crate::pkt_codec::{build_ipv6_udp, transport_checksum, Ipv6Header, PROTO_ICMPV6, PROTO_TCP, PROTO_UDP};

const MAX_PAYLOAD: usize = 8000;
const ICMPV6_ECHO_REQUEST: u8 = 128;
const TCP_HEADER_LEN: usize = 20;

/// Traffic generator parameters. Ports are ignored by protocols without
/// them; for ICMPv6 `sport` becomes the echo identifier.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub proto: u8,
    #[serde(default)]
    pub sport: u16,
    #[serde(default)]
    pub dport: u16,
    #[serde(default)]
    pub payload_len: usize,
    #[serde(default = "one")]
    pub count: u32,
    #[serde(default = "one_u64")]
    pub gap_us: u64,
}

fn one() -> u32 {
    1
}

fn one_u64() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InjectionSource {
    /// One IPv6 packet, without L2.
    Raw(Vec<u8>),
    Gen(GenSpec),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub name: String,
    pub at: String,
    /// Earliest injection time in simulated microseconds.
    pub start_us: u64,
    pub source: InjectionSource,
}

impl Injection {
    /// The IPv6 packets this injection emits, in order.
    pub fn packets(&self) -> Vec<Vec<u8>> {
        match &self.source {
            InjectionSource::Raw(bytes) => vec![bytes.clone()],
            InjectionSource::Gen(g) => (0..g.count).map(|k| g.packet(k)).collect(),
        }
    }

    pub fn gap_us(&self) -> u64 {
        match &self.source {
            InjectionSource::Raw(_) => 1,
            InjectionSource::Gen(g) => g.gap_us,
        }
    }
}

impl GenSpec {
    fn payload(&self, k: u32) -> Vec<u8> {
        let mut p: Vec<u8> = (0..self.payload_len).map(|j| (j as u8).wrapping_add(k as u8)).collect();
        let seq = k.to_be_bytes();
        let n = p.len().min(4);
        p[..n].copy_from_slice(&seq[..n]);
        p
    }

    /// The `k`-th generated packet.
    pub fn packet(&self, k: u32) -> Vec<u8> {
        let payload = self.payload(k);
        let segment = match self.proto {
            PROTO_UDP => return build_ipv6_udp(self.src, self.dst, self.sport, self.dport, &payload),
            PROTO_ICMPV6 => {
                let mut s = vec![ICMPV6_ECHO_REQUEST, 0, 0, 0];
                s.extend_from_slice(&self.sport.to_be_bytes());
                s.extend_from_slice(&(k as u16).to_be_bytes());
                s.extend_from_slice(&payload);
                let sum = transport_checksum(self.src, self.dst, PROTO_ICMPV6, &s, 2);
                s[2..4].copy_from_slice(&sum.to_be_bytes());
                s
            }
            PROTO_TCP => {
                let mut s = Vec::with_capacity(TCP_HEADER_LEN + payload.len());
                s.extend_from_slice(&self.sport.to_be_bytes());
                s.extend_from_slice(&self.dport.to_be_bytes());
                s.extend_from_slice(&k.to_be_bytes());
                s.extend_from_slice(&[0, 0, 0, 0]);
                s.push((TCP_HEADER_LEN as u8 / 4) << 4);
                s.push(0x18); // PSH|ACK
                s.extend_from_slice(&[0xff, 0xff, 0, 0, 0, 0]);
                s.extend_from_slice(&payload);
                let sum = transport_checksum(self.src, self.dst, PROTO_TCP, &s, 16);
                s[16..18].copy_from_slice(&sum.to_be_bytes());
                s
            }
            _ => payload,
        };
        let mut ip = Ipv6Header::new(self.src, self.dst, self.proto, 64);
        ip.payload_length = segment.len() as u16;
        let mut out = Vec::with_capacity(Ipv6Header::LEN + segment.len());
        ip.write(&mut out);
        out.extend_from_slice(&segment);
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub injections: Vec<Injection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    injections: Vec<RawInjection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInjection {
    name: Option<String>,
    at: String,
    #[serde(default)]
    start_us: u64,
    raw_hex: Option<String>,
    gen: Option<GenSpec>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, NetsimError> {
        let raw: RawScenario = serde_json::from_str(text)
            .map_err(|e| NetsimError::schema(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
        let mut injections = Vec::with_capacity(raw.injections.len());
        for (i, r) in raw.injections.into_iter().enumerate() {
            let path = format!("injections[{i}]");
            let source = match (r.raw_hex, r.gen) {
                (Some(h), None) => {
                    let bytes = hex::decode(h.trim())
                        .map_err(|e| NetsimError::schema(format!("{path}.raw_hex"), e.to_string()))?;
                    if !Ipv6Header::looks_like(&bytes) {
                        return Err(NetsimError::schema(format!("{path}.raw_hex"), "not an IPv6 packet"));
                    }
                    InjectionSource::Raw(bytes)
                }
                (None, Some(g)) => {
                    if g.count == 0 {
                        return Err(NetsimError::schema(format!("{path}.gen.count"), "must be at least 1"));
                    }
                    if g.payload_len > MAX_PAYLOAD {
                        return Err(NetsimError::schema(
                            format!("{path}.gen.payload_len"),
                            format!("must not exceed {MAX_PAYLOAD}"),
                        ));
                    }
                    InjectionSource::Gen(g)
                }
                _ => return Err(NetsimError::schema(path, "exactly one of raw_hex or gen is required")),
            };
            injections.push(Injection {
                name: r.name.unwrap_or_else(|| format!("flow{i}")),
                at: r.at,
                start_us: r.start_us,
                source,
            });
        }
        Ok(Scenario { injections })
    }
}
