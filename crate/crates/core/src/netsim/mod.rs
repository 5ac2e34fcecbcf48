// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event simulation of a small mobile core testbed:
//! UE, RAN, the INCA dataplane, SRv6-aware network functions, UPF and data
//! network, with a pcap capture on every link.

mod scenario;
mod sim;
mod topology;
mod tunnel;

pub use scenario::{GenSpec, Injection, InjectionSource, Scenario};
pub use sim::{run_scenario, FlowReport, Outcome, PacketTrace, ScenarioReport, Simulator, TraversalCount};
pub use topology::{Link, NfBehavior, NodeKind, NodeSpec, QosFlow, RanTunnel, Route, Topology};
pub use tunnel::{ran_encapsulate, upf_decapsulate};

use std::net::Ipv6Addr;

use crate::ctrl::CtrlError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetsimError {
    #[error("SchemaError at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("UnknownNodeReference at {path}: no node named {name:?}")]
    UnknownNodeReference { path: String, name: String },
    #[error("DuplicateSid: {sid} is used by both {first} and {second}")]
    DuplicateSid { sid: Ipv6Addr, first: String, second: String },
    #[error("MissingTunnelConfig: node {0} has no GTP-U tunnel configuration")]
    MissingTunnelConfig(String),
    #[error("NotGtp: frame is not a GTP-U G-PDU carrying IPv6")]
    NotGtp,
    #[error("WrongDestination: GTP-U tunnel ends at {0}, not at this node")]
    WrongDestination(Ipv6Addr),
    #[error("rules: {0}")]
    Rules(#[from] CtrlError),
}

impl NetsimError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        NetsimError::SchemaError { path: path.into(), message: message.into() }
    }
}
