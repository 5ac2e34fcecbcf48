// SPDX-License-Identifier: Apache-2.0

//! Software dataplane that identifies GTP-U tunnelled 5G user traffic
//! between the RAN and the UPF and steers matched flows through chains of
//! network functions using SRv6, together with a deterministic topology
//! simulator, pcap I/O and a line-oriented control plane.

pub mod pkt_codec;
pub mod classifier;
pub mod srv6;
pub mod pipeline;
pub mod ctrl;
pub mod pcap;
pub mod netsim;
