// SPDX-License-Identifier: Apache-2.0

//! Text listing of a capture, one block per frame.

use std::fmt::Write;

use inca_core::pcap::{read_pcap, PcapError, PcapRecord};
use inca_core::pkt_codec::{
    parse_frame, GtpuExtension, InnerL4, Ipv6Header, ParsedPacket, PDU_TYPE_DL, PDU_TYPE_UL,
};

fn ipv6_line(out: &mut String, label: &str, h: &Ipv6Header) {
    let _ = writeln!(
        out,
        "  {label} {} -> {} nh={} hlim={} plen={} tc={} flow={:#07x}",
        h.src, h.dst, h.next_header, h.hop_limit, h.payload_length, h.traffic_class, h.flow_label
    );
}

fn describe_packet(out: &mut String, p: &ParsedPacket) {
    let _ = writeln!(out, "  eth {} -> {} type={:#06x}", p.eth.src, p.eth.dst, p.eth.ethertype);
    if let Some(h) = &p.outer_ipv6 {
        ipv6_line(out, "ipv6", h);
    }
    if let Some(srh) = &p.srh {
        let segs: Vec<String> = srh.segments.iter().map(ToString::to_string).collect();
        let active = srh.active_segment().map_or_else(|| "-".to_owned(), |a| a.to_string());
        let _ = writeln!(
            out,
            "  srh sl={} last={} nh={} active={} segs=[{}]",
            srh.segments_left,
            srh.last_entry(),
            srh.next_header,
            active,
            segs.join(",")
        );
    }
    if let Some(h) = &p.tunnel_ipv6 {
        ipv6_line(out, "ipv6-in-ipv6", h);
    }
    if let Some(u) = &p.transport {
        let _ = writeln!(
            out,
            "  udp {} -> {} len={} csum={:#06x}",
            u.src_port, u.dst_port, u.length, u.checksum
        );
    }
    if let Some(g) = &p.gtpu {
        let _ = writeln!(out, "  gtpu teid={} type={:#04x} len={}", g.teid, g.message_type, g.length);
        for ext in &g.ext_headers {
            match ext {
                GtpuExtension::PduSession(c) => {
                    let dir = match c.pdu_type {
                        PDU_TYPE_DL => "dl".to_owned(),
                        PDU_TYPE_UL => "ul".to_owned(),
                        other => other.to_string(),
                    };
                    let _ = writeln!(out, "  pdu-container type={dir} qfi={}", c.qfi);
                }
                GtpuExtension::Opaque { ext_type, content } => {
                    let _ = writeln!(out, "  gtpu-ext type={ext_type:#04x} octets={}", content.len());
                }
            }
        }
    }
    if let Some(inner) = &p.inner {
        let ip = &inner.ipv6;
        let l4 = match inner.l4() {
            InnerL4::Udp(u) => format!("udp {} -> {} len={}", u.src_port, u.dst_port, u.length),
            InnerL4::Tcp(t) => format!("tcp {} -> {}", t.src_port, t.dst_port),
            InnerL4::Icmpv6(i) => format!("icmpv6 type={} code={}", i.icmp_type, i.code),
            InnerL4::Other => format!("proto={}", inner.l4_proto()),
        };
        let _ = writeln!(out, "  inner {} -> {} {l4} octets={}", ip.src, ip.dst, inner.payload.len());
    }
    if !p.payload.is_empty() {
        let _ = writeln!(out, "  payload octets={}", p.payload.len());
    }
    if !p.trailer.is_empty() {
        let _ = writeln!(out, "  trailer octets={}", p.trailer.len());
    }
}

pub fn describe_record(index: usize, rec: &PcapRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "frame {} t={}.{:06} len={}",
        index + 1,
        rec.ts_sec,
        rec.ts_usec,
        rec.data.len()
    );
    match parse_frame(&rec.data) {
        Ok(p) => describe_packet(&mut out, &p),
        Err(e) => {
            let _ = writeln!(out, "  undecodable {e}");
        }
    }
    out
}

/// The listing for a whole capture, blocks separated by an empty line.
pub fn decode_pcap(bytes: &[u8]) -> Result<String, PcapError> {
    let records = read_pcap(bytes)?;
    let blocks: Vec<String> = records.iter().enumerate().map(|(i, r)| describe_record(i, r)).collect();
    Ok(blocks.join("\n"))
}
