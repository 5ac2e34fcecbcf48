// SPDX-License-Identifier: Apache-2.0

//! GTP-U (3GPP TS 29.281) with the PDU Session Container extension
//! (3GPP TS 38.415).
//!
//! ```text
//!  0     2 3 4 5 6 7
//! +-----+--+-+-+-+--+
//! | ver |PT|*|E|S|PN|   message type   |        length         |
//! +-----------------------------------------------------------+
//! |                           TEID                            |
//! +-----------------------------------------------------------+
//! |      sequence (opt)     | N-PDU (opt)| next ext type (opt) |
//! +-----------------------------------------------------------+
//! ```
//!
//! Each extension header is `[len in 4-octet units][content][next type]`.

use super::headers::need;
use super::{CodecError, Layer};

pub const GTPU_PORT: u16 = 2152;
pub const MSG_G_PDU: u8 = 0xff;
pub const EXT_PDU_SESSION_CONTAINER: u8 = 0x85;
pub const PDU_TYPE_DL: u8 = 0;
pub const PDU_TYPE_UL: u8 = 1;

/// Content of a PDU Session Container extension.
///
/// The first content octet carries the PDU type in its high nibble; the low
/// nibble holds type-specific flags. The second carries the QFI in its low
/// six bits; the top two bits are type-specific flags. Any further content
/// octets are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PduSessionContainer {
    pub pdu_type: u8,
    pub type_flags: u8,
    pub qfi_flags: u8,
    pub qfi: u8,
    pub extra: Vec<u8>,
}

impl PduSessionContainer {
    pub fn uplink(qfi: u8) -> Self {
        PduSessionContainer {
            pdu_type: PDU_TYPE_UL,
            type_flags: 0,
            qfi_flags: 0,
            qfi: qfi & 0x3f,
            extra: Vec::new(),
        }
    }

    pub fn ext_type(&self) -> u8 {
        EXT_PDU_SESSION_CONTAINER
    }

    fn content(&self) -> Vec<u8> {
        let mut c = Vec::with_capacity(2 + self.extra.len());
        c.push((self.pdu_type << 4) | (self.type_flags & 0x0f));
        c.push((self.qfi_flags << 6) | (self.qfi & 0x3f));
        c.extend_from_slice(&self.extra);
        c
    }

    fn from_content(content: &[u8]) -> Self {
        PduSessionContainer {
            pdu_type: content[0] >> 4,
            type_flags: content[0] & 0x0f,
            qfi_flags: content[1] >> 6,
            qfi: content[1] & 0x3f,
            extra: content[2..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GtpuExtension {
    PduSession(PduSessionContainer),
    /// Unknown extension kept verbatim, in order.
    Opaque { ext_type: u8, content: Vec<u8> },
}

impl GtpuExtension {
    pub fn ext_type(&self) -> u8 {
        match self {
            GtpuExtension::PduSession(_) => EXT_PDU_SESSION_CONTAINER,
            GtpuExtension::Opaque { ext_type, .. } => *ext_type,
        }
    }

    fn content(&self) -> Vec<u8> {
        match self {
            GtpuExtension::PduSession(p) => p.content(),
            GtpuExtension::Opaque { content, .. } => content.clone(),
        }
    }

    /// Length in 4-octet units, as carried on the wire.
    pub fn ext_len(&self) -> usize {
        (self.content().len() + 2) / 4
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtpuHeader {
    /// Reserved bit between PT and E; preserved as received.
    pub spare: bool,
    pub e_flag: bool,
    pub s_flag: bool,
    pub pn_flag: bool,
    pub message_type: u8,
    /// Octets after the mandatory 8-octet header, as received. Recomputed on
    /// serialization.
    pub length: u16,
    pub teid: u32,
    pub sequence: u16,
    pub npdu: u8,
    /// Next-extension octet when E is clear but S or PN forced the optional
    /// word onto the wire. Ignored when E is set.
    pub next_ext_type_raw: u8,
    pub ext_headers: Vec<GtpuExtension>,
}

impl GtpuHeader {
    pub const MANDATORY_LEN: usize = 8;

    /// G-PDU header as emitted by a RAN: E set only when a container is
    /// attached, S and PN clear.
    pub fn g_pdu(teid: u32, container: Option<PduSessionContainer>) -> Self {
        let ext_headers: Vec<_> = container.into_iter().map(GtpuExtension::PduSession).collect();
        GtpuHeader {
            spare: false,
            e_flag: !ext_headers.is_empty(),
            s_flag: false,
            pn_flag: false,
            message_type: MSG_G_PDU,
            length: 0,
            teid,
            sequence: 0,
            npdu: 0,
            next_ext_type_raw: 0,
            ext_headers,
        }
    }

    pub fn has_optional_word(&self) -> bool {
        self.e_flag || self.s_flag || self.pn_flag
    }

    pub fn pdu_session(&self) -> Option<&PduSessionContainer> {
        self.ext_headers.iter().find_map(|e| match e {
            GtpuExtension::PduSession(p) => Some(p),
            GtpuExtension::Opaque { .. } => None,
        })
    }

    /// Header size including the optional word and extensions.
    pub fn header_len(&self) -> usize {
        let mut len = Self::MANDATORY_LEN;
        if self.has_optional_word() {
            len += 4;
        }
        len + self.ext_headers.iter().map(|e| e.content().len() + 2).sum::<usize>()
    }

    /// Decodes the header from a UDP payload. Returns the header and the
    /// offset of the T-PDU; `length` is validated against the buffer.
    pub fn parse(buf: &[u8]) -> Result<(Self, usize), CodecError> {
        need(Layer::Gtpu, buf, Self::MANDATORY_LEN)?;
        let flags = buf[0];
        if flags >> 5 != 1 {
            return Err(CodecError::MalformedGtpu("version is not 1"));
        }
        if flags & 0x10 == 0 {
            return Err(CodecError::MalformedGtpu("protocol type flag is not set"));
        }
        let length = u16::from_be_bytes([buf[2], buf[3]]);
        let end = Self::MANDATORY_LEN + usize::from(length);
        need(Layer::Gtpu, buf, end)?;
        let buf = &buf[..end];
        let mut hdr = GtpuHeader {
            spare: flags & 0x08 != 0,
            e_flag: flags & 0x04 != 0,
            s_flag: flags & 0x02 != 0,
            pn_flag: flags & 0x01 != 0,
            message_type: buf[1],
            length,
            teid: u32::from_be_bytes([buf[4], buf[5], buf[6], buf[7]]),
            sequence: 0,
            npdu: 0,
            next_ext_type_raw: 0,
            ext_headers: Vec::new(),
        };
        let mut at = Self::MANDATORY_LEN;
        if hdr.has_optional_word() {
            need(Layer::Gtpu, buf, at + 4)?;
            hdr.sequence = u16::from_be_bytes([buf[at], buf[at + 1]]);
            hdr.npdu = buf[at + 2];
            let mut next = buf[at + 3];
            at += 4;
            if !hdr.e_flag {
                hdr.next_ext_type_raw = next;
                next = 0;
            }
            while next != 0 {
                need(Layer::GtpuExtension, &buf[at..], 1)?;
                let units = usize::from(buf[at]);
                if units == 0 {
                    return Err(CodecError::MalformedGtpu("extension header length is zero"));
                }
                let total = units * 4;
                need(Layer::GtpuExtension, &buf[at..], total)?;
                let content = &buf[at + 1..at + total - 1];
                let ext = if next == EXT_PDU_SESSION_CONTAINER {
                    if content.len() < 2 {
                        return Err(CodecError::MalformedGtpu("PDU session container too short"));
                    }
                    GtpuExtension::PduSession(PduSessionContainer::from_content(content))
                } else {
                    GtpuExtension::Opaque { ext_type: next, content: content.to_vec() }
                };
                hdr.ext_headers.push(ext);
                next = buf[at + total - 1];
                at += total;
            }
        }
        Ok((hdr, at))
    }

    /// Writes the header followed by `tpdu`, recomputing `length`.
    pub fn write(&self, tpdu: &[u8], out: &mut Vec<u8>) -> Result<(), CodecError> {
        if !self.ext_headers.is_empty() && !self.e_flag {
            return Err(CodecError::InconsistentLayers("GTP-U extensions present but E flag clear"));
        }
        let mut exts = Vec::new();
        for (i, ext) in self.ext_headers.iter().enumerate() {
            let content = ext.content();
            if (content.len() + 2) % 4 != 0 {
                return Err(CodecError::InconsistentLayers(
                    "GTP-U extension content is not 4-octet aligned",
                ));
            }
            if (content.len() + 2) / 4 > 255 {
                return Err(CodecError::InconsistentLayers("GTP-U extension too long"));
            }
            exts.push(((content.len() + 2) / 4) as u8);
            exts.extend_from_slice(&content);
            exts.push(self.ext_headers.get(i + 1).map_or(0, GtpuExtension::ext_type));
        }
        let opt = if self.has_optional_word() { 4 } else { 0 };
        let length = opt + exts.len() + tpdu.len();
        let length =
            u16::try_from(length).map_err(|_| CodecError::InconsistentLayers("GTP-U length overflows 16 bits"))?;
        let flags = (1u8 << 5)
            | 0x10
            | (u8::from(self.spare) << 3)
            | (u8::from(self.e_flag) << 2)
            | (u8::from(self.s_flag) << 1)
            | u8::from(self.pn_flag);
        out.push(flags);
        out.push(self.message_type);
        out.extend_from_slice(&length.to_be_bytes());
        out.extend_from_slice(&self.teid.to_be_bytes());
        if self.has_optional_word() {
            out.extend_from_slice(&self.sequence.to_be_bytes());
            out.push(self.npdu);
            out.push(if self.e_flag {
                self.ext_headers.first().map_or(0, GtpuExtension::ext_type)
            } else {
                self.next_ext_type_raw
            });
        }
        out.extend_from_slice(&exts);
        out.extend_from_slice(tpdu);
        Ok(())
    }
}
