// SPDX-License-Identifier: Apache-2.0

//! Classic libpcap capture files with Ethernet link type.
//!
//! Files are written little-endian with microsecond timestamps. The reader
//! accepts either byte order and the nanosecond variant.

use std::io::{self, Read, Write};

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const DEFAULT_SNAPLEN: u32 = 65535;

const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum PcapError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("BadMagic: {0:#010x}")]
    BadMagic(u32),
    #[error("TruncatedHeader: global header is shorter than 24 octets")]
    TruncatedHeader,
    #[error("TruncatedRecord: record {index} is cut short")]
    TruncatedRecord { index: usize },
    #[error("UnsupportedLinkType: {0}")]
    UnsupportedLinkType(u32),
    #[error("NonMonotonicTimestamps: record {index} is earlier than its predecessor")]
    NonMonotonicTimestamps { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapRecord {
    pub ts_sec: u32,
    pub ts_usec: u32,
    /// Length of the packet on the wire; may exceed `data.len()`.
    pub orig_len: u32,
    pub data: Vec<u8>,
}

impl PcapRecord {
    pub fn new(ts_micros: u64, data: Vec<u8>) -> Self {
        PcapRecord {
            ts_sec: (ts_micros / 1_000_000) as u32,
            ts_usec: (ts_micros % 1_000_000) as u32,
            orig_len: data.len() as u32,
            data,
        }
    }

    pub fn ts_micros(&self) -> u64 {
        u64::from(self.ts_sec) * 1_000_000 + u64::from(self.ts_usec)
    }
}

pub struct PcapWriter<W: Write> {
    inner: W,
    snaplen: u32,
    last_ts: u64,
    count: usize,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(inner: W) -> Result<Self, PcapError> {
        Self::with_snaplen(inner, DEFAULT_SNAPLEN)
    }

    pub fn with_snaplen(mut inner: W, snaplen: u32) -> Result<Self, PcapError> {
        let mut hdr = [0u8; GLOBAL_HEADER_LEN];
        hdr[0..4].copy_from_slice(&MAGIC_MICROS.to_le_bytes());
        hdr[4..6].copy_from_slice(&2u16.to_le_bytes());
        hdr[6..8].copy_from_slice(&4u16.to_le_bytes());
        // thiszone and sigfigs stay zero
        hdr[16..20].copy_from_slice(&snaplen.to_le_bytes());
        hdr[20..24].copy_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        inner.write_all(&hdr)?;
        Ok(PcapWriter { inner, snaplen, last_ts: 0, count: 0 })
    }

    /// Appends a frame. Data beyond the snap length is cut; `orig_len` keeps
    /// the full length.
    pub fn write_record(&mut self, rec: &PcapRecord) -> Result<(), PcapError> {
        if rec.ts_micros() < self.last_ts {
            return Err(PcapError::NonMonotonicTimestamps { index: self.count });
        }
        let incl = rec.data.len().min(self.snaplen as usize);
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        hdr[0..4].copy_from_slice(&rec.ts_sec.to_le_bytes());
        hdr[4..8].copy_from_slice(&rec.ts_usec.to_le_bytes());
        hdr[8..12].copy_from_slice(&(incl as u32).to_le_bytes());
        hdr[12..16].copy_from_slice(&rec.orig_len.max(incl as u32).to_le_bytes());
        self.inner.write_all(&hdr)?;
        self.inner.write_all(&rec.data[..incl])?;
        self.last_ts = rec.ts_micros();
        self.count += 1;
        Ok(())
    }

    pub fn write_packet(&mut self, ts_micros: u64, data: &[u8]) -> Result<(), PcapError> {
        self.write_record(&PcapRecord::new(ts_micros, data.to_vec()))
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub struct PcapReader<R: Read> {
    inner: R,
    big_endian: bool,
    nanos: bool,
    snaplen: u32,
    index: usize,
    last_ts: u64,
    done: bool,
}

/// Fills `buf` completely, returning how many bytes were read before EOF.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut hdr = [0u8; GLOBAL_HEADER_LEN];
        let got = read_full(&mut inner, &mut hdr)?;
        if got >= 4 {
            let magic = u32::from_le_bytes(hdr[0..4].try_into().unwrap());
            let (big_endian, nanos) = match magic {
                MAGIC_MICROS => (false, false),
                MAGIC_NANOS => (false, true),
                m if m.swap_bytes() == MAGIC_MICROS => (true, false),
                m if m.swap_bytes() == MAGIC_NANOS => (true, true),
                m => return Err(PcapError::BadMagic(m)),
            };
            if got < GLOBAL_HEADER_LEN {
                return Err(PcapError::TruncatedHeader);
            }
            let mut reader =
                PcapReader { inner, big_endian, nanos, snaplen: 0, index: 0, last_ts: 0, done: false };
            reader.snaplen = reader.u32_at(&hdr, 16);
            let linktype = reader.u32_at(&hdr, 20);
            if linktype != LINKTYPE_ETHERNET {
                return Err(PcapError::UnsupportedLinkType(linktype));
            }
            return Ok(reader);
        }
        Err(PcapError::TruncatedHeader)
    }

    fn u32_at(&self, buf: &[u8], at: usize) -> u32 {
        let b: [u8; 4] = buf[at..at + 4].try_into().unwrap();
        if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        }
    }

    pub fn snaplen(&self) -> u32 {
        self.snaplen
    }

    /// The next record, `Ok(None)` at a clean end of file.
    pub fn next_record(&mut self) -> Result<Option<PcapRecord>, PcapError> {
        if self.done {
            return Ok(None);
        }
        let index = self.index;
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        match read_full(&mut self.inner, &mut hdr)? {
            0 => {
                self.done = true;
                return Ok(None);
            }
            RECORD_HEADER_LEN => {}
            _ => {
                self.done = true;
                return Err(PcapError::TruncatedRecord { index });
            }
        }
        let ts_sec = self.u32_at(&hdr, 0);
        let frac = self.u32_at(&hdr, 4);
        let ts_usec = if self.nanos { frac / 1000 } else { frac };
        let incl = self.u32_at(&hdr, 8);
        let orig_len = self.u32_at(&hdr, 12);
        let mut data = Vec::new();
        let got = (&mut self.inner).take(u64::from(incl)).read_to_end(&mut data)?;
        if got != incl as usize {
            self.done = true;
            return Err(PcapError::TruncatedRecord { index });
        }
        let rec = PcapRecord { ts_sec, ts_usec, orig_len, data };
        if rec.ts_micros() < self.last_ts {
            self.done = true;
            return Err(PcapError::NonMonotonicTimestamps { index });
        }
        self.last_ts = rec.ts_micros();
        self.index += 1;
        Ok(Some(rec))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PcapRecord, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

pub fn read_pcap(bytes: &[u8]) -> Result<Vec<PcapRecord>, PcapError> {
    PcapReader::new(bytes)?.collect()
}

pub fn write_pcap(records: &[PcapRecord]) -> Result<Vec<u8>, PcapError> {
    let mut w = PcapWriter::new(Vec::new())?;
    for rec in records {
        w.write_record(rec)?;
    }
    Ok(w.into_inner())
}
