//! Binary cache of encoded graphs.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "HDHGCACH"
//! version    u32       1
//! digest     32 bytes  SHA-256 of the vocabulary JSON the records use
//! count      u64       number of records
//! record*    u32 payload length, then payload:
//!              source_id   u32 length + UTF-8 bytes
//!              label       i64 (-1 when absent)
//!              variant     u8  (0 full, 1 no_hyperedge, 2 no_hetero, 3 no_direction)
//!              nodes       u32 n, then n × (kind u8, value u32)
//!              edges       u32 m, then m × (type u32, head u32, tail_len u32, tail_len × u32)
//! ```

use std::fs;
use std::path::Path;

use super::encode::{EncodedGraph, Incidence, Variant};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HDHGCACH";
pub const VERSION: u32 = 1;

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::Full => 0,
        Variant::NoHyperedge => 1,
        Variant::NoHetero => 2,
        Variant::NoDirection => 3,
    }
}

pub fn encode_cache(digest: &[u8; 32], graphs: &[EncodedGraph]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    out.extend_from_slice(&(graphs.len() as u64).to_le_bytes());
    let mut payload = Vec::new();
    for g in graphs {
        payload.clear();
        put_u32(&mut payload, g.source_id.len() as u32);
        payload.extend_from_slice(g.source_id.as_bytes());
        payload.extend_from_slice(&g.label.map_or(-1i64, |l| l as i64).to_le_bytes());
        payload.push(variant_code(g.variant));
        put_u32(&mut payload, g.num_nodes() as u32);
        for (k, v) in g.node_kind.iter().zip(&g.node_value) {
            payload.push(*k);
            put_u32(&mut payload, *v);
        }
        put_u32(&mut payload, g.num_edges() as u32);
        for (inc, t) in g.incidence.iter().zip(&g.edge_type) {
            put_u32(&mut payload, *t);
            put_u32(&mut payload, inc.head);
            put_u32(&mut payload, inc.tail.len() as u32);
            for x in &inc.tail {
                put_u32(&mut payload, *x);
            }
        }
        put_u32(&mut out, payload.len() as u32);
        out.extend_from_slice(&payload);
    }
    out
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt("truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "graph cache",
        reason: reason.into(),
    }
}

/// Returns the vocabulary digest stored in the header and the records.
pub fn decode_cache(bytes: &[u8]) -> Result<([u8; 32], Vec<EncodedGraph>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
    let count = r.u64()? as usize;
    let mut graphs = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let mut p = Reader {
            buf: r.take(len)?,
            pos: 0,
        };
        let id_len = p.u32()? as usize;
        let source_id = String::from_utf8(p.take(id_len)?.to_vec())
            .map_err(|_| corrupt("source id is not UTF-8"))?;
        let label = match p.i64()? {
            -1 => None,
            l if l >= 0 && l <= u32::MAX as i64 => Some(l as u32),
            l => return Err(corrupt(format!("bad label {l}"))),
        };
        let variant = match p.u8()? {
            0 => Variant::Full,
            1 => Variant::NoHyperedge,
            2 => Variant::NoHetero,
            3 => Variant::NoDirection,
            c => return Err(corrupt(format!("bad variant code {c}"))),
        };
        let n = p.u32()? as usize;
        let mut node_kind = Vec::with_capacity(n);
        let mut node_value = Vec::with_capacity(n);
        for _ in 0..n {
            node_kind.push(p.u8()?);
            node_value.push(p.u32()?);
        }
        let m = p.u32()? as usize;
        let mut edge_type = Vec::with_capacity(m);
        let mut incidence = Vec::with_capacity(m);
        for _ in 0..m {
            edge_type.push(p.u32()?);
            let head = p.u32()?;
            let k = p.u32()? as usize;
            let tail = (0..k).map(|_| p.u32()).collect::<Result<Vec<_>>>()?;
            incidence.push(Incidence { tail, head });
        }
        if p.pos != p.buf.len() {
            return Err(corrupt(format!("record `{source_id}` has trailing bytes")));
        }
        let g = EncodedGraph {
            source_id,
            node_kind,
            node_value,
            edge_type,
            incidence,
            label,
            variant,
        };
        g.check()?;
        graphs.push(g);
    }
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes after last record"));
    }
    Ok((digest, graphs))
}

pub fn write_cache(path: &Path, digest: &[u8; 32], graphs: &[EncodedGraph]) -> Result<()> {
    fs::write(path, encode_cache(digest, graphs)).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<([u8; 32], Vec<EncodedGraph>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cache(&bytes)
}
