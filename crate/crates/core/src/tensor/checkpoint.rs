//! Flat binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "NVFD" | version u32 | count u32
//! count x ( name_len u32 | name utf-8 | rank u32 | dims u64 x rank | data f64 x prod(dims) )
//! ```

use std::io::{Read, Write};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NVFD";
pub const VERSION: u32 = 1;

const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 8;

pub fn encode<'a>(entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let entries: Vec<_> = entries.into_iter().collect();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse(format!("checkpoint truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Decodes a checkpoint; rejects anything malformed without panicking.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Parse("not a checkpoint (bad magic)".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let count = cur.u32("parameter count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let name_len = cur.u32("name length")? as usize;
        if name_len > MAX_NAME_LEN {
            return Err(Error::Parse(format!("entry {i}: name length {name_len} too large")));
        }
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| Error::Parse(format!("entry {i}: name is not utf-8")))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        if rank > MAX_RANK {
            return Err(Error::Parse(format!("entry {name}: rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut n: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(cur.u64("dimension")?)
                .map_err(|_| Error::Parse(format!("entry {name}: dimension overflows")))?;
            n = n
                .checked_mul(d)
                .ok_or_else(|| Error::Parse(format!("entry {name}: element count overflows")))?;
            shape.push(d);
        }
        if n.checked_mul(8).map_or(true, |b| b > cur.remaining()) {
            return Err(Error::Parse(format!("entry {name}: data truncated")));
        }
        let raw = cur.take(n * 8, "data")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        entries.push((name, Tensor::new(shape, data)?));
    }
    if cur.remaining() != 0 {
        return Err(Error::Parse(format!("{} trailing bytes after checkpoint", cur.remaining())));
    }
    Ok(entries)
}

pub fn write_params(params: &ParamSet, mut w: impl Write) -> Result<()> {
    w.write_all(&encode(params.iter()))?;
    Ok(())
}

pub fn read_entries(mut r: impl Read) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}
