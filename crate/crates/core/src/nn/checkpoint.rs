//! Flat binary parameter checkpoints.
//!
//! Layout: the magic line `IR3DNN1\n`, then for each parameter in store order
//! a `u32` name length, the UTF-8 name, a `u32` rank, `rank` `u64` extents and
//! the values as little-endian `f64`. All integers are little-endian.

use std::io::{Read, Write};

use super::param::{Param, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IR3DNN1\n";

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&(p.value.rank() as u32).to_le_bytes())?;
        for &e in p.value.shape() {
            out.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in p.value.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ParamStore> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("missing IR3DNN1 header".into()));
    }
    let mut store = ParamStore::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let rank = cur.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Format(format!("parameter `{name}` has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| cur.u64().map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&n| n <= (bytes.len() - cur.pos) / 8)
            .ok_or_else(|| Error::Format(format!("parameter `{name}` payload is truncated")))?;
        let data = (0..n)
            .map(|_| cur.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())))
            .collect::<Result<Vec<_>>>()?;
        let value = Tensor::new(&shape, data)?;
        let grad = Tensor::zeros(&shape);
        store.push_param(Param { name, value, grad });
    }
    Ok(store)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
