//! Binary checkpoint format.
//!
//! ```text
//! magic          8 bytes   "DTLIDSCK"
//! version        u32 LE    1
//! byte order     4 bytes   "LE64"
//! seed           u64 LE
//! arch length    u32 LE, followed by the canonical architecture text (UTF-8)
//! record count   u32 LE
//! per record:    name length u32 LE, name (UTF-8), rank u32 LE,
//!                extents u64 LE x rank, values f64 LE x product(extents)
//! ```
//!
//! Records appear in parameter-visit order and include batch-norm running
//! statistics.

use std::fs;
use std::path::Path;

use super::{Architecture, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"DTLIDSCK";
pub const FORMAT_VERSION: u32 = 1;
const BYTE_ORDER: &[u8; 4] = b"LE64";

pub fn write_checkpoint(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(BYTE_ORDER);
    out.extend_from_slice(&net.seed().to_le_bytes());
    let arch = net.arch().to_text();
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(arch.as_bytes());
    let records = net.named_tensors();
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, t) in records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format("checkpoint is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8".into()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("checkpoint format version {version}, expected {FORMAT_VERSION}")));
    }
    if r.take(4)? != BYTE_ORDER {
        return Err(Error::Format("unsupported byte order".into()));
    }
    let seed = r.u64()?;
    let arch = Architecture::from_text(&r.string()?)?;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("record too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        records.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after the last record".into()));
    }

    let mut net = Network::new(arch, seed).map_err(|e| Error::Format(e.to_string()))?;
    let expected = net.named_tensors();
    if expected.len() != records.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} records, architecture needs {}",
            records.len(),
            expected.len()
        )));
    }
    for ((want_name, want), (name, got)) in expected.iter().zip(&records) {
        if want_name != name || want.shape() != got.shape() {
            return Err(Error::Format(format!(
                "record `{name}` {:?} does not match `{want_name}` {:?}",
                got.shape(),
                want.shape()
            )));
        }
    }
    let mut values = records.into_iter();
    net.visit_params_mut(&mut |slot| {
        if let Some((_, t)) = values.next() {
            *slot.value = t;
        }
    });
    Ok(net)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_multi_channel_dnn, build_presnet};

    #[test]
    fn byte_identical_round_trip() {
        for net in [build_presnet(2, 10, 2, 7).unwrap(), build_multi_channel_dnn(2, 10, 3, 1).unwrap()] {
            let bytes = write_checkpoint(&net);
            let back = read_checkpoint(&bytes).unwrap();
            assert_eq!(write_checkpoint(&back), bytes);
            assert_eq!(back.named_tensors(), net.named_tensors());
        }
    }

    #[test]
    fn rejects_corruption() {
        let net = build_presnet(1, 8, 2, 0).unwrap();
        let bytes = write_checkpoint(&net);
        assert!(matches!(read_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&bad), Err(Error::Format(_))));
        let mut v2 = bytes.clone();
        v2[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(read_checkpoint(&v2), Err(Error::Format(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(read_checkpoint(&extra), Err(Error::Format(_))));
    }
}
