//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "XRDQNET\0"
//! version  u32 LE
//! slope    f64 LE   leaky ReLU negative slope
//! count    u32 LE   number of tensors
//! per tensor: rank u32 LE, dims u32 LE × rank, data f64 LE × prod(dims)
//! ```
//!
//! Tensors appear in canonical order (conv1 w/b, conv2 w/b, dense w/b,
//! output w/b). Values are stored at full precision so a round trip is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::nn::{NetError, QFunction, QNetwork, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"XRDQNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(net: &QNetwork) -> Vec<u8> {
    let params = net.params();
    let mut out = Vec::with_capacity(32 + 8 * net.parameter_count());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&net.leaky_slope.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for t in params {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
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
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(NetError::Truncated {
                needed: self.pos.saturating_add(n),
                available: self.buf.len(),
            });
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<QNetwork, NetError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if bytes.len() < CHECKPOINT_MAGIC.len() {
        return if CHECKPOINT_MAGIC.starts_with(bytes) {
            Err(NetError::Truncated {
                needed: CHECKPOINT_MAGIC.len(),
                available: bytes.len(),
            })
        } else {
            Err(NetError::BadMagic)
        };
    }
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(NetError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NetError::UnsupportedVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let slope = r.f64()?;
    let count = r.u32()? as usize;
    let expected = QNetwork::expected_shapes();
    if count != expected.len() {
        return Err(NetError::ShapeMismatch {
            expected: format!("{} tensors", expected.len()),
            found: format!("{count} tensors"),
        });
    }
    let mut tensors = Vec::with_capacity(count);
    for want in &expected {
        let rank = r.u32()? as usize;
        if rank != want.len() {
            return Err(NetError::ShapeMismatch {
                expected: format!("{want:?}"),
                found: format!("rank {rank}"),
            });
        }
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if &shape != want {
            return Err(NetError::ShapeMismatch {
                expected: format!("{want:?}"),
                found: format!("{shape:?}"),
            });
        }
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        tensors.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(NetError::TrailingBytes(bytes.len() - r.pos));
    }
    QNetwork::from_tensors(slope, tensors)
}

/// Writes the checkpoint to a sibling temp file, then renames it into place.
pub fn save_params(net: &QNetwork, path: &Path) -> Result<(), NetError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&write_checkpoint(net))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<QNetwork, NetError> {
    read_checkpoint(&fs::read(path)?)
}
