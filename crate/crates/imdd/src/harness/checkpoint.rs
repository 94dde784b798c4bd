//! Transceiver checkpoint container: magic string, version, the
//! dimension record, then each parameter array as (name, rank, shape,
//! row-major little-endian f64 values).

use std::io::{Read, Write};
use std::path::Path;

use crate::autoencoder::{AutoencoderDims, TransceiverParams};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"IMDDCKP\0";
const VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, params: &TransceiverParams) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.dims.alphabet as u32).to_le_bytes());
    out.extend_from_slice(&(params.dims.block_len as u32).to_le_bytes());
    let arrays = params.named_arrays();
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, shape, values) in arrays {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for dim in &shape {
            out.extend_from_slice(&(*dim as u32).to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<TransceiverParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_checkpoint(&bytes)
}

fn parse_checkpoint(bytes: &[u8]) -> Result<TransceiverParams> {
    let mut cursor = Cursor { bytes, off: 0 };
    if cursor.take(8)? != MAGIC {
        return Err(Error::format("not a checkpoint file"));
    }
    let version = cursor.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let alphabet = cursor.u32()? as usize;
    let block_len = cursor.u32()? as usize;
    let dims = AutoencoderDims::new(alphabet, block_len)?;
    let mut params = TransceiverParams::zeros(dims);
    let count = cursor.u32()? as usize;
    if count != TransceiverParams::ARRAY_NAMES.len() {
        return Err(Error::format(format!("checkpoint holds {count} arrays")));
    }

    // Expected shapes, in serialization order.
    let expected: Vec<(String, Vec<usize>)> = params
        .named_arrays()
        .iter()
        .map(|(n, s, _)| (n.to_string(), s.clone()))
        .collect();

    for (name, shape) in &expected {
        let name_len = cursor.u32()? as usize;
        let got_name = std::str::from_utf8(cursor.take(name_len)?)
            .map_err(|_| Error::format("non-utf8 array name"))?;
        if got_name != name {
            return Err(Error::format(format!("expected array `{name}`, found `{got_name}`")));
        }
        let rank = cursor.u32()? as usize;
        if rank != shape.len() {
            return Err(Error::format(format!("array `{name}` has rank {rank}")));
        }
        let mut len = 1usize;
        for want in shape {
            let dim = cursor.u32()? as usize;
            if dim != *want {
                return Err(Error::format(format!("array `{name}` dimension {dim} != {want}")));
            }
            len *= dim;
        }
        let raw = cursor.take(len * 8)?;
        let idx = expected.iter().position(|(n, _)| n == name).unwrap();
        let dst = &mut params.arrays_mut()[idx];
        for (i, chunk) in raw.chunks_exact(8).enumerate() {
            dst[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if cursor.off != bytes.len() {
        return Err(Error::format("trailing bytes after checkpoint payload"));
    }
    Ok(params)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    off: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.off + n > self.bytes.len() {
            return Err(Error::format("truncated checkpoint"));
        }
        let s = &self.bytes[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
