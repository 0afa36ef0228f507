//! Named-tensor checkpoint encoding.
//!
//! Layout (all integers little-endian `u32`, payload little-endian `f32`):
//!
//! ```text
//! "LOADNET1" | version | tensor count
//! per tensor: name length | name (UTF-8) | rank | dims... | row-major payload
//! CRC32 of every preceding byte
//! ```

use std::path::Path;

use loadnet_tensor::Tensor;

use super::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LOADNET1";
pub const VERSION: u32 = 1;

pub fn encode<'a, I>(tensors: I) -> Vec<u8>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor<f32>)>,
{
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for d in t.dims() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.path, "checkpoint truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint; `path` is used only for error context.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    if bytes.len() < MAGIC.len() + 12 {
        return Err(Error::format(path, "checkpoint truncated"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::format(path, "checkpoint CRC mismatch"));
    }
    let mut r = Reader {
        bytes: body,
        pos: 0,
        path,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::format(path, "bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format(path, "tensor name is not UTF-8"))?
            .to_owned();
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let payload = r.take(n * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&dims, data).map_err(|e| Error::format(path, format!("tensor `{name}`: {e}")))?;
        out.push((name, t));
    }
    if r.pos != body.len() {
        return Err(Error::format(path, "trailing bytes after last tensor"));
    }
    Ok(out)
}

pub fn save<'a, I>(path: &Path, tensors: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor<f32>)>,
{
    write_atomic(path, &encode(tensors))
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Tensor<f32>)> {
        vec![
            ("a.weight".into(), Tensor::from_fn(&[2, 3], |i| i as f32 * -0.1).unwrap()),
            ("b".into(), Tensor::new(&[1], vec![f32::MIN_POSITIVE]).unwrap()),
        ]
    }

    #[test]
    fn layout_is_little_endian_with_trailing_crc() {
        let t = sample();
        let bytes = encode(t.iter().map(|(n, t)| (n.as_str(), t)));
        assert_eq!(&bytes[..8], b"LOADNET1");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &8u32.to_le_bytes());
        assert_eq!(&bytes[20..28], b"a.weight");
        let crc = crc32fast::hash(&bytes[..bytes.len() - 4]);
        assert_eq!(&bytes[bytes.len() - 4..], &crc.to_le_bytes());
    }

    #[test]
    fn corruption_is_detected() {
        let t = sample();
        let mut bytes = encode(t.iter().map(|(n, t)| (n.as_str(), t)));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        let err = decode(&bytes, Path::new("x.ckpt")).unwrap_err();
        assert!(err.to_string().contains("CRC"), "{err}");
    }

    #[test]
    fn truncation_is_detected() {
        let t = sample();
        let bytes = encode(t.iter().map(|(n, t)| (n.as_str(), t)));
        assert!(decode(&bytes[..bytes.len() - 9], Path::new("x")).is_err());
        assert!(decode(&bytes[..5], Path::new("x")).is_err());
    }
}
