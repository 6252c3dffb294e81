//! Binary checkpoint format.
//!
//! Layout (little-endian): magic `GFCK`, `u32` version, then `K, d, d_f,
//! d_b, d_h` as `u64`, then every parameter block in declaration order as a
//! `u64` element count followed by that many `f64`.

use std::path::Path;

use gface_core::model::{ModelConfig, ModelParams};
use gface_core::Tensor;

use crate::fsio::atomic_write;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GFCK";
pub const VERSION: u32 = 1;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let c = &params.config;
    let mut out = Vec::with_capacity(4 + 4 + 5 * 8 + params.num_parameters() * 8 + 80);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [c.k, c.d, c.d_f, c.d_b, c.d_h] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for block in params.blocks() {
        out.extend_from_slice(&(block.len() as u64).to_le_bytes());
        for v in block.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!(
                "truncated file: {what} needs {n} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a GFCK checkpoint".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (this build reads version {VERSION})"
        )));
    }
    let mut dims = [0usize; 5];
    for (slot, name) in dims.iter_mut().zip(["K", "d", "d_f", "d_b", "d_h"]) {
        *slot = usize::try_from(r.u64(name)?)
            .map_err(|_| Error::Checkpoint(format!("{name} does not fit in memory")))?;
    }
    let [k, d, d_f, d_b, d_h] = dims;
    let config = ModelConfig {
        d,
        d_f,
        d_b,
        d_h,
        k,
        ..ModelConfig::default()
    };
    config.validate()?;
    let mut blocks = Vec::new();
    for (shape, name) in ModelParams::block_shapes(&config)
        .into_iter()
        .zip(gface_core::model::BLOCK_NAMES)
    {
        let len = r.u64(name)? as usize;
        let want: usize = shape.iter().product();
        if len != want {
            return Err(Error::Checkpoint(format!(
                "block {name} has {len} values, expected {want}"
            )));
        }
        let raw = r.take(len.saturating_mul(8), name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        blocks.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last block",
            bytes.len() - r.pos
        )));
    }
    Ok(ModelParams::from_blocks(config, blocks)?)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    atomic_write(path, &encode(params))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        e => e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        let cfg = ModelConfig {
            d: 5,
            d_f: 6,
            d_b: 4,
            d_h: 7,
            k: 3,
            ..ModelConfig::default()
        };
        ModelParams::init(cfg, 9).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let p = params();
        let back = decode(&encode(&p)).unwrap();
        for (a, b) in p.blocks().iter().zip(back.blocks()) {
            let ab: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(back.config.k, 3);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&params());
        assert_eq!(&bytes[..4], b"GFCK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[48..56].try_into().unwrap()), 30);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = encode(&params());
        bytes[0] = b'X';
        assert!(decode(&bytes).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn rejects_other_versions() {
        let mut bytes = encode(&params());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        let e = decode(&bytes).unwrap_err().to_string();
        assert!(e.contains("version 2"), "{e}");
    }

    #[test]
    fn rejects_truncation_anywhere() {
        let bytes = encode(&params());
        for cut in [0, 3, 7, 20, 60, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode(&long).is_err());
    }
}
