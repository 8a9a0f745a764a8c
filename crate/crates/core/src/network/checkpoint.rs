//! Flat little-endian checkpoint.
//!
//! ```text
//! magic     8 bytes  "HVCPCB\0\x01"
//! dtype     u8       bytes per value (4 = f32, 8 = f64)
//! head      u8       0 = fully connected, 1 = HVC
//! input_size, input_channels, stem_stride, capsule_dim, num_classes   u32 each
//! n_blocks  u32, then n_blocks x u32 channel widths
//! n_params  u32, then per parameter: rank u32, rank x u32 dims, values
//! ```

use std::path::Path;

use super::{Head, Model, ModelConfig, NetworkError, Result};
use crate::tensor::{Real, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"HVCPCB\0\x01";

impl<F: Real> Model<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config();
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.push(F::BYTES as u8);
        out.push(cfg.head.code());
        for v in [
            cfg.input_size,
            cfg.input_channels,
            cfg.stem_stride,
            cfg.capsule_dim,
            cfg.num_classes,
        ] {
            put_u32(&mut out, v);
        }
        put_u32(&mut out, cfg.channels.len());
        for &c in &cfg.channels {
            put_u32(&mut out, c);
        }
        put_u32(&mut out, self.params().len());
        for p in self.params() {
            put_u32(&mut out, p.rank());
            for &d in p.shape() {
                put_u32(&mut out, d);
            }
            for &v in p.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Parses a checkpoint written with the same value width as `F`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let width = r.take(1)?[0] as usize;
        if width != F::BYTES {
            return Err(bad(&format!(
                "stored values are {width} bytes, reader expects {}",
                F::BYTES
            )));
        }
        let head = Head::from_code(r.take(1)?[0]).ok_or_else(|| bad("unknown head code"))?;
        let [input_size, input_channels, stem_stride, capsule_dim, num_classes] =
            [r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        let n_blocks = r.u32()?;
        let channels = (0..n_blocks).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let config = ModelConfig {
            head,
            input_size,
            input_channels,
            channels,
            stem_stride,
            capsule_dim,
            num_classes,
        };
        config.validate()?;
        let n_params = r.u32()?;
        let mut params = Vec::with_capacity(n_params.min(64));
        for _ in 0..n_params {
            let rank = r.u32()?;
            if rank == 0 || rank > 8 {
                return Err(bad(&format!("implausible rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(
                len.checked_mul(F::BYTES)
                    .ok_or_else(|| bad("size overflow"))?,
            )?;
            let data = raw.chunks_exact(F::BYTES).map(F::read_le).collect();
            params.push(Tensor::new(&shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Model::from_parts(config, params)
    }
}

pub fn save_checkpoint<F: Real>(model: &Model<F>, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<Model<F>> {
    Model::from_bytes(&std::fs::read(path)?)
}

fn bad(msg: &str) -> NetworkError {
    NetworkError::Checkpoint(msg.to_string())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}
