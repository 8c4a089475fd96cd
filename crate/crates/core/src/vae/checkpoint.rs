//! Binary model checkpoints.
//!
//! Layout (all little-endian): magic `BVAE`, `u32` version, the config
//! block, a `u32` tensor count, then per tensor a `u32` rank, `u32` dims and
//! `f64` values. Tensors follow [`VaeModel::state_mut`] order.

use std::path::Path;

use super::model::{VaeConfig, VaeModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BVAE";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn write_config(w: &mut Writer, c: &VaeConfig) {
    w.u32(c.latent_dim);
    w.u32(c.num_blocks);
    w.u32(c.base_channels);
    w.u32(c.max_channels);
    w.u32(c.image_height);
    w.u32(c.image_width);
    w.f64(c.leaky_slope);
    w.f64(c.bn_eps);
    w.f64(c.bn_momentum);
    w.u32(c.epochs);
    w.u32(c.batch_size);
    w.f64(c.learning_rate);
    w.f64(c.adam_beta1);
    w.f64(c.adam_beta2);
    w.f64(c.adam_eps);
    w.f64(c.kl_weight);
    w.u64(c.seed);
}

fn read_config(r: &mut Reader) -> Result<VaeConfig> {
    Ok(VaeConfig {
        latent_dim: r.u32()?,
        num_blocks: r.u32()?,
        base_channels: r.u32()?,
        max_channels: r.u32()?,
        image_height: r.u32()?,
        image_width: r.u32()?,
        leaky_slope: r.f64()?,
        bn_eps: r.f64()?,
        bn_momentum: r.f64()?,
        epochs: r.u32()?,
        batch_size: r.u32()?,
        learning_rate: r.f64()?,
        adam_beta1: r.f64()?,
        adam_beta2: r.f64()?,
        adam_eps: r.f64()?,
        kl_weight: r.f64()?,
        seed: r.u64()?,
    })
}

/// Serializes a model. Takes `&mut` only to walk its tensors.
pub fn to_bytes(model: &mut VaeModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    write_config(&mut w, &model.config().clone());
    let tensors = model.state_mut();
    w.u32(tensors.len());
    for t in tensors {
        w.u32(t.shape.len());
        for &d in &t.shape {
            w.u32(d);
        }
        for &v in &t.value {
            w.f64(v);
        }
    }
    w.0
}

pub fn from_bytes(data: &[u8]) -> Result<VaeModel> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a BVAE checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let cfg = read_config(&mut r)?;
    let mut model = VaeModel::new(&cfg)?;
    let count = r.u32()?;
    let mut tensors = model.state_mut();
    if count != tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} tensors, architecture needs {}",
            tensors.len()
        )));
    }
    for (i, t) in tensors.iter_mut().enumerate() {
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if shape != t.shape {
            return Err(Error::Format(format!(
                "tensor {i}: shape {shape:?}, expected {:?}",
                t.shape
            )));
        }
        for v in t.value.iter_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != data.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(model)
}

pub fn save(model: &mut VaeModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<VaeModel> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&data)
}
