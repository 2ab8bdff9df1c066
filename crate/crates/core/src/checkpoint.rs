//! Versioned binary parameter files.
//!
//! Layout (little endian):
//!
//! ```text
//! b"PWAECKPT"  u32 version  u64 header_len  header (JSON)
//! u32 count, then per parameter:
//!   u32 name_len  name  u8 kind  u32 ndim  u64 dims[ndim]  f64 data[..]
//! ```
//!
//! The JSON header carries the model kind, the full training configuration
//! and the input shape, so a model can be rebuilt before its values are
//! loaded. Loading never resizes: a shape disagreement is an error.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::TrainConfig;
use crate::models::{LatentGeometry, PoincareWae, Vgae};
use crate::nn::{ParamKind, ParamStore};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PWAECKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Wae,
    Vgae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub model: ModelKind,
    pub config: TrainConfig,
    /// Pixel count for the WAE, node count for the VGAE.
    pub input_dim: usize,
    pub feature_dim: Option<usize>,
    pub geometry: Option<LatentGeometry>,
}

pub fn write_checkpoint<W: Write>(mut w: W, header: &Header, store: &ParamStore) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * store.num_scalars() + 64 * store.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.params() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.push(match p.kind {
            ParamKind::Euclidean => 0,
            ParamKind::Hyperbolic => 1,
        });
        buf.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in p.value.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)
        .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            ))),
        }
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

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Header, ParamStore)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let hlen = c.len()?;
    let header: Header = serde_json::from_slice(c.take(hlen)?)?;
    let count = c.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let nlen = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(nlen)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_owned();
        let kind = match c.u8()? {
            0 => ParamKind::Euclidean,
            1 => ParamKind::Hyperbolic,
            k => return Err(Error::Checkpoint(format!("unknown parameter kind {k}"))),
        };
        let ndim = c.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.len()?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint("parameter size overflow".into()))?;
        let data = c
            .take(n)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        store.add(name, kind, Tensor::new(shape, data));
    }
    if c.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            buf.len() - c.pos
        )));
    }
    Ok((header, store))
}

pub fn save(path: &Path, header: &Header, store: &ParamStore) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, header, store)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Header, ParamStore)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}

pub fn wae_header(model: &PoincareWae) -> Header {
    Header {
        model: ModelKind::Wae,
        config: model.config().clone(),
        input_dim: model.input_dim(),
        feature_dim: None,
        geometry: None,
    }
}

pub fn vgae_header(model: &Vgae) -> Header {
    Header {
        model: ModelKind::Vgae,
        config: model.config().clone(),
        input_dim: model.num_nodes(),
        feature_dim: model.feature_dim(),
        geometry: Some(model.geometry()),
    }
}

pub fn save_wae(path: &Path, model: &PoincareWae) -> Result<()> {
    save(path, &wae_header(model), &model.store)
}

pub fn save_vgae(path: &Path, model: &Vgae) -> Result<()> {
    save(path, &vgae_header(model), &model.store)
}

fn expect_kind(h: &Header, kind: ModelKind) -> Result<()> {
    if h.model != kind {
        return Err(Error::Checkpoint(format!(
            "expected a {kind:?} checkpoint, found {:?}",
            h.model
        )));
    }
    Ok(())
}

/// Rebuilds the architecture from the header and loads the values.
pub fn wae_from_parts(h: &Header, store: &ParamStore) -> Result<PoincareWae> {
    expect_kind(h, ModelKind::Wae)?;
    let mut m = PoincareWae::new(&h.config, h.input_dim, &mut ChaCha8Rng::seed_from_u64(0))?;
    m.store.load_from(store)?;
    Ok(m)
}

pub fn vgae_from_parts(h: &Header, store: &ParamStore) -> Result<Vgae> {
    expect_kind(h, ModelKind::Vgae)?;
    let geometry = h
        .geometry
        .ok_or_else(|| Error::Checkpoint("graph checkpoint without geometry".into()))?;
    let mut m = Vgae::new(
        &h.config,
        geometry,
        h.input_dim,
        h.feature_dim,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    m.store.load_from(store)?;
    Ok(m)
}

pub fn load_wae(path: &Path) -> Result<PoincareWae> {
    let (h, s) = load(path)?;
    wae_from_parts(&h, &s)
}

pub fn load_vgae(path: &Path) -> Result<Vgae> {
    let (h, s) = load(path)?;
    vgae_from_parts(&h, &s)
}
