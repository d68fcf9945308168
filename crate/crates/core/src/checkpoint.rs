//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | field            | bytes                                   |
//! |------------------|-----------------------------------------|
//! | magic            | `AWRSCKPT` (8)                          |
//! | version          | u32, currently 1                        |
//! | dtype            | u8, 4 = f32, 8 = f64                    |
//! | metadata length  | u64                                     |
//! | metadata         | UTF-8 JSON (`model` config, `sizes`)    |
//! | tensor count     | u64                                     |
//! | per tensor       | name length u32, name UTF-8, ndim u8 (2), dims u64 x ndim, trainable u8, data |
//!
//! Tensor data is row-major, `dtype` bytes per element.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{DType, Real, Tensor};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{AwrsModel, ModelSizes};

pub const MAGIC: &[u8; 8] = b"AWRSCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub sizes: ModelSizes,
}

pub fn to_bytes<F: Real>(model: &AwrsModel<F>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(F::DTYPE.code());
    let meta = serde_json::to_vec(&CheckpointMeta {
        model: model.cfg.clone(),
        sizes: model.sizes,
    })?;
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(model.store.len() as u64).to_le_bytes());
    for (_, p) in model.store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(2);
        out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
        out.push(p.trainable as u8);
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
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
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} too large")))
    }
}

pub fn from_bytes<F: Real>(bytes: &[u8]) -> Result<AwrsModel<F>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dtype = DType::from_code(r.u8()?).ok_or_else(|| Error::Checkpoint("unknown dtype".into()))?;
    if dtype != F::DTYPE {
        return Err(Error::Checkpoint(format!("file holds {dtype:?}, requested {:?}", F::DTYPE)));
    }
    let meta_len = r.u64()?;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
    let mut model = AwrsModel::<F>::new(meta.model, meta.sizes, None, 0)?;
    let count = r.u64()?;
    if count != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors, model expects {}",
            model.store.len()
        )));
    }
    let width = dtype.code() as usize;
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_owned();
        let ndim = r.u8()?;
        if ndim != 2 {
            return Err(Error::Checkpoint(format!("{name}: ndim {ndim}, expected 2")));
        }
        let (rows, cols) = (r.u64()?, r.u64()?);
        let trainable = r.u8()? != 0;
        let raw = r.take(rows * cols * width)?;
        let data = raw.chunks_exact(width).map(F::read_le).collect();
        let id = model
            .store
            .find(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{name}`")))?;
        model
            .store
            .replace(id, Tensor::new(rows, cols, data)?)
            .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        model.store.set_trainable(id, trainable);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}

pub fn save<F: Real>(model: &AwrsModel<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load<F: Real>(path: impl AsRef<Path>) -> Result<AwrsModel<F>> {
    let path = path.as_ref();
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AblationMode;

    fn model() -> AwrsModel<f32> {
        let cfg = ModelConfig {
            max_title_len: 4,
            word_dim: 4,
            train_word_embeddings: true,
            d_news: 4,
            title_heads: 2,
            additive_hidden: 3,
            category_dim: 2,
            use_entities: true,
            entity_dim: 2,
            d: 5,
            dim_ue: 2,
            d_time: 2,
            history_len: 3,
            user_heads: 2,
            cnn_half_window: 1,
            mode: AblationMode::OnlyRel,
        };
        AwrsModel::new(
            cfg,
            ModelSizes {
                words: 10,
                categories: 3,
                entities: 4,
            },
            None,
            5,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut m = model();
        m.store.set_trainable(m.news.word_table(), false);
        let bytes = to_bytes(&m).unwrap();
        let back: AwrsModel<f32> = from_bytes(&bytes).unwrap();
        assert_eq!(back.cfg, m.cfg);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
        assert!(!back.store.is_trainable(back.news.word_table()));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = to_bytes(&model()).unwrap();
        assert!(from_bytes::<f32>(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes::<f64>(&bytes).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes::<f32>(&bad).is_err());
        let mut bad = bytes;
        bad[8] = 2;
        assert!(from_bytes::<f32>(&bad).is_err());
    }
}
