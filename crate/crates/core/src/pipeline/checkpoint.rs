//! Binary checkpoint: `COODCKPT`, format version, run config and vocabulary as
//! length-prefixed JSON, training step, final loss, then named little-endian
//! `f32` tensors. All integers are little-endian.

use std::path::Path;

use crate::autodiff::Tensor;
use crate::corpus::Vocabulary;

use super::{Model, PipelineError, RunConfig};

pub const MAGIC: &[u8; 8] = b"COODCKPT";
pub const FORMAT_VERSION: u32 = 1;

pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for blob in [model.config.to_json(), model.vocab.to_json()] {
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        out.extend_from_slice(blob.as_bytes());
    }
    out.extend_from_slice(&model.step.to_le_bytes());
    out.extend_from_slice(&model.final_loss.to_le_bytes());
    let names = model.param_names();
    let params = model.flat_params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in names.iter().zip(&params) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), PipelineError> {
    std::fs::write(path, checkpoint_bytes(model)).map_err(|e| PipelineError::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], PipelineError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| PipelineError::CorruptPayload(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, PipelineError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, PipelineError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<&'a str, PipelineError> {
        let n = self.u32(what)? as usize;
        std::str::from_utf8(self.take(n, what)?).map_err(|_| PipelineError::CorruptPayload(format!("{what} is not UTF-8")))
    }
}

pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<Model, PipelineError> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(PipelineError::BadMagic);
    }
    let mut r = Reader { buf, pos: MAGIC.len() };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(PipelineError::VersionUnsupported(version));
    }
    let corrupt = |what: &str, e: String| PipelineError::CorruptPayload(format!("{what}: {e}"));
    let config = RunConfig::from_json(r.string("config")?).map_err(|e| corrupt("config", e.to_string()))?;
    let vocab = Vocabulary::from_json(r.string("vocabulary")?).map_err(|e| corrupt("vocabulary", e.to_string()))?;
    let step = r.u64("step")?;
    let final_loss = f64::from_bits(r.u64("final loss")?);
    let mut model = Model::init(config, vocab).map_err(|e| corrupt("config", e.to_string()))?;
    let names = model.param_names();
    let count = r.u32("record count")? as usize;
    if count != names.len() {
        return Err(corrupt("records", format!("{count} stored, layout has {}", names.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for expected in &names {
        let name = r.string("record name")?;
        if name != expected {
            return Err(corrupt("records", format!("found `{name}`, expected `{expected}`")));
        }
        let rank = r.u32("rank")? as usize;
        if rank > 4 {
            return Err(corrupt(name, format!("rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| corrupt(name, "overflow".into()))?;
        let bytes = r.take(n.checked_mul(4).ok_or_else(|| corrupt(name, "overflow".into()))?, name)?;
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        tensors.push(Tensor::new(shape, data).map_err(|e| corrupt(name, e.to_string()))?);
    }
    if r.pos != buf.len() {
        return Err(corrupt("trailer", format!("{} unexpected bytes", buf.len() - r.pos)));
    }
    model.set_flat_params(tensors).map_err(|e| corrupt("records", e.to_string()))?;
    model.step = step;
    model.final_loss = final_loss;
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<Model, PipelineError> {
    let buf = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    checkpoint_from_bytes(&buf)
}
