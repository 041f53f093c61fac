//! Parameter checkpoints: one line of JSON header terminated by `\n`, then
//! `count` little-endian IEEE-754 doubles.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelKind, ParamVector};
use crate::error::{Error, Result};

pub const LAYOUT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "privtext-params";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub layout_version: u32,
    pub count: usize,
}

pub fn write_checkpoint<W: Write>(mut w: W, config: &ModelConfig, params: &ParamVector) -> Result<()> {
    if params.len() != config.param_count() {
        return Err(Error::DimensionMismatch {
            expected: config.param_count(),
            got: params.len(),
        });
    }
    let header = CheckpointHeader {
        format: FORMAT_TAG.to_string(),
        kind: config.kind,
        config: *config,
        layout_version: LAYOUT_VERSION,
        count: params.len(),
    };
    let mut buf = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    buf.push(b'\n');
    buf.reserve(params.len() * 8);
    for v in params.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelConfig, ParamVector)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(Error::Checkpoint(format!("unknown format tag {:?}", header.format)));
    }
    if header.layout_version != LAYOUT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported layout version {}",
            header.layout_version
        )));
    }
    if header.kind != header.config.kind {
        return Err(Error::Checkpoint("header kind disagrees with config".into()));
    }
    header.config.validate()?;
    if header.count != header.config.param_count() {
        return Err(Error::Checkpoint(format!(
            "header count {} does not match config parameter count {}",
            header.count,
            header.config.param_count()
        )));
    }
    let body = &bytes[nl + 1..];
    if body.len() != header.count * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} payload bytes, found {}",
            header.count * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header.config, ParamVector(values)))
}

pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &ParamVector) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(f), config, params)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ParamVector)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_params;

    #[test]
    fn bit_exact_roundtrip() {
        let cfg = ModelConfig {
            kind: ModelKind::TinyTransformer,
            vocab_hash_dim: 16,
            embed_dim: 4,
            num_heads: 2,
            ff_dim: 8,
            max_len: 3,
            init_seed: 11,
            ..Default::default()
        };
        let mut p = init_params(&cfg).unwrap();
        p.0[0] = -0.0;
        p.0[1] = f64::MIN_POSITIVE / 2.0;
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &p).unwrap();
        let (cfg2, p2) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(cfg, cfg2);
        assert!(p.bit_eq(&p2));
    }

    #[test]
    fn rejects_truncated_payload() {
        let cfg = ModelConfig {
            feature_dim: 4,
            ..Default::default()
        };
        let p = init_params(&cfg).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &p).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(buf.as_slice()).is_err());
        assert!(read_checkpoint(&b"{}"[..]).is_err());
    }
}
