//! Checkpoint directory layout: `config.json` holds the model and loss
//! settings plus the init seed; `params.bin` holds every tensor in
//! canonical order as (name_len u32 LE, name bytes, value count u32 LE,
//! f32 LE values). Weights are stored single-precision.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::model::{LossConfig, Model, ModelConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub seed: u64,
}

pub fn save_checkpoint(dir: &Path, model: &Model, loss: &LossConfig, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = CheckpointConfig {
        model: model.config.clone(),
        loss: loss.clone(),
        seed,
    };
    let json = serde_json::to_string_pretty(&cfg)
        .map_err(|e| Error::format(format!("config serialization: {e}")))?;
    fs::write(dir.join("config.json"), json)?;

    let mut out = Vec::new();
    for (name, tensor) in model.params() {
        let bytes = name.as_bytes();
        out.write_all(&(bytes.len() as u32).to_le_bytes())?;
        out.write_all(bytes)?;
        out.write_all(&(tensor.len() as u32).to_le_bytes())?;
        for &v in tensor.iter() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    fs::write(dir.join("params.bin"), out)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, LossConfig, u64)> {
    let cfg_text = fs::read_to_string(dir.join("config.json"))?;
    let cfg: CheckpointConfig = serde_json::from_str(&cfg_text)
        .map_err(|e| Error::format(format!("config.json: {e}")))?;
    cfg.model.check()?;
    cfg.loss.check()?;

    let mut model = Model::new(cfg.model, cfg.seed)?;
    let data = fs::read(dir.join("params.bin"))?;
    let mut cursor = &data[..];

    let read_u32 = |cursor: &mut &[u8]| -> Result<u32> {
        let mut buf = [0u8; 4];
        cursor
            .read_exact(&mut buf)
            .map_err(|_| Error::format("params.bin truncated"))?;
        Ok(u32::from_le_bytes(buf))
    };

    for (name, tensor) in model.params_mut().iter_mut() {
        let name_len = read_u32(&mut cursor)? as usize;
        if cursor.len() < name_len {
            return Err(Error::format("params.bin truncated in name"));
        }
        let stored = std::str::from_utf8(&cursor[..name_len])
            .map_err(|_| Error::format("parameter name is not utf-8"))?;
        if stored != name {
            return Err(Error::format(format!(
                "parameter order mismatch: file has {stored}, expected {name}"
            )));
        }
        cursor = &cursor[name_len..];
        let count = read_u32(&mut cursor)? as usize;
        if count != tensor.len() {
            return Err(Error::format(format!(
                "parameter {name}: file holds {count} values, model expects {}",
                tensor.len()
            )));
        }
        if cursor.len() < count * 4 {
            return Err(Error::format(format!("params.bin truncated in {name}")));
        }
        for slot in tensor.iter_mut() {
            let mut buf = [0u8; 4];
            buf.copy_from_slice(&cursor[..4]);
            cursor = &cursor[4..];
            let v = f32::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(Error::format(format!("parameter {name} holds {v}")));
            }
            *slot = v as f64;
        }
    }
    if !cursor.is_empty() {
        return Err(Error::format(format!(
            "{} trailing bytes after final parameter",
            cursor.len()
        )));
    }
    Ok((model, cfg.loss, cfg.seed))
}
