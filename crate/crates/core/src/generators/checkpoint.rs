//! Binary model container: magic, version, JSON header, little-endian `f64` payload.
//!
//! ```text
//! "SBCK" | u32 version | u64 header_len | header JSON | f64 × n
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BrushCldm, BrushGan, BrushGanConfig, CldmConfig, GeneratorError, GeneratorKind, GeneratorModel,
};
use crate::nn::{ParamSlot, Params};

pub const MAGIC: &[u8; 4] = b"SBCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SlotEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "lowercase")]
enum ModelConfig {
    Brushgan(BrushGanConfig),
    Brushcldm(CldmConfig),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    slots: Vec<SlotEntry>,
}

fn err(msg: impl Into<String>) -> GeneratorError {
    GeneratorError::Checkpoint(msg.into())
}

pub fn write_checkpoint(model: &GeneratorModel, mut w: impl Write) -> Result<(), GeneratorError> {
    let (config, params) = match model {
        GeneratorModel::Baseline(_) => return Err(err("the baseline has no parameters to save")),
        GeneratorModel::BrushGan(m) => (ModelConfig::Brushgan(m.config.clone()), &m.params),
        GeneratorModel::BrushCldm(m) => (ModelConfig::Brushcldm(m.config.clone()), &m.params),
    };
    let header = Header {
        model: config,
        slots: params
            .slots()
            .iter()
            .map(|s| SlotEntry {
                name: s.name.clone(),
                shape: s.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| err(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(params.len() * 8);
    for v in params.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<GeneratorModel, GeneratorError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(err("not a model checkpoint (bad magic)"));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let version = u32::from_le_bytes(u32b);
    if version != CHECKPOINT_VERSION {
        return Err(err(format!("unsupported checkpoint version {version}")));
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let len = u64::from_le_bytes(u64b) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| err(e.to_string()))?;
    let mut slots = Vec::with_capacity(header.slots.len());
    let mut offset = 0;
    for s in header.slots {
        let len = s.shape.iter().product();
        slots.push(ParamSlot {
            name: s.name,
            shape: s.shape,
            offset,
            len,
        });
        offset += len;
    }
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != offset * 8 {
        return Err(err(format!(
            "payload holds {} bytes, header needs {}",
            raw.len(),
            offset * 8
        )));
    }
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let params = Params::from_parts(slots, data)?;
    Ok(match header.model {
        ModelConfig::Brushgan(c) => GeneratorModel::BrushGan(BrushGan::from_params(c, params)?),
        ModelConfig::Brushcldm(c) => GeneratorModel::BrushCldm(BrushCldm::from_params(c, params)?),
    })
}

pub fn save_checkpoint(
    model: &GeneratorModel,
    path: impl AsRef<Path>,
) -> Result<(), GeneratorError> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(model, std::io::BufWriter::new(f))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GeneratorModel, GeneratorError> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// `"baseline"` or a checkpoint path.
pub fn load_generator(spec: &str) -> Result<GeneratorModel, GeneratorError> {
    if spec.parse::<GeneratorKind>() == Ok(GeneratorKind::Baseline) {
        return Ok(GeneratorModel::baseline());
    }
    load_checkpoint(spec)
}
