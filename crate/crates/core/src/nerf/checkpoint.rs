//! Versioned binary checkpoints: field config, training position, RNG
//! state, parameter tensors, and optional auxiliary tensors (optimizer
//! moments), all bit-exact.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::field::{FieldConfig, RadianceField};

const MAGIC: &[u8; 8] = b"TTEXCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}: not a checkpoint (bad magic)")]
    BadMagic(String),
    #[error("{0}: unsupported checkpoint version {1}")]
    BadVersion(String, u32),
    #[error("{0}: corrupt header: {1}")]
    BadHeader(String, String),
    #[error("{0}: tensor table does not match the field layout")]
    LayoutMismatch(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    field: FieldConfig,
    rng_state: [u64; 4],
    step: u64,
    tensors: Vec<(String, usize)>,
    aux: Vec<(String, usize)>,
}

/// A reloaded checkpoint: the field, the training stream position, and any
/// auxiliary tensors that were saved alongside the parameters.
#[derive(Debug)]
pub struct Checkpoint {
    pub field: RadianceField,
    pub rng_state: [u64; 4],
    pub step: u64,
    pub aux: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn aux_tensor(&self, name: &str) -> Option<&[f64]> {
        self.aux
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_slice())
    }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    field: &RadianceField,
    rng_state: [u64; 4],
    step: u64,
    aux: &[(String, &[f64])],
) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };

    let mut tensors = Vec::new();
    field.visit_tensors(|name, data| tensors.push((name, data.len())));
    let header = Header {
        field: field.config,
        rng_state,
        step,
        tensors,
        aux: aux.iter().map(|(n, t)| (n.clone(), t.len())).collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| CheckpointError::BadHeader(path.display().to_string(), e.to_string()))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    field.visit_tensors(|_, data| {
        for &v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    for (_, data) in aux {
        for &v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    // write to a sibling temp file then rename, so a crash never leaves a
    // truncated checkpoint under the final name
    let tmp = path.with_extension("ckpt.tmp");
    let mut file = std::fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    drop(file);
    std::fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: display.clone(),
        source,
    })?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic(display));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::BadVersion(display, version));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_end = 20 + header_len;
    if bytes.len() < header_end {
        return Err(CheckpointError::BadHeader(display, "truncated".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[20..header_end])
        .map_err(|e| CheckpointError::BadHeader(display.clone(), e.to_string()))?;

    let mut field = RadianceField::zeros(header.field);
    let mut expected = Vec::new();
    field.visit_tensors(|name, data| expected.push((name, data.len())));
    if expected != header.tensors {
        return Err(CheckpointError::LayoutMismatch(display));
    }
    let field_total: usize = header.tensors.iter().map(|(_, l)| l).sum();
    let aux_total: usize = header.aux.iter().map(|(_, l)| l).sum();
    if bytes.len() != header_end + (field_total + aux_total) * 8 {
        return Err(CheckpointError::BadHeader(display, "bad data length".into()));
    }
    let mut offset = header_end;
    let read_f64 = |offset: &mut usize| {
        let v = f64::from_le_bytes(bytes[*offset..*offset + 8].try_into().unwrap());
        *offset += 8;
        v
    };
    field.visit_tensors_mut(|_, data| {
        for v in data.iter_mut() {
            *v = read_f64(&mut offset);
        }
    });
    let mut aux = Vec::with_capacity(header.aux.len());
    for (name, len) in header.aux {
        let mut data = vec![0.0; len];
        for v in data.iter_mut() {
            *v = read_f64(&mut offset);
        }
        aux.push((name, data));
    }
    Ok(Checkpoint {
        field,
        rng_state: header.rng_state,
        step: header.step,
        aux,
    })
}
