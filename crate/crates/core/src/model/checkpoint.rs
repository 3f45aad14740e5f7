use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, StudentModel};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u64 = 1;
const MAX_HEADER: u64 = 16 << 20;

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u64,
    config: ModelConfig,
    tensors: Vec<Entry>,
}

/// Writes a one-line JSON header followed by little-endian `f32` data in
/// manifest order.
pub fn write_checkpoint(model: &StudentModel, mut w: impl Write) -> Result<(), ModelError> {
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        tensors: model
            .param_names()
            .zip(model.params())
            .map(|(n, p)| Entry {
                name: n.to_string(),
                shape: p.shape().to_vec(),
            })
            .collect(),
    };
    let line = serde_json::to_string(&header).map_err(|e| ModelError::MalformedCheckpoint(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for p in model.params() {
        let mut buf = Vec::with_capacity(p.len() * 4);
        for x in p.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(r: impl Read) -> Result<StudentModel, ModelError> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    (&mut r).take(MAX_HEADER).read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(ModelError::MalformedCheckpoint("missing header line".into()));
    }
    line.pop();
    let raw: serde_json::Value =
        serde_json::from_slice(&line).map_err(|e| ModelError::MalformedCheckpoint(format!("header: {e}")))?;
    let found = raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ModelError::MalformedCheckpoint("header lacks format_version".into()))?;
    if found != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| ModelError::MalformedCheckpoint(format!("header: {e}")))?;
    header.config.validate()?;

    let expected: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().try_fold(4usize, |a, &b| a.checked_mul(b)))
        .try_fold(0usize, |a, b| b.and_then(|b| a.checked_add(b)))
        .ok_or_else(|| ModelError::MalformedCheckpoint("tensor sizes overflow".into()))?;
    let mut data = Vec::new();
    (&mut r).take(expected as u64 + 1).read_to_end(&mut data)?;
    if data.len() < expected {
        return Err(ModelError::Truncated {
            expected,
            actual: data.len(),
        });
    }
    if data.len() > expected {
        return Err(ModelError::MalformedCheckpoint("trailing bytes after tensor data".into()));
    }

    let model_names: Vec<String> = {
        let probe = super::network::layout(&header.config).0;
        probe.into_iter().map(|s| s.name).collect()
    };
    if model_names.len() != header.tensors.len()
        || model_names.iter().zip(&header.tensors).any(|(a, b)| *a != b.name)
    {
        return Err(ModelError::MalformedCheckpoint(
            "tensor manifest does not match the config".into(),
        ));
    }
    let mut params = Vec::with_capacity(header.tensors.len());
    let mut offset = 0;
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let values = data[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        offset += 4 * n;
        params.push(Tensor::new(entry.shape.clone(), values)?.with_grad());
    }
    StudentModel::from_parts(header.config, params)
}

pub fn save_checkpoint(model: &StudentModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let file = File::create(path)?;
    write_checkpoint(model, BufWriter::new(file))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<StudentModel, ModelError> {
    read_checkpoint(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> StudentModel {
        let mut c = ModelConfig::desk(40);
        c.d = 8;
        c.context_length = 16;
        StudentModel::init(c, 9).unwrap()
    }

    fn bytes(m: &StudentModel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint(m, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let m = model();
        let back = read_checkpoint(bytes(&m).as_slice()).unwrap();
        assert_eq!(back.config(), m.config());
        for (a, b) in m.params().iter().zip(back.params()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn one_byte_short_is_truncated() {
        let buf = bytes(&model());
        let err = read_checkpoint(&buf[..buf.len() - 1]).unwrap_err();
        assert!(matches!(err, ModelError::Truncated { .. }), "{err}");
    }

    #[test]
    fn bumped_version_names_both() {
        let buf = bytes(&model());
        let text = String::from_utf8_lossy(&buf).replacen("\"format_version\":1", "\"format_version\":2", 1);
        let mut edited = text.split('\n').next().unwrap().as_bytes().to_vec();
        edited.push(b'\n');
        let err = read_checkpoint(edited.as_slice()).unwrap_err();
        assert!(matches!(err, ModelError::VersionMismatch { found: 2, expected: 1 }));
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn config_disagreeing_with_manifest_rejected() {
        let buf = bytes(&model());
        let nl = buf.iter().position(|&b| b == b'\n').unwrap();
        let header = String::from_utf8(buf[..nl].to_vec()).unwrap();
        let edited = header.replacen("\"layers\":2", "\"layers\":1", 1);
        let mut out = edited.into_bytes();
        out.extend_from_slice(&buf[nl..]);
        assert!(matches!(
            read_checkpoint(out.as_slice()),
            Err(ModelError::MalformedCheckpoint(_))
        ));
    }
}
