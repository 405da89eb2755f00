//! Model checkpoint file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "PKMDL1" (6 bytes)
//! u32 layer count (always 5: run, kick, metadata, fusion hidden, output)
//! per layer:
//!   u32 rows (outputs), u32 cols (inputs)
//!   rows*cols f64 weights, row-major
//!   rows f64 biases
//! u32 CRC32 of all preceding bytes
//! ```
//!
//! Ablation switches are runtime configuration and are not stored; loaded
//! models default to both streams and metadata enabled.

use std::path::Path;

use thiserror::Error;

use crate::num::Real;

use super::{Architecture, ClassifierModel, Layer, Mat, ParamSet, META_DIM};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"PKMDL1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes (not a model checkpoint)")]
    BadMagic,
    #[error("truncated checkpoint at byte offset {offset}")]
    TruncatedFile { offset: usize },
    #[error("checkpoint checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("inconsistent layer shapes: {0}")]
    InconsistentShapes(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_model<R: Real>(model: &ClassifierModel<R>) -> Vec<u8> {
    let layers = model.params.layers();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        buf.extend_from_slice(&(layer.weights.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.weights.cols as u32).to_le_bytes());
        for w in &layer.weights.data {
            buf.extend_from_slice(&w.as_f64().to_le_bytes());
        }
        for b in &layer.biases {
            buf.extend_from_slice(&b.as_f64().to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn save_model<R: Real>(path: &Path, model: &ClassifierModel<R>) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn decode_model(data: &[u8]) -> Result<ClassifierModel<f64>, CheckpointError> {
    struct Reader<'a> {
        data: &'a [u8],
        offset: usize,
    }
    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
            if self.offset + n + 4 > self.data.len() {
                return Err(CheckpointError::TruncatedFile {
                    offset: self.data.len(),
                });
            }
            let slice = &self.data[self.offset..self.offset + n];
            self.offset += n;
            Ok(slice)
        }
    }

    if data.len() < CHECKPOINT_MAGIC.len() {
        return Err(CheckpointError::TruncatedFile { offset: data.len() });
    }
    if &data[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader {
        data,
        offset: CHECKPOINT_MAGIC.len(),
    };
    let layer_count = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    if layer_count != 5 {
        return Err(CheckpointError::InconsistentShapes(format!(
            "expected 5 layers, found {layer_count}"
        )));
    }
    let mut layers: Vec<Layer<f64>> = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let rows = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let raw_w = r.take(rows * cols * 8)?;
        let data_w: Vec<f64> = raw_w
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let raw_b = r.take(rows * 8)?;
        let biases: Vec<f64> = raw_b
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        layers.push(Layer {
            weights: Mat {
                rows,
                cols,
                data: data_w,
            },
            biases,
        });
    }
    let body_end = r.offset;
    if body_end + 4 > data.len() {
        return Err(CheckpointError::TruncatedFile { offset: data.len() });
    }
    if body_end + 4 < data.len() {
        return Err(CheckpointError::TruncatedFile { offset: body_end + 4 });
    }
    let stored = u32::from_le_bytes(data[body_end..body_end + 4].try_into().unwrap());
    let computed = crc32fast::hash(&data[..body_end]);
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed });
    }

    let [run, kick, meta, fusion, output]: [Layer<f64>; 5] =
        layers.try_into().expect("layer count checked above");
    if kick.weights.rows != run.weights.rows || kick.weights.cols != run.weights.cols {
        return Err(CheckpointError::InconsistentShapes(
            "run and kick streams differ in shape".into(),
        ));
    }
    if meta.weights.cols != META_DIM {
        return Err(CheckpointError::InconsistentShapes(format!(
            "metadata stream takes {} inputs, expected {META_DIM}",
            meta.weights.cols
        )));
    }
    let fusion_input = 2 * run.weights.rows + meta.weights.rows;
    if fusion.weights.cols != fusion_input {
        return Err(CheckpointError::InconsistentShapes(format!(
            "fusion layer takes {} inputs, expected {fusion_input}",
            fusion.weights.cols
        )));
    }
    if output.weights.cols != fusion.weights.rows {
        return Err(CheckpointError::InconsistentShapes(format!(
            "output layer takes {} inputs, expected {}",
            output.weights.cols, fusion.weights.rows
        )));
    }
    let arch = Architecture {
        embed_dim: run.weights.cols,
        hidden_stream: run.weights.rows,
        hidden_meta: meta.weights.rows,
        hidden_fusion: fusion.weights.rows,
        classes: output.weights.rows,
        use_metadata: true,
        single_stream: false,
    };
    Ok(ClassifierModel {
        arch,
        params: ParamSet {
            run_stream: run,
            kick_stream: kick,
            meta_stream: meta,
            fusion_hidden: fusion,
            output,
        },
    })
}

pub fn load_model(path: &Path) -> Result<ClassifierModel<f64>, CheckpointError> {
    let data = std::fs::read(path)?;
    decode_model(&data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::init_model;

    fn sample_model() -> ClassifierModel<f64> {
        init_model(Architecture::new(6, 3).with_hidden(5, 3, 4), 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = sample_model();
        let buf = encode_model(&model);
        let loaded = decode_model(&buf).unwrap();
        assert_eq!(loaded.arch, model.arch);
        for (a, b) in loaded.params.flatten().iter().zip(model.params.flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corruption_faults_detected() {
        let model = sample_model();
        let buf = encode_model(&model);

        let mut bad_magic = buf.clone();
        bad_magic[2] = b'Z';
        assert!(matches!(
            decode_model(&bad_magic),
            Err(CheckpointError::BadMagic)
        ));

        let cut = &buf[..buf.len() - 11];
        assert!(matches!(
            decode_model(cut),
            Err(CheckpointError::TruncatedFile { .. })
        ));

        let mut corrupted = buf.clone();
        let mid = corrupted.len() / 2;
        corrupted[mid] ^= 0x01;
        assert!(matches!(
            decode_model(&corrupted),
            Err(CheckpointError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pkmdl");
        let model = sample_model();
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.params, model.params);
    }
}
