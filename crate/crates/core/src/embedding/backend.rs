//! Embedding backends.
//!
//! A backend turns one chunk of frames into one fixed-length vector. All
//! backends are deterministic: repeated calls for the same
//! (backend, clip, stage, chunk index) return bit-identical vectors.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::dataset::Direction;

use super::cache::{read_cache, CacheError};
use super::{Chunk, EmbeddingError, StageTag};

pub trait Backend: Send + Sync {
    /// Frames per input chunk.
    fn window(&self) -> usize;
    /// Embedding length.
    fn dim(&self) -> usize;
    /// Model or file name, used to label caches and reports.
    fn identifier(&self) -> &str;
    /// Embed one chunk. Deterministic per (clip_id, stage, chunk_index).
    fn embed(
        &self,
        clip_id: &str,
        stage: StageTag,
        chunk: &Chunk,
    ) -> Result<Vec<f32>, EmbeddingError>;

    fn check_window(&self, chunk: &Chunk) -> Result<(), EmbeddingError> {
        if chunk.frames.len() != self.window() {
            return Err(EmbeddingError::WindowMismatch {
                expected: self.window(),
                got: chunk.frames.len(),
            });
        }
        Ok(())
    }
}

/// Test-mode label signal: a biased coordinate on one stage's chunks.
///
/// Clips labeled right receive `+magnitude` on the coordinate, left receive
/// `-magnitude`, center receives no bias; Gaussian noise of the given sigma
/// is added on top.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalInjection {
    pub stage: StageTag,
    pub coordinate: usize,
    pub magnitude: f64,
    pub noise_sigma: f64,
}

impl Default for SignalInjection {
    fn default() -> Self {
        SignalInjection {
            stage: StageTag::Kick,
            coordinate: 0,
            magnitude: 1.0,
            noise_sigma: 0.3,
        }
    }
}

/// Seeded counter-based generator; reproducible without any model runtime.
///
/// Vectors are standard-normal draws from a stream keyed by
/// (seed, clip_id, stage, chunk_index). Frame pixels are ignored.
pub struct SyntheticBackend {
    window: usize,
    dim: usize,
    seed: u64,
    identifier: String,
    injection: Option<SignalInjection>,
    labels: HashMap<String, Direction>,
}

impl SyntheticBackend {
    pub fn new(window: usize, dim: usize, seed: u64) -> Self {
        SyntheticBackend {
            window,
            dim,
            seed,
            identifier: "synthetic".to_string(),
            injection: None,
            labels: HashMap::new(),
        }
    }

    pub fn with_identifier(mut self, identifier: impl Into<String>) -> Self {
        self.identifier = identifier.into();
        self
    }

    /// Enable label-signal injection. `labels` must cover every clip that
    /// will be embedded.
    pub fn with_injection(
        mut self,
        injection: SignalInjection,
        labels: HashMap<String, Direction>,
    ) -> Self {
        self.injection = Some(injection);
        self.labels = labels;
        self
    }

    fn rng_for(&self, clip_id: &str, stage: StageTag, chunk_index: usize) -> ChaCha20Rng {
        // Stable key derivation: FNV-1a over the clip id mixed with the
        // remaining counters. Must not depend on std's hasher.
        const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = FNV_OFFSET;
        for b in clip_id.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&h.to_le_bytes());
        key[16] = stage.as_u8();
        key[17..21].copy_from_slice(&(chunk_index as u32).to_le_bytes());
        key[21..29].copy_from_slice(&(clip_id.len() as u64).to_le_bytes());
        ChaCha20Rng::from_seed(key)
    }
}

impl Backend for SyntheticBackend {
    fn window(&self) -> usize {
        self.window
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn embed(
        &self,
        clip_id: &str,
        stage: StageTag,
        chunk: &Chunk,
    ) -> Result<Vec<f32>, EmbeddingError> {
        self.check_window(chunk)?;
        let mut rng = self.rng_for(clip_id, stage, chunk.chunk_index);
        let mut vector: Vec<f32> = (0..self.dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
            .collect();
        if let Some(inj) = &self.injection {
            if inj.stage == stage && inj.coordinate < self.dim {
                let label = self
                    .labels
                    .get(clip_id)
                    .copied()
                    .ok_or_else(|| EmbeddingError::UnknownClip(clip_id.to_string()))?;
                let bias = match label {
                    Direction::Right => inj.magnitude,
                    Direction::Left => -inj.magnitude,
                    Direction::Center => 0.0,
                };
                let noise: f64 = rng.sample(StandardNormal);
                vector[inj.coordinate] = (bias + inj.noise_sigma * noise) as f32;
            }
        }
        Ok(vector)
    }
}

/// Serves embeddings verbatim from a cache file.
pub struct PrecomputedBackend {
    window: usize,
    dim: usize,
    identifier: String,
    entries: HashMap<(String, StageTag, usize), Vec<f32>>,
}

impl PrecomputedBackend {
    /// Load from a cache file. `expected_dim` of `Some(d)` asserts the file
    /// dimension matches the backend spec.
    pub fn from_cache_file(
        path: &Path,
        window: usize,
        expected_dim: Option<usize>,
    ) -> Result<Self, EmbeddingError> {
        let contents = read_cache(path).map_err(|e: CacheError| match e {
            CacheError::Io(ioe) => {
                EmbeddingError::BackendUnavailable(format!("{}: {ioe}", path.display()))
            }
            other => EmbeddingError::BackendUnavailable(format!("{}: {other}", path.display())),
        })?;
        if let Some(d) = expected_dim {
            if contents.dim != d {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: d,
                    got: contents.dim,
                });
            }
        }
        let identifier = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("precomputed")
            .to_string();
        let mut entries = HashMap::new();
        for e in contents.entries {
            entries.insert((e.clip_id, e.stage, e.chunk_index as usize), e.vector);
        }
        Ok(PrecomputedBackend {
            window,
            dim: contents.dim,
            identifier,
            entries,
        })
    }
}

impl Backend for PrecomputedBackend {
    fn window(&self) -> usize {
        self.window
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn embed(
        &self,
        clip_id: &str,
        stage: StageTag,
        chunk: &Chunk,
    ) -> Result<Vec<f32>, EmbeddingError> {
        self.check_window(chunk)?;
        self.entries
            .get(&(clip_id.to_string(), stage, chunk.chunk_index))
            .cloned()
            .ok_or_else(|| EmbeddingError::MissingPrecomputedEntry {
                clip_id: clip_id.to_string(),
                stage,
                chunk_index: chunk.chunk_index,
            })
    }
}

/// Forward passes through a serialized pretrained video-embedding network
/// (ONNX). Single-threaded execution keeps the determinism contract.
#[cfg(feature = "external-runtime")]
pub struct ExternalRuntimeBackend {
    window: usize,
    dim: usize,
    identifier: String,
    model: tract_onnx::prelude::TypedRunnableModel<tract_onnx::prelude::TypedModel>,
}

#[cfg(feature = "external-runtime")]
impl ExternalRuntimeBackend {
    /// Load an ONNX model expecting NCTHW f32 input and a `[1, dim]` output.
    pub fn from_onnx(path: &Path, window: usize, dim: usize) -> Result<Self, EmbeddingError> {
        use tract_onnx::prelude::*;
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| EmbeddingError::BackendUnavailable(format!("{}: {e}", path.display())))?;
        let identifier = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("onnx")
            .to_string();
        Ok(ExternalRuntimeBackend {
            window,
            dim,
            identifier,
            model,
        })
    }
}

#[cfg(feature = "external-runtime")]
impl Backend for ExternalRuntimeBackend {
    fn window(&self) -> usize {
        self.window
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn embed(
        &self,
        _clip_id: &str,
        _stage: StageTag,
        chunk: &Chunk,
    ) -> Result<Vec<f32>, EmbeddingError> {
        use tract_onnx::prelude::*;
        self.check_window(chunk)?;
        let first = &chunk.frames[0];
        let (w, h) = (first.width as usize, first.height as usize);
        // NCTHW, channels-first, pixel values scaled to [0, 1]
        let mut input = tract_ndarray::Array5::<f32>::zeros((1, 3, chunk.frames.len(), h, w));
        for (t, frame) in chunk.frames.iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    let p = frame.get(x as u32, y as u32);
                    for c in 0..3 {
                        input[[0, c, t, y, x]] = p[c] as f32 / 255.0;
                    }
                }
            }
        }
        let outputs = self
            .model
            .run(tvec!(Tensor::from(input).into()))
            .map_err(|e| EmbeddingError::BackendUnavailable(e.to_string()))?;
        let view = outputs[0]
            .to_array_view::<f32>()
            .map_err(|e| EmbeddingError::BackendUnavailable(e.to_string()))?;
        let vector: Vec<f32> = view.iter().copied().collect();
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue);
        }
        Ok(vector)
    }
}
