//! Chunked action embeddings and temporal pooling.
//!
//! Each stage is split into overlapping chunks spaced one frame apart, every
//! chunk is embedded by a backend, and the per-chunk embeddings are pooled
//! (element-wise average or maximum) into one vector per stage.

mod backend;
pub mod cache;

pub use backend::{Backend, PrecomputedBackend, SignalInjection, SyntheticBackend};

#[cfg(feature = "external-runtime")]
pub use backend::ExternalRuntimeBackend;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::num::Real;
use crate::preprocess::{pad_front, Frame, PreprocessError};

/// Which stage of the clip an artifact belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageTag {
    Run,
    Kick,
}

impl StageTag {
    pub const ALL: [StageTag; 2] = [StageTag::Run, StageTag::Kick];

    pub fn as_u8(self) -> u8 {
        match self {
            StageTag::Run => 0,
            StageTag::Kick => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<StageTag> {
        match v {
            0 => Some(StageTag::Run),
            1 => Some(StageTag::Kick),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StageTag::Run => "run",
            StageTag::Kick => "kick",
        }
    }

    /// Nominal stage length after preprocessing.
    pub fn stage_len(self) -> usize {
        match self {
            StageTag::Run => crate::preprocess::RUN_LEN,
            StageTag::Kick => crate::preprocess::KICK_LEN,
        }
    }
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Contiguous window of frames matching a backend's input length.
///
/// Consecutive chunks start one frame apart. Frames are shared, not copied.
#[derive(Debug, Clone)]
pub struct Chunk {
    pub frames: Vec<Arc<Frame>>,
    pub chunk_index: usize,
}

/// Pooling mode applied across chunk embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pooling {
    Average,
    Max,
}

impl Pooling {
    pub const ALL: [Pooling; 2] = [Pooling::Average, Pooling::Max];

    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Average => "avg",
            Pooling::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<Pooling> {
        match s {
            "avg" | "average" => Some(Pooling::Average),
            "max" => Some(Pooling::Max),
            _ => None,
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How embeddings are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    /// Seeded generator; no model runtime required.
    Synthetic,
    /// Embeddings served verbatim from a cache file.
    PrecomputedFile,
    /// Forward passes through a serialized pretrained network
    /// (requires the `external-runtime` feature).
    ExternalRuntime,
}

/// Description of an embedding backend instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendSpec {
    pub kind: BackendKind,
    /// Frames per backend input chunk.
    pub window: usize,
    /// Embedding length.
    pub dim: usize,
    /// Model or file name.
    pub identifier: String,
}

/// Matrix of per-chunk embeddings for one stage: `n_f` rows of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkEmbeddingSet<R: Real> {
    stage: StageTag,
    rows: Vec<Vec<R>>,
}

impl<R: Real> ChunkEmbeddingSet<R> {
    pub fn new(stage: StageTag, rows: Vec<Vec<R>>) -> Result<Self, EmbeddingError> {
        let first = rows.first().ok_or(EmbeddingError::EmptySet)?;
        let dim = first.len();
        if dim == 0 {
            return Err(EmbeddingError::EmptySet);
        }
        for row in &rows {
            if row.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFiniteValue);
            }
        }
        Ok(ChunkEmbeddingSet { stage, rows })
    }

    pub fn stage(&self) -> StageTag {
        self.stage
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn chunk_count(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<R>] {
        &self.rows
    }
}

/// Pooled single embedding for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageEmbedding<R: Real> {
    pub stage: StageTag,
    pub vector: Vec<R>,
    pub pooling: Pooling,
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("empty input")]
    EmptyInput,
    #[error("empty embedding set")]
    EmptySet,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("chunk length {got} does not match backend window {expected}")]
    WindowMismatch { expected: usize, got: usize },
    #[error("non-finite embedding value")]
    NonFiniteValue,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no precomputed embedding for clip `{clip_id}` {stage} chunk {chunk_index}")]
    MissingPrecomputedEntry {
        clip_id: String,
        stage: StageTag,
        chunk_index: usize,
    },
    #[error("no label known for clip `{0}` (required for signal injection)")]
    UnknownClip(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// Number of stride-1 chunks produced from a stage of `stage_len` frames:
/// `stage_len - window + 1`, or exactly 1 when the stage is shorter than the
/// window (the stage is then front-padded).
pub fn chunk_count(stage_len: usize, window: usize) -> usize {
    if stage_len >= window {
        stage_len - window + 1
    } else {
        1
    }
}

/// Split stage frames into overlapping chunks spaced one frame apart.
///
/// A stage shorter than the window is front-padded (first frame replicated)
/// and yields a single chunk.
pub fn make_chunks(stage_frames: &[Frame], window: usize) -> Result<Vec<Chunk>, EmbeddingError> {
    if stage_frames.is_empty() || window == 0 {
        return Err(EmbeddingError::EmptyInput);
    }
    let shared: Vec<Arc<Frame>> = stage_frames.iter().map(|f| Arc::new(f.clone())).collect();
    if shared.len() < window {
        let frames = pad_front(&shared, window)?;
        return Ok(vec![Chunk {
            frames,
            chunk_index: 0,
        }]);
    }
    Ok(shared
        .windows(window)
        .enumerate()
        .map(|(chunk_index, frames)| Chunk {
            frames: frames.to_vec(),
            chunk_index,
        })
        .collect())
}

/// Pool chunk embeddings element-wise into a single stage embedding.
///
/// Averages accumulate in f64 regardless of the storage scalar.
pub fn pool_chunks<R: Real>(
    set: &ChunkEmbeddingSet<R>,
    mode: Pooling,
) -> Result<StageEmbedding<R>, EmbeddingError> {
    let dim = set.dim();
    let n = set.chunk_count();
    let vector = match mode {
        Pooling::Average => {
            let mut sums = vec![0.0f64; dim];
            for row in set.rows() {
                for (s, v) in sums.iter_mut().zip(row) {
                    *s += v.as_f64();
                }
            }
            sums.into_iter()
                .map(|s| R::from_f64_lossy(s / n as f64))
                .collect()
        }
        Pooling::Max => {
            let mut maxes = set.rows()[0].clone();
            for row in &set.rows()[1..] {
                for (m, v) in maxes.iter_mut().zip(row) {
                    if *v > *m {
                        *m = *v;
                    }
                }
            }
            maxes
        }
    };
    Ok(StageEmbedding {
        stage: set.stage(),
        vector,
        pooling: mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize) -> Vec<Frame> {
        (0..n)
            .map(|i| Frame::filled(2, 2, [i as u8, 0, 0]))
            .collect()
    }

    #[test]
    fn chunk_count_law() {
        assert_eq!(chunk_count(32, 8), 25);
        assert_eq!(chunk_count(16, 16), 1);
        assert_eq!(chunk_count(16, 32), 1);
        assert_eq!(chunk_count(13, 13), 1);
    }

    #[test]
    fn run_stage_window_8_yields_25_chunks() {
        let chunks = make_chunks(&frames(32), 8).unwrap();
        assert_eq!(chunks.len(), 25);
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.chunk_index, i);
            assert_eq!(c.frames.len(), 8);
        }
        // stride 1: consecutive chunks overlap in window-1 frames
        for pair in chunks.windows(2) {
            assert_eq!(&pair[0].frames[1..], &pair[1].frames[..7]);
        }
    }

    #[test]
    fn exact_fit_yields_single_chunk() {
        let fs = frames(16);
        let chunks = make_chunks(&fs, 16).unwrap();
        assert_eq!(chunks.len(), 1);
        let got: Vec<Frame> = chunks[0].frames.iter().map(|f| (**f).clone()).collect();
        assert_eq!(got, fs);
    }

    #[test]
    fn short_stage_padded_to_single_chunk() {
        let fs = frames(16);
        let chunks = make_chunks(&fs, 32).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].frames.len(), 32);
        for f in &chunks[0].frames[..16] {
            assert_eq!(**f, fs[0]);
        }
        for (f, orig) in chunks[0].frames[16..].iter().zip(&fs) {
            assert_eq!(**f, *orig);
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            make_chunks(&[], 8),
            Err(EmbeddingError::EmptyInput)
        ));
    }

    #[test]
    fn pooling_single_row_is_identity() {
        let set =
            ChunkEmbeddingSet::new(StageTag::Run, vec![vec![1.5f64, -2.0, 0.25]]).unwrap();
        for mode in Pooling::ALL {
            let pooled = pool_chunks(&set, mode).unwrap();
            assert_eq!(pooled.vector, vec![1.5, -2.0, 0.25]);
        }
    }

    #[test]
    fn pooling_hand_case() {
        let set =
            ChunkEmbeddingSet::new(StageTag::Kick, vec![vec![1.0f64, 3.0], vec![3.0, 5.0]])
                .unwrap();
        let avg = pool_chunks(&set, Pooling::Average).unwrap();
        assert_eq!(avg.vector, vec![2.0, 4.0]);
        let max = pool_chunks(&set, Pooling::Max).unwrap();
        assert_eq!(max.vector, vec![3.0, 5.0]);
    }

    #[test]
    fn max_dominates_average() {
        let set = ChunkEmbeddingSet::new(
            StageTag::Run,
            vec![vec![0.5f32, -1.0, 2.0], vec![-0.25, 4.0, 1.0], vec![0.0, 0.0, 0.0]],
        )
        .unwrap();
        let avg = pool_chunks(&set, Pooling::Average).unwrap();
        let max = pool_chunks(&set, Pooling::Max).unwrap();
        for (m, a) in max.vector.iter().zip(&avg.vector) {
            assert!(m >= a);
        }
    }

    #[test]
    fn ragged_or_non_finite_rows_rejected() {
        assert!(matches!(
            ChunkEmbeddingSet::new(StageTag::Run, vec![vec![1.0f64, 2.0], vec![1.0]]),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            ChunkEmbeddingSet::new(StageTag::Run, vec![vec![f64::NAN]]),
            Err(EmbeddingError::NonFiniteValue)
        ));
        assert!(matches!(
            ChunkEmbeddingSet::<f64>::new(StageTag::Run, vec![]),
            Err(EmbeddingError::EmptySet)
        ));
    }
}
