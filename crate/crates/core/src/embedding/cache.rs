//! Binary embedding cache.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "PKEMB1" (6 bytes)
//! u32 entry count
//! u32 dim D
//! per entry:
//!   u16 clip_id byte length, UTF-8 clip_id
//!   u8 stage tag (0 = run, 1 = kick)
//!   u32 chunk index
//!   D x f32 values
//! u32 CRC32 of all preceding bytes
//! ```

use std::path::Path;

use thiserror::Error;

use super::StageTag;

pub const CACHE_MAGIC: &[u8; 6] = b"PKEMB1";

/// One cached chunk embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub clip_id: String,
    pub stage: StageTag,
    pub chunk_index: u32,
    pub vector: Vec<f32>,
}

/// Decoded cache file.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheContents {
    pub dim: usize,
    pub entries: Vec<CacheEntry>,
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("bad magic bytes (not an embedding cache)")]
    BadMagic,
    #[error("truncated cache file at byte offset {offset}")]
    TruncatedFile { offset: usize },
    #[error("cache checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("trailing bytes after checksum at offset {offset}")]
    TrailingBytes { offset: usize },
    #[error("entry {index}: vector length {got} does not match dim {expected}")]
    EntryDimMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("entry {index}: invalid stage tag {tag}")]
    InvalidStageTag { index: usize, tag: u8 },
    #[error("entry {index}: clip_id is not valid UTF-8")]
    InvalidClipId { index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_cache(dim: usize, entries: &[CacheEntry]) -> Result<Vec<u8>, CacheError> {
    let mut buf = Vec::with_capacity(16 + entries.len() * (16 + dim * 4));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for (index, e) in entries.iter().enumerate() {
        if e.vector.len() != dim {
            return Err(CacheError::EntryDimMismatch {
                index,
                expected: dim,
                got: e.vector.len(),
            });
        }
        buf.extend_from_slice(&(e.clip_id.len() as u16).to_le_bytes());
        buf.extend_from_slice(e.clip_id.as_bytes());
        buf.push(e.stage.as_u8());
        buf.extend_from_slice(&e.chunk_index.to_le_bytes());
        for v in &e.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn write_cache(path: &Path, dim: usize, entries: &[CacheEntry]) -> Result<(), CacheError> {
    let buf = encode_cache(dim, entries)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn decode_cache(data: &[u8]) -> Result<CacheContents, CacheError> {
    struct Reader<'a> {
        data: &'a [u8],
        offset: usize,
    }
    impl<'a> Reader<'a> {
        // Leaves the trailing 4 CRC bytes out of reach of record reads.
        fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
            if self.offset + n + 4 > self.data.len() {
                return Err(CacheError::TruncatedFile {
                    offset: self.data.len(),
                });
            }
            let slice = &self.data[self.offset..self.offset + n];
            self.offset += n;
            Ok(slice)
        }
    }

    if data.len() < CACHE_MAGIC.len() {
        return Err(CacheError::TruncatedFile { offset: data.len() });
    }
    if &data[..CACHE_MAGIC.len()] != CACHE_MAGIC {
        return Err(CacheError::BadMagic);
    }
    let mut r = Reader {
        data,
        offset: CACHE_MAGIC.len(),
    };
    let count = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let mut entries = Vec::with_capacity(count);
    for index in 0..count {
        let id_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let clip_id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|_| CacheError::InvalidClipId { index })?
            .to_string();
        let tag = r.take(1)?[0];
        let stage =
            StageTag::from_u8(tag).ok_or(CacheError::InvalidStageTag { index, tag })?;
        let chunk_index = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let raw = r.take(dim * 4)?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(CacheEntry {
            clip_id,
            stage,
            chunk_index,
            vector,
        });
    }
    let body_end = r.offset;
    if body_end + 4 > data.len() {
        return Err(CacheError::TruncatedFile { offset: data.len() });
    }
    if body_end + 4 < data.len() {
        return Err(CacheError::TrailingBytes { offset: body_end + 4 });
    }
    let stored = u32::from_le_bytes(data[body_end..body_end + 4].try_into().unwrap());
    let computed = crc32fast::hash(&data[..body_end]);
    if stored != computed {
        return Err(CacheError::ChecksumMismatch { stored, computed });
    }
    Ok(CacheContents { dim, entries })
}

pub fn read_cache(path: &Path) -> Result<CacheContents, CacheError> {
    let data = std::fs::read(path)?;
    decode_cache(&data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_entries() -> Vec<CacheEntry> {
        vec![
            CacheEntry {
                clip_id: "pk001".into(),
                stage: StageTag::Run,
                chunk_index: 0,
                vector: vec![1.0, -2.5, 3.25],
            },
            CacheEntry {
                clip_id: "pk001".into(),
                stage: StageTag::Kick,
                chunk_index: 1,
                vector: vec![0.0, f32::MIN_POSITIVE, -0.0],
            },
            CacheEntry {
                clip_id: "pk002".into(),
                stage: StageTag::Run,
                chunk_index: 7,
                vector: vec![9.0, 8.0, 7.0],
            },
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let entries = sample_entries();
        let buf = encode_cache(3, &entries).unwrap();
        let decoded = decode_cache(&buf).unwrap();
        assert_eq!(decoded.dim, 3);
        assert_eq!(decoded.entries.len(), entries.len());
        for (a, b) in decoded.entries.iter().zip(&entries) {
            assert_eq!(a.clip_id, b.clip_id);
            assert_eq!(a.stage, b.stage);
            assert_eq!(a.chunk_index, b.chunk_index);
            let a_bits: Vec<u32> = a.vector.iter().map(|v| v.to_bits()).collect();
            let b_bits: Vec<u32> = b.vector.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a_bits, b_bits);
        }
    }

    #[test]
    fn wrong_magic_detected() {
        let mut buf = encode_cache(3, &sample_entries()).unwrap();
        buf[0] = b'X';
        assert!(matches!(decode_cache(&buf), Err(CacheError::BadMagic)));
    }

    #[test]
    fn truncation_detected_with_offset() {
        let buf = encode_cache(3, &sample_entries()).unwrap();
        let cut = &buf[..buf.len() - 9];
        match decode_cache(cut) {
            Err(CacheError::TruncatedFile { offset }) => assert_eq!(offset, cut.len()),
            other => panic!("expected TruncatedFile, got {other:?}"),
        }
    }

    #[test]
    fn corruption_fails_checksum() {
        let mut buf = encode_cache(3, &sample_entries()).unwrap();
        // flip a bit in the last entry's float payload: structurally neutral,
        // caught only by the checksum
        let idx = buf.len() - 5;
        buf[idx] ^= 0x40;
        assert!(matches!(
            decode_cache(&buf),
            Err(CacheError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn mismatched_vector_length_rejected_on_write() {
        let mut entries = sample_entries();
        entries[1].vector.pop();
        assert!(matches!(
            encode_cache(3, &entries),
            Err(CacheError::EntryDimMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.pkemb");
        write_cache(&path, 3, &sample_entries()).unwrap();
        let decoded = read_cache(&path).unwrap();
        assert_eq!(decoded.entries, sample_entries());
    }
}
