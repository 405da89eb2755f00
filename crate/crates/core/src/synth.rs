//! Deterministic synthetic datasets.
//!
//! Everything here is seeded: record lists with exact marginal counts or
//! label-correlated metadata, goalkeeper annotations, and materialized clips
//! (frame directories, bounding-box tracks, manifest) for driving the full
//! pipeline in tests and dry runs without real footage.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::dataset::{manifest_to_string, ClipRecord, Direction, Side};
use crate::embedding::{SignalInjection, SyntheticBackend};
use crate::preprocess::{write_bbox_track, BoundingBox, Frame, PreprocessError};

/// Synthetic embedding backend settings.
#[derive(Debug, Clone)]
pub struct SynthBackendSpec {
    pub window: usize,
    pub dim: usize,
    pub seed: u64,
    pub injection: Option<SignalInjection>,
}

/// Build a synthetic backend for the given records; injection, when enabled,
/// uses their labels.
pub fn backend_for_records(spec: &SynthBackendSpec, records: &[ClipRecord]) -> SyntheticBackend {
    let backend = SyntheticBackend::new(spec.window, spec.dim, spec.seed);
    match &spec.injection {
        Some(injection) => {
            let labels: HashMap<String, Direction> = records
                .iter()
                .map(|r| (r.clip_id.clone(), r.label))
                .collect();
            backend.with_injection(injection.clone(), labels)
        }
        None => backend,
    }
}

fn base_record(index: usize) -> ClipRecord {
    let clip_id = format!("pk{index:04}");
    ClipRecord {
        frames_path: PathBuf::from(format!("frames/{clip_id}")),
        bbox_path: PathBuf::from(format!("boxes/{clip_id}.csv")),
        kick_frame_index: crate::dataset::TRIMMED_KICK_FRAME_INDEX,
        field_side: Side::Left,
        kicking_foot: Side::Right,
        label: Direction::Left,
        gk_dive: None,
        clip_id,
    }
}

/// Records with exact marginal counts: labels per `label_counts`,
/// `right_side` records on the right side of the pitch, `right_foot`
/// right-footed. The three attributes are shuffled independently, so they
/// are uncorrelated apart from the fixed marginals.
pub fn records_with_marginals(
    label_counts: &[(Direction, usize)],
    right_side: usize,
    right_foot: usize,
    seed: u64,
) -> Vec<ClipRecord> {
    let total: usize = label_counts.iter().map(|(_, c)| c).sum();
    assert!(right_side <= total && right_foot <= total);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut labels = Vec::with_capacity(total);
    for (label, count) in label_counts {
        labels.extend(std::iter::repeat_n(*label, *count));
    }
    let mut sides = vec![Side::Right; right_side];
    sides.extend(std::iter::repeat_n(Side::Left, total - right_side));
    let mut feet = vec![Side::Right; right_foot];
    feet.extend(std::iter::repeat_n(Side::Left, total - right_foot));

    labels.shuffle(&mut rng);
    sides.shuffle(&mut rng);
    feet.shuffle(&mut rng);

    labels
        .into_iter()
        .zip(sides)
        .zip(feet)
        .enumerate()
        .map(|(i, ((label, side), foot))| {
            let mut r = base_record(i);
            r.label = label;
            r.field_side = side;
            r.kicking_foot = foot;
            r
        })
        .collect()
}

/// Records whose field side matches the label direction with probability
/// `side_match_prob` (center labels get a coin-flip side). Kicking foot is
/// uniform. Used to plant a metadata signal.
pub fn records_with_correlated_side(
    label_counts: &[(Direction, usize)],
    side_match_prob: f64,
    seed: u64,
) -> Vec<ClipRecord> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut labels = Vec::new();
    for (label, count) in label_counts {
        labels.extend(std::iter::repeat_n(*label, *count));
    }
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mut r = base_record(i);
            r.label = label;
            let matched = match label {
                Direction::Left => Side::Left,
                Direction::Right => Side::Right,
                Direction::Center => {
                    if rng.random::<bool>() {
                        Side::Left
                    } else {
                        Side::Right
                    }
                }
            };
            r.field_side = if rng.random::<f64>() < side_match_prob {
                matched
            } else {
                match matched {
                    Side::Left => Side::Right,
                    Side::Right => Side::Left,
                }
            };
            r.kicking_foot = if rng.random::<bool>() {
                Side::Left
            } else {
                Side::Right
            };
            r
        })
        .collect()
}

/// Annotate goalkeeper dives: the dive matches the label with probability
/// `match_prob`, otherwise it is drawn uniformly from the other directions.
pub fn with_gk_dive(records: &mut [ClipRecord], match_prob: f64, seed: u64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for r in records {
        let dive = if rng.random::<f64>() < match_prob {
            r.label
        } else {
            let others: Vec<Direction> = Direction::ALL
                .into_iter()
                .filter(|d| *d != r.label)
                .collect();
            others[rng.random_range(0..others.len())]
        };
        r.gk_dive = Some(dive);
    }
}

/// Geometry of materialized synthetic clips.
#[derive(Debug, Clone, Copy)]
pub struct SynthClipSpec {
    pub width: u32,
    pub height: u32,
    pub clip_len: usize,
    /// Kicker square extents.
    pub box_w: u32,
    pub box_h: u32,
}

impl Default for SynthClipSpec {
    fn default() -> Self {
        SynthClipSpec {
            width: 32,
            height: 24,
            clip_len: crate::preprocess::CLIP_LEN,
            box_w: 6,
            box_h: 8,
        }
    }
}

fn background_pixel(x: u32, y: u32) -> [u8; 3] {
    [30, (80 + y * 3) as u8 % 200 + 20, (40 + x) as u8]
}

/// Synthetic frames for one clip: a static gradient background with one
/// moving square, plus the square's bounding-box track.
pub fn generate_clip(
    spec: &SynthClipSpec,
    clip_seed: u64,
) -> (Vec<Frame>, Vec<BoundingBox>) {
    let mut rng = ChaCha20Rng::seed_from_u64(clip_seed);
    let travel = spec.width - spec.box_w - 4;
    let y = rng.random_range(0..=(spec.height - spec.box_h - 2)) + 1;
    let mut background = Frame::filled(spec.width, spec.height, [0, 0, 0]);
    for yy in 0..spec.height {
        for xx in 0..spec.width {
            background.set(xx, yy, background_pixel(xx, yy));
        }
    }
    let body: u8 = rng.random_range(160..=255);
    let mut frames = Vec::with_capacity(spec.clip_len);
    let mut boxes = Vec::with_capacity(spec.clip_len);
    for t in 0..spec.clip_len {
        let x = 2 + ((travel as usize * t) / spec.clip_len.max(1)) as u32;
        let mut frame = background.clone();
        for dy in 0..spec.box_h {
            for dx in 0..spec.box_w {
                frame.set(x + dx, y + dy, [body, (t * 5) as u8, dx as u8 * 40]);
            }
        }
        frames.push(frame);
        boxes.push(BoundingBox {
            frame_index: t,
            x,
            y,
            w: spec.box_w,
            h: spec.box_h,
        });
    }
    (frames, boxes)
}

/// Write frames, bounding-box tracks, and the manifest under `root`.
/// Record paths are rewritten relative to the manifest. Returns the manifest
/// path.
pub fn materialize_dataset(
    root: &Path,
    records: &mut [ClipRecord],
    spec: &SynthClipSpec,
    seed: u64,
) -> Result<PathBuf, PreprocessError> {
    let frames_root = root.join("frames");
    let boxes_root = root.join("boxes");
    std::fs::create_dir_all(&frames_root)?;
    std::fs::create_dir_all(&boxes_root)?;
    for (i, record) in records.iter_mut().enumerate() {
        let (frames, boxes) = generate_clip(spec, seed ^ (i as u64).wrapping_mul(0x9e37_79b9));
        let frame_dir = frames_root.join(&record.clip_id);
        crate::preprocess::save_frame_dir(&frame_dir, &frames)?;
        let bbox_path = boxes_root.join(format!("{}.csv", record.clip_id));
        write_bbox_track(&bbox_path, &boxes)?;
        record.frames_path = PathBuf::from(format!("frames/{}", record.clip_id));
        record.bbox_path = PathBuf::from(format!("boxes/{}.csv", record.clip_id));
        record.kick_frame_index = crate::dataset::TRIMMED_KICK_FRAME_INDEX;
    }
    let manifest_path = root.join("manifest.csv");
    std::fs::write(&manifest_path, manifest_to_string(records))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::summarize;

    #[test]
    fn marginals_are_exact() {
        let records = records_with_marginals(
            &[
                (Direction::Left, 229),
                (Direction::Right, 303),
                (Direction::Center, 108),
            ],
            395,
            498,
            1,
        );
        let summary = summarize(&records);
        assert_eq!(summary.total, 640);
        assert_eq!(summary.by_label, [229, 108, 303]);
        assert_eq!(summary.by_field_side, [245, 395]);
        assert_eq!(summary.by_kicking_foot, [142, 498]);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = records_with_marginals(&[(Direction::Left, 5), (Direction::Right, 5)], 5, 5, 3);
        let b = records_with_marginals(&[(Direction::Left, 5), (Direction::Right, 5)], 5, 5, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn correlated_side_tracks_label() {
        let records = records_with_correlated_side(
            &[(Direction::Left, 300), (Direction::Right, 300)],
            0.75,
            9,
        );
        let matches = records
            .iter()
            .filter(|r| {
                matches!(
                    (r.label, r.field_side),
                    (Direction::Left, Side::Left) | (Direction::Right, Side::Right)
                )
            })
            .count();
        let rate = matches as f64 / records.len() as f64;
        assert!((rate - 0.75).abs() < 0.08, "match rate {rate}");
    }

    #[test]
    fn gk_dive_matches_at_configured_rate() {
        let mut records =
            records_with_marginals(&[(Direction::Left, 200), (Direction::Right, 200)], 200, 200, 2);
        with_gk_dive(&mut records, 0.6, 5);
        let matched = records
            .iter()
            .filter(|r| r.gk_dive == Some(r.label))
            .count();
        let rate = matched as f64 / records.len() as f64;
        assert!((rate - 0.6).abs() < 0.1, "gk match rate {rate}");
        assert!(records.iter().all(|r| r.gk_dive.is_some()));
    }

    #[test]
    fn generated_clip_is_valid_input() {
        let spec = SynthClipSpec::default();
        let (frames, boxes) = generate_clip(&spec, 4);
        assert_eq!(frames.len(), 48);
        assert_eq!(boxes.len(), 48);
        let avg = crate::preprocess::average_frame(&frames).unwrap();
        let composited = crate::preprocess::composite(&frames, &boxes, &avg).unwrap();
        let split = crate::preprocess::segment_stages(&composited, 40).unwrap();
        assert_eq!(split.padding_count, 0);
    }
}
