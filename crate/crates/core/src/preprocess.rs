//! Context constraint and stage segmentation.
//!
//! Each clip is reduced to footage where the kicker is the sole moving
//! element: the kicker's bounding box is pasted per frame onto the average
//! frame of the sequence. The result is then split into a 32-frame running
//! stage and a 16-frame kicking stage (8 frames before the kicking moment,
//! 8 after), with short running phases front-padded.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Frames in the running stage.
pub const RUN_LEN: usize = 32;
/// Frames in the kicking stage.
pub const KICK_LEN: usize = 16;
/// Kicking-stage frames before the kicking moment.
pub const KICK_BEFORE: usize = 8;
/// Kicking-stage frames from the kicking moment on.
pub const KICK_AFTER: usize = 8;
/// Full trimmed clip length (run + kick stages).
pub const CLIP_LEN: usize = RUN_LEN + KICK_LEN;

/// 8-bit RGB frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Frame, PreprocessError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(PreprocessError::BadPixelBuffer {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    /// Frame filled with a single color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Frame {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Frame {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Kicker bounding box for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub frame_index: usize,
    /// Top-left corner.
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    fn fits(&self, frame: &Frame) -> bool {
        self.w > 0
            && self.h > 0
            && self.x.checked_add(self.w).is_some_and(|r| r <= frame.width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= frame.height)
    }
}

/// A pre-processed clip split into its two stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSplit {
    /// Exactly [`RUN_LEN`] frames.
    pub run_frames: Vec<Frame>,
    /// Exactly [`KICK_LEN`] frames.
    pub kick_frames: Vec<Frame>,
    /// Copies of the first available frame prepended to the running stage.
    pub padding_count: usize,
}

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("empty input")]
    EmptyInput,
    #[error("frame dimensions {got:?} do not match {expected:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("pixel buffer length {got} does not match dimensions (expected {expected})")]
    BadPixelBuffer { expected: usize, got: usize },
    #[error("no bounding box for frame {0}")]
    MissingBox(usize),
    #[error("bounding box for frame {frame_index} ({x},{y} {w}x{h}) exceeds frame bounds")]
    BoxOutOfBounds {
        frame_index: usize,
        x: u32,
        y: u32,
        w: u32,
        h: u32,
    },
    #[error("kick frame index {kick} leaves fewer than {KICK_AFTER} trailing frames (clip length {len})")]
    InsufficientTail { kick: usize, len: usize },
    #[error("kick frame index {kick} is not addressable (clip length {len})")]
    InvalidKickIndex { kick: usize, len: usize },
    #[error("pad target {target} is shorter than input length {len}")]
    InvalidPadTarget { len: usize, target: usize },
    #[error("bounding-box track line {line}: {reason}")]
    MalformedTrack { line: usize, reason: String },
    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-channel arithmetic mean of the frames, rounded half-up.
pub fn average_frame(frames: &[Frame]) -> Result<Frame, PreprocessError> {
    let first = frames.first().ok_or(PreprocessError::EmptyInput)?;
    let mut sums = vec![0u64; first.pixels.len()];
    for frame in frames {
        if !frame.same_dims(first) {
            return Err(PreprocessError::DimensionMismatch {
                expected: (first.width, first.height),
                got: (frame.width, frame.height),
            });
        }
        for (sum, &p) in sums.iter_mut().zip(&frame.pixels) {
            *sum += p as u64;
        }
    }
    let m = frames.len() as u64;
    // floor((2*sum + m) / (2*m)) == round-half-up(sum / m); 255 needs no clamp.
    let pixels = sums.iter().map(|&s| ((2 * s + m) / (2 * m)) as u8).collect();
    Ok(Frame {
        width: first.width,
        height: first.height,
        pixels,
    })
}

/// Paste each frame's bounding-box region onto the background.
///
/// Output frame `t` equals the background everywhere except inside the box
/// annotated for frame `t`, where pixels are copied verbatim from the input.
pub fn composite(
    frames: &[Frame],
    boxes: &[BoundingBox],
    background: &Frame,
) -> Result<Vec<Frame>, PreprocessError> {
    if frames.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    let by_index: HashMap<usize, &BoundingBox> =
        boxes.iter().map(|b| (b.frame_index, b)).collect();
    let mut out = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        if !frame.same_dims(background) {
            return Err(PreprocessError::DimensionMismatch {
                expected: (background.width, background.height),
                got: (frame.width, frame.height),
            });
        }
        let bb = *by_index.get(&t).ok_or(PreprocessError::MissingBox(t))?;
        if !bb.fits(frame) {
            return Err(PreprocessError::BoxOutOfBounds {
                frame_index: t,
                x: bb.x,
                y: bb.y,
                w: bb.w,
                h: bb.h,
            });
        }
        let mut composited = background.clone();
        let width = frame.width as usize;
        for row in bb.y..bb.y + bb.h {
            let start = (row as usize * width + bb.x as usize) * 3;
            let end = start + bb.w as usize * 3;
            composited.pixels[start..end].copy_from_slice(&frame.pixels[start..end]);
        }
        out.push(composited);
    }
    Ok(out)
}

/// Prepend copies of the first element until the list reaches `target_len`.
pub fn pad_front<T: Clone>(items: &[T], target_len: usize) -> Result<Vec<T>, PreprocessError> {
    let first = items.first().ok_or(PreprocessError::EmptyInput)?;
    if target_len < items.len() {
        return Err(PreprocessError::InvalidPadTarget {
            len: items.len(),
            target: target_len,
        });
    }
    let mut out = vec![first.clone(); target_len - items.len()];
    out.extend_from_slice(items);
    Ok(out)
}

/// Split a clip into its running and kicking stages around the kicking moment.
///
/// The kicking stage is `frames[kick-8 .. kick+8)`. The running stage is the
/// up-to-32 frames immediately before that window, front-padded to exactly 32
/// when fewer exist.
pub fn segment_stages(frames: &[Frame], kick_frame_index: usize) -> Result<StageSplit, PreprocessError> {
    if kick_frame_index < KICK_BEFORE || kick_frame_index >= frames.len() {
        return Err(PreprocessError::InvalidKickIndex {
            kick: kick_frame_index,
            len: frames.len(),
        });
    }
    if kick_frame_index + KICK_AFTER > frames.len() {
        return Err(PreprocessError::InsufficientTail {
            kick: kick_frame_index,
            len: frames.len(),
        });
    }
    let kick_start = kick_frame_index - KICK_BEFORE;
    let kick_frames = frames[kick_start..kick_frame_index + KICK_AFTER].to_vec();
    let run_start = kick_start.saturating_sub(RUN_LEN);
    let available = &frames[run_start..kick_start];
    let padding_count = RUN_LEN - available.len();
    let run_frames = if available.is_empty() {
        // No run-up footage at all: replicate the first kick-stage frame.
        vec![kick_frames[0].clone(); RUN_LEN]
    } else {
        pad_front(available, RUN_LEN)?
    };
    Ok(StageSplit {
        run_frames,
        kick_frames,
        padding_count,
    })
}

// --- file formats -----------------------------------------------------------

/// Read a bounding-box track file: `frame_index,x,y,w,h` per line, sorted
/// ascending by frame index.
pub fn load_bbox_track(path: &Path) -> Result<Vec<BoundingBox>, PreprocessError> {
    let text = std::fs::read_to_string(path)?;
    let mut boxes = Vec::new();
    let mut last_index: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.split(',').collect();
        if parts.len() != 5 {
            return Err(PreprocessError::MalformedTrack {
                line,
                reason: format!("expected 5 fields, found {}", parts.len()),
            });
        }
        let mut nums = [0u64; 5];
        for (slot, part) in nums.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| PreprocessError::MalformedTrack {
                    line,
                    reason: format!("`{part}` is not a nonnegative integer"),
                })?;
        }
        let frame_index = nums[0] as usize;
        if let Some(prev) = last_index {
            if frame_index <= prev {
                return Err(PreprocessError::MalformedTrack {
                    line,
                    reason: format!("frame_index {frame_index} not strictly ascending"),
                });
            }
        }
        last_index = Some(frame_index);
        boxes.push(BoundingBox {
            frame_index,
            x: nums[1] as u32,
            y: nums[2] as u32,
            w: nums[3] as u32,
            h: nums[4] as u32,
        });
    }
    Ok(boxes)
}

pub fn write_bbox_track(path: &Path, boxes: &[BoundingBox]) -> Result<(), PreprocessError> {
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format!("{},{},{},{},{}\n", b.frame_index, b.x, b.y, b.w, b.h));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a directory of frame images in lexicographic filename order.
pub fn load_frame_dir(dir: &Path) -> Result<Vec<Frame>, PreprocessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let img = image::open(path)
            .map_err(|e| PreprocessError::Image {
                path: path.clone(),
                reason: e.to_string(),
            })?
            .to_rgb8();
        frames.push(Frame {
            width: img.width(),
            height: img.height(),
            pixels: img.into_raw(),
        });
    }
    let first = (frames[0].width, frames[0].height);
    for f in &frames {
        if (f.width, f.height) != first {
            return Err(PreprocessError::DimensionMismatch {
                expected: first,
                got: (f.width, f.height),
            });
        }
    }
    Ok(frames)
}

/// Write frames as zero-padded PNG files (`000.png`, `001.png`, ...).
pub fn save_frame_dir(dir: &Path, frames: &[Frame]) -> Result<(), PreprocessError> {
    std::fs::create_dir_all(dir)?;
    for (i, frame) in frames.iter().enumerate() {
        let img: image::RgbImage =
            image::ImageBuffer::from_raw(frame.width, frame.height, frame.pixels.clone())
                .expect("frame invariant: buffer matches dimensions");
        let path = dir.join(format!("{i:03}.png"));
        img.save(&path).map_err(|e| PreprocessError::Image {
            path,
            reason: e.to_string(),
        })?;
    }
    Ok(())
}
