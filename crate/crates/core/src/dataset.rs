//! Annotated penalty-kick manifest: typed clip records and label regimes.
//!
//! The manifest is a comma-separated UTF-8 table with a header row; enums are
//! serialized lowercase and an empty `gk_dive` field means the goalkeeper
//! dive was not annotated for that clip.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Column order of the manifest file.
pub const MANIFEST_HEADER: &str =
    "clip_id,frames_path,bbox_path,kick_frame_index,field_side,kicking_foot,label,gk_dive";

/// Minimum kicking-moment index accepted in a manifest row. A clip trimmed to
/// 48 frames places the kick at frame 40 (32 run-up + 8 pre-kick frames);
/// untrimmed clips must still leave room for most of the run-up window.
pub const MIN_KICK_FRAME_INDEX: usize = 32;

/// Kick index inside a 48-frame trimmed clip.
pub const TRIMMED_KICK_FRAME_INDEX: usize = 40;

/// Shot / dive direction. Also used as the classification label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Left,
    Center,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Left, Direction::Center, Direction::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Center => "center",
            Direction::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s {
            "left" => Some(Direction::Left),
            "center" => Some(Direction::Center),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary pre-kick indicator: pitch side of the kick or kicking foot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            _ => None,
        }
    }

    /// {0, 1} encoding used by the classifier metadata stream.
    pub fn as_binary(self) -> u8 {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One annotated penalty kick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipRecord {
    /// Unique identifier across the manifest.
    pub clip_id: String,
    /// Directory of ordered frame images.
    pub frames_path: PathBuf,
    /// Bounding-box track file for the kicker.
    pub bbox_path: PathBuf,
    /// Index of the kicking moment within the clip.
    pub kick_frame_index: usize,
    /// Pitch side the penalty was taken from.
    pub field_side: Side,
    /// Kicking foot.
    pub kicking_foot: Side,
    /// Shot direction label.
    pub label: Direction,
    /// Direction the goalkeeper actually dove, when annotated.
    pub gk_dive: Option<Direction>,
}

/// Which label space the task runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRegime {
    /// left / center / right
    ThreeClass,
    /// left / right; center-labeled clips are dropped
    TwoClass,
}

impl LabelRegime {
    pub fn class_count(self) -> usize {
        match self {
            LabelRegime::ThreeClass => 3,
            LabelRegime::TwoClass => 2,
        }
    }

    /// Class index of a direction under this regime.
    ///
    /// Three-class order is left=0, center=1, right=2; two-class order is
    /// left=0, right=1 with `None` for center.
    pub fn class_index(self, direction: Direction) -> Option<usize> {
        match (self, direction) {
            (LabelRegime::ThreeClass, Direction::Left) => Some(0),
            (LabelRegime::ThreeClass, Direction::Center) => Some(1),
            (LabelRegime::ThreeClass, Direction::Right) => Some(2),
            (LabelRegime::TwoClass, Direction::Left) => Some(0),
            (LabelRegime::TwoClass, Direction::Right) => Some(1),
            (LabelRegime::TwoClass, Direction::Center) => None,
        }
    }

    pub fn class_name(self, index: usize) -> &'static str {
        match (self, index) {
            (LabelRegime::ThreeClass, 0) | (LabelRegime::TwoClass, 0) => "left",
            (LabelRegime::ThreeClass, 1) => "center",
            (LabelRegime::ThreeClass, 2) | (LabelRegime::TwoClass, 1) => "right",
            _ => "?",
        }
    }
}

impl fmt::Display for LabelRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelRegime::ThreeClass => f.write_str("three"),
            LabelRegime::TwoClass => f.write_str("two"),
        }
    }
}

/// Counts over a record list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSummary {
    pub total: usize,
    /// Indexed by [`Direction::ALL`] order: left, center, right.
    pub by_label: [usize; 3],
    /// left, right
    pub by_field_side: [usize; 2],
    /// left, right
    pub by_kicking_foot: [usize; 2],
    /// Records carrying a goalkeeper-dive annotation.
    pub with_gk_dive: usize,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest file not found: {0}")]
    MissingFile(PathBuf),
    #[error("manifest line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("manifest line {line}: duplicate clip_id `{clip_id}`")]
    DuplicateClipId { line: usize, clip_id: String },
    #[error("manifest line {line}: unknown {field} value `{value}`")]
    UnknownEnumValue {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("regime filter removed every record")]
    EmptyResult,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Load and validate a manifest file. Row order is preserved.
pub fn load_manifest(path: &Path) -> Result<Vec<ClipRecord>, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text)
}

/// Parse manifest text. Line numbers in errors are 1-based, header included.
pub fn parse_manifest(text: &str) -> Result<Vec<ClipRecord>, DatasetError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DatasetError::MalformedRow {
        line: 1,
        reason: "missing header row".into(),
    })?;
    if header.trim_end() != MANIFEST_HEADER {
        return Err(DatasetError::MalformedRow {
            line: 1,
            reason: format!("header must be `{MANIFEST_HEADER}`"),
        });
    }

    let mut records = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 8 {
            return Err(DatasetError::MalformedRow {
                line,
                reason: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let clip_id = fields[0].trim().to_string();
        if clip_id.is_empty() {
            return Err(DatasetError::MalformedRow {
                line,
                reason: "empty clip_id".into(),
            });
        }
        if !seen_ids.insert(clip_id.clone()) {
            return Err(DatasetError::DuplicateClipId { line, clip_id });
        }
        let kick_frame_index: usize =
            fields[3]
                .trim()
                .parse()
                .map_err(|_| DatasetError::MalformedRow {
                    line,
                    reason: format!("kick_frame_index `{}` is not an integer", fields[3]),
                })?;
        if kick_frame_index < MIN_KICK_FRAME_INDEX {
            return Err(DatasetError::MalformedRow {
                line,
                reason: format!(
                    "kick_frame_index {kick_frame_index} < minimum {MIN_KICK_FRAME_INDEX}"
                ),
            });
        }
        let field_side =
            Side::parse(fields[4].trim()).ok_or_else(|| DatasetError::UnknownEnumValue {
                line,
                field: "field_side",
                value: fields[4].to_string(),
            })?;
        let kicking_foot =
            Side::parse(fields[5].trim()).ok_or_else(|| DatasetError::UnknownEnumValue {
                line,
                field: "kicking_foot",
                value: fields[5].to_string(),
            })?;
        let label =
            Direction::parse(fields[6].trim()).ok_or_else(|| DatasetError::UnknownEnumValue {
                line,
                field: "label",
                value: fields[6].to_string(),
            })?;
        let gk_raw = fields[7].trim();
        let gk_dive = if gk_raw.is_empty() {
            None
        } else {
            Some(
                Direction::parse(gk_raw).ok_or_else(|| DatasetError::UnknownEnumValue {
                    line,
                    field: "gk_dive",
                    value: gk_raw.to_string(),
                })?,
            )
        };
        records.push(ClipRecord {
            clip_id,
            frames_path: PathBuf::from(fields[1].trim()),
            bbox_path: PathBuf::from(fields[2].trim()),
            kick_frame_index,
            field_side,
            kicking_foot,
            label,
            gk_dive,
        });
    }
    Ok(records)
}

/// Serialize records back into manifest form. `load_manifest` of the output
/// reproduces the input records exactly.
pub fn write_manifest(path: &Path, records: &[ClipRecord]) -> Result<(), DatasetError> {
    std::fs::write(path, manifest_to_string(records))?;
    Ok(())
}

pub fn manifest_to_string(records: &[ClipRecord]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in records {
        let gk = r.gk_dive.map(|d| d.as_str()).unwrap_or("");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.clip_id,
            r.frames_path.display(),
            r.bbox_path.display(),
            r.kick_frame_index,
            r.field_side,
            r.kicking_foot,
            r.label,
            gk
        ));
    }
    out
}

/// Count records by label, field side, and kicking foot.
pub fn summarize(records: &[ClipRecord]) -> DatasetSummary {
    let mut by_label = [0usize; 3];
    let mut by_field_side = [0usize; 2];
    let mut by_kicking_foot = [0usize; 2];
    let mut with_gk_dive = 0usize;
    for r in records {
        match r.label {
            Direction::Left => by_label[0] += 1,
            Direction::Center => by_label[1] += 1,
            Direction::Right => by_label[2] += 1,
        }
        by_field_side[r.field_side.as_binary() as usize] += 1;
        by_kicking_foot[r.kicking_foot.as_binary() as usize] += 1;
        if r.gk_dive.is_some() {
            with_gk_dive += 1;
        }
    }
    DatasetSummary {
        total: records.len(),
        by_label,
        by_field_side,
        by_kicking_foot,
        with_gk_dive,
    }
}

/// Restrict records to the regime's label space, preserving order.
///
/// The two-class regime drops center-labeled clips instead of relabeling
/// them; the three-class regime is the identity.
pub fn apply_regime(
    records: &[ClipRecord],
    regime: LabelRegime,
) -> Result<Vec<ClipRecord>, DatasetError> {
    let kept: Vec<ClipRecord> = records
        .iter()
        .filter(|r| regime.class_index(r.label).is_some())
        .cloned()
        .collect();
    if kept.is_empty() && !records.is_empty() {
        return Err(DatasetError::EmptyResult);
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, label: Direction) -> ClipRecord {
        ClipRecord {
            clip_id: id.to_string(),
            frames_path: PathBuf::from(format!("frames/{id}")),
            bbox_path: PathBuf::from(format!("boxes/{id}.csv")),
            kick_frame_index: 40,
            field_side: Side::Left,
            kicking_foot: Side::Left,
            label,
            gk_dive: None,
        }
    }

    #[test]
    fn parses_valid_rows_in_order() {
        let text = format!(
            "{MANIFEST_HEADER}\n\
             pk001,frames/pk001,boxes/pk001.csv,40,left,right,center,\n\
             pk002,frames/pk002,boxes/pk002.csv,44,right,right,left,right\n"
        );
        let records = parse_manifest(&text).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].clip_id, "pk001");
        assert_eq!(records[0].label, Direction::Center);
        assert_eq!(records[0].gk_dive, None);
        assert_eq!(records[1].kick_frame_index, 44);
        assert_eq!(records[1].gk_dive, Some(Direction::Right));
    }

    #[test]
    fn header_only_is_empty_list() {
        let records = parse_manifest(&format!("{MANIFEST_HEADER}\n")).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn unknown_label_names_line() {
        let text = format!(
            "{MANIFEST_HEADER}\n\
             pk001,frames/a,boxes/a,40,left,right,middle,\n"
        );
        match parse_manifest(&text) {
            Err(DatasetError::UnknownEnumValue { line, field, value }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "label");
                assert_eq!(value, "middle");
            }
            other => panic!("expected UnknownEnumValue, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_clip_id_rejected() {
        let text = format!(
            "{MANIFEST_HEADER}\n\
             pk001,frames/a,boxes/a,40,left,right,left,\n\
             pk001,frames/b,boxes/b,40,left,right,right,\n"
        );
        assert!(matches!(
            parse_manifest(&text),
            Err(DatasetError::DuplicateClipId { line: 3, .. })
        ));
    }

    #[test]
    fn kick_index_below_minimum_rejected() {
        let text = format!(
            "{MANIFEST_HEADER}\n\
             pk001,frames/a,boxes/a,28,left,right,left,\n"
        );
        assert!(matches!(
            parse_manifest(&text),
            Err(DatasetError::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn missing_file_error() {
        assert!(matches!(
            load_manifest(Path::new("/nonexistent/manifest.csv")),
            Err(DatasetError::MissingFile(_))
        ));
    }

    #[test]
    fn summarize_counts_single_record() {
        let summary = summarize(&[record("a", Direction::Left)]);
        assert_eq!(summary.total, 1);
        assert_eq!(summary.by_label, [1, 0, 0]);
        assert_eq!(summary.by_field_side, [1, 0]);
        assert_eq!(summary.by_kicking_foot, [1, 0]);
    }

    #[test]
    fn summarize_counts_duplicated_label() {
        let summary = summarize(&[record("a", Direction::Right), record("b", Direction::Right)]);
        assert_eq!(summary.by_label, [0, 0, 2]);
    }

    #[test]
    fn two_class_regime_drops_center() {
        let records = vec![
            record("a", Direction::Left),
            record("b", Direction::Center),
            record("c", Direction::Right),
        ];
        let kept = apply_regime(&records, LabelRegime::TwoClass).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].clip_id, "a");
        assert_eq!(kept[1].clip_id, "c");

        let all = apply_regime(&records, LabelRegime::ThreeClass).unwrap();
        assert_eq!(all, records);
    }

    #[test]
    fn two_class_regime_all_center_is_empty_result() {
        let records = vec![record("a", Direction::Center)];
        assert!(matches!(
            apply_regime(&records, LabelRegime::TwoClass),
            Err(DatasetError::EmptyResult)
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let records = vec![
            {
                let mut r = record("pk001", Direction::Left);
                r.gk_dive = Some(Direction::Center);
                r
            },
            record("pk002", Direction::Right),
        ];
        let text = manifest_to_string(&records);
        assert_eq!(parse_manifest(&text).unwrap(), records);
    }
}
