//! `spotkick preprocess`: context constraint and stage segmentation, per clip.

use std::collections::HashMap;

use rayon::prelude::*;

use spotkick_core::dataset::{ClipRecord, TRIMMED_KICK_FRAME_INDEX};
use spotkick_core::preprocess::{
    average_frame, composite, load_bbox_track, load_frame_dir, save_frame_dir, segment_stages,
    BoundingBox, CLIP_LEN, KICK_AFTER, KICK_BEFORE, RUN_LEN,
};

use crate::config::RunConfig;
use crate::CliError;

use super::{load_records, preprocessed_dir, thread_pool};

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let records = load_records(config)?;
    std::fs::create_dir_all(config.workdir.join("preprocessed"))
        .map_err(|e| CliError::runtime(format!("cannot create work directory: {e}")))?;

    let pool = thread_pool(config.jobs)?;
    let mut results: Vec<(String, Result<usize, String>)> = pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                (
                    r.clip_id.clone(),
                    preprocess_clip(config, r).map_err(|e| e.message),
                )
            })
            .collect()
    });
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let mut padding_csv = String::from("clip_id,padding_count\n");
    let mut failures = 0usize;
    for (clip_id, outcome) in &results {
        match outcome {
            Ok(padding) => {
                println!("{clip_id}: padding_count={padding}");
                padding_csv.push_str(&format!("{clip_id},{padding}\n"));
            }
            Err(message) => {
                failures += 1;
                eprintln!("error: clip {clip_id}: {message}");
            }
        }
    }
    std::fs::write(config.workdir.join("preprocessed").join("padding.csv"), padding_csv)
        .map_err(|e| CliError::runtime(format!("cannot write padding summary: {e}")))?;

    if failures > 0 {
        return Err(CliError::input(format!(
            "{failures} of {} clips failed preprocessing",
            results.len()
        )));
    }
    println!("preprocessed {} clips into {}", results.len(), config.workdir.display());
    Ok(())
}

fn preprocess_clip(config: &RunConfig, record: &ClipRecord) -> Result<usize, CliError> {
    let frames =
        load_frame_dir(&record.frames_path).map_err(|e| CliError::input(e.to_string()))?;
    let kick = record.kick_frame_index;
    if frames.len() == CLIP_LEN && kick != TRIMMED_KICK_FRAME_INDEX {
        return Err(CliError::input(format!(
            "a {CLIP_LEN}-frame trimmed clip must place the kick at frame {TRIMMED_KICK_FRAME_INDEX}, found {kick}"
        )));
    }
    if kick + KICK_AFTER > frames.len() {
        return Err(CliError::input(format!(
            "kick frame {kick} leaves fewer than {KICK_AFTER} trailing frames (clip has {})",
            frames.len()
        )));
    }

    // The analysis window is the 48 frames around the kick (fewer when the
    // run-up footage is short; the stage split pads those).
    let window_start = kick.saturating_sub(RUN_LEN + KICK_BEFORE);
    let window_end = kick + KICK_AFTER;
    let trimmed = &frames[window_start..window_end];

    let boxes =
        load_bbox_track(&record.bbox_path).map_err(|e| CliError::input(e.to_string()))?;
    let by_index: HashMap<usize, &BoundingBox> =
        boxes.iter().map(|b| (b.frame_index, b)).collect();
    let shifted: Vec<BoundingBox> = (window_start..window_end)
        .map(|orig| {
            by_index
                .get(&orig)
                .map(|b| BoundingBox {
                    frame_index: orig - window_start,
                    ..**b
                })
                .ok_or_else(|| CliError::input(format!("no bounding box for frame {orig}")))
        })
        .collect::<Result<_, _>>()?;

    let background = average_frame(trimmed).map_err(|e| CliError::runtime(e.to_string()))?;
    let composited =
        composite(trimmed, &shifted, &background).map_err(|e| CliError::input(e.to_string()))?;
    let split = segment_stages(&composited, kick - window_start)
        .map_err(|e| CliError::input(e.to_string()))?;

    let clip_dir = preprocessed_dir(&config.workdir, &record.clip_id);
    save_frame_dir(&clip_dir.join("run"), &split.run_frames)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    save_frame_dir(&clip_dir.join("kick"), &split.kick_frames)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(split.padding_count)
}
