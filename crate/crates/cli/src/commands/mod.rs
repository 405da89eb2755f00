pub mod embed;
pub mod evaluate;
pub mod preprocess;
pub mod report;

use std::path::{Path, PathBuf};

use spotkick_core::dataset::{load_manifest, ClipRecord};

use crate::config::RunConfig;
use crate::CliError;

/// Load the manifest and resolve record paths relative to its directory.
pub(crate) fn load_records(config: &RunConfig) -> Result<Vec<ClipRecord>, CliError> {
    let mut records =
        load_manifest(&config.manifest).map_err(|e| CliError::input(e.to_string()))?;
    if records.is_empty() {
        return Err(CliError::input(format!(
            "manifest {} has no records",
            config.manifest.display()
        )));
    }
    let base = config
        .manifest
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    for r in &mut records {
        if r.frames_path.is_relative() {
            r.frames_path = base.join(&r.frames_path);
        }
        if r.bbox_path.is_relative() {
            r.bbox_path = base.join(&r.bbox_path);
        }
    }
    Ok(records)
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::runtime(format!("cannot build worker pool: {e}")))
}

pub(crate) fn preprocessed_dir(workdir: &Path, clip_id: &str) -> PathBuf {
    workdir.join("preprocessed").join(clip_id)
}

/// Fixed-width float formatting so emitted tables are byte-stable.
pub(crate) fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}
