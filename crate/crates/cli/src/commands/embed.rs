//! `spotkick embed`: chunk the preprocessed stages and fill the embedding
//! cache, one file per variant.

use std::collections::HashMap;

use rayon::prelude::*;

use spotkick_core::dataset::{ClipRecord, Direction};
use spotkick_core::embedding::cache::{write_cache, CacheEntry};
use spotkick_core::embedding::{make_chunks, Backend, PrecomputedBackend, StageTag, SyntheticBackend};
use spotkick_core::preprocess::load_frame_dir;

use crate::config::{BackendKindChoice, RunConfig, VariantConfig};
use crate::CliError;

use super::{load_records, preprocessed_dir, thread_pool};

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let records = load_records(config)?;
    let embeddings_dir = config.workdir.join("embeddings");
    std::fs::create_dir_all(&embeddings_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", embeddings_dir.display())))?;

    let pool = thread_pool(config.jobs)?;
    for variant in &config.variants {
        let backend = build_backend(config, variant, &records)?;
        let per_clip: Vec<Result<Vec<CacheEntry>, CliError>> = pool.install(|| {
            records
                .par_iter()
                .map(|r| embed_clip(config, backend.as_ref(), r))
                .collect()
        });
        let mut entries = Vec::new();
        for outcome in per_clip {
            entries.extend(outcome?);
        }
        entries.sort_by(|a, b| {
            (&a.clip_id, a.stage.as_u8(), a.chunk_index)
                .cmp(&(&b.clip_id, b.stage.as_u8(), b.chunk_index))
        });
        let cache_path = variant.cache_path(&config.workdir);
        write_cache(&cache_path, backend.dim(), &entries)
            .map_err(|e| CliError::runtime(format!("cannot write cache: {e}")))?;
        println!(
            "variant {}: {} entries -> {}",
            variant.name,
            entries.len(),
            cache_path.display()
        );
    }
    Ok(())
}

pub(crate) fn build_backend(
    config: &RunConfig,
    variant: &VariantConfig,
    records: &[ClipRecord],
) -> Result<Box<dyn Backend>, CliError> {
    match variant.kind {
        BackendKindChoice::Synthetic => {
            let mut backend = SyntheticBackend::new(variant.window, variant.dim, config.seed)
                .with_identifier(variant.name.clone());
            if let Some(injection) = &config.injection {
                let labels: HashMap<String, Direction> = records
                    .iter()
                    .map(|r| (r.clip_id.clone(), r.label))
                    .collect();
                backend = backend.with_injection(injection.clone(), labels);
            }
            Ok(Box::new(backend))
        }
        BackendKindChoice::Precomputed => {
            let source = variant.source.as_ref().ok_or_else(|| {
                CliError::input(format!(
                    "variant `{}`: precomputed backend needs `source` (a cache file)",
                    variant.name
                ))
            })?;
            let backend =
                PrecomputedBackend::from_cache_file(source, variant.window, Some(variant.dim))
                    .map_err(|e| CliError::input(e.to_string()))?;
            Ok(Box::new(backend))
        }
        BackendKindChoice::External => {
            #[cfg(feature = "external-runtime")]
            {
                let source = variant.source.as_ref().ok_or_else(|| {
                    CliError::input(format!(
                        "variant `{}`: external backend needs `source` (a model file)",
                        variant.name
                    ))
                })?;
                let backend = spotkick_core::embedding::ExternalRuntimeBackend::from_onnx(
                    source,
                    variant.window,
                    variant.dim,
                )
                .map_err(|e| CliError::input(e.to_string()))?;
                Ok(Box::new(backend))
            }
            #[cfg(not(feature = "external-runtime"))]
            {
                Err(CliError::input(format!(
                    "variant `{}`: external backend requires a build with `--features external-runtime`",
                    variant.name
                )))
            }
        }
    }
}

fn embed_clip(
    config: &RunConfig,
    backend: &dyn Backend,
    record: &ClipRecord,
) -> Result<Vec<CacheEntry>, CliError> {
    let clip_dir = preprocessed_dir(&config.workdir, &record.clip_id);
    let mut entries = Vec::new();
    for (stage, subdir) in [(StageTag::Run, "run"), (StageTag::Kick, "kick")] {
        let stage_dir = clip_dir.join(subdir);
        if !stage_dir.is_dir() {
            return Err(CliError::input(format!(
                "missing preprocessed stage {}; run `spotkick preprocess` first",
                stage_dir.display()
            )));
        }
        let frames = load_frame_dir(&stage_dir).map_err(|e| CliError::input(e.to_string()))?;
        let chunks =
            make_chunks(&frames, backend.window()).map_err(|e| CliError::input(e.to_string()))?;
        for chunk in &chunks {
            let vector = backend
                .embed(&record.clip_id, stage, chunk)
                .map_err(|e| CliError::runtime(format!("clip {}: {e}", record.clip_id)))?;
            entries.push(CacheEntry {
                clip_id: record.clip_id.clone(),
                stage,
                chunk_index: chunk.chunk_index as u32,
                vector,
            });
        }
    }
    Ok(entries)
}
