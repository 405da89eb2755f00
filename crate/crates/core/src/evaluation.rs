//! Evaluation protocol: stratified k-fold cross validation with one
//! validation and one test fold per rotation, metric computation, the
//! goalkeeper baseline, and per-family distribution summaries.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::classifier::{
    compute_class_weights, init_model, predict, train, Architecture, ClassifierError,
    FeatureRecord, TrainConfig,
};
use crate::dataset::{ClipRecord, Direction, LabelRegime};
use crate::embedding::cache::CacheContents;
use crate::embedding::{
    chunk_count, Backend, ChunkEmbeddingSet, Chunk, EmbeddingError, Pooling, StageTag,
};
use crate::preprocess::Frame;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("too few samples: have {have}, need at least {need}")]
    TooFewSamples { have: usize, need: usize },
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("class index {index} out of range for {classes} classes")]
    InvalidClassIndex { index: usize, classes: usize },
    #[error("no records carry a goalkeeper-dive annotation")]
    NoAnnotations,
    #[error("pooling results were computed over different fold assignments")]
    IncomparableResults,
    #[error("no variant results for family aggregation")]
    EmptyFamily,
    #[error("empty input")]
    EmptyInput,
    #[error("no embeddings for clip `{clip_id}` {stage} stage")]
    MissingFeature { clip_id: String, stage: StageTag },
    #[error("chunk indices for clip `{clip_id}` {stage} stage are not contiguous from 0")]
    NonContiguousChunks { clip_id: String, stage: StageTag },
    #[error("record `{clip_id}` is outside the label regime (run apply_regime first)")]
    OutOfRegime { clip_id: String },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

// --- fold plans --------------------------------------------------------------

/// A stratified partition of the dataset into k folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// clip_id -> fold index
    pub assignment: BTreeMap<String, usize>,
    /// Per fold, per [`Direction::ALL`] class.
    pub fold_class_counts: Vec<[usize; 3]>,
    /// Best-effort notes, e.g. classes with fewer members than folds.
    pub warnings: Vec<String>,
}

impl FoldPlan {
    pub fn fold_size(&self, fold: usize) -> usize {
        self.fold_class_counts[fold].iter().sum()
    }
}

/// Stratified fold assignment: within each class, samples are shuffled by the
/// seed and dealt round-robin across folds, with each class continuing from
/// the fold offset where the previous class stopped. The chained offsets keep
/// total fold sizes within one of each other while every per-fold class count
/// stays within one of the proportional share.
pub fn make_folds(records: &[ClipRecord], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 3 {
        return Err(EvalError::TooFewSamples { have: k, need: 3 });
    }
    if records.len() < k {
        return Err(EvalError::TooFewSamples {
            have: records.len(),
            need: k,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut fold_class_counts = vec![[0usize; 3]; k];
    let mut warnings = Vec::new();
    let mut offset = 0usize;
    for (class_idx, class) in Direction::ALL.iter().enumerate() {
        let mut members: Vec<&ClipRecord> =
            records.iter().filter(|r| r.label == *class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            warnings.push(format!(
                "class `{class}` has {} members, fewer than {k} folds; stratification is best-effort",
                members.len()
            ));
        }
        members.shuffle(&mut rng);
        for (j, record) in members.iter().enumerate() {
            let fold = (offset + j) % k;
            assignment.insert(record.clip_id.clone(), fold);
            fold_class_counts[fold][class_idx] += 1;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(FoldPlan {
        k,
        assignment,
        fold_class_counts,
        warnings,
    })
}

// --- metrics -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True-label count for the class.
    pub support: usize,
}

/// Confusion matrix (rows = true, cols = predicted) with derived rates.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
}

impl MetricsReport {
    /// Derive all rates from a confusion matrix. Macro averages are
    /// unweighted means over classes; a class absent from both predictions
    /// and labels contributes zeros.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<MetricsReport, EvalError> {
        let n = confusion.len();
        if n == 0 || confusion.iter().any(|row| row.len() != n) {
            return Err(EvalError::EmptyInput);
        }
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(EvalError::EmptyInput);
        }
        let trace: usize = (0..n).map(|i| confusion[i][i]).sum();
        let accuracy = trace as f64 / total as f64;
        let mut per_class = Vec::with_capacity(n);
        for c in 0..n {
            let tp = confusion[c][c];
            let row_sum: usize = confusion[c].iter().sum();
            let col_sum: usize = (0..n).map(|r| confusion[r][c]).sum();
            let precision = if col_sum == 0 {
                0.0
            } else {
                tp as f64 / col_sum as f64
            };
            let recall = if row_sum == 0 {
                0.0
            } else {
                tp as f64 / row_sum as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            per_class.push(ClassMetrics {
                precision,
                recall,
                f1,
                support: row_sum,
            });
        }
        let nf = n as f64;
        Ok(MetricsReport {
            precision_macro: per_class.iter().map(|c| c.precision).sum::<f64>() / nf,
            recall_macro: per_class.iter().map(|c| c.recall).sum::<f64>() / nf,
            f1_macro: per_class.iter().map(|c| c.f1).sum::<f64>() / nf,
            confusion,
            total,
            accuracy,
            per_class,
        })
    }
}

/// Build the confusion matrix from aligned prediction/label lists and derive
/// all metric rates.
pub fn compute_metrics(
    predictions: &[usize],
    labels: &[usize],
    n: usize,
) -> Result<MetricsReport, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut confusion = vec![vec![0usize; n]; n];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= n {
            return Err(EvalError::InvalidClassIndex {
                index: p,
                classes: n,
            });
        }
        if y >= n {
            return Err(EvalError::InvalidClassIndex {
                index: y,
                classes: n,
            });
        }
        confusion[y][p] += 1;
    }
    MetricsReport::from_confusion(confusion)
}

// --- features ----------------------------------------------------------------

/// Per-clip, per-stage chunk embedding matrices, ready to pool.
#[derive(Debug, Clone)]
pub struct StageFeatures {
    dim: usize,
    map: HashMap<(String, StageTag), Vec<Vec<f32>>>,
}

impl StageFeatures {
    /// Group decoded cache entries by clip and stage. Chunk indices must be
    /// contiguous from zero within each group.
    pub fn from_cache(contents: &CacheContents) -> Result<StageFeatures, EvalError> {
        let mut grouped: HashMap<(String, StageTag), Vec<(u32, Vec<f32>)>> = HashMap::new();
        for e in &contents.entries {
            grouped
                .entry((e.clip_id.clone(), e.stage))
                .or_default()
                .push((e.chunk_index, e.vector.clone()));
        }
        let mut map = HashMap::new();
        for ((clip_id, stage), mut rows) in grouped {
            rows.sort_by_key(|(i, _)| *i);
            for (expected, (got, _)) in rows.iter().enumerate() {
                if *got as usize != expected {
                    return Err(EvalError::NonContiguousChunks { clip_id, stage });
                }
            }
            map.insert(
                (clip_id, stage),
                rows.into_iter().map(|(_, v)| v).collect(),
            );
        }
        Ok(StageFeatures {
            dim: contents.dim,
            map,
        })
    }

    /// Generate chunk embeddings for each record directly from a backend.
    ///
    /// Stage lengths are the nominal post-preprocessing lengths; chunk
    /// contents are placeholder frames, so this suits backends keyed by
    /// (clip, stage, chunk index) rather than pixels.
    pub fn from_backend(
        backend: &dyn Backend,
        records: &[ClipRecord],
    ) -> Result<StageFeatures, EvalError> {
        let placeholder = std::sync::Arc::new(Frame::filled(1, 1, [0, 0, 0]));
        let mut map = HashMap::new();
        for record in records {
            for stage in StageTag::ALL {
                let n_f = chunk_count(stage.stage_len(), backend.window());
                let mut rows = Vec::with_capacity(n_f);
                for chunk_index in 0..n_f {
                    let chunk = Chunk {
                        frames: vec![placeholder.clone(); backend.window()],
                        chunk_index,
                    };
                    rows.push(backend.embed(&record.clip_id, stage, &chunk)?);
                }
                map.insert((record.clip_id.clone(), stage), rows);
            }
        }
        Ok(StageFeatures {
            dim: backend.dim(),
            map,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chunk_matrix(&self, clip_id: &str, stage: StageTag) -> Option<&Vec<Vec<f32>>> {
        self.map.get(&(clip_id.to_string(), stage))
    }

    /// Pool a clip's stage matrix into one f64 vector.
    pub fn pooled(
        &self,
        clip_id: &str,
        stage: StageTag,
        pooling: Pooling,
    ) -> Result<Vec<f64>, EvalError> {
        let rows = self
            .map
            .get(&(clip_id.to_string(), stage))
            .ok_or_else(|| EvalError::MissingFeature {
                clip_id: clip_id.to_string(),
                stage,
            })?;
        let lifted: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        let set = ChunkEmbeddingSet::new(stage, lifted)?;
        Ok(crate::embedding::pool_chunks(&set, pooling)?.vector)
    }
}

// --- cross validation ----------------------------------------------------------

/// Cross-validation configuration. The seed drives both the fold assignment
/// and the per-fold model seeds (`seed + fold`); `train.seed` is overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub hidden_stream: usize,
    pub hidden_meta: usize,
    pub hidden_fusion: usize,
    pub use_metadata: bool,
    pub single_stream: bool,
    pub train: TrainConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            seed: 0,
            hidden_stream: 256,
            hidden_meta: 16,
            hidden_fusion: 128,
            use_metadata: true,
            single_stream: false,
            train: TrainConfig::default(),
        }
    }
}

/// Result of one full cross-validation run at a fixed pooling mode.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub pooling: Pooling,
    pub per_fold: Vec<MetricsReport>,
    /// Micro-pooled confusion over all test folds; covers the whole dataset.
    pub pooled: MetricsReport,
    pub fold_val_accuracy: Vec<f64>,
    pub mean_val_accuracy: f64,
    pub plan: FoldPlan,
}

/// Run the full protocol: for each test fold, validation is the next fold and
/// the remaining k-2 folds train a fresh model. Per-fold test metrics are
/// reported along with the pooled confusion matrix across folds.
pub fn cv_run(
    records: &[ClipRecord],
    features: &StageFeatures,
    pooling: Pooling,
    config: &CvConfig,
    regime: LabelRegime,
) -> Result<CvOutcome, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = regime.class_count();
    let mut samples = Vec::with_capacity(records.len());
    for record in records {
        let label = regime
            .class_index(record.label)
            .ok_or_else(|| EvalError::OutOfRegime {
                clip_id: record.clip_id.clone(),
            })?;
        samples.push(FeatureRecord {
            t_run: features.pooled(&record.clip_id, StageTag::Run, pooling)?,
            t_kick: features.pooled(&record.clip_id, StageTag::Kick, pooling)?,
            gamma: [
                record.field_side.as_binary() as f64,
                record.kicking_foot.as_binary() as f64,
            ],
            label,
        });
    }

    let plan = make_folds(records, config.folds, config.seed)?;
    let folds: Vec<usize> = records
        .iter()
        .map(|r| plan.assignment[&r.clip_id])
        .collect();

    let arch = Architecture::new(features.dim(), n)
        .with_hidden(config.hidden_stream, config.hidden_meta, config.hidden_fusion)
        .with_ablations(config.use_metadata, config.single_stream);

    let mut per_fold = Vec::with_capacity(config.folds);
    let mut fold_val_accuracy = Vec::with_capacity(config.folds);
    let mut pooled_confusion = vec![vec![0usize; n]; n];
    for test_fold in 0..config.folds {
        let val_fold = (test_fold + 1) % config.folds;
        let mut train_set = Vec::new();
        let mut val_set = Vec::new();
        let mut test_set = Vec::new();
        for (sample, &fold) in samples.iter().zip(&folds) {
            if fold == test_fold {
                test_set.push(sample.clone());
            } else if fold == val_fold {
                val_set.push(sample.clone());
            } else {
                train_set.push(sample.clone());
            }
        }
        let train_labels: Vec<usize> = train_set.iter().map(|s| s.label).collect();
        let class_weights: Vec<f64> = compute_class_weights(&train_labels, n)?;
        let fold_seed = config.seed + test_fold as u64;
        let fold_config = TrainConfig {
            seed: fold_seed,
            class_weights,
            ..config.train.clone()
        };
        let model = init_model::<f64>(arch, fold_seed)?;
        let (trained, _history) = train(model, &train_set, &val_set, &fold_config)?;

        let mut predictions = Vec::with_capacity(test_set.len());
        let mut labels = Vec::with_capacity(test_set.len());
        for sample in &test_set {
            predictions.push(predict(&trained, sample)?);
            labels.push(sample.label);
        }
        let report = compute_metrics(&predictions, &labels, n)?;
        for (row, pooled_row) in report.confusion.iter().zip(&mut pooled_confusion) {
            for (v, p) in row.iter().zip(pooled_row.iter_mut()) {
                *p += v;
            }
        }
        per_fold.push(report);

        let val_correct = val_set
            .iter()
            .map(|s| Ok::<usize, EvalError>((predict(&trained, s)? == s.label) as usize))
            .sum::<Result<usize, _>>()?;
        fold_val_accuracy.push(val_correct as f64 / val_set.len() as f64);
    }
    let pooled = MetricsReport::from_confusion(pooled_confusion)?;
    let mean_val_accuracy =
        fold_val_accuracy.iter().sum::<f64>() / fold_val_accuracy.len() as f64;
    Ok(CvOutcome {
        pooling,
        per_fold,
        pooled,
        fold_val_accuracy,
        mean_val_accuracy,
        plan,
    })
}

// --- goalkeeper baseline --------------------------------------------------------

/// Score the goalkeeper's actual dive direction against the true shot
/// direction over records carrying the annotation.
///
/// In the two-class regime a center dive matches neither class and is scored
/// as a miss (counted against the opposite column of the true class).
pub fn gk_baseline(records: &[ClipRecord], regime: LabelRegime) -> Result<MetricsReport, EvalError> {
    let n = regime.class_count();
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    for record in records {
        let Some(dive) = record.gk_dive else {
            continue;
        };
        let Some(label) = regime.class_index(record.label) else {
            return Err(EvalError::OutOfRegime {
                clip_id: record.clip_id.clone(),
            });
        };
        let prediction = match regime.class_index(dive) {
            Some(idx) => idx,
            // two-class regime, center dive: a guaranteed miss
            None => 1 - label,
        };
        predictions.push(prediction);
        labels.push(label);
    }
    if predictions.is_empty() {
        return Err(EvalError::NoAnnotations);
    }
    compute_metrics(&predictions, &labels, n)
}

// --- pooling selection ------------------------------------------------------------

/// Pick the pooling mode with the higher mean validation accuracy; ties go to
/// average pooling. Both runs must share the same fold assignment.
pub fn select_pooling(average: &CvOutcome, max: &CvOutcome) -> Result<Pooling, EvalError> {
    if average.plan.assignment != max.plan.assignment {
        return Err(EvalError::IncomparableResults);
    }
    if max.mean_val_accuracy > average.mean_val_accuracy {
        Ok(Pooling::Max)
    } else {
        Ok(Pooling::Average)
    }
}

// --- variant aggregation -----------------------------------------------------------

/// Cross-validation summary for one backbone variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub family: String,
    pub variant: String,
    pub window: usize,
    pub pooling: Pooling,
    pub fold_accuracy: Vec<f64>,
    pub fold_f1: Vec<f64>,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
}

impl VariantResult {
    pub fn new(
        family: impl Into<String>,
        variant: impl Into<String>,
        window: usize,
        pooling: Pooling,
        fold_accuracy: Vec<f64>,
        fold_f1: Vec<f64>,
    ) -> VariantResult {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        VariantResult {
            family: family.into(),
            variant: variant.into(),
            window,
            pooling,
            mean_accuracy: mean(&fold_accuracy),
            mean_f1: mean(&fold_f1),
            fold_accuracy,
            fold_f1,
        }
    }
}

/// Five-number summary with outliers beyond 1.5 IQR of the quartiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
}

/// Per-family distribution of variant means.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySummary {
    pub family: String,
    pub variants: usize,
    pub accuracy: Distribution,
    pub f1: Distribution,
    pub best_accuracy: f64,
}

/// Nearest-rank quantile (1-based rank `ceil(p * n)`), median inclusive.
fn quantile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn summarize_distribution(values: &[f64]) -> Distribution {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let q1 = quantile_nearest_rank(&sorted, 0.25);
    let median = quantile_nearest_rank(&sorted, 0.5);
    let q3 = quantile_nearest_rank(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo = q1 - 1.5 * iqr;
    let hi = q3 + 1.5 * iqr;
    let outliers = sorted.iter().copied().filter(|&v| v < lo || v > hi).collect();
    Distribution {
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        outliers,
    }
}

/// Summarize variant mean metrics per architecture family, sorted by family
/// name.
pub fn aggregate_variants(results: &[VariantResult]) -> Result<Vec<FamilySummary>, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyFamily);
    }
    let mut families: BTreeMap<&str, Vec<&VariantResult>> = BTreeMap::new();
    for r in results {
        families.entry(&r.family).or_default().push(r);
    }
    Ok(families
        .into_iter()
        .map(|(family, variants)| {
            let accs: Vec<f64> = variants.iter().map(|v| v.mean_accuracy).collect();
            let f1s: Vec<f64> = variants.iter().map(|v| v.mean_f1).collect();
            FamilySummary {
                family: family.to_string(),
                variants: variants.len(),
                accuracy: summarize_distribution(&accs),
                f1: summarize_distribution(&f1s),
                best_accuracy: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}
