//! `spotkick evaluate`: stratified cross-validation per variant, metric
//! tables, and the goalkeeper baseline.

use std::collections::BTreeSet;

use rayon::prelude::*;

use spotkick_core::classifier::TrainConfig;
use spotkick_core::dataset::{apply_regime, ClipRecord};
use spotkick_core::embedding::cache::read_cache;
use spotkick_core::embedding::Pooling;
use spotkick_core::evaluation::{
    cv_run, gk_baseline, select_pooling, CvConfig, CvOutcome, MetricsReport, StageFeatures,
};

use crate::config::{PoolingChoice, RunConfig, VariantConfig};
use crate::CliError;

use super::{fmt_metric, load_records, thread_pool};

pub const METRICS_HEADER: &str =
    "variant,pooling,fold,accuracy,precision_macro,recall_macro,f1_macro";

struct VariantEval {
    name: String,
    outcome: CvOutcome,
    /// Mean validation accuracy per mode when pooling was selected
    /// automatically: (average, max).
    auto_validation: Option<(f64, f64)>,
}

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let all_records = load_records(config)?;
    let records =
        apply_regime(&all_records, config.regime).map_err(|e| CliError::input(e.to_string()))?;

    let pool = thread_pool(config.jobs)?;
    let mut evals: Vec<VariantEval> = pool
        .install(|| {
            config
                .variants
                .par_iter()
                .map(|v| evaluate_variant(config, v, &records))
                .collect::<Result<Vec<_>, CliError>>()
        })?;
    evals.sort_by(|a, b| a.name.cmp(&b.name));

    let mut warnings: BTreeSet<String> = BTreeSet::new();
    for eval in &evals {
        for w in &eval.outcome.plan.warnings {
            warnings.insert(w.clone());
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let gk = match gk_baseline(&records, config.regime) {
        Ok(report) => Some(report),
        Err(spotkick_core::evaluation::EvalError::NoAnnotations) => None,
        Err(e) => return Err(CliError::runtime(e.to_string())),
    };

    let mut metrics = String::from(METRICS_HEADER);
    metrics.push('\n');
    let mut confusion = String::new();
    for eval in &evals {
        let o = &eval.outcome;
        for (fold, report) in o.per_fold.iter().enumerate() {
            metrics.push_str(&metric_row(&eval.name, o.pooling, &fold.to_string(), report));
        }
        metrics.push_str(&mean_row(&eval.name, o));
        metrics.push_str(&metric_row(&eval.name, o.pooling, "pooled", &o.pooled));
        confusion.push_str(&confusion_block(
            &format!("variant {} pooling {}", eval.name, o.pooling),
            config,
            &o.pooled,
        ));
    }
    if let Some(report) = &gk {
        metrics.push_str(&format!(
            "gk_baseline,-,pooled,{},{},{},{}\n",
            fmt_metric(report.accuracy),
            fmt_metric(report.precision_macro),
            fmt_metric(report.recall_macro),
            fmt_metric(report.f1_macro)
        ));
        confusion.push_str(&confusion_block("gk_baseline", config, report));
    }

    let metrics_path = config.workdir.join("metrics.csv");
    std::fs::create_dir_all(&config.workdir)
        .map_err(|e| CliError::runtime(format!("cannot create work directory: {e}")))?;
    std::fs::write(&metrics_path, &metrics)
        .map_err(|e| CliError::runtime(format!("cannot write metrics: {e}")))?;
    let confusion_path = config.workdir.join("confusion.txt");
    std::fs::write(&confusion_path, &confusion)
        .map_err(|e| CliError::runtime(format!("cannot write confusion matrices: {e}")))?;

    for eval in &evals {
        let o = &eval.outcome;
        match eval.auto_validation {
            Some((avg_acc, max_acc)) => println!(
                "variant {}: selected pooling={} (mean val acc avg={} max={}); pooled accuracy={} f1_macro={}",
                eval.name,
                o.pooling,
                fmt_metric(avg_acc),
                fmt_metric(max_acc),
                fmt_metric(o.pooled.accuracy),
                fmt_metric(o.pooled.f1_macro)
            ),
            None => println!(
                "variant {}: pooling={}; pooled accuracy={} f1_macro={}",
                eval.name,
                o.pooling,
                fmt_metric(o.pooled.accuracy),
                fmt_metric(o.pooled.f1_macro)
            ),
        }
    }
    match &gk {
        Some(report) => println!(
            "gk_baseline ({} annotated): accuracy={} f1_macro={}",
            report.total,
            fmt_metric(report.accuracy),
            fmt_metric(report.f1_macro)
        ),
        None => println!("gk_baseline: no goalkeeper annotations in the manifest"),
    }
    println!("wrote {} and {}", metrics_path.display(), confusion_path.display());
    Ok(())
}

fn evaluate_variant(
    config: &RunConfig,
    variant: &VariantConfig,
    records: &[ClipRecord],
) -> Result<VariantEval, CliError> {
    let cache_path = variant.cache_path(&config.workdir);
    if !cache_path.is_file() {
        return Err(CliError::input(format!(
            "missing embedding cache {}; run `spotkick embed` first",
            cache_path.display()
        )));
    }
    let contents = read_cache(&cache_path).map_err(|e| {
        CliError::input(format!("cache {}: {e}", cache_path.display()))
    })?;
    if contents.dim != variant.dim {
        return Err(CliError::input(format!(
            "cache {} has dim {}, config says {}",
            cache_path.display(),
            contents.dim,
            variant.dim
        )));
    }
    let features =
        StageFeatures::from_cache(&contents).map_err(|e| CliError::input(e.to_string()))?;

    let cv = CvConfig {
        folds: config.folds,
        seed: config.seed,
        hidden_stream: config.model.hidden_stream,
        hidden_meta: config.model.hidden_meta,
        hidden_fusion: config.model.hidden_fusion,
        use_metadata: config.model.use_metadata,
        single_stream: config.model.single_stream,
        train: TrainConfig {
            learning_rate: config.train.learning_rate,
            max_epochs: config.train.max_epochs,
            batch_size: config.train.batch_size,
            early_stop_patience: config.train.early_stop_patience,
            ..TrainConfig::default()
        },
    };

    let run_mode = |mode: Pooling| -> Result<CvOutcome, CliError> {
        cv_run(records, &features, mode, &cv, config.regime)
            .map_err(|e| CliError::runtime(format!("variant {}: {e}", variant.name)))
    };
    match config.pooling {
        PoolingChoice::Fixed(mode) => Ok(VariantEval {
            name: variant.name.clone(),
            outcome: run_mode(mode)?,
            auto_validation: None,
        }),
        PoolingChoice::Auto => {
            let average = run_mode(Pooling::Average)?;
            let max = run_mode(Pooling::Max)?;
            let auto_validation = Some((average.mean_val_accuracy, max.mean_val_accuracy));
            let selected = select_pooling(&average, &max)
                .map_err(|e| CliError::runtime(format!("variant {}: {e}", variant.name)))?;
            let outcome = match selected {
                Pooling::Average => average,
                Pooling::Max => max,
            };
            Ok(VariantEval {
                name: variant.name.clone(),
                outcome,
                auto_validation,
            })
        }
    }
}

fn metric_row(variant: &str, pooling: Pooling, fold: &str, report: &MetricsReport) -> String {
    format!(
        "{variant},{pooling},{fold},{},{},{},{}\n",
        fmt_metric(report.accuracy),
        fmt_metric(report.precision_macro),
        fmt_metric(report.recall_macro),
        fmt_metric(report.f1_macro)
    )
}

fn mean_row(variant: &str, outcome: &CvOutcome) -> String {
    let k = outcome.per_fold.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| outcome.per_fold.iter().map(f).sum::<f64>() / k;
    format!(
        "{variant},{},mean,{},{},{},{}\n",
        outcome.pooling,
        fmt_metric(mean(|r| r.accuracy)),
        fmt_metric(mean(|r| r.precision_macro)),
        fmt_metric(mean(|r| r.recall_macro)),
        fmt_metric(mean(|r| r.f1_macro))
    )
}

fn confusion_block(title: &str, config: &RunConfig, report: &MetricsReport) -> String {
    let n = report.confusion.len();
    let classes: Vec<&str> = (0..n).map(|i| config.regime.class_name(i)).collect();
    let mut out = format!(
        "# {title} regime {} (rows true, cols predicted: {})\n",
        config.regime,
        classes.join(",")
    );
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.push('\n');
    out
}
