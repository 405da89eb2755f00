//! `spotkick report`: fold the evaluate metrics into per-family five-number
//! summaries (the numbers behind the distribution boxplots).

use std::collections::BTreeMap;

use spotkick_core::embedding::Pooling;
use spotkick_core::evaluation::{aggregate_variants, Distribution, VariantResult};

use crate::config::RunConfig;
use crate::CliError;

use super::fmt_metric;

pub const DISTRIBUTION_HEADER: &str =
    "family,metric,variants,min,q1,median,q3,max,best_accuracy,outliers";

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let metrics_path = config.workdir.join("metrics.csv");
    if !metrics_path.is_file() {
        return Err(CliError::input(format!(
            "missing metrics table {}; run `spotkick evaluate` first",
            metrics_path.display()
        )));
    }
    let text = std::fs::read_to_string(&metrics_path)
        .map_err(|e| CliError::runtime(format!("cannot read metrics: {e}")))?;

    // per-fold rows only; `mean` and `pooled` rows are derived
    let mut fold_accs: BTreeMap<String, (Pooling, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::input(format!(
                "metrics line {}: expected 7 fields, found {}",
                idx + 1,
                fields.len()
            )));
        }
        let variant = fields[0];
        if variant == "gk_baseline" || fields[2].parse::<usize>().is_err() {
            continue;
        }
        let pooling = Pooling::parse(fields[1]).ok_or_else(|| {
            CliError::input(format!("metrics line {}: bad pooling `{}`", idx + 1, fields[1]))
        })?;
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::input(format!("metrics line {}: bad number `{s}`", idx + 1)))
        };
        let accuracy = parse(fields[3])?;
        let f1 = parse(fields[6])?;
        let entry = fold_accs
            .entry(variant.to_string())
            .or_insert_with(|| (pooling, Vec::new(), Vec::new()));
        entry.0 = pooling;
        entry.1.push(accuracy);
        entry.2.push(f1);
    }
    if fold_accs.is_empty() {
        return Err(CliError::input(format!(
            "{} contains no per-fold variant rows",
            metrics_path.display()
        )));
    }

    let results: Vec<VariantResult> = fold_accs
        .into_iter()
        .map(|(name, (pooling, accs, f1s))| {
            let (family, window) = config
                .variants
                .iter()
                .find(|v| v.name == name)
                .map(|v| (v.family.clone(), v.window))
                .unwrap_or_else(|| (name.clone(), 0));
            VariantResult::new(family, name, window, pooling, accs, f1s)
        })
        .collect();

    let summaries = aggregate_variants(&results).map_err(|e| CliError::runtime(e.to_string()))?;

    let mut out = String::from(DISTRIBUTION_HEADER);
    out.push('\n');
    for s in &summaries {
        out.push_str(&distribution_row(&s.family, "accuracy", s.variants, &s.accuracy, s.best_accuracy));
        out.push_str(&distribution_row(&s.family, "f1_macro", s.variants, &s.f1, s.best_accuracy));
    }
    let dist_path = config.workdir.join("distribution.csv");
    std::fs::write(&dist_path, &out)
        .map_err(|e| CliError::runtime(format!("cannot write distribution summary: {e}")))?;

    for s in &summaries {
        println!(
            "family {}: {} variant(s); accuracy median={} iqr=[{}, {}] best={}{}",
            s.family,
            s.variants,
            fmt_metric(s.accuracy.median),
            fmt_metric(s.accuracy.q1),
            fmt_metric(s.accuracy.q3),
            fmt_metric(s.best_accuracy),
            if s.accuracy.outliers.is_empty() {
                String::new()
            } else {
                format!(" outliers={}", join_metrics(&s.accuracy.outliers))
            }
        );
    }
    println!("wrote {}", dist_path.display());
    Ok(())
}

fn join_metrics(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| fmt_metric(*v))
        .collect::<Vec<_>>()
        .join(";")
}

fn distribution_row(
    family: &str,
    metric: &str,
    variants: usize,
    d: &Distribution,
    best_accuracy: f64,
) -> String {
    format!(
        "{family},{metric},{variants},{},{},{},{},{},{},{}\n",
        fmt_metric(d.min),
        fmt_metric(d.q1),
        fmt_metric(d.median),
        fmt_metric(d.q3),
        fmt_metric(d.max),
        fmt_metric(best_accuracy),
        join_metrics(&d.outliers)
    )
}
