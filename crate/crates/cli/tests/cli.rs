//! End-to-end runs of the `spotkick` binary on materialized synthetic clips.

use std::path::Path;
use std::process::{Command, Output};

use spotkick_core::dataset::Direction;
use spotkick_core::synth::{
    materialize_dataset, records_with_marginals, with_gk_dive, SynthClipSpec,
};

fn spotkick() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spotkick"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    spotkick()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn spotkick")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

const CONFIG: &str = r#"
[run]
manifest = "manifest.csv"
workdir = "work"
seed = 11
folds = 5
regime = "two"
pooling = "avg"

[backend]
kind = "synthetic"
window = 4
dim = 8
identifier = "synthetic-a"

[backend.injection]
stage = "kick"
coordinate = 0
magnitude = 1.0
noise_sigma = 0.3

[model]
hidden_stream = 12
hidden_meta = 4
hidden_fusion = 8

[train]
learning_rate = 0.002
max_epochs = 8
batch_size = 16
early_stop_patience = 4
"#;

fn write_dataset(root: &Path, clips_per_class: usize) {
    let mut records = records_with_marginals(
        &[
            (Direction::Left, clips_per_class),
            (Direction::Right, clips_per_class),
        ],
        clips_per_class,
        clips_per_class,
        7,
    );
    with_gk_dive(&mut records, 0.6, 3);
    materialize_dataset(root, &mut records, &SynthClipSpec::default(), 99).unwrap();
    std::fs::write(root.join("spotkick.toml"), CONFIG).unwrap();
}

#[test]
fn full_pipeline_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 15);

    let pre = run_in(dir.path(), &["preprocess"]);
    assert!(pre.status.success(), "preprocess: {}", stderr_of(&pre));
    let stdout = String::from_utf8_lossy(&pre.stdout);
    assert!(stdout.contains("pk0000: padding_count=0"), "{stdout}");
    assert!(dir.path().join("work/preprocessed/pk0000/run/031.png").is_file());
    assert!(dir.path().join("work/preprocessed/pk0000/kick/015.png").is_file());
    assert!(dir.path().join("work/preprocessed/padding.csv").is_file());

    let emb = run_in(dir.path(), &["embed"]);
    assert!(emb.status.success(), "embed: {}", stderr_of(&emb));
    // chunk-count law: run 32-4+1 = 29, kick 16-4+1 = 13, 30 clips
    let stdout = String::from_utf8_lossy(&emb.stdout);
    assert!(
        stdout.contains(&format!("variant synthetic-a: {} entries", 30 * (29 + 13))),
        "{stdout}"
    );
    assert!(dir.path().join("work/embeddings/synthetic-a.pkemb").is_file());

    let eval = run_in(dir.path(), &["evaluate"]);
    assert!(eval.status.success(), "evaluate: {}", stderr_of(&eval));
    let stdout = String::from_utf8_lossy(&eval.stdout);
    assert!(stdout.contains("variant synthetic-a: pooling=avg"), "{stdout}");
    assert!(stdout.contains("gk_baseline"), "{stdout}");
    let metrics = std::fs::read_to_string(dir.path().join("work/metrics.csv")).unwrap();
    assert!(metrics.starts_with("variant,pooling,fold,accuracy,precision_macro,recall_macro,f1_macro\n"));
    assert!(metrics.contains("synthetic-a,avg,0,"));
    assert!(metrics.contains("synthetic-a,avg,mean,"));
    assert!(metrics.contains("synthetic-a,avg,pooled,"));
    assert!(metrics.contains("gk_baseline,-,pooled,"));
    assert!(dir.path().join("work/confusion.txt").is_file());

    let rep = run_in(dir.path(), &["report"]);
    assert!(rep.status.success(), "report: {}", stderr_of(&rep));
    let dist = std::fs::read_to_string(dir.path().join("work/distribution.csv")).unwrap();
    assert!(dist.starts_with("family,metric,variants,min,q1,median,q3,max,best_accuracy,outliers\n"));
    assert!(dist.contains("synthetic-a,accuracy,1,"));
}

#[test]
fn preprocess_reports_failing_clip_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 3);
    std::fs::remove_file(dir.path().join("boxes/pk0002.csv")).unwrap();

    let pre = run_in(dir.path(), &["preprocess"]);
    assert_eq!(pre.status.code(), Some(1));
    let stderr = stderr_of(&pre);
    assert!(stderr.contains("error: clip pk0002"), "{stderr}");
    // the other clips still produced output
    assert!(dir.path().join("work/preprocessed/pk0000/run/000.png").is_file());
    assert!(dir.path().join("work/preprocessed/pk0005/kick/000.png").is_file());
}

#[test]
fn evaluate_without_cache_names_expected_path() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 10);
    let eval = run_in(dir.path(), &["evaluate"]);
    assert_eq!(eval.status.code(), Some(1));
    let stderr = stderr_of(&eval);
    assert!(stderr.contains("error:"), "{stderr}");
    assert!(stderr.contains("synthetic-a.pkemb"), "{stderr}");
    assert!(stderr.contains("spotkick embed"), "{stderr}");
}

#[test]
fn report_without_metrics_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 10);
    let rep = run_in(dir.path(), &["report"]);
    assert_eq!(rep.status.code(), Some(1));
    assert!(stderr_of(&rep).contains("spotkick evaluate"));
}

#[test]
fn malformed_manifest_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 3);
    let manifest = dir.path().join("manifest.csv");
    let mut text = std::fs::read_to_string(&manifest).unwrap();
    text = text.replace("left", "middle");
    std::fs::write(&manifest, text).unwrap();

    let pre = run_in(dir.path(), &["preprocess"]);
    assert_eq!(pre.status.code(), Some(1));
    let stderr = stderr_of(&pre);
    assert!(stderr.contains("error:"), "{stderr}");
    assert!(stderr.contains("middle"), "{stderr}");
}

#[test]
fn flag_overrides_regime_and_pooling() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 12);
    assert!(run_in(dir.path(), &["preprocess"]).status.success());
    assert!(run_in(dir.path(), &["embed"]).status.success());
    let eval = run_in(dir.path(), &["evaluate", "--pooling", "max", "--folds-ignored"]);
    // unknown flag is a clap error, not silently ignored
    assert!(!eval.status.success());
    let eval = run_in(dir.path(), &["evaluate", "--pooling", "max"]);
    assert!(eval.status.success(), "{}", stderr_of(&eval));
    let metrics = std::fs::read_to_string(dir.path().join("work/metrics.csv")).unwrap();
    assert!(metrics.contains("synthetic-a,max,pooled,"), "{metrics}");
}
