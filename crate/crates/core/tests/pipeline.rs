//! End-to-end pipeline behavior on a small benchmark corpus: stage wiring,
//! manifest idempotence, dry-run semantics, and split integrity.

use std::collections::BTreeMap;
use std::path::Path;

use augforge::corpus::{BenchmarkSpec, DatasetFormat};
use augforge::eval::Strategy;
use augforge::pipeline::{load_config, hash_file, PipelineError, RunConfig, Runner};

fn small_spec() -> BenchmarkSpec {
    let mut spec = BenchmarkSpec::cart_default();
    spec.n_total = 220;
    for c in &mut spec.categories {
        c.minority_count = match c.id {
            5 | 7 => 12,  // ratio ~17, flagged
            6 | 9 => 10,  // ratio ~21, flagged
            2 => 100,
            _ => 40,
        };
        c.signal_sentences = (4, 7);
    }
    spec
}

fn write_config(dir: &Path, strategies: &[&str], extra: &str) -> std::path::PathBuf {
    let body = format!(
        r#"seed = 42
out_dir = {out:?}
strategies = [{strategies}]

[dataset]
path = {data:?}
format = "jsonl"

[features]
min_df = 2

[classifier]
learning_rate = 0.5
epochs = 300

[ease]
min_confidence = 0.7

[alp]
target_ratio = 1.5

{extra}
"#,
        out = dir.join("out").display().to_string(),
        data = dir.join("bench.jsonl").display().to_string(),
        strategies = strategies
            .iter()
            .map(|s| format!("{s:?}"))
            .collect::<Vec<_>>()
            .join(", "),
    );
    // Splice the benchmark spec in as a value tree so its array-of-tables
    // lands under the `benchmark` key.
    let mut value: toml::Table = body.parse().unwrap();
    value.insert("benchmark".to_string(), toml::Value::try_from(small_spec()).unwrap());
    let path = dir.join("run.toml");
    std::fs::write(&path, toml::to_string(&value).unwrap()).unwrap();
    path
}

fn make_runner(config_path: &Path) -> Runner {
    let (config, hash) = load_config(config_path).unwrap();
    Runner::new(config, hash).unwrap()
}

fn gen_dataset(config_path: &Path) {
    // Bypass validation (the dataset does not exist yet).
    let (config, _) = load_config(config_path).unwrap();
    let corpus =
        augforge::corpus::generate_benchmark_corpus(config.benchmark.as_ref().unwrap(), config.seed)
            .unwrap();
    augforge::corpus::write_dataset(&corpus, &config.dataset.path, DatasetFormat::Jsonl).unwrap();
}

#[test]
fn analyze_flags_severe_categories_and_renders_inf() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["baseline"], "");
    gen_dataset(&config_path);
    let runner = make_runner(&config_path);
    let report = runner.cmd_analyze().unwrap();
    assert_eq!(report.flagged, vec![5, 6, 7, 9]);
    // Rows sorted by ratio descending.
    let ratios: Vec<f64> = report.rows.iter().map(|r| r.profile.ratio).collect();
    for pair in ratios.windows(2) {
        assert!(pair[0] >= pair[1]);
    }
    assert!(report.text.contains("flagged (ratio > 10): 5, 6, 7, 9"));
}

#[test]
fn analyze_renders_infinite_ratio_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["baseline"], "");
    // Zero minority for category 11.
    let (mut config, _) = load_config(&config_path).unwrap();
    if let Some(spec) = &mut config.benchmark {
        spec.categories.iter_mut().find(|c| c.id == 11).unwrap().minority_count = 0;
        let corpus = augforge::corpus::generate_benchmark_corpus(spec, 1).unwrap();
        augforge::corpus::write_dataset(&corpus, &config.dataset.path, DatasetFormat::Jsonl).unwrap();
    }
    let runner = Runner::new(config, "adhoc".into()).unwrap();
    let report = runner.cmd_analyze().unwrap();
    assert!(report.text.contains("inf"));
    assert!(report.flagged.contains(&11));
}

#[test]
fn full_pipeline_produces_artifacts_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["baseline", "smote", "ease", "alp"], "");
    gen_dataset(&config_path);
    let runner = make_runner(&config_path);
    let summary = runner.cmd_pipeline().unwrap();

    let out = dir.path().join("out");
    for rel in [
        "manifest.json",
        "analyze/imbalance.txt",
        "split/train.jsonl",
        "split/test.jsonl",
        "augment/smote/cat5.synthetic.jsonl",
        "augment/smote/vocab.jsonl",
        "augment/ease/cat5.jsonl",
        "augment/ease/cat5.audit.jsonl",
        "augment/alp/cat5.jsonl",
        "augment/alp/cat5.audit.jsonl",
        "evaluate/comparison.txt",
        "evaluate/comparison.csv",
        "evaluate/metrics.json",
    ] {
        assert!(out.join(rel).exists(), "missing artifact {rel}");
    }
    assert!(summary.comparison.csv.contains("baseline"));

    // Idempotence: re-running leaves every artifact hash untouched.
    let before = summary.artifact_hashes.clone();
    let before_mtime = std::fs::metadata(out.join("augment/ease/cat5.jsonl"))
        .unwrap()
        .modified()
        .unwrap();
    let summary2 = make_runner(&config_path).cmd_pipeline().unwrap();
    assert_eq!(before, summary2.artifact_hashes);
    let after_mtime = std::fs::metadata(out.join("augment/ease/cat5.jsonl"))
        .unwrap()
        .modified()
        .unwrap();
    assert_eq!(before_mtime, after_mtime, "stage was rerun despite unchanged inputs");
}

#[test]
fn augmentation_never_touches_test_split_and_traces_parents() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["baseline", "ease", "alp"], "");
    gen_dataset(&config_path);
    let runner = make_runner(&config_path);
    runner.cmd_pipeline().unwrap();

    let out = dir.path().join("out");
    let test = augforge::corpus::load_dataset(&out.join("split/test.jsonl"), DatasetFormat::Jsonl).unwrap();
    let test_ids: std::collections::HashSet<String> = test.ids().map(str::to_owned).collect();
    let train = augforge::corpus::load_dataset(&out.join("split/train.jsonl"), DatasetFormat::Jsonl).unwrap();
    let train_ids: std::collections::HashSet<String> = train.ids().map(str::to_owned).collect();

    for strategy in ["ease", "alp"] {
        for cat in [5u16, 6, 7, 9] {
            let path = out.join(format!("augment/{strategy}/cat{cat}.jsonl"));
            let corpus = augforge::corpus::load_dataset(&path, DatasetFormat::Jsonl).unwrap();
            for r in corpus.responses() {
                assert!(!test_ids.contains(&r.id), "{strategy} cat{cat} contains test row {}", r.id);
                if r.origin != augforge::corpus::Origin::Human {
                    assert!(!r.parent_ids.is_empty());
                    for p in &r.parent_ids {
                        assert!(train_ids.contains(p), "parent {p} not in train split");
                    }
                }
            }
        }
    }
}

#[test]
fn tampered_test_split_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["baseline"], "");
    gen_dataset(&config_path);
    let runner = make_runner(&config_path);
    runner.cmd_split().unwrap();
    // Tamper with the persisted test split between stages.
    let test_path = dir.path().join("out/split/test.jsonl");
    let mut content = std::fs::read_to_string(&test_path).unwrap();
    content.push_str("\n");
    let mut lines: Vec<&str> = content.lines().collect();
    lines.pop();
    std::fs::write(&test_path, lines.join("\n")).unwrap();
    let err = runner.cmd_evaluate(&[Strategy::Baseline]).unwrap_err();
    assert!(matches!(err, PipelineError::SplitIntegrity(_)), "got {err}");
}

#[test]
fn llm_dry_run_emits_prompts_without_ingesting() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "[llm]\ndry_run = true\nanswers_per_call = 5\n";
    let config_path = write_config(dir.path(), &["baseline", "llm"], extra);
    gen_dataset(&config_path);
    let runner = make_runner(&config_path);
    runner.cmd_augment(Strategy::Llm).unwrap();

    let out = dir.path().join("out");
    let audit = std::fs::read_to_string(out.join("augment/llm/cat5.audit.jsonl")).unwrap();
    assert!(audit.contains("\"dry_run\":true"));
    assert!(audit.contains("prompt_sha256"));
    // The corpus equals the train split: nothing ingested.
    let merged =
        augforge::corpus::load_dataset(&out.join("augment/llm/cat5.jsonl"), DatasetFormat::Jsonl).unwrap();
    let train =
        augforge::corpus::load_dataset(&out.join("split/train.jsonl"), DatasetFormat::Jsonl).unwrap();
    assert_eq!(merged.len(), train.len());
    assert!(merged.responses().iter().all(|r| r.origin == augforge::corpus::Origin::Human));
}

#[test]
fn changed_seed_invalidates_manifest_and_changes_split() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["baseline"], "");
    gen_dataset(&config_path);
    let runner = make_runner(&config_path);
    runner.cmd_split().unwrap();
    let h1 = hash_file(&dir.path().join("out/split/train.jsonl")).unwrap();
    let (config, hash) = load_config(&config_path).unwrap();
    let mut runner2 = Runner::new(config, hash).unwrap();
    runner2.set_seed(43);
    runner2.cmd_split().unwrap();
    let h2 = hash_file(&dir.path().join("out/split/train.jsonl")).unwrap();
    assert_ne!(h1, h2);
}

#[test]
fn evaluate_without_augment_artifacts_fails_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["baseline", "ease"], "");
    gen_dataset(&config_path);
    let runner = make_runner(&config_path);
    let err = runner.cmd_evaluate(&[Strategy::Baseline, Strategy::Ease]).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("run augment first"), "got: {message}");
}

#[test]
fn config_hash_round_trips_through_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["baseline"], "");
    gen_dataset(&config_path);
    let (config, hash) = load_config(&config_path).unwrap();
    let out_dir = config.out_dir.clone();
    let runner = Runner::new(config, hash.clone()).unwrap();
    runner.cmd_analyze().unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"].as_str().unwrap(), hash);
    assert_eq!(manifest["seed"].as_u64().unwrap(), 42);

    // A byte-identical re-read hashes identically.
    let (_, hash2) = load_config(&config_path).unwrap();
    assert_eq!(hash, hash2);
}

#[test]
fn gen_benchmark_respects_config_spec() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["baseline"], "");
    let (config, hash) = load_config(&config_path).unwrap();
    // cmd_gen_benchmark validates the config, which requires the dataset to
    // exist; write a placeholder first.
    std::fs::write(&config.dataset.path, "placeholder").unwrap();
    let runner = Runner::new(config.clone(), hash).unwrap();
    let n = runner.cmd_gen_benchmark(&config.dataset.path).unwrap();
    assert_eq!(n, 220);
    let corpus = augforge::corpus::load_dataset(&config.dataset.path, DatasetFormat::Jsonl).unwrap();
    assert_eq!(corpus.len(), 220);
}

#[test]
fn strategy_corpora_are_separate_files_per_category() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = write_config(dir.path(), &["ease"], "");
    gen_dataset(&config_path);
    let runner = make_runner(&config_path);
    runner.cmd_augment(Strategy::Ease).unwrap();
    let out = dir.path().join("out");
    let mut per_cat: BTreeMap<u16, usize> = BTreeMap::new();
    for cat in [5u16, 6, 7, 9] {
        let corpus = augforge::corpus::load_dataset(
            &out.join(format!("augment/ease/cat{cat}.jsonl")),
            DatasetFormat::Jsonl,
        )
        .unwrap();
        // Synthetic rows in this file target only this category.
        for r in corpus.responses() {
            if r.origin == augforge::corpus::Origin::Ease {
                assert_eq!(r.label(cat), Some(1));
                for other in [5u16, 6, 7, 9] {
                    if other != cat {
                        assert_eq!(r.label(other), Some(0));
                    }
                }
            }
        }
        per_cat.insert(cat, corpus.len());
    }
    assert_eq!(per_cat.len(), 4);
}
