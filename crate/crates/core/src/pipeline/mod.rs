//! Config-driven orchestration: analyze imbalance, split, run augmentation
//! strategies on the train split only, train per-category labelers, and emit
//! comparison reports — all reproducible from one config file and one seed,
//! with every artifact hash-chained in the run manifest.

mod config;
mod manifest;

pub use config::{
    load_config, AlpConfig, AnalyzeConfig, ClassifierConfig, ConfigError, DatasetConfig,
    EaseConfig, FeatureConfig, LlmStrategyConfig, ReportConfig, RunConfig, SmoteConfig,
    SplitConfig,
};
pub use manifest::{hash_file, write_artifact, ManifestError, RunManifest, StageRecord, StageState};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::alp::{self, AlpParams};
use crate::classifier::{self, Labeler, LogRegLabeler};
use crate::corpus::{
    generate_benchmark_corpus, load_dataset, BenchmarkSpec, CategoryId, Corpus, CorpusError,
    ImbalanceProfile, SplitSpec,
};
use crate::ease::{self, SiftParams};
use crate::eval::{
    compare_report, split_fingerprint, ComparisonReport, ConfusionCounts, EvalError,
    MetricsReport, Strategy,
};
use crate::features::{tfidf_batch, tfidf_vector, FeatureVector, Vocabulary};
use crate::llm::{self, CallAudit, Exemplar, LlmClient};
use crate::rng::{derive_rng, sha256_hex};
use crate::smote::{self, SmoteParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("[{stage}] {message}")]
    Stage { stage: String, message: String },
    #[error("test split integrity: {0}")]
    SplitIntegrity(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn stage_err(stage: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage: stage.to_string(),
        message: e.to_string(),
    }
}

/// One imbalance row of the analyze report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AnalyzeRow {
    #[serde(flatten)]
    pub profile: ImbalanceProfile,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    /// Rows sorted by ratio descending (infinite first).
    pub rows: Vec<AnalyzeRow>,
    pub flagged: Vec<CategoryId>,
    pub text: String,
}

/// Drives a whole run from a validated config.
pub struct Runner {
    config: RunConfig,
    config_hash: String,
}

impl Runner {
    pub fn new(config: RunConfig, config_hash: String) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self { config, config_hash })
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let (config, hash) = load_config(path)?;
        Self::new(config, hash)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Override the seed (CLI `--seed`).
    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
    }

    /// Override the output directory (CLI `--out`).
    pub fn set_out_dir(&mut self, out_dir: PathBuf) {
        self.config.out_dir = out_dir;
    }

    /// Force LLM dry-run mode (CLI `--dry-run`).
    pub fn set_dry_run(&mut self, dry_run: bool) {
        self.config.llm.dry_run = dry_run;
    }

    fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    fn manifest(&self) -> Result<RunManifest, PipelineError> {
        std::fs::create_dir_all(self.out_dir()).map_err(|e| stage_err("init", e))?;
        Ok(RunManifest::load_or_new(
            self.out_dir(),
            &self.config_hash,
            self.config.seed,
        )?)
    }

    fn load_full_dataset(&self) -> Result<Corpus, PipelineError> {
        Ok(load_dataset(&self.config.dataset.path, self.config.dataset.format)?)
    }

    /// Flagged categories from the full-dataset profile (stable across
    /// split seeds). Explicit config lists override the flag rule.
    fn targeted_categories(
        &self,
        full: &Corpus,
        requested: &Option<Vec<CategoryId>>,
    ) -> Result<Vec<CategoryId>, PipelineError> {
        match requested {
            Some(list) => {
                for &c in list {
                    if !full.schema().contains(c) {
                        return Err(stage_err("augment", format!("category {c} not in schema")));
                    }
                }
                Ok(list.clone())
            }
            None => Ok(full
                .profile_all()
                .into_iter()
                .filter(|p| p.ratio > self.config.analyze.flag_threshold)
                .map(|p| p.category)
                .collect()),
        }
    }

    /// Generate the benchmark corpus (config `[benchmark]` block, or the
    /// bundled cart spec) and write it as JSONL to `path`.
    pub fn cmd_gen_benchmark(&self, path: &Path) -> Result<usize, PipelineError> {
        let spec = self
            .config
            .benchmark
            .clone()
            .unwrap_or_else(BenchmarkSpec::cart_default);
        let corpus = generate_benchmark_corpus(&spec, self.config.seed)
            .map_err(|e| stage_err("gen-benchmark", e))?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| stage_err("gen-benchmark", e))?;
        }
        crate::corpus::write_dataset(&corpus, path, crate::corpus::DatasetFormat::Jsonl)?;
        Ok(corpus.len())
    }

    /// Profile every category of the full dataset, sorted by ratio
    /// descending, flagging those above the threshold.
    pub fn cmd_analyze(&self) -> Result<AnalyzeReport, PipelineError> {
        let corpus = self.load_full_dataset()?;
        let mut manifest = self.manifest()?;
        let dataset_hash = hash_file(&self.config.dataset.path)?;
        let inputs: BTreeMap<String, String> = [("dataset".to_string(), dataset_hash)].into();

        let mut rows: Vec<AnalyzeRow> = corpus
            .profile_all()
            .into_iter()
            .map(|profile| AnalyzeRow {
                flagged: profile.ratio > self.config.analyze.flag_threshold,
                profile,
            })
            .collect();
        rows.sort_by(|a, b| {
            b.profile
                .ratio
                .partial_cmp(&a.profile.ratio)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.profile.category.cmp(&b.profile.category))
        });
        let flagged: Vec<CategoryId> = {
            let mut f: Vec<CategoryId> = rows
                .iter()
                .filter(|r| r.flagged)
                .map(|r| r.profile.category)
                .collect();
            f.sort_unstable();
            f
        };

        let mut text = format!(
            "{:<10} {:>10} {:>10} {:>9} {:>10} {:>8}\n",
            "category", "majority", "minority", "min-label", "ratio", "flagged"
        );
        let mut csv = String::from("category,n_majority,n_minority,minority_label,ratio,flagged\n");
        for row in &rows {
            let p = &row.profile;
            text.push_str(&format!(
                "{:<10} {:>10} {:>10} {:>9} {:>10} {:>8}\n",
                p.category,
                p.n_majority,
                p.n_minority,
                p.minority_label,
                p.ratio_display(),
                if row.flagged { "*" } else { "" }
            ));
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.category,
                p.n_majority,
                p.n_minority,
                p.minority_label,
                p.ratio_display(),
                row.flagged
            ));
        }
        text.push_str(&format!(
            "\nflagged (ratio > {}): {}\n",
            self.config.analyze.flag_threshold,
            if flagged.is_empty() {
                "none".to_string()
            } else {
                flagged.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
            }
        ));

        if !manifest.stage_is_current(self.out_dir(), "analyze", &inputs) {
            manifest.stage_begin(self.out_dir(), "analyze", inputs)?;
            let mut outputs = BTreeMap::new();
            for (rel, body) in [("analyze/imbalance.txt", &text), ("analyze/imbalance.csv", &csv)] {
                let (rel, hash) = write_artifact(self.out_dir(), rel, body.as_bytes())?;
                outputs.insert(rel, hash);
            }
            manifest.stage_finish(self.out_dir(), "analyze", outputs, vec![])?;
        }
        Ok(AnalyzeReport { rows, flagged, text })
    }

    /// Deterministic train/test split, persisted under `split/`.
    pub fn cmd_split(&self) -> Result<(Corpus, Corpus), PipelineError> {
        let corpus = self.load_full_dataset()?;
        let mut manifest = self.manifest()?;
        let dataset_hash = hash_file(&self.config.dataset.path)?;
        let inputs: BTreeMap<String, String> = [("dataset".to_string(), dataset_hash)].into();
        let spec = SplitSpec {
            train_fraction: self.config.split.train_fraction,
            seed: self.config.seed,
            stratify_by: self.config.split.stratify_by,
        };
        let (train, test) = corpus.split(&spec)?;
        match manifest.stage_state(self.out_dir(), "split", &inputs) {
            StageState::Current => {}
            StageState::OutputsTampered => {
                return Err(PipelineError::SplitIntegrity(
                    "persisted split files no longer match the manifest hashes".into(),
                ));
            }
            StageState::Missing | StageState::Stale => {
                manifest.stage_begin(self.out_dir(), "split", inputs)?;
                let mut outputs = BTreeMap::new();
                for (rel, part) in [("split/train.jsonl", &train), ("split/test.jsonl", &test)] {
                    let (rel, hash) = write_artifact(self.out_dir(), rel, &corpus_jsonl(part))?;
                    outputs.insert(rel, hash);
                }
                manifest.stage_finish(self.out_dir(), "split", outputs, vec![])?;
            }
        }
        Ok((train, test))
    }

    /// Run one augmentation strategy over its targeted categories, writing
    /// per-category corpora and audits. The train split is the only input
    /// ever augmented.
    pub fn cmd_augment(&self, strategy: Strategy) -> Result<(), PipelineError> {
        if strategy == Strategy::Baseline {
            log::info!("augment: baseline needs no augmentation");
            return Ok(());
        }
        let stage = format!("augment/{strategy}");
        let full = self.load_full_dataset()?;
        let (train, _test) = self.cmd_split()?;
        let mut manifest = self.manifest()?;
        let train_hash = hash_file(&self.out_dir().join("split/train.jsonl"))?;
        let inputs: BTreeMap<String, String> = [("train".to_string(), train_hash)].into();
        if manifest.stage_is_current(self.out_dir(), &stage, &inputs) {
            log::info!("{stage}: up to date, skipping");
            return Ok(());
        }
        manifest.stage_begin(self.out_dir(), &stage, inputs)?;
        let mut outputs = BTreeMap::new();
        let mut warnings = Vec::new();
        match strategy {
            Strategy::Smote => self.augment_smote(&full, &train, &mut outputs, &mut warnings)?,
            Strategy::Ease => self.augment_ease(&full, &train, &mut outputs, &mut warnings)?,
            Strategy::Alp => self.augment_alp(&full, &train, &mut outputs, &mut warnings)?,
            Strategy::Llm => self.augment_llm(&full, &train, &mut outputs, &mut warnings)?,
            Strategy::Baseline | Strategy::Ft => unreachable!("not runnable strategies"),
        }
        manifest.stage_finish(self.out_dir(), &stage, outputs, warnings)?;
        Ok(())
    }

    fn augment_smote(
        &self,
        full: &Corpus,
        train: &Corpus,
        outputs: &mut BTreeMap<String, String>,
        warnings: &mut Vec<String>,
    ) -> Result<(), PipelineError> {
        let stage = "augment/smote";
        let categories = self.targeted_categories(full, &self.config.smote.categories)?;
        let vocab =
            Vocabulary::fit(train, self.config.features.to_params()).map_err(|e| stage_err(stage, e))?;
        let vocab_path = self.out_dir().join("augment/smote/vocab.jsonl");
        std::fs::create_dir_all(vocab_path.parent().unwrap()).map_err(|e| stage_err(stage, e))?;
        vocab.save(&vocab_path).map_err(|e| stage_err(stage, e))?;
        outputs.insert("augment/smote/vocab.jsonl".to_string(), hash_file(&vocab_path)?);
        let texts: Vec<&str> = train.responses().iter().map(|r| r.text.as_str()).collect();
        let vectors = tfidf_batch(&texts, &vocab);
        let ids: Vec<String> = train.responses().iter().map(|r| r.id.clone()).collect();

        type SmoteResult = Result<(CategoryId, smote::SmoteOutcome), String>;
        let results: Vec<SmoteResult> = crate::exec::map_collect(&categories, |&category| {
            let profile = train.profile(category).map_err(|e| e.to_string())?;
            let mask: Vec<bool> = train
                .responses()
                .iter()
                .map(|r| r.label(category) == Some(profile.minority_label))
                .collect();
            let params = SmoteParams {
                k: self.config.smote.k,
                target_ratio: self.config.smote.target_ratio,
                seed: self.config.seed,
            };
            smote::smote_balance(&ids, &vectors, &mask, category, &params)
                .map(|out| (category, out))
                .map_err(|e| format!("category {category}: {e}"))
        });
        for result in results {
            let (category, outcome) = result.map_err(|e| stage_err(stage, e))?;
            if let Some(k) = outcome.clamped_k {
                warnings.push(format!("category {category}: k clamped to {k}"));
            }
            let rel = format!("augment/smote/cat{category}.synthetic.jsonl");
            let (rel, hash) =
                write_artifact(self.out_dir(), &rel, smote::audit_jsonl(&outcome.synthetic).as_bytes())?;
            outputs.insert(rel, hash);
        }
        Ok(())
    }

    fn augment_ease(
        &self,
        full: &Corpus,
        train: &Corpus,
        outputs: &mut BTreeMap<String, String>,
        warnings: &mut Vec<String>,
    ) -> Result<(), PipelineError> {
        let stage = "augment/ease";
        let categories = self.targeted_categories(full, &self.config.ease.categories)?;
        let vocab =
            Vocabulary::fit(train, self.config.features.to_params()).map_err(|e| stage_err(stage, e))?;
        let texts: Vec<&str> = train.responses().iter().map(|r| r.text.as_str()).collect();
        let vectors = tfidf_batch(&texts, &vocab);
        let sift_params = SiftParams {
            min_tokens: self.config.ease.min_tokens,
            min_confidence: self.config.ease.min_confidence,
            dedup: self.config.ease.dedup,
        };

        type EaseResult = Result<(CategoryId, ease::EaseOutcome), String>;
        let results: Vec<EaseResult> = crate::exec::map_collect(&categories, |&category| {
            // Acquire labeler: trained on the pre-augmentation train split.
            let labels: Vec<u8> = train
                .responses()
                .iter()
                .map(|r| r.label(category).unwrap_or(0))
                .collect();
            let labeler_params = self
                .config
                .ease
                .resolved_labeler(self.config.classifier)
                .to_params();
            let mut labeler = LogRegLabeler::new(labeler_params, self.config.seed);
            labeler
                .train(&vectors, &labels)
                .map_err(|e| format!("category {category}: acquire labeler: {e}"))?;
            ease::ease_run(
                train,
                category,
                &labeler,
                &vocab,
                &sift_params,
                self.config.ease.target_ratio,
            )
            .map(|out| (category, out))
            .map_err(|e| format!("category {category}: {e}"))
        });
        for result in results {
            let (category, outcome) = result.map_err(|e| stage_err(stage, e))?;
            if let Some(w) = &outcome.shortfall {
                warnings.push(w.clone());
            }
            let rel = format!("augment/ease/cat{category}.jsonl");
            let (rel, hash) = write_artifact(self.out_dir(), &rel, &corpus_jsonl(&outcome.merged))?;
            outputs.insert(rel, hash);
            let rel = format!("augment/ease/cat{category}.audit.jsonl");
            let (rel, hash) =
                write_artifact(self.out_dir(), &rel, ease::audit_jsonl(&outcome.audit).as_bytes())?;
            outputs.insert(rel, hash);
        }
        Ok(())
    }

    fn alp_assets(&self) -> Result<(alp::Grammar, alp::SynonymLexicon), PipelineError> {
        let grammar = match &self.config.alp.treebank {
            Some(path) => {
                let content =
                    std::fs::read_to_string(path).map_err(|e| stage_err("augment/alp", e))?;
                let trees = alp::read_treebank(&content).map_err(|e| stage_err("augment/alp", e))?;
                alp::induce_pcfg(&trees).map_err(|e| stage_err("augment/alp", e))?
            }
            None => alp::bundled_grammar(),
        };
        let lexicon = match &self.config.alp.lexicon {
            Some(path) => alp::SynonymLexicon::load(path).map_err(|e| stage_err("augment/alp", e))?,
            None => alp::bundled_lexicon(),
        };
        let violations = lexicon.audit_forbidden_pairs(alp::FORBIDDEN_PAIRS);
        if !violations.is_empty() {
            return Err(stage_err(
                "augment/alp",
                format!("lexicon links label-flipping pairs: {violations:?}"),
            ));
        }
        Ok((grammar, lexicon))
    }

    fn augment_alp(
        &self,
        full: &Corpus,
        train: &Corpus,
        outputs: &mut BTreeMap<String, String>,
        warnings: &mut Vec<String>,
    ) -> Result<(), PipelineError> {
        let stage = "augment/alp";
        let categories = self.targeted_categories(full, &self.config.alp.categories)?;
        let (grammar, lexicon) = self.alp_assets()?;
        let params = AlpParams {
            subtree_prob_threshold: self.config.alp.subtree_prob_threshold,
            max_swaps: self.config.alp.max_swaps,
            synonym_rate: self.config.alp.synonym_rate,
            seed: self.config.seed,
        };

        type AlpResult = Result<(CategoryId, alp::AlpOutcome), String>;
        let results: Vec<AlpResult> = crate::exec::map_collect(&categories, |&category| {
            let profile = train.profile(category).map_err(|e| e.to_string())?;
            let n_target = match &self.config.alp.n_targets {
                Some(map) => map.get(&category.to_string()).copied().unwrap_or(0),
                None => {
                    let want =
                        (profile.n_majority as f64 / self.config.alp.target_ratio).ceil() as usize;
                    want.saturating_sub(profile.n_minority)
                }
            };
            alp::alp_augment(train, category, &grammar, &lexicon, &params, n_target)
                .map(|out| (category, out))
                .map_err(|e| format!("category {category}: {e}"))
        });
        for result in results {
            let (category, outcome) = result.map_err(|e| stage_err(stage, e))?;
            if let Some(w) = &outcome.shortfall {
                warnings.push(w.clone());
            }
            let rel = format!("augment/alp/cat{category}.jsonl");
            let (rel, hash) = write_artifact(self.out_dir(), &rel, &corpus_jsonl(&outcome.merged))?;
            outputs.insert(rel, hash);
            let rel = format!("augment/alp/cat{category}.audit.jsonl");
            let (rel, hash) =
                write_artifact(self.out_dir(), &rel, alp::audit_jsonl(&outcome.audit).as_bytes())?;
            outputs.insert(rel, hash);
        }
        Ok(())
    }

    fn augment_llm(
        &self,
        full: &Corpus,
        train: &Corpus,
        outputs: &mut BTreeMap<String, String>,
        warnings: &mut Vec<String>,
    ) -> Result<(), PipelineError> {
        let stage = "augment/llm";
        let cfg = &self.config.llm;
        let categories = self.targeted_categories(full, &cfg.categories)?;
        let client = if cfg.dry_run {
            None
        } else {
            Some(LlmClient::new(cfg.client_config()).map_err(|e| stage_err(stage, e))?)
        };

        for category in categories {
            let profile = train.profile(category).map_err(|e| stage_err(stage, e))?;
            let fallback = || {
                llm::target_for_threshold(profile.n_majority, cfg.ratio_threshold)
                    .max(profile.n_minority)
            };
            let target = match &cfg.targets {
                Some(map) => map.get(&category.to_string()).copied().unwrap_or_else(fallback),
                None => fallback(),
            };
            let plan = llm::plan_generation(category, profile.n_majority, profile.n_minority, target)
                .map_err(|e| stage_err(stage, format!("category {category}: {e}")))?;
            let minority_pool: Vec<Exemplar> = train
                .responses()
                .iter()
                .filter(|r| r.label(category) == Some(profile.minority_label))
                .map(|r| Exemplar {
                    id: r.id.clone(),
                    text: r.text.clone(),
                })
                .collect();
            if minority_pool.len() < 2 && plan.n_to_generate > 0 {
                return Err(stage_err(
                    stage,
                    format!("category {category}: need at least 2 minority exemplars"),
                ));
            }
            let mut rng = derive_rng(self.config.seed, &format!("llm/cat{category}"));
            let mut call_audits: Vec<CallAudit> = Vec::new();
            let mut ingest_audits: Vec<llm::IngestRecord> = Vec::new();
            let mut merged = train.clone();
            let mut accepted_total = 0usize;
            let per_call = cfg.answers_per_call.max(1);
            let planned_calls = plan.n_to_generate.div_ceil(per_call);
            let max_calls = planned_calls * 2 + 2;
            let mut calls = 0usize;
            while accepted_total < plan.n_to_generate && calls < max_calls {
                calls += 1;
                let remaining = plan.n_to_generate - accepted_total;
                let a = rng.random_range(0..minority_pool.len());
                let mut b = rng.random_range(0..minority_pool.len());
                if b == a {
                    b = (b + 1) % minority_pool.len();
                }
                let exemplars = vec![minority_pool[a].clone(), minority_pool[b].clone()];
                let spec = llm::PromptSpec::new(&cfg.item_stem, exemplars.clone(), remaining.min(per_call))
                    .map_err(|e| stage_err(stage, e))?;
                let prompt = llm::build_prompt(&spec);
                let Some(client) = &client else {
                    call_audits.push(CallAudit {
                        category,
                        prompt_sha256: sha256_hex(prompt.as_bytes()),
                        raw_completion: String::new(),
                        parsed_texts: vec![],
                        parse_failed: false,
                        dry_run: true,
                    });
                    // Dry run: emit the planned prompts, ingest nothing.
                    if calls >= planned_calls {
                        break;
                    }
                    continue;
                };
                let batch = client
                    .request_generations(&prompt)
                    .map_err(|e| stage_err(stage, format!("category {category}: {e}")))?;
                call_audits.push(CallAudit {
                    category,
                    prompt_sha256: sha256_hex(prompt.as_bytes()),
                    raw_completion: batch.raw.clone(),
                    parsed_texts: batch.texts.clone(),
                    parse_failed: batch.parse_failed,
                    dry_run: false,
                });
                if batch.parse_failed {
                    continue;
                }
                let current_minority = profile.n_minority + accepted_total;
                let sub_plan = llm::plan_generation(
                    category,
                    profile.n_majority,
                    current_minority,
                    current_minority + remaining,
                )
                .map_err(|e| stage_err(stage, e))?;
                let out = llm::validate_and_ingest(
                    &batch.texts,
                    &merged,
                    category,
                    &sub_plan,
                    &exemplars,
                    profile.minority_label,
                    accepted_total,
                )
                .map_err(|e| stage_err(stage, format!("category {category}: {e}")))?;
                accepted_total += out.accepted.len();
                merged = out.merged;
                ingest_audits.extend(out.audit);
            }
            if cfg.dry_run {
                warnings.push(format!(
                    "category {category}: dry run, emitted {} prompts, ingested nothing",
                    call_audits.len()
                ));
            } else if accepted_total < plan.n_to_generate {
                warnings.push(format!(
                    "category {category}: ingested {accepted_total} of {} planned responses",
                    plan.n_to_generate
                ));
            }
            let rel = format!("augment/llm/cat{category}.jsonl");
            let (rel, hash) = write_artifact(self.out_dir(), &rel, &corpus_jsonl(&merged))?;
            outputs.insert(rel, hash);
            let mut audit_body = String::new();
            audit_body.push_str(&serde_json::to_string(&plan).expect("plan serializes"));
            audit_body.push('\n');
            for a in &call_audits {
                audit_body.push_str(&serde_json::to_string(a).expect("call audit serializes"));
                audit_body.push('\n');
            }
            for a in &ingest_audits {
                audit_body.push_str(&serde_json::to_string(a).expect("ingest audit serializes"));
                audit_body.push('\n');
            }
            let rel = format!("augment/llm/cat{category}.audit.jsonl");
            let (rel, hash) = write_artifact(self.out_dir(), &rel, audit_body.as_bytes())?;
            outputs.insert(rel, hash);
        }
        Ok(())
    }

    /// Train one labeler per category per strategy on that strategy's train
    /// corpus and evaluate everything on the shared held-out test split.
    pub fn cmd_evaluate(&self, strategies: &[Strategy]) -> Result<ComparisonReport, PipelineError> {
        let stage = "evaluate";
        let full = self.load_full_dataset()?;
        let (train, test) = self.cmd_split()?;
        let mut manifest = self.manifest()?;

        // Integrity: the persisted test split must match what we computed.
        let test_rel = "split/test.jsonl";
        let recorded = manifest
            .stages
            .get("split")
            .and_then(|s| s.outputs.get(test_rel))
            .cloned()
            .ok_or_else(|| {
                PipelineError::SplitIntegrity("split stage has no recorded test hash".into())
            })?;
        let on_disk = hash_file(&self.out_dir().join(test_rel))?;
        if recorded != on_disk {
            return Err(PipelineError::SplitIntegrity(format!(
                "test split hash mismatch: manifest {recorded} vs file {on_disk}"
            )));
        }
        let test_fingerprint = split_fingerprint(test.ids());
        let test_ids: std::collections::HashSet<&str> = test.ids().collect();

        let mut inputs: BTreeMap<String, String> = [
            (
                "train".to_string(),
                hash_file(&self.out_dir().join("split/train.jsonl"))?,
            ),
            ("test".to_string(), on_disk),
        ]
        .into();
        for strategy in strategies {
            if *strategy == Strategy::Baseline {
                continue;
            }
            let key = format!("augment/{strategy}");
            if let Some(record) = manifest.stages.get(&key) {
                for (rel, hash) in &record.outputs {
                    inputs.insert(rel.clone(), hash.clone());
                }
            }
        }

        let params = self.config.classifier.to_params();
        let feature_params = self.config.features.to_params();
        let baseline_vocab =
            Vocabulary::fit(&train, feature_params).map_err(|e| stage_err(stage, e))?;
        let train_texts: Vec<&str> = train.responses().iter().map(|r| r.text.as_str()).collect();
        let train_vectors = tfidf_batch(&train_texts, &baseline_vocab);
        let test_texts: Vec<&str> = test.responses().iter().map(|r| r.text.as_str()).collect();
        let baseline_test_vectors = tfidf_batch(&test_texts, &baseline_vocab);

        let all_categories: Vec<CategoryId> = full.schema().ids().collect();

        // Baseline counts per category double as the fallback for the
        // categories a strategy did not target.
        type JobResult = Result<(CategoryId, ConfusionCounts), String>;
        let baseline_results: Vec<JobResult> =
            crate::exec::map_collect(&all_categories, |&category| {
                evaluate_one(
                    category,
                    &train_vectors,
                    &labels_of(&train, category),
                    &baseline_test_vectors,
                    &labels_of(&test, category),
                    params,
                    self.config.seed,
                )
                .map(|counts| (category, counts))
            });
        let mut baseline_counts: BTreeMap<CategoryId, ConfusionCounts> = BTreeMap::new();
        for r in baseline_results {
            let (c, counts) = r.map_err(|e| stage_err(stage, e))?;
            baseline_counts.insert(c, counts);
        }

        let mut reports: Vec<MetricsReport> = Vec::new();
        for &strategy in strategies {
            let counts = match strategy {
                Strategy::Baseline => baseline_counts.clone(),
                Strategy::Smote => self.evaluate_smote(
                    &full,
                    &train,
                    &baseline_vocab,
                    &train_vectors,
                    &baseline_test_vectors,
                    &test,
                    &baseline_counts,
                    params,
                )?,
                Strategy::Ease | Strategy::Alp | Strategy::Llm => self.evaluate_text_strategy(
                    strategy,
                    &full,
                    &test,
                    &test_ids,
                    &baseline_counts,
                    params,
                    feature_params,
                )?,
                Strategy::Ft => {
                    return Err(stage_err(stage, "ft is a report tag, not a runnable strategy"))
                }
            };
            reports.push(MetricsReport::new(strategy, counts, test_fingerprint.clone())?);
        }

        let comparison = compare_report(&reports, full.schema(), self.config.report.aggregation)?;
        if !manifest.stage_is_current(self.out_dir(), stage, &inputs) {
            manifest.stage_begin(self.out_dir(), stage, inputs)?;
            let mut outputs = BTreeMap::new();
            let metrics_json = serde_json::to_string_pretty(&reports).expect("reports serialize");
            for (rel, body) in [
                ("evaluate/comparison.txt", comparison.text.clone()),
                ("evaluate/comparison.csv", comparison.csv.clone()),
                ("evaluate/metrics.json", metrics_json),
            ] {
                let (rel, hash) = write_artifact(self.out_dir(), rel, body.as_bytes())?;
                outputs.insert(rel, hash);
            }
            manifest.stage_finish(self.out_dir(), stage, outputs, vec![])?;
        }
        Ok(comparison)
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate_smote(
        &self,
        full: &Corpus,
        train: &Corpus,
        vocab: &Vocabulary,
        train_vectors: &[FeatureVector],
        test_vectors: &[FeatureVector],
        test: &Corpus,
        baseline_counts: &BTreeMap<CategoryId, ConfusionCounts>,
        params: classifier::LogRegParams,
    ) -> Result<BTreeMap<CategoryId, ConfusionCounts>, PipelineError> {
        let stage = "evaluate";
        let categories = self.targeted_categories(full, &self.config.smote.categories)?;
        // The persisted vocabulary must match this run's (hash-chained).
        let vocab_path = self.out_dir().join("augment/smote/vocab.jsonl");
        let persisted = Vocabulary::load(&vocab_path)
            .map_err(|e| stage_err(stage, format!("smote vocab: {e} (run augment first)")))?;
        if persisted.fingerprint() != vocab.fingerprint() {
            return Err(stage_err(stage, "smote vocabulary does not match the train split"));
        }
        let mut counts = baseline_counts.clone();
        type JobResult = Result<(CategoryId, ConfusionCounts), String>;
        let results: Vec<JobResult> = crate::exec::map_collect(&categories, |&category| {
            let rel = format!("augment/smote/cat{category}.synthetic.jsonl");
            let body = std::fs::read_to_string(self.out_dir().join(&rel))
                .map_err(|e| format!("{rel}: {e} (run augment first)"))?;
            let profile = train.profile(category).map_err(|e| e.to_string())?;
            let mut vectors: Vec<FeatureVector> = train_vectors.to_vec();
            let mut labels = labels_of(train, category);
            for line in body.lines().filter(|l| !l.trim().is_empty()) {
                let sv: smote::SyntheticVector =
                    serde_json::from_str(line).map_err(|e| format!("{rel}: {e}"))?;
                vectors.push(sv.vector);
                labels.push(profile.minority_label);
            }
            evaluate_one(
                category,
                &vectors,
                &labels,
                test_vectors,
                &labels_of(test, category),
                params,
                self.config.seed,
            )
            .map(|c| (category, c))
        });
        for r in results {
            let (c, cc) = r.map_err(|e| stage_err(stage, e))?;
            counts.insert(c, cc);
        }
        Ok(counts)
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate_text_strategy(
        &self,
        strategy: Strategy,
        full: &Corpus,
        test: &Corpus,
        test_ids: &std::collections::HashSet<&str>,
        baseline_counts: &BTreeMap<CategoryId, ConfusionCounts>,
        params: classifier::LogRegParams,
        feature_params: crate::features::VocabParams,
    ) -> Result<BTreeMap<CategoryId, ConfusionCounts>, PipelineError> {
        let stage = "evaluate";
        let requested = match strategy {
            Strategy::Ease => &self.config.ease.categories,
            Strategy::Alp => &self.config.alp.categories,
            Strategy::Llm => &self.config.llm.categories,
            _ => unreachable!(),
        };
        let categories = self.targeted_categories(full, requested)?;
        let mut loaded: Vec<(CategoryId, Corpus)> = Vec::new();
        for &category in &categories {
            let rel = format!("augment/{strategy}/cat{category}.jsonl");
            let path = self.out_dir().join(&rel);
            let corpus = load_dataset(&path, crate::corpus::DatasetFormat::Jsonl)
                .map_err(|e| stage_err(stage, format!("{rel}: {e} (run augment first)")))?;
            // Test purity: no evaluation response may appear in any
            // augmented train corpus.
            for r in corpus.responses() {
                if test_ids.contains(r.id.as_str()) {
                    return Err(PipelineError::SplitIntegrity(format!(
                        "test response {} found in {rel}",
                        r.id
                    )));
                }
            }
            loaded.push((category, corpus));
        }
        let mut counts = baseline_counts.clone();
        let test_texts: Vec<&str> = test.responses().iter().map(|r| r.text.as_str()).collect();
        type JobResult = Result<(CategoryId, ConfusionCounts), String>;
        let results: Vec<JobResult> = crate::exec::map_collect(&loaded, |(category, corpus)| {
            let vocab = Vocabulary::fit(corpus, feature_params).map_err(|e| e.to_string())?;
            let texts: Vec<&str> = corpus.responses().iter().map(|r| r.text.as_str()).collect();
            let vectors = tfidf_batch(&texts, &vocab);
            let test_vectors = tfidf_batch(&test_texts, &vocab);
            evaluate_one(
                *category,
                &vectors,
                &labels_of(corpus, *category),
                &test_vectors,
                &labels_of(test, *category),
                params,
                self.config.seed,
            )
            .map(|c| (*category, c))
        });
        for r in results {
            let (c, cc) = r.map_err(|e| stage_err(stage, e))?;
            counts.insert(c, cc);
        }
        Ok(counts)
    }

    /// analyze -> augment(each strategy) -> evaluate -> report, one command.
    pub fn cmd_pipeline(&self) -> Result<PipelineSummary, PipelineError> {
        let analyze = self.cmd_analyze()?;
        let strategies = self.config.strategy_list()?;
        self.cmd_split()?;
        for &strategy in &strategies {
            self.cmd_augment(strategy)?;
        }
        let comparison = self.cmd_evaluate(&strategies)?;
        let manifest = self.manifest()?;
        Ok(PipelineSummary {
            analyze,
            comparison,
            warnings: manifest.warnings(),
            artifact_hashes: manifest.artifact_hashes(),
        })
    }
}

#[derive(Debug)]
pub struct PipelineSummary {
    pub analyze: AnalyzeReport,
    pub comparison: ComparisonReport,
    pub warnings: Vec<(String, String)>,
    pub artifact_hashes: BTreeMap<String, String>,
}

fn corpus_jsonl(corpus: &Corpus) -> Vec<u8> {
    let mut out = Vec::new();
    for r in corpus.responses() {
        out.extend_from_slice(serde_json::to_string(r).expect("response serializes").as_bytes());
        out.push(b'\n');
    }
    out
}

fn labels_of(corpus: &Corpus, category: CategoryId) -> Vec<u8> {
    corpus
        .responses()
        .iter()
        .map(|r| r.label(category).unwrap_or(0))
        .collect()
}

fn evaluate_one(
    category: CategoryId,
    train_vectors: &[FeatureVector],
    train_labels: &[u8],
    test_vectors: &[FeatureVector],
    test_labels: &[u8],
    params: classifier::LogRegParams,
    seed: u64,
) -> Result<ConfusionCounts, String> {
    let model = classifier::train(train_vectors, train_labels, params, seed)
        .map_err(|e| format!("category {category}: {e}"))?;
    let mut predictions = Vec::with_capacity(test_vectors.len());
    for v in test_vectors {
        let (label, _) = model.predict(v).map_err(|e| format!("category {category}: {e}"))?;
        predictions.push(label);
    }
    crate::eval::confusion(&predictions, test_labels).map_err(|e| format!("category {category}: {e}"))
}

/// Predict one response text against a trained model and its vocabulary.
pub fn predict_text(
    text: &str,
    vocab: &Vocabulary,
    model: &classifier::LogRegModel,
) -> Result<(u8, f64), classifier::ClassifierError> {
    model.predict(&tfidf_vector(text, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analyze_row_sorting_places_infinite_first() {
        let rows = [
            ImbalanceProfile::from_counts(1, 10, 5),
            ImbalanceProfile::from_counts(2, 10, 0),
            ImbalanceProfile::from_counts(3, 10, 1),
        ];
        let mut sorted = rows.to_vec();
        sorted.sort_by(|a, b| {
            b.ratio
                .partial_cmp(&a.ratio)
                .unwrap()
                .then(a.category.cmp(&b.category))
        });
        assert_eq!(sorted[0].category, 2);
        assert_eq!(sorted[1].category, 3);
        assert_eq!(sorted[2].category, 1);
    }
}
