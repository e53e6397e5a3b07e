//! Multi-category binary-labeled response corpora: loading, validation,
//! imbalance profiling, train/test splitting, and a synthetic benchmark
//! generator.

mod benchmark;
mod io;

pub use benchmark::{generate_benchmark_corpus, BenchmarkCategory, BenchmarkSpec, Keyword};
pub use io::{load_dataset, write_dataset, DatasetFormat};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::derive_rng;

/// Rubric category identifier (1..=11 in the default schema).
pub type CategoryId = u16;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("row {row}, category {category}: label {value:?} is not 0 or 1")]
    UnknownLabelValue {
        row: usize,
        category: String,
        value: String,
    },
    #[error("duplicate response id {id:?} (rows {first} and {second})")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("response {id:?}: text is empty after trimming")]
    EmptyText { id: String },
    #[error("response {id:?}: label set does not match the schema (missing or unknown category {category})")]
    LabelSchemaMismatch { id: String, category: CategoryId },
    #[error("response {id:?}: origin {origin:?} is inconsistent with parent_ids (human responses have none, synthetic ones need at least one)")]
    OriginParentMismatch { id: String, origin: Origin },
    #[error("category {0} is not in the schema")]
    UnknownCategory(CategoryId),
    #[error("schema has duplicate category id {0}")]
    DuplicateCategory(CategoryId),
    #[error("corpus is empty")]
    Empty,
    #[error("train_fraction {0} is outside (0, 1)")]
    BadTrainFraction(f64),
    #[error("benchmark spec: category {category} minority count {minority} exceeds total {total}")]
    InconsistentBenchmarkSpec {
        category: CategoryId,
        minority: usize,
        total: usize,
    },
    #[error("csv export requires an all-human corpus; response {id:?} has origin {origin:?} (use jsonl for augmented corpora)")]
    CsvSyntheticRow { id: String, origin: Origin },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Where a response came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    #[default]
    Human,
    Smote,
    Llm,
    Ease,
    Alp,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Origin::Human => "human",
            Origin::Smote => "smote",
            Origin::Llm => "llm",
            Origin::Ease => "ease",
            Origin::Alp => "alp",
        };
        f.write_str(s)
    }
}

/// One student answer with per-category binary labels and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledResponse {
    pub id: String,
    pub text: String,
    /// category id -> 0/1
    pub labels: BTreeMap<CategoryId, u8>,
    #[serde(default)]
    pub origin: Origin,
    /// Source response ids; empty exactly when origin is human.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parent_ids: Vec<String>,
}

impl LabeledResponse {
    pub fn human(id: impl Into<String>, text: impl Into<String>, labels: BTreeMap<CategoryId, u8>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            labels,
            origin: Origin::Human,
            parent_ids: Vec::new(),
        }
    }

    pub fn label(&self, category: CategoryId) -> Option<u8> {
        self.labels.get(&category).copied()
    }
}

/// Whether a rubric category captures a scientific or an inaccurate idea.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryGroup {
    ScientificIdea,
    InaccurateIdea,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    #[serde(default)]
    pub description: String,
    pub group: CategoryGroup,
}

/// Ordered list of rubric categories with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySchema {
    categories: Vec<Category>,
}

impl CategorySchema {
    pub fn new(categories: Vec<Category>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for c in &categories {
            if !seen.insert(c.id) {
                return Err(CorpusError::DuplicateCategory(c.id));
            }
        }
        Ok(Self { categories })
    }

    /// Schema with the given ids, using the default grouping: ids 1..=6 are
    /// scientific ideas, everything else an inaccurate idea.
    pub fn with_default_groups(ids: impl IntoIterator<Item = CategoryId>) -> Result<Self, CorpusError> {
        let categories = ids
            .into_iter()
            .map(|id| Category {
                id,
                description: String::new(),
                group: if (1..=6).contains(&id) {
                    CategoryGroup::ScientificIdea
                } else {
                    CategoryGroup::InaccurateIdea
                },
            })
            .collect();
        Self::new(categories)
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn ids(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.categories.iter().map(|c| c.id)
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        self.categories.iter().any(|c| c.id == id)
    }

    pub fn group_of(&self, id: CategoryId) -> Option<CategoryGroup> {
        self.categories.iter().find(|c| c.id == id).map(|c| c.group)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

/// A validated corpus: schema plus responses whose labels cover exactly the
/// schema's categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    schema: CategorySchema,
    responses: Vec<LabeledResponse>,
}

impl Corpus {
    pub fn new(schema: CategorySchema, responses: Vec<LabeledResponse>) -> Result<Self, CorpusError> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (row, r) in responses.iter().enumerate() {
            if r.text.trim().is_empty() {
                return Err(CorpusError::EmptyText { id: r.id.clone() });
            }
            if let Some(&first) = seen.get(r.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    id: r.id.clone(),
                    first,
                    second: row,
                });
            }
            seen.insert(&r.id, row);
            let human = r.origin == Origin::Human;
            if human != r.parent_ids.is_empty() {
                return Err(CorpusError::OriginParentMismatch {
                    id: r.id.clone(),
                    origin: r.origin,
                });
            }
            for (&cat, &value) in &r.labels {
                if !schema.contains(cat) {
                    return Err(CorpusError::LabelSchemaMismatch { id: r.id.clone(), category: cat });
                }
                if value > 1 {
                    return Err(CorpusError::UnknownLabelValue {
                        row,
                        category: cat.to_string(),
                        value: value.to_string(),
                    });
                }
            }
            for cat in schema.ids() {
                if !r.labels.contains_key(&cat) {
                    return Err(CorpusError::LabelSchemaMismatch { id: r.id.clone(), category: cat });
                }
            }
        }
        Ok(Self { schema, responses })
    }

    pub fn schema(&self) -> &CategorySchema {
        &self.schema
    }

    pub fn responses(&self) -> &[LabeledResponse] {
        &self.responses
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.responses.iter().map(|r| r.id.as_str())
    }

    /// Append responses (e.g. augmentation output), revalidating invariants.
    pub fn extend(&self, extra: Vec<LabeledResponse>) -> Result<Self, CorpusError> {
        let mut responses = self.responses.clone();
        responses.extend(extra);
        Self::new(self.schema.clone(), responses)
    }

    /// Exact majority/minority tallies for one category.
    pub fn profile(&self, category: CategoryId) -> Result<ImbalanceProfile, CorpusError> {
        if !self.schema.contains(category) {
            return Err(CorpusError::UnknownCategory(category));
        }
        let ones = self
            .responses
            .iter()
            .filter(|r| r.label(category) == Some(1))
            .count();
        let zeros = self.responses.len() - ones;
        Ok(ImbalanceProfile::from_counts(category, zeros, ones))
    }

    /// Profiles for every schema category, in schema order.
    pub fn profile_all(&self) -> Vec<ImbalanceProfile> {
        self.schema
            .ids()
            .map(|c| self.profile(c).expect("schema category"))
            .collect()
    }

    /// Deterministic uniform-random split. Train size is
    /// `floor(train_fraction * N)`; every response lands in exactly one part.
    pub fn split(&self, spec: &SplitSpec) -> Result<(Corpus, Corpus), CorpusError> {
        if self.responses.is_empty() {
            return Err(CorpusError::Empty);
        }
        if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
            return Err(CorpusError::BadTrainFraction(spec.train_fraction));
        }
        let n = self.responses.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = derive_rng(spec.seed, "corpus/split");
        match spec.stratify_by {
            None => order.shuffle(&mut rng),
            Some(cat) => {
                if !self.schema.contains(cat) {
                    return Err(CorpusError::UnknownCategory(cat));
                }
                // Shuffle within each label stratum, then interleave so the
                // floor cut keeps per-label proportions.
                order.shuffle(&mut rng);
                let (pos, neg): (Vec<usize>, Vec<usize>) = order
                    .iter()
                    .partition(|&&i| self.responses[i].label(cat) == Some(1));
                order = interleave_proportional(&pos, &neg);
            }
        }
        let train_len = (spec.train_fraction * n as f64).floor() as usize;
        let mut train_idx: Vec<usize> = order[..train_len].to_vec();
        let mut test_idx: Vec<usize> = order[train_len..].to_vec();
        // Keep original corpus order within each part.
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        let pick = |idx: &[usize]| -> Vec<LabeledResponse> {
            idx.iter().map(|&i| self.responses[i].clone()).collect()
        };
        let train = Corpus {
            schema: self.schema.clone(),
            responses: pick(&train_idx),
        };
        let test = Corpus {
            schema: self.schema.clone(),
            responses: pick(&test_idx),
        };
        Ok((train, test))
    }
}

/// Interleave two index lists so every prefix approximates their global ratio.
fn interleave_proportional(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (n, m) = (a.len(), b.len());
    let total = n + m;
    let mut out = Vec::with_capacity(total);
    let (mut i, mut j) = (0usize, 0usize);
    for k in 0..total {
        // Target count of `a` items among the first k+1 slots.
        let want_a = ((k + 1) * n) / total;
        if i < want_a.min(n) || j >= m {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out
}

/// Per-category majority/minority counts and their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceProfile {
    pub category: CategoryId,
    pub n_majority: usize,
    pub n_minority: usize,
    /// The label value (0 or 1) held by the minority class. Ties resolve to 1.
    pub minority_label: u8,
    /// `n_majority / n_minority`; infinite when the minority is empty.
    pub ratio: f64,
}

impl ImbalanceProfile {
    pub fn from_counts(category: CategoryId, zeros: usize, ones: usize) -> Self {
        let (n_majority, n_minority, minority_label) = if ones <= zeros {
            (zeros, ones, 1)
        } else {
            (ones, zeros, 0)
        };
        let ratio = if n_minority == 0 {
            f64::INFINITY
        } else {
            n_majority as f64 / n_minority as f64
        };
        Self {
            category,
            n_majority,
            n_minority,
            minority_label,
            ratio,
        }
    }

    /// Render the ratio like the reports do: two decimals, `inf` when the
    /// minority is empty.
    pub fn ratio_display(&self) -> String {
        if self.ratio.is_finite() {
            format!("{:.2}", self.ratio)
        } else {
            "inf".to_string()
        }
    }
}

/// Train/test split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Optional category id to stratify on (proportional positives in both
    /// parts). Off by default.
    #[serde(default)]
    pub stratify_by: Option<CategoryId>,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            stratify_by: None,
        }
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::new(0.8, 0)
    }
}
