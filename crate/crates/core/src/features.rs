//! Tokenization and TF-IDF feature vectors — the feature space the SMOTE
//! resampler interpolates in and the baseline classifier consumes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::exec;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("vector dimension {found} does not match expected {expected}")]
    DimensionMismatch { expected: u32, found: u32 },
    #[error("vocabulary sidecar {path}: {message}")]
    Sidecar { path: String, message: String },
}

/// Lowercase and split on any non-alphanumeric run; empty tokens dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Vocabulary fitting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabParams {
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// Terms must appear in at least this many documents.
    pub min_df: usize,
}

impl Default for VocabParams {
    fn default() -> Self {
        Self {
            ngram_min: 1,
            ngram_max: 2,
            min_df: 2,
        }
    }
}

/// Term -> index mapping with document frequencies. Indices are contiguous
/// and assigned in lexicographic term order, so fitting is deterministic
/// across platforms.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    df: Vec<u32>,
    n_docs: u32,
    params: VocabParams,
}

impl Vocabulary {
    /// Fit on a corpus: tally per-term document frequencies over the n-gram
    /// range, drop terms below `min_df`, and index the survivors
    /// lexicographically.
    pub fn fit(corpus: &Corpus, params: VocabParams) -> Result<Self, FeatureError> {
        let texts: Vec<&str> = corpus.responses().iter().map(|r| r.text.as_str()).collect();
        Self::fit_texts(&texts, params)
    }

    pub fn fit_texts(texts: &[&str], params: VocabParams) -> Result<Self, FeatureError> {
        if texts.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let doc_terms: Vec<BTreeSet<String>> = exec::map_collect(texts, |text| {
            ngrams(&tokenize(text), params.ngram_min, params.ngram_max)
                .into_iter()
                .collect()
        });
        let mut df_map: BTreeMap<String, u32> = BTreeMap::new();
        for terms in &doc_terms {
            for term in terms {
                *df_map.entry(term.clone()).or_insert(0) += 1;
            }
        }
        let mut terms = Vec::new();
        let mut df = Vec::new();
        for (term, count) in df_map {
            if count as usize >= params.min_df {
                terms.push(term);
                df.push(count);
            }
        }
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self {
            terms,
            index,
            df,
            n_docs: texts.len() as u32,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim(&self) -> u32 {
        self.terms.len() as u32
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn params(&self) -> VocabParams {
        self.params
    }

    pub fn term_index(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn df(&self, index: u32) -> u32 {
        self.df[index as usize]
    }

    /// Smoothed inverse document frequency: `ln(N / df) + 1`.
    pub fn idf(&self, index: u32) -> f64 {
        (self.n_docs as f64 / self.df[index as usize] as f64).ln() + 1.0
    }

    /// Stable fingerprint for persistence records (detects train/test
    /// vectorization mismatches).
    pub fn fingerprint(&self) -> String {
        let mut buf = String::new();
        buf.push_str(&self.n_docs.to_string());
        for (term, df) in self.terms.iter().zip(&self.df) {
            buf.push('\n');
            buf.push_str(term);
            buf.push('\t');
            buf.push_str(&df.to_string());
        }
        crate::rng::sha256_hex(buf.as_bytes())
    }

    /// Write the term/index/df table as a JSONL sidecar.
    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        #[derive(Serialize)]
        struct Row<'a> {
            term: &'a str,
            index: u32,
            df: u32,
        }
        let mut out = String::new();
        let header = serde_json::json!({
            "n_docs": self.n_docs,
            "ngram_min": self.params.ngram_min,
            "ngram_max": self.params.ngram_max,
            "min_df": self.params.min_df,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for (i, term) in self.terms.iter().enumerate() {
            let row = Row {
                term,
                index: i as u32,
                df: self.df[i],
            };
            out.push_str(&serde_json::to_string(&row).expect("row serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| FeatureError::Sidecar {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let err = |message: String| FeatureError::Sidecar {
            path: path.display().to_string(),
            message,
        };
        let content = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut lines = content.lines();
        let header: serde_json::Value = serde_json::from_str(lines.next().ok_or_else(|| err("empty sidecar".into()))?)
            .map_err(|e| err(e.to_string()))?;
        #[derive(Deserialize)]
        struct Row {
            term: String,
            index: u32,
            df: u32,
        }
        let mut terms = Vec::new();
        let mut df = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if row.index as usize != terms.len() {
                return Err(err(format!("non-contiguous index {}", row.index)));
            }
            terms.push(row.term);
            df.push(row.df);
        }
        let field = |key: &str| -> Result<u64, FeatureError> {
            header
                .get(key)
                .and_then(|v| v.as_u64())
                .ok_or_else(|| err(format!("missing header field {key}")))
        };
        let params = VocabParams {
            ngram_min: field("ngram_min")? as usize,
            ngram_max: field("ngram_max")? as usize,
            min_df: field("min_df")? as usize,
        };
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self {
            terms,
            index,
            df,
            n_docs: field("n_docs")? as u32,
            params,
        })
    }
}

fn ngrams(tokens: &[String], min: usize, max: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in min..=max {
        if n == 0 || tokens.len() < n {
            continue;
        }
        for window in tokens.windows(n) {
            out.push(window.join("_"));
        }
    }
    out
}

/// Sparse L2-normalized TF-IDF vector. Entries stay sorted by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: u32,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    /// Build from possibly-unsorted (index, weight) pairs.
    pub fn from_entries(dim: u32, mut entries: Vec<(u32, f64)>) -> Result<Self, FeatureError> {
        entries.retain(|&(_, w)| w != 0.0);
        entries.sort_unstable_by_key(|&(i, _)| i);
        for &(i, w) in &entries {
            if i >= dim {
                return Err(FeatureError::DimensionMismatch { expected: dim, found: i + 1 });
            }
            debug_assert!(w.is_finite());
        }
        Ok(Self { dim, entries })
    }

    pub fn zero(dim: u32) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn squared_distance(&self, other: &FeatureVector) -> f64 {
        let mut sum = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(&(ia, wa)), Some(&(ib, wb))) => {
                    if ia == ib {
                        sum += (wa - wb) * (wa - wb);
                        i += 1;
                        j += 1;
                    } else if ia < ib {
                        sum += wa * wa;
                        i += 1;
                    } else {
                        sum += wb * wb;
                        j += 1;
                    }
                }
                (Some(&(_, wa)), None) => {
                    sum += wa * wa;
                    i += 1;
                }
                (None, Some(&(_, wb))) => {
                    sum += wb * wb;
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        sum
    }

    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.squared_distance(other).sqrt()
    }
}

/// TF-IDF vector for one text: `tf * (ln(N/df) + 1)` per in-vocabulary term,
/// then L2-normalized. Out-of-vocabulary terms are ignored; a text with no
/// known terms yields the zero vector.
pub fn tfidf_vector(text: &str, vocab: &Vocabulary) -> FeatureVector {
    let tokens = tokenize(text);
    let grams = ngrams(&tokens, vocab.params.ngram_min, vocab.params.ngram_max);
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for gram in grams {
        if let Some(idx) = vocab.term_index(&gram) {
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(u32, f64)> = counts
        .into_iter()
        .map(|(idx, tf)| (idx, tf * vocab.idf(idx)))
        .collect();
    let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for entry in &mut entries {
            entry.1 /= norm;
        }
    }
    FeatureVector {
        dim: vocab.dim(),
        entries,
    }
}

/// Vectorize a batch of texts (parallel when enabled, order preserved).
pub fn tfidf_batch(texts: &[&str], vocab: &Vocabulary) -> Vec<FeatureVector> {
    exec::map_collect(texts, |text| tfidf_vector(text, vocab))
}
