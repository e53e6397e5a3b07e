//! Seeded synthetic benchmark corpora.
//!
//! Each response is a handful of sentences sampled from the bundled cart
//! grammar. Responses positive for a category carry that category's keyword
//! tokens ("signal") with a configurable probability; negative responses
//! carry a stray keyword ("noise") with a small probability, so classifiers
//! must weigh class priors rather than memorize a clean lookup.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Category, CategoryGroup, CategoryId, CategorySchema, Corpus, CorpusError, LabeledResponse};
use crate::alp::{bundled_grammar, Grammar, SampleOptions};
use crate::rng::derive_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyword {
    pub token: String,
    pub pos: String,
}

impl Keyword {
    pub fn new(token: &str, pos: &str) -> Self {
        Self {
            token: token.into(),
            pos: pos.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCategory {
    pub id: CategoryId,
    #[serde(default)]
    pub description: String,
    pub group: CategoryGroup,
    /// Exact number of positive responses.
    pub minority_count: usize,
    /// Tokens that mark this category's idea; planted, never sampled.
    pub keywords: Vec<Keyword>,
    /// Inclusive range of signal sentences per positive response.
    pub signal_sentences: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub n_total: usize,
    /// Inclusive range of keyword-free sentences per response.
    pub base_sentences: (usize, usize),
    /// Probability that a positive response actually carries its signal.
    pub signal_probability: f64,
    /// Probability that a negative response carries stray keyword sentences
    /// for a category it is not labeled with.
    pub noise_probability: f64,
    /// Inclusive range of keyword sentences in a noise response.
    #[serde(default = "default_noise_sentences")]
    pub noise_sentences: (usize, usize),
    pub categories: Vec<BenchmarkCategory>,
}

fn default_noise_sentences() -> (usize, usize) {
    (1, 3)
}

impl BenchmarkSpec {
    /// The bundled cart-item spec: 1,466 responses over 11 categories whose
    /// positive counts reproduce the reference imbalance profile (severe
    /// skew on categories 5, 6, 7, 9).
    pub fn cart_default() -> Self {
        let cat = |id: CategoryId,
                   description: &str,
                   group: CategoryGroup,
                   minority_count: usize,
                   keywords: Vec<Keyword>,
                   signal_sentences: (usize, usize)| BenchmarkCategory {
            id,
            description: description.to_string(),
            group,
            minority_count,
            keywords,
            signal_sentences,
        };
        use CategoryGroup::{InaccurateIdea, ScientificIdea};
        BenchmarkSpec {
            n_total: 1466,
            base_sentences: (2, 4),
            signal_probability: 0.95,
            noise_probability: 0.10,
            noise_sentences: (1, 3),
            categories: vec![
                cat(
                    1,
                    "predicts carts move away from each other",
                    ScientificIdea,
                    215,
                    vec![Keyword::new("backward", "RB"), Keyword::new("separation", "NN")],
                    (1, 3),
                ),
                cat(
                    2,
                    "justifies motion by like-charge repulsion",
                    ScientificIdea,
                    701,
                    vec![Keyword::new("repulsion", "NN"), Keyword::new("alike", "JJ")],
                    (1, 2),
                ),
                cat(
                    3,
                    "predicts when or whether the carts stop",
                    ScientificIdea,
                    641,
                    vec![Keyword::new("halt", "V"), Keyword::new("standstill", "NN")],
                    (1, 2),
                ),
                cat(
                    4,
                    "explains stopping via distance weakening the interaction",
                    ScientificIdea,
                    538,
                    vec![Keyword::new("weaken", "V"), Keyword::new("proximity", "NN")],
                    (1, 2),
                ),
                cat(
                    5,
                    "explains stopping with energy ideas only",
                    ScientificIdea,
                    57,
                    vec![
                        Keyword::new("potential", "JJ"),
                        Keyword::new("kinetic", "JJ"),
                        Keyword::new("thermal", "JJ"),
                        Keyword::new("joules", "NN"),
                        Keyword::new("dissipate", "V"),
                    ],
                    (16, 20),
                ),
                cat(
                    6,
                    "integrates energy with charge interactions",
                    ScientificIdea,
                    19,
                    vec![
                        Keyword::new("coulomb", "NN"),
                        Keyword::new("coulombic", "JJ"),
                        Keyword::new("integrate", "V"),
                    ],
                    (14, 18),
                ),
                cat(
                    7,
                    "mislabels the interaction as magnetic",
                    InaccurateIdea,
                    68,
                    vec![
                        Keyword::new("magnetic", "JJ"),
                        Keyword::new("magnet", "NN"),
                        Keyword::new("magnetism", "NN"),
                        Keyword::new("magnetize", "V"),
                    ],
                    (12, 16),
                ),
                cat(
                    8,
                    "vague or conflated charge/force/field wording",
                    InaccurateIdea,
                    134,
                    vec![
                        Keyword::new("vague", "JJ"),
                        Keyword::new("fuzzy", "JJ"),
                        Keyword::new("confuse", "V"),
                        Keyword::new("terminology", "NN"),
                    ],
                    (4, 8),
                ),
                cat(
                    9,
                    "inverts the charge law (like charges attract)",
                    InaccurateIdea,
                    59,
                    vec![
                        Keyword::new("attract", "V"),
                        Keyword::new("attractive", "JJ"),
                        Keyword::new("attraction", "NN"),
                    ],
                    (12, 16),
                ),
                cat(
                    10,
                    "uses energy vaguely or unproductively",
                    InaccurateIdea,
                    302,
                    vec![
                        Keyword::new("exhaust", "V"),
                        Keyword::new("fuel", "NN"),
                        Keyword::new("deplete", "V"),
                        Keyword::new("wasted", "JJ"),
                    ],
                    (2, 4),
                ),
                cat(
                    11,
                    "notes stored energy when close without explaining why",
                    InaccurateIdea,
                    147,
                    vec![
                        Keyword::new("buildup", "NN"),
                        Keyword::new("compressed", "JJ"),
                        Keyword::new("nearness", "NN"),
                        Keyword::new("accumulate", "V"),
                    ],
                    (3, 6),
                ),
            ],
        }
    }

    pub fn schema(&self) -> Result<CategorySchema, CorpusError> {
        CategorySchema::new(
            self.categories
                .iter()
                .map(|c| Category {
                    id: c.id,
                    description: c.description.clone(),
                    group: c.group,
                })
                .collect(),
        )
    }

    fn validate(&self) -> Result<(), CorpusError> {
        for c in &self.categories {
            if c.minority_count > self.n_total {
                return Err(CorpusError::InconsistentBenchmarkSpec {
                    category: c.id,
                    minority: c.minority_count,
                    total: self.n_total,
                });
            }
        }
        Ok(())
    }
}

fn sample_range(rng: &mut ChaCha8Rng, range: (usize, usize)) -> usize {
    let (lo, hi) = (range.0.min(range.1), range.0.max(range.1));
    rng.random_range(lo..=hi)
}

/// Sample one keyword-free sentence as a token list.
fn base_sentence(grammar: &Grammar, rng: &mut ChaCha8Rng, opts: &SampleOptions) -> Vec<String> {
    grammar
        .sample_sentence(rng, opts)
        .into_iter()
        .map(|(token, _)| token)
        .collect()
}

/// Keyword sentences stay at least this long so sentence-level mining does
/// not starve on trivially short fragments.
const MIN_KEYWORD_SENTENCE_TOKENS: usize = 6;

/// Sample a sentence and plant one (sometimes two) of the category's
/// keywords in POS-matching slots.
fn signal_sentence(
    grammar: &Grammar,
    rng: &mut ChaCha8Rng,
    opts: &SampleOptions,
    keywords: &[Keyword],
) -> Vec<String> {
    for _ in 0..24 {
        let mut tagged = grammar.sample_sentence(rng, opts);
        if tagged.len() < MIN_KEYWORD_SENTENCE_TOKENS {
            continue;
        }
        let keyword = &keywords[rng.random_range(0..keywords.len())];
        let slots: Vec<usize> = tagged
            .iter()
            .enumerate()
            .filter(|(_, (_, pos))| *pos == keyword.pos)
            .map(|(i, _)| i)
            .collect();
        if slots.is_empty() {
            continue;
        }
        let slot = slots[rng.random_range(0..slots.len())];
        tagged[slot].0 = keyword.token.clone();
        let mut used = vec![slot];
        // Work a second (and sometimes a third) keyword in, so even a single
        // sentence carries a dense category signature.
        for extra in 0..2 {
            if extra == 1 && !rng.random_bool(0.5) {
                break;
            }
            let next = &keywords[rng.random_range(0..keywords.len())];
            let open_slots: Vec<usize> = tagged
                .iter()
                .enumerate()
                .filter(|(i, (_, pos))| !used.contains(i) && *pos == next.pos)
                .map(|(i, _)| i)
                .collect();
            if let Some(&s) = open_slots.first() {
                let s = if open_slots.len() > 1 {
                    open_slots[rng.random_range(0..open_slots.len())]
                } else {
                    s
                };
                tagged[s].0 = next.token.clone();
                used.push(s);
            }
        }
        return tagged.into_iter().map(|(token, _)| token).collect();
    }
    // No POS slot found after many tries: fall back to appending the keyword.
    let mut tokens: Vec<String> = grammar
        .sample_sentence(rng, opts)
        .into_iter()
        .map(|(token, _)| token)
        .collect();
    tokens.push(keywords[0].token.clone());
    tokens
}

/// Generate a corpus per the spec, byte-reproducible for a given seed.
pub fn generate_benchmark_corpus(spec: &BenchmarkSpec, seed: u64) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let schema = spec.schema()?;
    let grammar = bundled_grammar();
    let excluded: BTreeSet<String> = spec
        .categories
        .iter()
        .flat_map(|c| c.keywords.iter().map(|k| k.token.clone()))
        .collect();
    let opts = SampleOptions {
        excluded_terminals: excluded,
        ..SampleOptions::default()
    };

    // Exact positive member sets per category.
    let mut members: Vec<BTreeSet<usize>> = Vec::with_capacity(spec.categories.len());
    for c in &spec.categories {
        let mut order: Vec<usize> = (0..spec.n_total).collect();
        let mut rng = derive_rng(seed, &format!("bench/members/cat{}", c.id));
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        members.push(order.into_iter().take(c.minority_count).collect());
    }

    let width = spec.n_total.to_string().len().max(4);
    let mut responses = Vec::with_capacity(spec.n_total);
    for i in 0..spec.n_total {
        let mut rng = derive_rng(seed, &format!("bench/doc/{i}"));
        let mut sentences: Vec<Vec<String>> = Vec::new();
        for _ in 0..sample_range(&mut rng, spec.base_sentences) {
            sentences.push(base_sentence(&grammar, &mut rng, &opts));
        }
        let mut labels = std::collections::BTreeMap::new();
        for (c, member_set) in spec.categories.iter().zip(&members) {
            let positive = member_set.contains(&i);
            labels.insert(c.id, u8::from(positive));
            if positive {
                if rng.random_bool(spec.signal_probability) {
                    for _ in 0..sample_range(&mut rng, c.signal_sentences) {
                        sentences.push(signal_sentence(&grammar, &mut rng, &opts, &c.keywords));
                    }
                }
            } else if rng.random_bool(spec.noise_probability) {
                for _ in 0..sample_range(&mut rng, spec.noise_sentences) {
                    sentences.push(signal_sentence(&grammar, &mut rng, &opts, &c.keywords));
                }
            }
        }
        use rand::seq::SliceRandom;
        sentences.shuffle(&mut rng);
        let text = sentences
            .iter()
            .map(|tokens| format!("{}.", tokens.join(" ")))
            .collect::<Vec<_>>()
            .join(" ");
        responses.push(LabeledResponse::human(format!("r{i:0width$}"), text, labels));
    }
    Corpus::new(schema, responses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> BenchmarkSpec {
        let mut spec = BenchmarkSpec::cart_default();
        spec.n_total = 120;
        for c in &mut spec.categories {
            c.minority_count = match c.id {
                5 | 6 | 7 | 9 => 5,
                _ => 30,
            };
            if c.signal_sentences.0 > 6 {
                c.signal_sentences = (4, 6);
            }
        }
        spec
    }

    #[test]
    fn profile_ratios_match_spec_counts() {
        let spec = small_spec();
        let corpus = generate_benchmark_corpus(&spec, 42).unwrap();
        assert_eq!(corpus.len(), 120);
        for c in &spec.categories {
            let p = corpus.profile(c.id).unwrap();
            let expected = (spec.n_total - c.minority_count) as f64 / c.minority_count as f64;
            assert_eq!(p.n_minority, c.minority_count);
            assert!(
                (p.ratio - expected).abs() / expected <= 0.02,
                "category {}: ratio {} vs spec {}",
                c.id,
                p.ratio,
                expected
            );
        }
    }

    #[test]
    fn generation_is_byte_identical_per_seed() {
        let spec = small_spec();
        let a = generate_benchmark_corpus(&spec, 7).unwrap();
        let b = generate_benchmark_corpus(&spec, 7).unwrap();
        assert_eq!(
            crate::corpus::io::jsonl_bytes(&a),
            crate::corpus::io::jsonl_bytes(&b)
        );
        let c = generate_benchmark_corpus(&spec, 8).unwrap();
        assert_ne!(
            crate::corpus::io::jsonl_bytes(&a),
            crate::corpus::io::jsonl_bytes(&c)
        );
    }

    #[test]
    fn zero_minority_category_profiles_as_infinite() {
        let mut spec = small_spec();
        spec.categories[4].minority_count = 0; // category 5
        let corpus = generate_benchmark_corpus(&spec, 3).unwrap();
        let p = corpus.profile(5).unwrap();
        assert!(p.ratio.is_infinite());
    }

    #[test]
    fn inconsistent_spec_rejected() {
        let mut spec = small_spec();
        spec.categories[0].minority_count = 500;
        assert!(matches!(
            generate_benchmark_corpus(&spec, 1),
            Err(CorpusError::InconsistentBenchmarkSpec { category: 1, .. })
        ));
    }

    #[test]
    fn positive_docs_carry_keywords_negatives_rarely() {
        let spec = small_spec();
        let corpus = generate_benchmark_corpus(&spec, 11).unwrap();
        let keywords: Vec<&str> = spec.categories[4].keywords.iter().map(|k| k.token.as_str()).collect();
        let has_kw = |text: &str| {
            let toks = crate::features::tokenize(text);
            toks.iter().any(|t| keywords.contains(&t.as_str()))
        };
        let (mut pos_with, mut pos_total, mut neg_with, mut neg_total) = (0, 0, 0, 0);
        for r in corpus.responses() {
            if r.label(5) == Some(1) {
                pos_total += 1;
                if has_kw(&r.text) {
                    pos_with += 1;
                }
            } else {
                neg_total += 1;
                if has_kw(&r.text) {
                    neg_with += 1;
                }
            }
        }
        assert!(pos_with as f64 >= 0.7 * pos_total as f64, "{pos_with}/{pos_total}");
        assert!((neg_with as f64) < 0.25 * neg_total as f64, "{neg_with}/{neg_total}");
    }

    #[test]
    fn default_spec_flags_the_severe_categories() {
        let spec = BenchmarkSpec::cart_default();
        let flagged: Vec<CategoryId> = spec
            .categories
            .iter()
            .filter(|c| {
                let ratio = (spec.n_total - c.minority_count) as f64 / c.minority_count as f64;
                ratio > 10.0
            })
            .map(|c| c.id)
            .collect();
        assert_eq!(flagged, vec![5, 6, 7, 9]);
    }
}
