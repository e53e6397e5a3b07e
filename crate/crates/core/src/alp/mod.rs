//! ALP phrase-level augmentation: induce a lexicalized PCFG from a bracketed
//! treebank, parse minority responses with CKY, extract plausible subtrees
//! above a probability threshold, swap compatible head-anchored
//! substructures between same-label sentences, and substitute POS-matched
//! synonyms.

pub mod augment;
pub mod cky;
pub mod grammar;
pub mod heads;
pub mod lexicon;
pub mod treebank;

pub use augment::{extract_subtrees, substitute_synonyms, swap_subtrees, SubtreeRef, SwapOutcome};
pub use cky::{cky_parse, ParseChildren, ParseTree};
pub use grammar::{induce_pcfg, Grammar, GrammarError, Rule, RuleRhs, SampleOptions};
pub use heads::{assign_heads, HeadDirection, HeadRule, HeadRules};
pub use lexicon::{LexiconError, SynonymLexicon, FORBIDDEN_PAIRS};
pub use treebank::{read_treebank, SyntaxTree, TreebankError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CategoryId, Corpus, CorpusError, LabeledResponse, Origin};
use crate::exec;
use crate::rng::derive_rng;
use rand::Rng;

/// The bundled treebank over the physics-cart vocabulary.
pub const BUNDLED_TREEBANK: &str = include_str!("../assets/treebank.txt");
/// The bundled POS-matched synonym lexicon.
pub const BUNDLED_LEXICON: &str = include_str!("../assets/lexicon.tsv");

/// Grammar induced from the bundled treebank.
pub fn bundled_grammar() -> Grammar {
    let trees = read_treebank(BUNDLED_TREEBANK).expect("bundled treebank parses");
    induce_pcfg(&trees).expect("bundled treebank induces")
}

/// The bundled synonym lexicon, audited against [`FORBIDDEN_PAIRS`].
pub fn bundled_lexicon() -> SynonymLexicon {
    let lexicon = SynonymLexicon::parse(BUNDLED_LEXICON).expect("bundled lexicon parses");
    debug_assert!(lexicon.audit_forbidden_pairs(FORBIDDEN_PAIRS).is_empty());
    lexicon
}

#[derive(Debug, Error)]
pub enum AlpError {
    #[error("category {category}: only {parseable} of {total} minority sentences parse; need at least 2")]
    UnparseablePool {
        category: CategoryId,
        parseable: usize,
        total: usize,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlpParams {
    /// Minimum inside probability for a subtree to count as plausible.
    pub subtree_prob_threshold: f64,
    /// Swap rounds per sentence pair.
    pub max_swaps: usize,
    /// Per-token synonym substitution probability.
    pub synonym_rate: f64,
    pub seed: u64,
}

impl Default for AlpParams {
    fn default() -> Self {
        Self {
            subtree_prob_threshold: 0.01,
            max_swaps: 2,
            synonym_rate: 0.15,
            seed: 0,
        }
    }
}

/// One generation attempt in the audit trail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlpAuditRecord {
    pub source_a: String,
    pub source_b: String,
    pub swapped: Vec<(String, String)>,
    pub no_op_swap: bool,
    pub text: String,
    pub accepted: bool,
    pub reject_reason: Option<String>,
}

#[derive(Debug)]
pub struct AlpOutcome {
    pub merged: Corpus,
    pub generated: Vec<LabeledResponse>,
    pub audit: Vec<AlpAuditRecord>,
    /// Present when generation exhausted before reaching `n_target`.
    pub shortfall: Option<String>,
}

/// Generate up to `n_target` synthetic minority responses for one category.
///
/// Minority responses are segmented into sentences and parsed (in parallel;
/// acceptance stays serialized in draw order, so thread scheduling cannot
/// reorder outputs). Each draw picks two minority responses and paraphrases
/// the first sentence-by-sentence: every parsed sentence is swapped against
/// a random parsed sentence of the second response, then a synonym pass
/// runs. Outputs that duplicate an original response or an earlier output
/// are rejected.
pub fn alp_augment(
    train: &Corpus,
    category: CategoryId,
    grammar: &Grammar,
    lexicon: &SynonymLexicon,
    params: &AlpParams,
    n_target: usize,
) -> Result<AlpOutcome, AlpError> {
    let profile = train.profile(category)?;
    let minority_label = profile.minority_label;
    let head_rules = HeadRules::cart_default();

    // Sentence pool from minority responses, grouped per response;
    // unparseable sentences are skipped so noisy text degrades gracefully.
    let mut sentence_refs: Vec<(usize, String)> = Vec::new();
    for (i, r) in train.responses().iter().enumerate() {
        if r.label(category) != Some(minority_label) {
            continue;
        }
        for (start, end) in crate::ease::sentence_spans(&r.text) {
            let tokens = crate::features::tokenize(&r.text[start..end]);
            if !tokens.is_empty() {
                sentence_refs.push((i, tokens.join(" ")));
            }
        }
    }
    let parsed: Vec<Option<ParseTree>> = exec::map_collect(&sentence_refs, |(_, sentence)| {
        let tokens: Vec<&str> = sentence.split(' ').collect();
        cky_parse(&tokens, grammar).map(|t| assign_heads(&t, &head_rules))
    });
    let mut by_response: std::collections::BTreeMap<usize, Vec<ParseTree>> = Default::default();
    let mut parseable = 0usize;
    for ((i, _), tree) in sentence_refs.iter().zip(parsed) {
        if let Some(t) = tree {
            by_response.entry(*i).or_default().push(t);
            parseable += 1;
        }
    }
    if parseable < 2 {
        return Err(AlpError::UnparseablePool {
            category,
            parseable,
            total: sentence_refs.len(),
        });
    }
    let pool: Vec<(&str, Vec<ParseTree>)> = by_response
        .into_iter()
        .map(|(i, trees)| (train.responses()[i].id.as_str(), trees))
        .collect();

    let mut seen: std::collections::HashSet<String> = train
        .responses()
        .iter()
        .map(|r| r.text.clone())
        .collect();
    let mut rng = derive_rng(params.seed, &format!("alp/cat{category}"));
    let mut generated: Vec<LabeledResponse> = Vec::new();
    let mut audit = Vec::new();
    let max_attempts = n_target.saturating_mul(12) + 64;
    let mut attempts = 0usize;
    while generated.len() < n_target && attempts < max_attempts {
        attempts += 1;
        let a = rng.random_range(0..pool.len());
        let mut b = rng.random_range(0..pool.len());
        if pool.len() > 1 && b == a {
            b = (b + 1) % pool.len();
        }
        let (source_a, trees_a) = &pool[a];
        let (source_b, trees_b) = &pool[b];
        let mut sentences: Vec<String> = Vec::with_capacity(trees_a.len());
        let mut swapped: Vec<(String, String)> = Vec::new();
        let mut all_no_op = true;
        for tree_a in trees_a {
            let tree_b = &trees_b[rng.random_range(0..trees_b.len())];
            let outcome = augment::swap_subtrees_with_rng(tree_a, tree_b, params, &mut rng);
            all_no_op &= outcome.no_op;
            swapped.extend(outcome.swapped.iter().cloned());
            let tokens = augment::substitute_synonyms_with_rng(
                &outcome.sentence_a,
                lexicon,
                params.synonym_rate,
                &mut rng,
            );
            sentences.push(tokens.join(" "));
        }
        let text = sentences
            .iter()
            .map(|s| format!("{s} ."))
            .collect::<Vec<_>>()
            .join(" ");
        let mut record = AlpAuditRecord {
            source_a: source_a.to_string(),
            source_b: source_b.to_string(),
            swapped,
            no_op_swap: all_no_op,
            text: text.clone(),
            accepted: false,
            reject_reason: None,
        };
        if seen.contains(&text) {
            record.reject_reason = Some("duplicate".into());
        } else {
            record.accepted = true;
            seen.insert(text.clone());
            let labels = train
                .schema()
                .ids()
                .map(|c| (c, if c == category { minority_label } else { 0 }))
                .collect();
            generated.push(LabeledResponse {
                id: format!("alp-c{category}-{:04}", generated.len()),
                text,
                labels,
                origin: Origin::Alp,
                parent_ids: vec![source_a.to_string(), source_b.to_string()],
            });
        }
        audit.push(record);
    }
    let shortfall = if generated.len() < n_target {
        Some(format!(
            "category {category}: generated {} of {n_target} requested responses before exhausting candidates",
            generated.len()
        ))
    } else {
        None
    };
    if let Some(w) = &shortfall {
        log::warn!("alp: {w}");
    }
    let merged = train.extend(generated.clone())?;
    Ok(AlpOutcome {
        merged,
        generated,
        audit,
        shortfall,
    })
}

/// Serialize audit records as JSONL.
pub fn audit_jsonl(records: &[AlpAuditRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("audit record serializes"));
        out.push('\n');
    }
    out
}
