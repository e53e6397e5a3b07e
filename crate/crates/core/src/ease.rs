//! The EASE pipeline: Extract sentence- and clause-level fragments from
//! responses, Acquire labels for them from a trained labeler, Sift out
//! short / low-confidence / off-label / duplicate candidates, and Employ the
//! survivors as new minority training responses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, Labeler};
use crate::corpus::{CategoryId, Corpus, CorpusError, LabeledResponse, Origin};
use crate::features::{tfidf_vector, tokenize, Vocabulary};

#[derive(Debug, Error)]
pub enum EaseError {
    #[error("acquire labeler is not trained")]
    UntrainedLabeler,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("category {0}: minority class is empty")]
    EmptyMinority(CategoryId),
}

/// A fragment extracted from one response: the text, its source, and the
/// character span it covers there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub text: String,
    pub source_response_id: String,
    pub span: (usize, usize),
    pub token_count: usize,
}

/// Sift thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftParams {
    pub min_tokens: usize,
    pub min_confidence: f64,
    pub dedup: bool,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            min_tokens: 5,
            min_confidence: 0.8,
            dedup: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    TooShort,
    LowConfidence,
    Duplicate,
    WrongLabel,
}

/// A fragment after the acquire stage, with the sift verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EaseCandidate {
    pub fragment: Fragment,
    pub acquired_label: u8,
    pub confidence: f64,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<RejectionReason>,
}

/// Sentence spans: split on terminal punctuation (. ! ?), keeping a trailing
/// unpunctuated remainder. Byte offsets into the original text.
pub(crate) fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0usize;
    for (i, c) in text.char_indices() {
        if c == '.' || c == '!' || c == '?' {
            if text[start..i].trim().is_empty() {
                start = i + c.len_utf8();
                continue;
            }
            spans.push((start, i));
            start = i + c.len_utf8();
        }
    }
    if !text[start..].trim().is_empty() {
        spans.push((start, text.len()));
    }
    spans
}

/// Clause connectives that split a sentence into fact-level statements.
const CLAUSE_CONNECTIVES: [&str; 3] = [" because ", " so ", " which "];

/// Minimum tokens a clause half must reach for the split to apply. The
/// split fires when either half qualifies; undersized companions survive to
/// the sift stage, which drops them.
const MIN_CLAUSE_TOKENS: usize = 4;

fn split_clauses(text: &str, base: usize, out: &mut Vec<(usize, usize)>) {
    for connective in CLAUSE_CONNECTIVES {
        if let Some(pos) = text.find(connective) {
            let left = &text[..pos];
            let right = &text[pos + connective.len()..];
            let left_tokens = tokenize(left).len();
            let right_tokens = tokenize(right).len();
            if (left_tokens >= MIN_CLAUSE_TOKENS || right_tokens >= MIN_CLAUSE_TOKENS)
                && left_tokens >= 1
                && right_tokens >= 1
            {
                split_clauses(left, base, out);
                split_clauses(right, base + pos + connective.len(), out);
                return;
            }
        }
    }
    out.push((base, base + text.len()));
}

/// Extract fragments from one response: sentence segmentation plus clause
/// splits on " because " / " so " / " which ". Fragments preserve the
/// original casing; empty text yields an empty list.
pub fn extract(response: &LabeledResponse) -> Vec<Fragment> {
    let mut fragments = Vec::new();
    for (start, end) in sentence_spans(&response.text) {
        let mut clause_spans = Vec::new();
        split_clauses(&response.text[start..end], start, &mut clause_spans);
        for (cs, ce) in clause_spans {
            let raw = &response.text[cs..ce];
            let trim_start = cs + (raw.len() - raw.trim_start().len());
            let trim_end = ce - (raw.len() - raw.trim_end().len());
            if trim_start >= trim_end {
                continue;
            }
            let text = response.text[trim_start..trim_end].to_string();
            let token_count = tokenize(&text).len();
            if token_count == 0 {
                continue;
            }
            fragments.push(Fragment {
                text,
                source_response_id: response.id.clone(),
                span: (trim_start, trim_end),
                token_count,
            });
        }
    }
    fragments
}

/// Acquire a label for one fragment from a trained labeler over the given
/// vocabulary. Returns the predicted label and the labeler's confidence in
/// that prediction.
pub fn acquire(
    fragment: &Fragment,
    labeler: &dyn Labeler,
    vocab: &Vocabulary,
) -> Result<(u8, f64), EaseError> {
    if !labeler.is_trained() {
        return Err(EaseError::UntrainedLabeler);
    }
    let vector = tfidf_vector(&fragment.text, vocab);
    Ok(labeler.predict(&vector)?)
}

/// Apply the sift predicates in order: token count, confidence, label
/// fidelity, then byte-equality dedup against the original responses and
/// earlier accepted candidates.
pub fn sift(
    candidates: Vec<(Fragment, u8, f64)>,
    params: &SiftParams,
    target_label: u8,
    original_texts: &std::collections::HashSet<String>,
) -> Vec<EaseCandidate> {
    let mut out = Vec::with_capacity(candidates.len());
    let mut accepted_texts: std::collections::HashSet<String> = Default::default();
    for (fragment, acquired_label, confidence) in candidates {
        let reason = if fragment.token_count < params.min_tokens {
            Some(RejectionReason::TooShort)
        } else if confidence < params.min_confidence {
            Some(RejectionReason::LowConfidence)
        } else if acquired_label != target_label {
            Some(RejectionReason::WrongLabel)
        } else if params.dedup
            && (original_texts.contains(&fragment.text) || accepted_texts.contains(&fragment.text))
        {
            Some(RejectionReason::Duplicate)
        } else {
            None
        };
        if reason.is_none() {
            accepted_texts.insert(fragment.text.clone());
        }
        out.push(EaseCandidate {
            fragment,
            acquired_label,
            confidence,
            accepted: reason.is_none(),
            rejection_reason: reason,
        });
    }
    out
}

/// Merge accepted candidates into the corpus as new responses: target
/// category gets the minority label, every other category 0, origin `ease`,
/// parent = the source response.
pub fn employ(
    train: &Corpus,
    accepted: &[EaseCandidate],
    category: CategoryId,
    minority_label: u8,
) -> Result<Corpus, EaseError> {
    let mut extra = Vec::with_capacity(accepted.len());
    for (k, c) in accepted.iter().filter(|c| c.accepted).enumerate() {
        let labels = train
            .schema()
            .ids()
            .map(|cat| (cat, if cat == category { minority_label } else { 0 }))
            .collect();
        extra.push(LabeledResponse {
            id: format!("ease-c{category}-{k:04}"),
            text: c.fragment.text.clone(),
            labels,
            origin: Origin::Ease,
            parent_ids: vec![c.fragment.source_response_id.clone()],
        });
    }
    Ok(train.extend(extra)?)
}

#[derive(Debug)]
pub struct EaseOutcome {
    pub merged: Corpus,
    /// Every candidate that went through acquire+sift, in processing order.
    pub audit: Vec<EaseCandidate>,
    pub accepted_count: usize,
    pub final_ratio: f64,
    /// Present when candidates ran out before the target ratio was reached.
    pub shortfall: Option<String>,
}

/// Run the full pipeline for one category: extract fragments from every
/// response (minority and majority sources alike — the labeler decides),
/// acquire labels, sift, and employ until the majority/minority ratio drops
/// to `target_ratio` or candidates are exhausted.
pub fn ease_run(
    train: &Corpus,
    category: CategoryId,
    labeler: &dyn Labeler,
    vocab: &Vocabulary,
    sift_params: &SiftParams,
    target_ratio: f64,
) -> Result<EaseOutcome, EaseError> {
    if !labeler.is_trained() {
        return Err(EaseError::UntrainedLabeler);
    }
    let profile = train.profile(category)?;
    if profile.n_minority == 0 {
        return Err(EaseError::EmptyMinority(category));
    }
    let minority_label = profile.minority_label;
    let n_majority = profile.n_majority;
    let needed = |accepted: usize| -> bool {
        n_majority as f64 / (profile.n_minority + accepted) as f64 > target_ratio
    };

    let original_texts: std::collections::HashSet<String> =
        train.responses().iter().map(|r| r.text.clone()).collect();
    let mut audit: Vec<EaseCandidate> = Vec::new();
    let mut accepted_texts: std::collections::HashSet<String> = Default::default();
    let mut accepted_count = 0usize;

    'responses: for response in train.responses() {
        if !needed(accepted_count) {
            break;
        }
        let fragments = extract(response);
        // Acquire is pure per fragment; batch it (parallel, order-preserving).
        let labeled: Vec<(u8, f64)> = {
            let results: Vec<Result<(u8, f64), EaseError>> =
                crate::exec::map_collect(&fragments, |f| acquire(f, labeler, vocab));
            let mut ok = Vec::with_capacity(results.len());
            for r in results {
                ok.push(r?);
            }
            ok
        };
        for (fragment, (label, confidence)) in fragments.into_iter().zip(labeled) {
            if !needed(accepted_count) {
                break 'responses;
            }
            let reason = if fragment.token_count < sift_params.min_tokens {
                Some(RejectionReason::TooShort)
            } else if confidence < sift_params.min_confidence {
                Some(RejectionReason::LowConfidence)
            } else if label != minority_label {
                Some(RejectionReason::WrongLabel)
            } else if sift_params.dedup
                && (original_texts.contains(&fragment.text) || accepted_texts.contains(&fragment.text))
            {
                Some(RejectionReason::Duplicate)
            } else {
                None
            };
            if reason.is_none() {
                accepted_texts.insert(fragment.text.clone());
                accepted_count += 1;
            }
            audit.push(EaseCandidate {
                fragment,
                acquired_label: label,
                confidence,
                accepted: reason.is_none(),
                rejection_reason: reason,
            });
        }
    }

    let merged = employ(train, &audit, category, minority_label)?;
    let final_ratio = n_majority as f64 / (profile.n_minority + accepted_count) as f64;
    let shortfall = if needed(accepted_count) {
        Some(format!(
            "category {category}: accepted {accepted_count} fragments; ratio {final_ratio:.2} is still above target {target_ratio:.2}"
        ))
    } else {
        None
    };
    if let Some(w) = &shortfall {
        log::warn!("ease: {w}");
    }
    Ok(EaseOutcome {
        merged,
        audit,
        accepted_count,
        final_ratio,
        shortfall,
    })
}

/// Serialize the audit trail (the sift ledger) as JSONL.
pub fn audit_jsonl(audit: &[EaseCandidate]) -> String {
    let mut out = String::new();
    for c in audit {
        out.push_str(&serde_json::to_string(c).expect("candidate serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ConstantLabeler;
    use crate::corpus::CategorySchema;
    use crate::features::VocabParams;
    use std::collections::BTreeMap;

    fn labels(schema: &CategorySchema, positives: &[CategoryId]) -> BTreeMap<CategoryId, u8> {
        schema
            .ids()
            .map(|c| (c, u8::from(positives.contains(&c))))
            .collect()
    }

    fn response(text: &str) -> LabeledResponse {
        let schema = CategorySchema::with_default_groups([1]).unwrap();
        LabeledResponse::human("r1", text, labels(&schema, &[]))
    }

    #[test]
    fn extract_splits_on_terminal_punctuation() {
        let frags = extract(&response("Like charges repel. They stop when energy is gone."));
        assert_eq!(frags.len(), 2);
        assert_eq!(frags[0].text, "Like charges repel");
        assert_eq!(frags[1].text, "They stop when energy is gone");
        // Casing preserved, spans point into the source.
        assert!(frags[0].text.starts_with("Like"));
        let src = "Like charges repel. They stop when energy is gone.";
        assert_eq!(&src[frags[1].span.0..frags[1].span.1], frags[1].text);
    }

    #[test]
    fn extract_splits_because_clauses() {
        let frags = extract(&response("They move because the charges repel strongly here."));
        assert_eq!(frags.len(), 2);
        assert_eq!(frags[0].text, "They move");
        assert_eq!(frags[1].text, "the charges repel strongly here");
    }

    #[test]
    fn extract_single_token_fragment_survives_to_sift() {
        let frags = extract(&response("ok"));
        assert_eq!(frags.len(), 1);
        assert_eq!(frags[0].token_count, 1);
    }

    #[test]
    fn extract_empty_text_is_empty() {
        // Corpus validation forbids empty text, so probe extract directly.
        let mut r = response("placeholder");
        r.text = "   ".to_string();
        assert!(extract(&r).is_empty());
    }

    #[test]
    fn sift_rejections_carry_reasons() {
        let frag = |text: &str| Fragment {
            text: text.to_string(),
            source_response_id: "r1".into(),
            span: (0, text.len()),
            token_count: tokenize(text).len(),
        };
        let originals: std::collections::HashSet<String> =
            ["the original response text right here".to_string()].into();
        let candidates = vec![
            (frag("ok"), 1, 0.99),
            (frag("long enough fragment with confidence low"), 1, 0.79),
            (frag("the original response text right here"), 1, 0.95),
            (frag("a majority sounding fragment of text"), 0, 0.95),
            (frag("a perfectly fine minority fragment"), 1, 0.95),
            (frag("a perfectly fine minority fragment"), 1, 0.96),
        ];
        let sifted = sift(candidates, &SiftParams::default(), 1, &originals);
        assert_eq!(sifted[0].rejection_reason, Some(RejectionReason::TooShort));
        assert_eq!(sifted[1].rejection_reason, Some(RejectionReason::LowConfidence));
        assert_eq!(sifted[2].rejection_reason, Some(RejectionReason::Duplicate));
        assert_eq!(sifted[3].rejection_reason, Some(RejectionReason::WrongLabel));
        assert!(sifted[4].accepted);
        assert_eq!(sifted[5].rejection_reason, Some(RejectionReason::Duplicate));
    }

    #[test]
    fn sift_boundary_confidence_is_kept() {
        let frag = Fragment {
            text: "boundary confidence fragment with tokens".into(),
            source_response_id: "r1".into(),
            span: (0, 10),
            token_count: 5,
        };
        let sifted = sift(vec![(frag, 1, 0.8)], &SiftParams::default(), 1, &Default::default());
        assert!(sifted[0].accepted);
    }

    fn mini_corpus() -> Corpus {
        let schema = CategorySchema::with_default_groups([5]).unwrap();
        let rows = vec![
            LabeledResponse::human(
                "m0",
                "the potential energy convert into the kinetic energy. the carts store the energy here today.",
                labels(&schema, &[5]),
            ),
            LabeledResponse::human(
                "m1",
                "the thermal energy spread into the surroundings. the potential energy release quickly right now.",
                labels(&schema, &[5]),
            ),
            LabeledResponse::human("n0", "the carts move apart. the charges repel strongly there.", labels(&schema, &[])),
            LabeledResponse::human("n1", "the sheets push the carts. they separate quickly again.", labels(&schema, &[])),
            LabeledResponse::human("n2", "the cars will move away. the force weaken gradually soon.", labels(&schema, &[])),
            LabeledResponse::human("n3", "the wedges release the carts. the motion slow gradually next.", labels(&schema, &[])),
        ];
        Corpus::new(schema, rows).unwrap()
    }

    #[test]
    fn acquire_with_stub_labeler() {
        let corpus = mini_corpus();
        let vocab = Vocabulary::fit(&corpus, VocabParams { min_df: 1, ..VocabParams::default() }).unwrap();
        let frag = extract(&corpus.responses()[0]).remove(0);
        let stub = ConstantLabeler { label: 1 };
        let (label, confidence) = acquire(&frag, &stub, &vocab).unwrap();
        assert_eq!((label, confidence), (1, 1.0));
        let untrained = crate::classifier::LogRegLabeler::new(Default::default(), 0);
        assert!(matches!(
            acquire(&frag, &untrained, &vocab),
            Err(EaseError::UntrainedLabeler)
        ));
    }

    #[test]
    fn employ_adds_minority_rows_with_provenance() {
        let corpus = mini_corpus();
        let fragment = Fragment {
            text: "a freshly mined minority fragment".into(),
            source_response_id: "m0".into(),
            span: (0, 10),
            token_count: 5,
        };
        let accepted = vec![EaseCandidate {
            fragment,
            acquired_label: 1,
            confidence: 0.9,
            accepted: true,
            rejection_reason: None,
        }];
        let merged = employ(&corpus, &accepted, 5, 1).unwrap();
        assert_eq!(merged.len(), corpus.len() + 1);
        let added = merged.responses().last().unwrap();
        assert_eq!(added.origin, Origin::Ease);
        assert_eq!(added.parent_ids, vec!["m0".to_string()]);
        assert_eq!(added.label(5), Some(1));
        // Zero accepted: corpus unchanged.
        let unchanged = employ(&corpus, &[], 5, 1).unwrap();
        assert_eq!(unchanged, corpus);
    }

    #[test]
    fn employ_ratio_arithmetic_reference_cases() {
        // Post ratios from adding accepted counts to fixed base tallies.
        let cases = [
            (1409usize, 57usize, 1195usize, 1.13f64),
            (1447, 19, 1246, 1.14),
            (1398, 68, 1164, 1.13),
        ];
        for (maj, min, added, expected) in cases {
            let ratio = maj as f64 / (min + added) as f64;
            let rounded = (ratio * 100.0).round() / 100.0;
            assert!(
                (rounded - expected).abs() <= 0.01 + 1e-12,
                "({maj},{min}) + {added} -> {rounded}, expected {expected}"
            );
        }
    }

    #[test]
    fn ease_run_reaches_target_with_stub_labeler() {
        let corpus = mini_corpus();
        let vocab = Vocabulary::fit(&corpus, VocabParams { min_df: 1, ..VocabParams::default() }).unwrap();
        let stub = ConstantLabeler { label: 1 };
        let out = ease_run(&corpus, 5, &stub, &vocab, &SiftParams::default(), 1.15).unwrap();
        // 4 majority / (2 + accepted) <= 1.15 needs accepted >= 2.
        assert!(out.accepted_count >= 2);
        assert!(out.final_ratio <= 1.15);
        assert!(out.shortfall.is_none());
        assert_eq!(out.merged.len(), corpus.len() + out.accepted_count);
        // Determinism: same inputs, same audit.
        let again = ease_run(&corpus, 5, &stub, &vocab, &SiftParams::default(), 1.15).unwrap();
        assert_eq!(audit_jsonl(&out.audit), audit_jsonl(&again.audit));
    }

    #[test]
    fn ease_run_target_already_met_is_identity() {
        let corpus = mini_corpus();
        let vocab = Vocabulary::fit(&corpus, VocabParams { min_df: 1, ..VocabParams::default() }).unwrap();
        let stub = ConstantLabeler { label: 1 };
        let out = ease_run(&corpus, 5, &stub, &vocab, &SiftParams::default(), 10.0).unwrap();
        assert_eq!(out.accepted_count, 0);
        assert_eq!(out.merged, corpus);
    }

    #[test]
    fn ease_run_signal_free_labeler_reports_shortfall() {
        let corpus = mini_corpus();
        let vocab = Vocabulary::fit(&corpus, VocabParams { min_df: 1, ..VocabParams::default() }).unwrap();
        let stub = ConstantLabeler { label: 0 };
        let out = ease_run(&corpus, 5, &stub, &vocab, &SiftParams::default(), 1.15).unwrap();
        assert_eq!(out.accepted_count, 0);
        assert!(out.shortfall.is_some());
        // Every audited candidate is re-checkable: rejected as wrong label or
        // too short, never silently dropped.
        assert!(!out.audit.is_empty());
        for c in &out.audit {
            assert!(!c.accepted);
            assert!(matches!(
                c.rejection_reason,
                Some(RejectionReason::WrongLabel) | Some(RejectionReason::TooShort)
            ));
        }
    }
}
