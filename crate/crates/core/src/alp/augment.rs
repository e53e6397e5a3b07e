//! Phrase-level augmentation on lexicalized parse trees: extract plausible
//! subtrees above a probability threshold, swap compatible substructures
//! between same-label sentences, and substitute POS-matched synonyms.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::cky::{ParseChildren, ParseTree};
use super::lexicon::SynonymLexicon;
use super::AlpParams;
use crate::rng::derive_rng;

/// A candidate subtree: its path from the root (child indices), label, head
/// POS, inside probability, and covered tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtreeRef {
    pub path: Vec<usize>,
    pub label: String,
    pub head_pos: String,
    pub inside_prob: f64,
    pub tokens: Vec<String>,
}

/// Internal-node subtrees with inside probability at or above the threshold,
/// excluding the root, preterminal nodes, and generated binarization
/// intermediates (labels starting with `@`).
pub fn extract_subtrees(tree: &ParseTree, params: &AlpParams) -> Vec<SubtreeRef> {
    let mut out = Vec::new();
    collect_subtrees(tree, &mut Vec::new(), params.subtree_prob_threshold, &mut out);
    out
}

fn collect_subtrees(node: &ParseTree, path: &mut Vec<usize>, threshold: f64, out: &mut Vec<SubtreeRef>) {
    let is_root = path.is_empty();
    if !is_root && !node.is_preterminal() && !node.label.starts_with('@') && node.inside_prob >= threshold {
        let head = node.head.clone().unwrap_or_default();
        out.push(SubtreeRef {
            path: path.clone(),
            label: node.label.clone(),
            head_pos: head.1,
            inside_prob: node.inside_prob,
            tokens: node.leaf_tokens(),
        });
    }
    if let ParseChildren::Internal(children) = &node.children {
        for (i, c) in children.iter().enumerate() {
            path.push(i);
            collect_subtrees(c, path, threshold, out);
            path.pop();
        }
    }
}

fn node_at<'a>(tree: &'a ParseTree, path: &[usize]) -> &'a ParseTree {
    let mut node = tree;
    for &i in path {
        match &node.children {
            ParseChildren::Internal(children) => node = &children[i],
            ParseChildren::Leaf(_) => panic!("path descends into a leaf"),
        }
    }
    node
}

fn replace_at(tree: &ParseTree, path: &[usize], replacement: ParseTree) -> ParseTree {
    if path.is_empty() {
        return replacement;
    }
    let mut out = tree.clone();
    match &mut out.children {
        ParseChildren::Internal(children) => {
            children[path[0]] = replace_at(&children[path[0]], &path[1..], replacement);
        }
        ParseChildren::Leaf(_) => panic!("path descends into a leaf"),
    }
    out
}

fn is_prefix(a: &[usize], b: &[usize]) -> bool {
    a.len() <= b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

/// Result of one swap call.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome {
    /// (token, POS) pairs for the sentence derived from the first tree.
    pub sentence_a: Vec<(String, String)>,
    /// Same for the second tree.
    pub sentence_b: Vec<(String, String)>,
    /// (label, head POS) of each exchanged constituent pair.
    pub swapped: Vec<(String, String)>,
    /// True when no compatible pair existed and the inputs pass through.
    pub no_op: bool,
}

impl SwapOutcome {
    pub fn text_a(&self) -> String {
        detokenize(&self.sentence_a)
    }

    pub fn text_b(&self) -> String {
        detokenize(&self.sentence_b)
    }
}

pub fn detokenize(tagged: &[(String, String)]) -> String {
    tagged.iter().map(|(t, _)| t.as_str()).collect::<Vec<_>>().join(" ")
}

/// Swap compatible substructures between two lexicalized trees.
///
/// Compatibility is identical nonterminal label plus identical head POS,
/// which keeps both outputs grammatical by construction. One uniformly
/// chosen compatible pair is exchanged per round, up to `max_swaps` rounds;
/// later rounds only consider constituents disjoint from already-swapped
/// spans. Content-equal inputs restrict pairs to mirrored positions, so
/// swapping a tree with itself is the identity.
pub fn swap_subtrees(tree_a: &ParseTree, tree_b: &ParseTree, params: &AlpParams, seed: u64) -> SwapOutcome {
    let mut rng = derive_rng(seed, "alp/swap");
    swap_subtrees_with_rng(tree_a, tree_b, params, &mut rng)
}

pub(crate) fn swap_subtrees_with_rng(
    tree_a: &ParseTree,
    tree_b: &ParseTree,
    params: &AlpParams,
    rng: &mut ChaCha8Rng,
) -> SwapOutcome {
    let cands_a = extract_subtrees(tree_a, params);
    let cands_b = extract_subtrees(tree_b, params);
    let self_swap = tree_a == tree_b;

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, a) in cands_a.iter().enumerate() {
        for (j, b) in cands_b.iter().enumerate() {
            if a.label == b.label && a.head_pos == b.head_pos && (!self_swap || a.path == b.path) {
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() {
        return SwapOutcome {
            sentence_a: tree_a.tagged_tokens(),
            sentence_b: tree_b.tagged_tokens(),
            swapped: Vec::new(),
            no_op: true,
        };
    }

    let mut out_a = tree_a.clone();
    let mut out_b = tree_b.clone();
    let mut used_a: Vec<Vec<usize>> = Vec::new();
    let mut used_b: Vec<Vec<usize>> = Vec::new();
    let mut swapped = Vec::new();
    for _ in 0..params.max_swaps.max(1) {
        let available: Vec<&(usize, usize)> = pairs
            .iter()
            .filter(|(i, j)| {
                let pa = &cands_a[*i].path;
                let pb = &cands_b[*j].path;
                !used_a.iter().any(|u| is_prefix(u, pa) || is_prefix(pa, u))
                    && !used_b.iter().any(|u| is_prefix(u, pb) || is_prefix(pb, u))
            })
            .collect();
        if available.is_empty() {
            break;
        }
        let &&(i, j) = &available[rng.random_range(0..available.len())];
        let sub_a = node_at(tree_a, &cands_a[i].path).clone();
        let sub_b = node_at(tree_b, &cands_b[j].path).clone();
        out_a = replace_at(&out_a, &cands_a[i].path, sub_b);
        out_b = replace_at(&out_b, &cands_b[j].path, sub_a);
        used_a.push(cands_a[i].path.clone());
        used_b.push(cands_b[j].path.clone());
        swapped.push((cands_a[i].label.clone(), cands_a[i].head_pos.clone()));
    }

    SwapOutcome {
        sentence_a: out_a.tagged_tokens(),
        sentence_b: out_b.tagged_tokens(),
        swapped,
        no_op: false,
    }
}

fn is_content_pos(pos: &str) -> bool {
    matches!(pos.chars().next(), Some('N') | Some('V') | Some('J') | Some('R'))
}

/// Replace each eligible content token (noun/verb/adjective/adverb POS)
/// independently with probability `rate` by a uniformly chosen synonym of
/// matching POS. Tokens absent from the lexicon pass through.
pub fn substitute_synonyms(
    tagged: &[(String, String)],
    lexicon: &SynonymLexicon,
    rate: f64,
    seed: u64,
) -> Vec<String> {
    let mut rng = derive_rng(seed, "alp/synonyms");
    substitute_synonyms_with_rng(tagged, lexicon, rate, &mut rng)
}

pub(crate) fn substitute_synonyms_with_rng(
    tagged: &[(String, String)],
    lexicon: &SynonymLexicon,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    tagged
        .iter()
        .map(|(token, pos)| {
            if !is_content_pos(pos) {
                return token.clone();
            }
            let Some(synonyms) = lexicon.synonyms(token, pos) else {
                return token.clone();
            };
            if synonyms.is_empty() || !rng.random_bool(rate) {
                return token.clone();
            }
            synonyms[rng.random_range(0..synonyms.len())].clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alp::cky::cky_parse;
    use crate::alp::grammar::induce_pcfg;
    use crate::alp::heads::{assign_heads, HeadRules};
    use crate::alp::treebank::read_treebank;

    fn fixture() -> (crate::alp::grammar::Grammar, ParseTree, ParseTree) {
        let trees = read_treebank(
            "\
(S (NP (DT the) (NN carts)) (VP (V push) (NP (DT the) (NN sheets))))
(S (NP (DT the) (NN charges)) (VP (V repel) (NP (DT the) (NN plates))))
",
        )
        .unwrap();
        let grammar = induce_pcfg(&trees).unwrap();
        let rules = HeadRules::cart_default();
        let a = assign_heads(&cky_parse(&["the", "carts", "push", "the", "sheets"], &grammar).unwrap(), &rules);
        let b = assign_heads(&cky_parse(&["the", "charges", "repel", "the", "plates"], &grammar).unwrap(), &rules);
        (grammar, a, b)
    }

    #[test]
    fn threshold_zero_keeps_all_internal_nonroot_subtrees() {
        let (_, a, _) = fixture();
        let params = AlpParams {
            subtree_prob_threshold: f64::MIN_POSITIVE,
            ..AlpParams::default()
        };
        let subs = extract_subtrees(&a, &params);
        // NP, VP, NP: three internal non-root, non-preterminal nodes.
        assert_eq!(subs.len(), 3);
        assert!(subs.iter().all(|s| !s.path.is_empty()));
        assert!(subs.iter().all(|s| s.label == "NP" || s.label == "VP"));
    }

    #[test]
    fn threshold_one_keeps_only_certain_derivations() {
        let (_, a, _) = fixture();
        let params = AlpParams {
            subtree_prob_threshold: 1.0,
            ..AlpParams::default()
        };
        for s in extract_subtrees(&a, &params) {
            assert!((s.inside_prob - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mid_threshold_matches_enumerated_probabilities() {
        let (_, a, _) = fixture();
        let all = extract_subtrees(
            &a,
            &AlpParams {
                subtree_prob_threshold: f64::MIN_POSITIVE,
                ..AlpParams::default()
            },
        );
        let threshold = 0.6;
        let expected: Vec<&SubtreeRef> = all.iter().filter(|s| s.inside_prob >= threshold).collect();
        let got = extract_subtrees(
            &a,
            &AlpParams {
                subtree_prob_threshold: threshold,
                ..AlpParams::default()
            },
        );
        assert_eq!(got.len(), expected.len());
    }

    #[test]
    fn swap_exchanges_compatible_noun_phrases() {
        let (grammar, a, b) = fixture();
        let params = AlpParams {
            max_swaps: 1,
            ..AlpParams::default()
        };
        let outcome = swap_subtrees(&a, &b, &params, 5);
        assert!(!outcome.no_op);
        assert_eq!(outcome.swapped.len(), 1);
        let text_a = outcome.text_a();
        let text_b = outcome.text_b();
        assert_ne!(text_a, "the carts push the sheets");
        // Both outputs re-parse under the grammar (grammatical by construction).
        let toks_a: Vec<&str> = outcome.sentence_a.iter().map(|(t, _)| t.as_str()).collect();
        let toks_b: Vec<&str> = outcome.sentence_b.iter().map(|(t, _)| t.as_str()).collect();
        assert!(cky_parse(&toks_a, &grammar).is_some(), "unparseable: {text_a}");
        assert!(cky_parse(&toks_b, &grammar).is_some(), "unparseable: {text_b}");
        // The union of tokens is preserved across the pair of outputs.
        let mut before: Vec<String> = a.leaf_tokens();
        before.extend(b.leaf_tokens());
        before.sort();
        let mut after: Vec<String> = toks_a.iter().map(|s| s.to_string()).collect();
        after.extend(toks_b.iter().map(|s| s.to_string()));
        after.sort();
        assert_eq!(before, after);
    }

    #[test]
    fn self_swap_is_identity() {
        let (_, a, _) = fixture();
        let outcome = swap_subtrees(&a, &a, &AlpParams::default(), 9);
        assert_eq!(outcome.text_a(), "the carts push the sheets");
        assert_eq!(outcome.text_b(), "the carts push the sheets");
    }

    #[test]
    fn disjoint_nonterminals_are_a_no_op() {
        let trees_x = read_treebank("(S (NP (DT the) (NN carts)) (VP (V move) (RB apart)))").unwrap();
        let trees_y = read_treebank("(T (PP (IN between) (Q (DT the) (NN plates))) (PP (IN toward) (Q (DT the) (NN sheets))))").unwrap();
        let gx = induce_pcfg(&trees_x).unwrap();
        let gy = induce_pcfg(&trees_y).unwrap();
        let rules = HeadRules::cart_default();
        let a = assign_heads(&cky_parse(&["the", "carts", "move", "apart"], &gx).unwrap(), &rules);
        let b = assign_heads(&cky_parse(&["between", "the", "plates", "toward", "the", "sheets"], &gy).unwrap(), &rules);
        let outcome = swap_subtrees(&a, &b, &AlpParams::default(), 1);
        assert!(outcome.no_op);
        assert_eq!(outcome.text_a(), "the carts move apart");
    }

    #[test]
    fn synonym_substitution_rate_extremes_and_determinism() {
        let mut lexicon = SynonymLexicon::default();
        lexicon.insert("move", "V", &["travel"]).unwrap();
        let tagged = vec![
            ("they".to_string(), "PRP".to_string()),
            ("move".to_string(), "V".to_string()),
            ("move".to_string(), "V".to_string()),
        ];
        let unchanged = substitute_synonyms(&tagged, &lexicon, 0.0, 3);
        assert_eq!(unchanged, vec!["they", "move", "move"]);
        let replaced = substitute_synonyms(&tagged, &lexicon, 1.0, 3);
        assert_eq!(replaced, vec!["they", "travel", "travel"]);
        let r1 = substitute_synonyms(&tagged, &lexicon, 0.5, 7);
        let r2 = substitute_synonyms(&tagged, &lexicon, 0.5, 7);
        assert_eq!(r1, r2);
    }
}
