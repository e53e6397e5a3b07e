//! CKY Viterbi parsing under a CNF grammar: the maximum-probability parse,
//! with ties broken toward the lower-indexed rule (then the lower split
//! point). Unparseable sentences yield `None`.

use super::grammar::{Grammar, RuleRhs};

/// A parse node. Every node records its inside probability (the product of
/// the rule probabilities in its derivation); lexical heads are filled in by
/// head assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseTree {
    pub label: String,
    pub children: ParseChildren,
    pub inside_prob: f64,
    /// Lexical head token and its preterminal (POS) label, once assigned.
    pub head: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseChildren {
    /// Preterminal over one terminal token.
    Leaf(String),
    Internal(Vec<ParseTree>),
}

impl ParseTree {
    pub fn leaf_tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens(&self, out: &mut Vec<String>) {
        match &self.children {
            ParseChildren::Leaf(token) => out.push(token.clone()),
            ParseChildren::Internal(children) => {
                for c in children {
                    c.collect_tokens(out);
                }
            }
        }
    }

    /// (token, preterminal label) pairs, left to right.
    pub fn tagged_tokens(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        self.collect_tagged(&mut out);
        out
    }

    fn collect_tagged(&self, out: &mut Vec<(String, String)>) {
        match &self.children {
            ParseChildren::Leaf(token) => out.push((token.clone(), self.label.clone())),
            ParseChildren::Internal(children) => {
                for c in children {
                    c.collect_tagged(out);
                }
            }
        }
    }

    pub fn is_preterminal(&self) -> bool {
        matches!(self.children, ParseChildren::Leaf(_))
    }

    /// Recompute the inside probability bottom-up from the grammar, returning
    /// the product (used to cross-check the chart).
    pub fn recompute_prob(&self, grammar: &Grammar) -> Option<f64> {
        match &self.children {
            ParseChildren::Leaf(token) => grammar
                .rules()
                .iter()
                .find(|r| r.lhs == self.label && r.rhs == RuleRhs::Terminal(token.clone()))
                .map(|r| r.prob),
            ParseChildren::Internal(children) => {
                if children.len() != 2 {
                    return None;
                }
                let rhs = RuleRhs::Binary(children[0].label.clone(), children[1].label.clone());
                let rule = grammar
                    .rules()
                    .iter()
                    .find(|r| r.lhs == self.label && r.rhs == rhs)?;
                let left = children[0].recompute_prob(grammar)?;
                let right = children[1].recompute_prob(grammar)?;
                Some(rule.prob * left * right)
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Cell {
    prob: f64,
    rule: usize,
    split: usize,
}

/// Viterbi CKY. Returns the best parse rooted at the grammar's start symbol
/// covering the whole token sequence, or `None` when no parse exists (e.g. a
/// token outside the terminal set).
pub fn cky_parse(tokens: &[&str], grammar: &Grammar) -> Option<ParseTree> {
    let n = tokens.len();
    if n == 0 {
        return None;
    }
    // Dense symbol ids in rule order for chart addressing.
    let mut symbol_ids: std::collections::HashMap<&str, usize> = Default::default();
    for rule in grammar.rules() {
        let next = symbol_ids.len();
        symbol_ids.entry(rule.lhs.as_str()).or_insert(next);
        if let RuleRhs::Binary(b, c) = &rule.rhs {
            let next = symbol_ids.len();
            symbol_ids.entry(b.as_str()).or_insert(next);
            let next = symbol_ids.len();
            symbol_ids.entry(c.as_str()).or_insert(next);
        }
    }
    let n_sym = symbol_ids.len();
    let start_id = *symbol_ids.get(grammar.start())?;

    // chart[span_index][symbol] = best (prob, rule, split)
    let cell_index = |i: usize, j: usize| i * (n + 1) + j;
    let mut chart: Vec<Vec<Option<Cell>>> = vec![vec![None; n_sym]; (n + 1) * (n + 1)];

    for (i, token) in tokens.iter().enumerate() {
        let rules = grammar.lexical_rules_for(token);
        if rules.is_empty() {
            return None;
        }
        for &r in rules {
            let rule = &grammar.rules()[r];
            let sym = symbol_ids[rule.lhs.as_str()];
            let slot = &mut chart[cell_index(i, i + 1)][sym];
            let better = match slot {
                None => true,
                Some(cell) => rule.prob > cell.prob,
            };
            if better {
                *slot = Some(Cell {
                    prob: rule.prob,
                    rule: r,
                    split: usize::MAX,
                });
            }
        }
    }

    let binary: Vec<(usize, usize, usize, usize, f64)> = grammar
        .binary_rule_indices()
        .iter()
        .map(|&r| {
            let rule = &grammar.rules()[r];
            let (b, c) = match &rule.rhs {
                RuleRhs::Binary(b, c) => (symbol_ids[b.as_str()], symbol_ids[c.as_str()]),
                RuleRhs::Terminal(_) => unreachable!(),
            };
            (r, symbol_ids[rule.lhs.as_str()], b, c, rule.prob)
        })
        .collect();

    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width;
            // Rule-major iteration keeps ties resolved toward the lowest rule
            // index, then the lowest split.
            for &(r, lhs, b, c, prob) in &binary {
                for split in i + 1..j {
                    let Some(left) = chart[cell_index(i, split)][b] else {
                        continue;
                    };
                    let Some(right) = chart[cell_index(split, j)][c] else {
                        continue;
                    };
                    let candidate = prob * left.prob * right.prob;
                    let slot = &mut chart[cell_index(i, j)][lhs];
                    let better = match slot {
                        None => true,
                        Some(cell) => candidate > cell.prob,
                    };
                    if better {
                        *slot = Some(Cell {
                            prob: candidate,
                            rule: r,
                            split,
                        });
                    }
                }
            }
        }
    }

    chart[cell_index(0, n)][start_id]?;
    Some(build_tree(&chart, &cell_index, grammar, &symbol_ids, tokens, 0, n, start_id))
}

#[allow(clippy::too_many_arguments)]
fn build_tree(
    chart: &[Vec<Option<Cell>>],
    cell_index: &dyn Fn(usize, usize) -> usize,
    grammar: &Grammar,
    symbol_ids: &std::collections::HashMap<&str, usize>,
    tokens: &[&str],
    i: usize,
    j: usize,
    sym: usize,
) -> ParseTree {
    let cell = chart[cell_index(i, j)][sym].expect("cell populated");
    let rule = &grammar.rules()[cell.rule];
    match &rule.rhs {
        RuleRhs::Terminal(_) => ParseTree {
            label: rule.lhs.clone(),
            children: ParseChildren::Leaf(tokens[i].to_string()),
            inside_prob: cell.prob,
            head: None,
        },
        RuleRhs::Binary(b, c) => {
            let left = build_tree(
                chart,
                cell_index,
                grammar,
                symbol_ids,
                tokens,
                i,
                cell.split,
                symbol_ids[b.as_str()],
            );
            let right = build_tree(
                chart,
                cell_index,
                grammar,
                symbol_ids,
                tokens,
                cell.split,
                j,
                symbol_ids[c.as_str()],
            );
            ParseTree {
                label: rule.lhs.clone(),
                children: ParseChildren::Internal(vec![left, right]),
                inside_prob: cell.prob,
                head: None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alp::grammar::induce_pcfg;
    use crate::alp::treebank::read_treebank;

    fn toy_grammar() -> Grammar {
        let trees = read_treebank(
            "\
(S (NP (DT the) (NN charges)) (VP (V repel) (RB apart)))
(S (NP (DT the) (NN carts)) (VP (V move) (RB away)))
(S (PRP they) (VP (V stop) (RB eventually)))
",
        )
        .unwrap();
        induce_pcfg(&trees).unwrap()
    }

    #[test]
    fn unique_parse_probability_is_rule_product() {
        let grammar = toy_grammar();
        let tree = cky_parse(&["the", "charges", "repel", "apart"], &grammar).unwrap();
        assert_eq!(tree.label, "S");
        assert_eq!(tree.leaf_tokens(), vec!["the", "charges", "repel", "apart"]);
        let recomputed = tree.recompute_prob(&grammar).unwrap();
        let rel = (tree.inside_prob - recomputed).abs() / recomputed;
        assert!(rel < 1e-9);
    }

    #[test]
    fn unknown_token_yields_none() {
        let grammar = toy_grammar();
        assert!(cky_parse(&["the", "unicorns", "repel", "apart"], &grammar).is_none());
        assert!(cky_parse(&[], &grammar).is_none());
    }

    #[test]
    fn every_node_records_inside_probability() {
        let grammar = toy_grammar();
        let tree = cky_parse(&["they", "stop", "eventually"], &grammar).unwrap();
        fn walk(node: &ParseTree, grammar: &Grammar) {
            let recomputed = node.recompute_prob(grammar).unwrap();
            let rel = (node.inside_prob - recomputed).abs() / recomputed.max(1e-300);
            assert!(rel < 1e-9, "node {} prob mismatch", node.label);
            if let ParseChildren::Internal(children) = &node.children {
                for c in children {
                    walk(c, grammar);
                }
            }
        }
        walk(&tree, &grammar);
    }

    #[test]
    fn ambiguous_sentence_takes_higher_probability_tree() {
        // Two parses for "a a a": X -> X X lexical ambiguity via two
        // preterminals with different probabilities.
        use crate::alp::grammar::{Rule, RuleRhs};
        let rules = vec![
            Rule { lhs: "S".into(), rhs: RuleRhs::Binary("A".into(), "B".into()), prob: 0.6 },
            Rule { lhs: "S".into(), rhs: RuleRhs::Binary("B".into(), "A".into()), prob: 0.4 },
            Rule { lhs: "A".into(), rhs: RuleRhs::Terminal("a".into()), prob: 1.0 },
            Rule { lhs: "B".into(), rhs: RuleRhs::Terminal("a".into()), prob: 1.0 },
        ];
        let grammar = Grammar::new(rules, "S").unwrap();
        let tree = cky_parse(&["a", "a"], &grammar).unwrap();
        assert!((tree.inside_prob - 0.6).abs() < 1e-12);
        if let ParseChildren::Internal(children) = &tree.children {
            assert_eq!(children[0].label, "A");
            assert_eq!(children[1].label, "B");
        }
    }
}
