//! Lexical head assignment: percolate a head token (and its POS) up the tree
//! using a configurable per-nonterminal rule table.

use std::collections::BTreeMap;

use super::cky::{ParseChildren, ParseTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadDirection {
    Leftmost,
    Rightmost,
}

/// For one nonterminal: scan the preferred child labels in order; the first
/// label with a match wins (scanning from `direction`). If none match, fall
/// back to `direction`'s end child.
#[derive(Debug, Clone)]
pub struct HeadRule {
    pub direction: HeadDirection,
    pub preferred: Vec<String>,
}

/// Nonterminal -> head-child selector. Nonterminals missing from the table
/// fall back to the leftmost child with a warning.
#[derive(Debug, Clone)]
pub struct HeadRules {
    table: BTreeMap<String, HeadRule>,
}

impl HeadRules {
    pub fn new(table: BTreeMap<String, HeadRule>) -> Self {
        Self { table }
    }

    /// Defaults for the cart-domain grammar: noun phrases are head-final
    /// (the noun), verb phrases head-initial (the verb), prepositional
    /// phrases select the preposition, clauses select the verb phrase.
    pub fn cart_default() -> Self {
        let mut table = BTreeMap::new();
        table.insert(
            "NP".to_string(),
            HeadRule {
                direction: HeadDirection::Rightmost,
                preferred: vec!["NN".into(), "NP".into()],
            },
        );
        table.insert(
            "VP".to_string(),
            HeadRule {
                direction: HeadDirection::Leftmost,
                preferred: vec!["V".into(), "VP".into(), "MD".into()],
            },
        );
        table.insert(
            "S".to_string(),
            HeadRule {
                direction: HeadDirection::Rightmost,
                preferred: vec!["VP".into()],
            },
        );
        table.insert(
            "PP".to_string(),
            HeadRule {
                direction: HeadDirection::Leftmost,
                preferred: vec!["IN".into()],
            },
        );
        table.insert(
            "SBAR".to_string(),
            HeadRule {
                direction: HeadDirection::Rightmost,
                preferred: vec!["S".into()],
            },
        );
        Self { table }
    }

    fn pick_child<'a>(&self, label: &str, children: &'a [ParseTree]) -> &'a ParseTree {
        // Generated binarization intermediates (@A|...) inherit A's rule.
        let lookup = label.split(['@', '|']).find(|s| !s.is_empty()).unwrap_or(label);
        let base = lookup.split('+').next().unwrap_or(lookup);
        match self.table.get(base) {
            Some(rule) => {
                let scan: Box<dyn Iterator<Item = &ParseTree>> = match rule.direction {
                    HeadDirection::Leftmost => Box::new(children.iter()),
                    HeadDirection::Rightmost => Box::new(children.iter().rev()),
                };
                let candidates: Vec<&ParseTree> = scan.collect();
                for preferred in &rule.preferred {
                    if let Some(child) = candidates
                        .iter()
                        .find(|c| c.label == *preferred || c.label.split(['+', '|']).any(|p| p == preferred))
                    {
                        return child;
                    }
                }
                candidates[0]
            }
            None => {
                log::warn!("head rules: no entry for nonterminal {label:?}; falling back to leftmost child");
                &children[0]
            }
        }
    }
}

/// Fill `head` on every node: a preterminal heads itself; an internal node
/// takes the head of its designated head child.
pub fn assign_heads(tree: &ParseTree, rules: &HeadRules) -> ParseTree {
    match &tree.children {
        ParseChildren::Leaf(token) => {
            let mut out = tree.clone();
            out.head = Some((token.clone(), tree.label.clone()));
            out
        }
        ParseChildren::Internal(children) => {
            let new_children: Vec<ParseTree> = children.iter().map(|c| assign_heads(c, rules)).collect();
            let head_child = rules.pick_child(&tree.label, &new_children);
            let head = head_child.head.clone();
            ParseTree {
                label: tree.label.clone(),
                children: ParseChildren::Internal(new_children),
                inside_prob: tree.inside_prob,
                head,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alp::cky::cky_parse;
    use crate::alp::grammar::induce_pcfg;
    use crate::alp::treebank::read_treebank;

    #[test]
    fn np_head_is_the_noun_and_vp_head_the_verb() {
        let trees = read_treebank("(S (NP (DT the) (NN cart)) (VP (V repel) (NP (DT the) (NN sheets))))").unwrap();
        let grammar = induce_pcfg(&trees).unwrap();
        let parse = cky_parse(&["the", "cart", "repel", "the", "sheets"], &grammar).unwrap();
        let lexicalized = assign_heads(&parse, &HeadRules::cart_default());
        // Sentence head percolates from VP -> V.
        assert_eq!(lexicalized.head, Some(("repel".into(), "V".into())));
        if let ParseChildren::Internal(children) = &lexicalized.children {
            assert_eq!(children[0].head, Some(("cart".into(), "NN".into())));
            assert_eq!(children[1].head, Some(("repel".into(), "V".into())));
        }
    }

    #[test]
    fn single_child_inherits_that_childs_head() {
        let trees = read_treebank("(S (PRP they) (VP (V move) (RB apart)))").unwrap();
        let grammar = induce_pcfg(&trees).unwrap();
        let parse = cky_parse(&["they", "move", "apart"], &grammar).unwrap();
        let lexicalized = assign_heads(&parse, &HeadRules::cart_default());
        if let ParseChildren::Internal(children) = &lexicalized.children {
            // PRP preterminal heads itself.
            assert_eq!(children[0].head, Some(("they".into(), "PRP".into())));
        }
    }

    #[test]
    fn missing_nonterminal_falls_back_to_leftmost() {
        let trees = read_treebank("(X (A a) (B b))").unwrap();
        let grammar = induce_pcfg(&trees).unwrap();
        let parse = cky_parse(&["a", "b"], &grammar).unwrap();
        let rules = HeadRules::new(BTreeMap::new());
        let lexicalized = assign_heads(&parse, &rules);
        assert_eq!(lexicalized.head, Some(("a".into(), "A".into())));
    }
}
