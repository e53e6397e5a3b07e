//! PCFG induction from a treebank: maximum-likelihood rule probabilities,
//! binarization to Chomsky normal form (A -> B C or A -> terminal), and a
//! seeded sentence sampler used by the benchmark generator and the parser
//! oracle tests.
//!
//! Unary nonterminal chains in the input trees are collapsed into joint
//! labels (`A+B`) so the induced grammar is strictly CNF; n-ary rules get
//! right-branching intermediates (`@A|B_C`).

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::treebank::{SyntaxTree, TreebankError};

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error(transparent)]
    Treebank(#[from] TreebankError),
    #[error("tree {index}: {message}")]
    BadTree { index: usize, message: String },
    #[error("rule probabilities for {lhs} sum to {sum}, not 1")]
    BadNormalization { lhs: String, sum: f64 },
    #[error("rule {lhs} -> {rhs} is not in Chomsky normal form")]
    NotCnf { lhs: String, rhs: String },
    #[error("grammar has no rules")]
    Empty,
}

/// Right-hand side of a CNF rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum RuleRhs {
    Binary(String, String),
    Terminal(String),
}

impl std::fmt::Display for RuleRhs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RuleRhs::Binary(b, c) => write!(f, "{b} {c}"),
            RuleRhs::Terminal(t) => write!(f, "{t:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub lhs: String,
    pub rhs: RuleRhs,
    pub prob: f64,
}

/// A CNF probabilistic context-free grammar. Rules are stored sorted by
/// (lhs, rhs), and that index order is the parser's tie-break preference.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    rules: Vec<Rule>,
    start: String,
    /// token -> indices of lexical rules producing it
    lexical: HashMap<String, Vec<usize>>,
    /// rule indices with binary rhs
    binary: Vec<usize>,
    /// lhs -> rule indices, in rule order (used by the sampler)
    by_lhs: BTreeMap<String, Vec<usize>>,
}

impl Grammar {
    /// Build and validate a grammar from explicit rules.
    pub fn new(rules: Vec<Rule>, start: impl Into<String>) -> Result<Self, GrammarError> {
        if rules.is_empty() {
            return Err(GrammarError::Empty);
        }
        let mut rules = rules;
        rules.sort_by(|a, b| a.lhs.cmp(&b.lhs).then_with(|| a.rhs.cmp(&b.rhs)));
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        for rule in &rules {
            *sums.entry(rule.lhs.as_str()).or_insert(0.0) += rule.prob;
        }
        for (lhs, sum) in sums {
            if (sum - 1.0).abs() > 1e-9 {
                return Err(GrammarError::BadNormalization {
                    lhs: lhs.to_string(),
                    sum,
                });
            }
        }
        let mut lexical: HashMap<String, Vec<usize>> = HashMap::new();
        let mut binary = Vec::new();
        let mut by_lhs: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, rule) in rules.iter().enumerate() {
            by_lhs.entry(rule.lhs.clone()).or_default().push(i);
            match &rule.rhs {
                RuleRhs::Terminal(t) => lexical.entry(t.clone()).or_default().push(i),
                RuleRhs::Binary(_, _) => binary.push(i),
            }
        }
        Ok(Self {
            rules,
            start: start.into(),
            lexical,
            binary,
            by_lhs,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn lexical_rules_for(&self, token: &str) -> &[usize] {
        self.lexical.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn binary_rule_indices(&self) -> &[usize] {
        &self.binary
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = &str> {
        self.by_lhs.keys().map(String::as_str)
    }

    pub fn terminals(&self) -> impl Iterator<Item = &str> {
        self.lexical.keys().map(String::as_str)
    }

    /// The preterminal labels that can produce a token.
    pub fn preterminals_of(&self, token: &str) -> Vec<&str> {
        self.lexical_rules_for(token)
            .iter()
            .map(|&i| self.rules[i].lhs.as_str())
            .collect()
    }

    /// Sample a derivation from `symbol`, writing tokens into `out`.
    /// Returns false if the depth or length budget was exceeded.
    fn sample_from(
        &self,
        symbol: &str,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<(String, String)>,
        depth: usize,
        opts: &SampleOptions,
    ) -> bool {
        if depth > opts.max_depth || out.len() > opts.max_tokens {
            return false;
        }
        let Some(indices) = self.by_lhs.get(symbol) else {
            return false;
        };
        // Weighted choice among the lhs's rules, skipping excluded terminals
        // (their mass is renormalized away).
        let choices: Vec<usize> = indices
            .iter()
            .copied()
            .filter(|&i| match &self.rules[i].rhs {
                RuleRhs::Terminal(t) => !opts.excluded_terminals.contains(t),
                RuleRhs::Binary(_, _) => true,
            })
            .collect();
        if choices.is_empty() {
            return false;
        }
        let total: f64 = choices.iter().map(|&i| self.rules[i].prob).sum();
        let mut draw = rng.random_range(0.0..total);
        let mut picked = choices[choices.len() - 1];
        for &i in &choices {
            draw -= self.rules[i].prob;
            if draw <= 0.0 {
                picked = i;
                break;
            }
        }
        match &self.rules[picked].rhs {
            RuleRhs::Terminal(t) => {
                out.push((t.clone(), self.rules[picked].lhs.clone()));
                true
            }
            RuleRhs::Binary(b, c) => {
                self.sample_from(b, rng, out, depth + 1, opts)
                    && self.sample_from(c, rng, out, depth + 1, opts)
            }
        }
    }

    /// Sample one sentence from the start symbol: (token, preterminal) pairs.
    /// Resamples on budget overruns, so the result is always a complete
    /// derivation. Deterministic per RNG state.
    pub fn sample_sentence(&self, rng: &mut ChaCha8Rng, opts: &SampleOptions) -> Vec<(String, String)> {
        for _ in 0..opts.max_attempts {
            let mut out = Vec::new();
            if self.sample_from(&self.start, rng, &mut out, 0, opts) && out.len() <= opts.max_tokens {
                return out;
            }
        }
        // Budget repeatedly exceeded: fall back to the shortest derivation by
        // greedy lowest-arity choice. In practice treebank grammars terminate
        // long before this.
        let mut out = Vec::new();
        let relaxed = SampleOptions {
            max_depth: opts.max_depth * 4,
            max_tokens: opts.max_tokens * 4,
            ..opts.clone()
        };
        self.sample_from(&self.start, rng, &mut out, 0, &relaxed);
        out
    }
}

/// Budgets for [`Grammar::sample_sentence`].
#[derive(Debug, Clone)]
pub struct SampleOptions {
    pub max_depth: usize,
    pub max_tokens: usize,
    pub max_attempts: usize,
    /// Terminals the sampler must not emit (keyword tokens are planted
    /// explicitly, never sampled).
    pub excluded_terminals: std::collections::BTreeSet<String>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            max_depth: 12,
            max_tokens: 18,
            max_attempts: 64,
            excluded_terminals: Default::default(),
        }
    }
}

/// Induce an MLE PCFG from bracketed trees: rule probability =
/// `count(lhs -> rhs) / count(lhs)` after collapsing unary chains and
/// binarizing n-ary rules.
pub fn induce_pcfg(treebank: &[SyntaxTree]) -> Result<Grammar, GrammarError> {
    if treebank.is_empty() {
        return Err(GrammarError::Treebank(TreebankError::Empty));
    }
    let mut counts: BTreeMap<(String, RuleRhs), usize> = BTreeMap::new();
    let mut start: Option<String> = None;
    for (i, tree) in treebank.iter().enumerate() {
        let index = i + 1;
        let normalized = collapse_unary(tree).map_err(|message| GrammarError::BadTree { index, message })?;
        let binarized = binarize(&normalized);
        let label = binarized
            .label()
            .ok_or_else(|| GrammarError::BadTree {
                index,
                message: "tree root is a bare token".into(),
            })?
            .to_string();
        match &start {
            None => start = Some(label),
            Some(s) => {
                if *s != label {
                    return Err(GrammarError::BadTree {
                        index,
                        message: format!("root {label:?} differs from first root {s:?}"),
                    });
                }
            }
        }
        count_rules(&binarized, &mut counts).map_err(|message| GrammarError::BadTree { index, message })?;
    }
    let mut lhs_totals: BTreeMap<&str, usize> = BTreeMap::new();
    for ((lhs, _), n) in &counts {
        *lhs_totals.entry(lhs.as_str()).or_insert(0) += n;
    }
    let rules: Vec<Rule> = counts
        .iter()
        .map(|((lhs, rhs), n)| Rule {
            lhs: lhs.clone(),
            rhs: rhs.clone(),
            prob: *n as f64 / lhs_totals[lhs.as_str()] as f64,
        })
        .collect();
    Grammar::new(rules, start.expect("non-empty treebank"))
}

/// Collapse unary nonterminal chains: `(A (B ...))` becomes a node labeled
/// `A+B`. Preterminal-over-terminal is the CNF lexical form and stays as is.
fn collapse_unary(tree: &SyntaxTree) -> Result<SyntaxTree, String> {
    match tree {
        SyntaxTree::Leaf { token } => Ok(SyntaxTree::Leaf { token: token.clone() }),
        SyntaxTree::Node { label, children } => {
            if children.len() == 1 {
                match &children[0] {
                    SyntaxTree::Leaf { token } => Ok(SyntaxTree::Node {
                        label: label.clone(),
                        children: vec![SyntaxTree::Leaf { token: token.clone() }],
                    }),
                    child @ SyntaxTree::Node { label: inner, .. } => {
                        let merged = SyntaxTree::Node {
                            label: format!("{label}+{inner}"),
                            children: match child {
                                SyntaxTree::Node { children, .. } => children.clone(),
                                SyntaxTree::Leaf { .. } => unreachable!(),
                            },
                        };
                        collapse_unary(&merged)
                    }
                }
            } else {
                let children = children.iter().map(collapse_unary).collect::<Result<Vec<_>, _>>()?;
                for c in &children {
                    if matches!(c, SyntaxTree::Leaf { .. }) {
                        return Err(format!("node {label:?} mixes terminals with constituents"));
                    }
                }
                Ok(SyntaxTree::Node {
                    label: label.clone(),
                    children,
                })
            }
        }
    }
}

/// Right-branching binarization with generated intermediate symbols:
/// `A -> B C D` becomes `A -> B @A|C_D` and `@A|C_D -> C D`.
fn binarize(tree: &SyntaxTree) -> SyntaxTree {
    match tree {
        SyntaxTree::Leaf { .. } => tree.clone(),
        SyntaxTree::Node { label, children } => {
            let children: Vec<SyntaxTree> = children.iter().map(binarize).collect();
            if children.len() <= 2 {
                return SyntaxTree::Node {
                    label: label.clone(),
                    children,
                };
            }
            let mut rest = children;
            let first = rest.remove(0);
            let rest_labels: Vec<String> = rest
                .iter()
                .map(|c| c.label().unwrap_or("?").to_string())
                .collect();
            let intermediate_label = format!("@{label}|{}", rest_labels.join("_"));
            let intermediate = binarize(&SyntaxTree::Node {
                label: intermediate_label,
                children: rest,
            });
            SyntaxTree::Node {
                label: label.clone(),
                children: vec![first, intermediate],
            }
        }
    }
}

fn count_rules(tree: &SyntaxTree, counts: &mut BTreeMap<(String, RuleRhs), usize>) -> Result<(), String> {
    match tree {
        SyntaxTree::Leaf { .. } => Ok(()),
        SyntaxTree::Node { label, children } => {
            let rhs = match children.as_slice() {
                [SyntaxTree::Leaf { token }] => RuleRhs::Terminal(token.clone()),
                [a, b] => match (a.label(), b.label()) {
                    (Some(la), Some(lb)) => RuleRhs::Binary(la.to_string(), lb.to_string()),
                    _ => return Err(format!("node {label:?} mixes terminals with constituents")),
                },
                _ => return Err(format!("node {label:?} is not binary after normalization")),
            };
            *counts.entry((label.clone(), rhs)).or_insert(0) += 1;
            for c in children {
                count_rules(c, counts)?;
            }
            Ok(())
        }
    }
}
