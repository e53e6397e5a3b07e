//! Penn-style bracketed treebank reader: one tree per line, e.g.
//! `(S (NP (DT the) (NN carts)) (VP (V repel)))`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("tree {index}: {message}")]
    Malformed { index: usize, message: String },
    #[error("treebank is empty")]
    Empty,
}

/// A constituency tree with string labels. Terminals sit under preterminal
/// nodes (one terminal child each).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyntaxTree {
    Node { label: String, children: Vec<SyntaxTree> },
    Leaf { token: String },
}

impl SyntaxTree {
    pub fn label(&self) -> Option<&str> {
        match self {
            SyntaxTree::Node { label, .. } => Some(label),
            SyntaxTree::Leaf { .. } => None,
        }
    }

    /// Leaf tokens left to right.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens(&self, out: &mut Vec<String>) {
        match self {
            SyntaxTree::Leaf { token } => out.push(token.clone()),
            SyntaxTree::Node { children, .. } => {
                for c in children {
                    c.collect_tokens(out);
                }
            }
        }
    }

    /// Bracketed rendering, inverse of the reader.
    pub fn render(&self) -> String {
        match self {
            SyntaxTree::Leaf { token } => token.clone(),
            SyntaxTree::Node { label, children } => {
                let inner: Vec<String> = children.iter().map(SyntaxTree::render).collect();
                format!("({} {})", label, inner.join(" "))
            }
        }
    }

    /// A preterminal dominates exactly one leaf.
    pub fn is_preterminal(&self) -> bool {
        matches!(
            self,
            SyntaxTree::Node { children, .. }
                if children.len() == 1 && matches!(children[0], SyntaxTree::Leaf { .. })
        )
    }
}

/// Parse a whole treebank: one bracketed tree per non-empty line. The error
/// reports the 1-based tree index.
pub fn read_treebank(content: &str) -> Result<Vec<SyntaxTree>, TreebankError> {
    let mut trees = Vec::new();
    let mut index = 0usize;
    for line in content.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        index += 1;
        let tree = parse_tree_line(line).map_err(|message| TreebankError::Malformed { index, message })?;
        trees.push(tree);
    }
    if trees.is_empty() {
        return Err(TreebankError::Empty);
    }
    Ok(trees)
}

fn parse_tree_line(line: &str) -> Result<SyntaxTree, String> {
    let tokens = lex(line);
    let mut pos = 0usize;
    let tree = parse_node(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(format!("trailing content after tree (token {pos})"));
    }
    match &tree {
        SyntaxTree::Leaf { .. } => Err("top level must be a bracketed node".into()),
        SyntaxTree::Node { .. } => Ok(tree),
    }
}

#[derive(Debug, PartialEq)]
enum Lexeme {
    Open,
    Close,
    Atom(String),
}

fn lex(line: &str) -> Vec<Lexeme> {
    let mut out = Vec::new();
    let mut atom = String::new();
    for c in line.chars() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if !atom.is_empty() {
                out.push(Lexeme::Atom(std::mem::take(&mut atom)));
            }
            match c {
                '(' => out.push(Lexeme::Open),
                ')' => out.push(Lexeme::Close),
                _ => {}
            }
        } else {
            atom.push(c);
        }
    }
    if !atom.is_empty() {
        out.push(Lexeme::Atom(atom));
    }
    out
}

fn parse_node(tokens: &[Lexeme], pos: &mut usize) -> Result<SyntaxTree, String> {
    match tokens.get(*pos) {
        Some(Lexeme::Open) => {
            *pos += 1;
            let label = match tokens.get(*pos) {
                Some(Lexeme::Atom(a)) => a.clone(),
                _ => return Err(format!("expected node label at token {}", *pos)),
            };
            *pos += 1;
            let mut children = Vec::new();
            loop {
                match tokens.get(*pos) {
                    Some(Lexeme::Close) => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => children.push(parse_node(tokens, pos)?),
                    None => return Err("unexpected end of line (missing close paren)".into()),
                }
            }
            if children.is_empty() {
                return Err(format!("node {label:?} has no children"));
            }
            Ok(SyntaxTree::Node { label, children })
        }
        Some(Lexeme::Atom(a)) => {
            *pos += 1;
            Ok(SyntaxTree::Leaf { token: a.clone() })
        }
        Some(Lexeme::Close) => Err(format!("unexpected close paren at token {}", *pos)),
        None => Err("empty line".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_a_simple_tree() {
        let trees = read_treebank("(S (NP (DT the) (NN carts)) (VP (V repel) (RB apart)))\n").unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].tokens(), vec!["the", "carts", "repel", "apart"]);
        assert_eq!(
            trees[0].render(),
            "(S (NP (DT the) (NN carts)) (VP (V repel) (RB apart)))"
        );
    }

    #[test]
    fn skips_blank_and_comment_lines() {
        let content = "# cart treebank\n\n(S (PRP they) (VP (V move) (RB apart)))\n";
        let trees = read_treebank(content).unwrap();
        assert_eq!(trees.len(), 1);
    }

    #[test]
    fn malformed_line_reports_tree_index() {
        let content = "(S (PRP they) (VP (V move) (RB apart)))\n(S (NP (DT the) carts\n";
        match read_treebank(content) {
            Err(TreebankError::Malformed { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn empty_treebank_rejected() {
        assert!(matches!(read_treebank("\n# only comments\n"), Err(TreebankError::Empty)));
    }

    #[test]
    fn preterminal_detection() {
        let trees = read_treebank("(S (PRP they) (VP (V move) (RB apart)))").unwrap();
        if let SyntaxTree::Node { children, .. } = &trees[0] {
            assert!(children[0].is_preterminal());
            assert!(!children[1].is_preterminal());
        } else {
            unreachable!()
        }
    }
}
