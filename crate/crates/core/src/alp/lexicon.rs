//! Synonym lexicon keyed by (lemma, POS), loadable from tab-separated
//! exports (`lemma<TAB>POS<TAB>syn1,syn2,...`). Ships with an anti-antonym
//! audit: label-flipping pairs must never appear as synonyms.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: expected lemma<TAB>POS<TAB>synonyms")]
    Malformed { line: usize },
    #[error("line {line}: lemma {lemma:?} lists itself as a synonym")]
    SelfSynonym { line: usize, lemma: String },
    #[error("io error on {path}: {0}", path = .1)]
    Io(std::io::Error, String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymLexicon {
    entries: BTreeMap<(String, String), Vec<String>>,
}

impl SynonymLexicon {
    pub fn insert(&mut self, lemma: &str, pos: &str, synonyms: &[&str]) -> Result<(), LexiconError> {
        if synonyms.contains(&lemma) {
            return Err(LexiconError::SelfSynonym {
                line: 0,
                lemma: lemma.to_string(),
            });
        }
        self.entries.insert(
            (lemma.to_string(), pos.to_string()),
            synonyms.iter().map(|s| s.to_string()).collect(),
        );
        Ok(())
    }

    pub fn synonyms(&self, lemma: &str, pos: &str) -> Option<&[String]> {
        self.entries
            .get(&(lemma.to_string(), pos.to_string()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(content: &str) -> Result<Self, LexiconError> {
        let mut lexicon = Self::default();
        for (i, raw) in content.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = raw.split('\t');
            let (lemma, pos, syns) = match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(p), Some(s)) if !l.trim().is_empty() && !p.trim().is_empty() => {
                    (l.trim(), p.trim(), s.trim())
                }
                _ => return Err(LexiconError::Malformed { line }),
            };
            let synonyms: Vec<&str> = syns
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            if synonyms.contains(&lemma) {
                return Err(LexiconError::SelfSynonym {
                    line,
                    lemma: lemma.to_string(),
                });
            }
            lexicon.insert(lemma, pos, &synonyms).map_err(|e| match e {
                LexiconError::SelfSynonym { lemma, .. } => LexiconError::SelfSynonym { line, lemma },
                other => other,
            })?;
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| LexiconError::Io(e, path.display().to_string()))?;
        Self::parse(&content)
    }

    /// Check that none of the forbidden word pairs are linked as synonyms in
    /// either direction. Returns the violations found.
    pub fn audit_forbidden_pairs(&self, forbidden: &[(&str, &str)]) -> Vec<(String, String)> {
        let mut violations = Vec::new();
        for ((lemma, _pos), synonyms) in &self.entries {
            for syn in synonyms {
                let hit = forbidden.iter().any(|(a, b)| {
                    (lemma == a && syn == b) || (lemma == b && syn == a)
                });
                if hit {
                    violations.push((lemma.clone(), syn.clone()));
                }
            }
        }
        violations
    }
}

/// Word pairs whose exchange would flip a physics label; the bundled lexicon
/// is audited against these at load time in the pipeline.
pub const FORBIDDEN_PAIRS: &[(&str, &str)] = &[
    ("attract", "repel"),
    ("increase", "decrease"),
    ("gain", "lose"),
    ("strong", "weak"),
    ("positive", "negative"),
    ("kinetic", "potential"),
    ("toward", "away"),
];
