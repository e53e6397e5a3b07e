//! Augforge: diagnose class imbalance in multi-category binary-labeled text
//! corpora and repair it with four strategies — SMOTE feature-space
//! oversampling, few-shot LLM generation, EASE fragment mining, and ALP
//! grammar-based phrase augmentation — then train per-category baseline
//! classifiers and compare precision/recall/F1 across strategies.
//!
//! The crate is organized around the augmentation workflow:
//!
//! * [`corpus`] — load/validate/split corpora, imbalance profiling, and a
//!   seeded benchmark-corpus generator.
//! * [`features`] — tokenization, TF-IDF vocabularies and vectors.
//! * [`smote`] — k-NN interpolation oversampling over feature vectors.
//! * [`ease`] — Extract / Acquire / Sift / Employ fragment augmentation.
//! * [`alp`] — PCFG induction, CKY parsing, head-anchored subtree swapping
//!   and synonym substitution.
//! * [`llm`] — ratio-targeted generation plans, 2-few-shot prompts, and a
//!   chat-completions HTTP client with retry and rate limiting.
//! * [`classifier`] — the pluggable [`classifier::Labeler`] contract and the
//!   built-in logistic-regression baseline.
//! * [`eval`] — confusion counts, per-category metrics, grouped comparison
//!   reports.
//! * [`pipeline`] — config-driven orchestration of the whole run with a
//!   hash-chained manifest.
//!
//! Heavy batch stages (vectorization, parsing, per-category training) run on
//! rayon when the default `parallel` feature is enabled; disabling it yields
//! a sequential build with identical outputs.

pub mod alp;
pub mod classifier;
pub mod corpus;
pub mod ease;
pub mod eval;
mod exec;
pub mod features;
pub mod llm;
pub mod pipeline;
pub mod rng;
pub mod smote;
