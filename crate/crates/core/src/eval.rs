//! Classification metrics and comparison reports: accuracy, precision,
//! recall, F1 per category (as percentages), grouped means over scientific
//! vs inaccurate idea categories, and a masking detector for categories where
//! high accuracy hides a collapsed minority class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CategoryGroup, CategoryId, CategorySchema};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions and gold labels have different lengths ({predictions} vs {gold})")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("confusion counts are empty")]
    EmptyCounts,
    #[error("reports were computed on different test splits ({first} vs {second})")]
    SplitMismatch { first: String, second: String },
    #[error("strategy {strategy} is missing requested category {category}")]
    MissingCategory { strategy: Strategy, category: CategoryId },
    #[error("no reports to compare")]
    NoReports,
}

/// Strategy tags in the canonical report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Baseline,
    Ft,
    Llm,
    Alp,
    Ease,
    Smote,
}

impl Strategy {
    pub const COLUMN_ORDER: [Strategy; 6] = [
        Strategy::Baseline,
        Strategy::Ft,
        Strategy::Llm,
        Strategy::Alp,
        Strategy::Ease,
        Strategy::Smote,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Ft => "ft",
            Strategy::Llm => "llm",
            Strategy::Alp => "alp",
            Strategy::Ease => "ease",
            Strategy::Smote => "smote",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Strategy::Baseline),
            "ft" => Ok(Strategy::Ft),
            "llm" => Ok(Strategy::Llm),
            "alp" => Ok(Strategy::Alp),
            "ease" => Ok(Strategy::Ease),
            "smote" => Ok(Strategy::Smote),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

/// Exact confusion tallies with positive class = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tally predictions against gold labels.
pub fn confusion(predictions: &[u8], gold: &[u8]) -> Result<ConfusionCounts, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p, g) {
            (1, 1) => counts.tp += 1,
            (1, 0) => counts.fp += 1,
            (0, 0) => counts.tn += 1,
            (0, 1) => counts.fn_ += 1,
            _ => unreachable!("labels are binary"),
        }
    }
    Ok(counts)
}

/// Accuracy, precision, recall, F1 as percentages in [0, 100], full float
/// precision retained; rounding happens only at render time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl CategoryMetrics {
    pub fn values(&self) -> [(&'static str, f64); 4] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
        ]
    }
}

/// Compute the four metrics from confusion counts. Any zero denominator
/// (including P+R = 0 for F1) yields 0, matching the convention used for
/// collapsed minority classes.
pub fn metrics(counts: &ConfusionCounts) -> Result<CategoryMetrics, EvalError> {
    let total = counts.total();
    if total == 0 {
        return Err(EvalError::EmptyCounts);
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let accuracy = (counts.tp + counts.tn) as f64 / total as f64;
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(CategoryMetrics {
        accuracy: accuracy * 100.0,
        precision: precision * 100.0,
        recall: recall * 100.0,
        f1: f1 * 100.0,
    })
}

/// How the grouped aggregates pool categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupAggregation {
    /// Unweighted mean of per-category metrics.
    #[default]
    Macro,
    /// Pool confusion counts, then compute metrics once.
    Micro,
}

/// Per-category metrics for one strategy, plus everything needed to audit
/// them (the raw counts and the test-split fingerprint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: Strategy,
    pub per_category: BTreeMap<CategoryId, (ConfusionCounts, CategoryMetrics)>,
    /// SHA-256 over the sorted test-split response ids.
    pub test_fingerprint: String,
}

impl MetricsReport {
    pub fn new(
        strategy: Strategy,
        counts: BTreeMap<CategoryId, ConfusionCounts>,
        test_fingerprint: String,
    ) -> Result<Self, EvalError> {
        let mut per_category = BTreeMap::new();
        for (cat, c) in counts {
            per_category.insert(cat, (c, metrics(&c)?));
        }
        Ok(Self {
            strategy,
            per_category,
            test_fingerprint,
        })
    }

    /// Aggregate over a set of categories.
    pub fn group_metrics(&self, categories: &[CategoryId], agg: GroupAggregation) -> Option<CategoryMetrics> {
        let rows: Vec<&(ConfusionCounts, CategoryMetrics)> = categories
            .iter()
            .filter_map(|c| self.per_category.get(c))
            .collect();
        if rows.len() != categories.len() || rows.is_empty() {
            return None;
        }
        match agg {
            GroupAggregation::Macro => {
                let n = rows.len() as f64;
                Some(CategoryMetrics {
                    accuracy: rows.iter().map(|(_, m)| m.accuracy).sum::<f64>() / n,
                    precision: rows.iter().map(|(_, m)| m.precision).sum::<f64>() / n,
                    recall: rows.iter().map(|(_, m)| m.recall).sum::<f64>() / n,
                    f1: rows.iter().map(|(_, m)| m.f1).sum::<f64>() / n,
                })
            }
            GroupAggregation::Micro => {
                let mut pooled = ConfusionCounts::default();
                for (c, _) in rows {
                    pooled.tp += c.tp;
                    pooled.fp += c.fp;
                    pooled.tn += c.tn;
                    pooled.fn_ += c.fn_;
                }
                metrics(&pooled).ok()
            }
        }
    }
}

/// A category where accuracy looks fine but the minority class is effectively
/// lost (accuracy >= 90 while F1 <= 50).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingFlag {
    pub strategy: Strategy,
    pub category: CategoryId,
    pub accuracy: f64,
    pub f1: f64,
}

/// The rendered comparison across strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub text: String,
    pub csv: String,
    pub masking_flags: Vec<MaskingFlag>,
}

/// Label for the grouped rows, e.g. "1-6".
fn group_label(ids: &[CategoryId]) -> String {
    match (ids.first(), ids.last()) {
        (Some(a), Some(b)) if a != b => format!("{a}-{b}"),
        (Some(a), _) => a.to_string(),
        _ => String::new(),
    }
}

/// Render per-category tables plus grouped means over the schema's
/// scientific-idea and inaccurate-idea categories, strategies as columns in
/// canonical order. Errors when reports disagree on the test split or a
/// strategy misses a requested category.
pub fn compare_report(
    reports: &[MetricsReport],
    schema: &CategorySchema,
    agg: GroupAggregation,
) -> Result<ComparisonReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    for r in reports {
        if r.test_fingerprint != first.test_fingerprint {
            return Err(EvalError::SplitMismatch {
                first: first.test_fingerprint.clone(),
                second: r.test_fingerprint.clone(),
            });
        }
        for cat in schema.ids() {
            if !r.per_category.contains_key(&cat) {
                return Err(EvalError::MissingCategory {
                    strategy: r.strategy,
                    category: cat,
                });
            }
        }
    }
    let mut ordered: Vec<&MetricsReport> = Vec::new();
    for strategy in Strategy::COLUMN_ORDER {
        for r in reports {
            if r.strategy == strategy {
                ordered.push(r);
            }
        }
    }

    let scientific: Vec<CategoryId> = schema
        .categories()
        .iter()
        .filter(|c| c.group == CategoryGroup::ScientificIdea)
        .map(|c| c.id)
        .collect();
    let inaccurate: Vec<CategoryId> = schema
        .categories()
        .iter()
        .filter(|c| c.group == CategoryGroup::InaccurateIdea)
        .map(|c| c.id)
        .collect();

    let metric_names = ["accuracy", "precision", "recall", "f1"];
    let mut text = String::new();
    text.push_str(&format!("{:<10} {:<10}", "category", "metric"));
    for r in &ordered {
        text.push_str(&format!(" {:>10}", r.strategy.as_str()));
    }
    text.push('\n');
    let mut csv = String::from("strategy,category,accuracy,precision,recall,f1\n");

    let push_block = |label: &str, rows: Vec<(&MetricsReport, CategoryMetrics)>, text: &mut String, csv: &mut String| {
        for (i, name) in metric_names.iter().enumerate() {
            text.push_str(&format!("{label:<10} {name:<10}"));
            for (_, m) in &rows {
                let value = m.values()[i].1;
                text.push_str(&format!(" {value:>10.2}"));
            }
            text.push('\n');
        }
        for (r, m) in &rows {
            csv.push_str(&format!(
                "{},{},{:.2},{:.2},{:.2},{:.2}\n",
                r.strategy, label, m.accuracy, m.precision, m.recall, m.f1
            ));
        }
    };

    for cat in schema.ids() {
        let rows: Vec<(&MetricsReport, CategoryMetrics)> = ordered
            .iter()
            .map(|r| (*r, r.per_category[&cat].1))
            .collect();
        push_block(&cat.to_string(), rows, &mut text, &mut csv);
    }
    for ids in [&scientific, &inaccurate] {
        if ids.is_empty() {
            continue;
        }
        let label = group_label(ids);
        let rows: Vec<(&MetricsReport, CategoryMetrics)> = ordered
            .iter()
            .map(|r| (*r, r.group_metrics(ids, agg).expect("categories verified present")))
            .collect();
        push_block(&label, rows, &mut text, &mut csv);
    }

    let mut masking_flags = Vec::new();
    for r in &ordered {
        for (&cat, (_, m)) in &r.per_category {
            if m.accuracy >= 90.0 && m.f1 <= 50.0 {
                masking_flags.push(MaskingFlag {
                    strategy: r.strategy,
                    category: cat,
                    accuracy: m.accuracy,
                    f1: m.f1,
                });
            }
        }
    }
    if !masking_flags.is_empty() {
        text.push_str("\naccuracy-masking flags (accuracy >= 90, f1 <= 50):\n");
        for flag in &masking_flags {
            text.push_str(&format!(
                "  {} category {}: accuracy {:.2}, f1 {:.2}\n",
                flag.strategy, flag.category, flag.accuracy, flag.f1
            ));
        }
    }

    Ok(ComparisonReport {
        text,
        csv,
        masking_flags,
    })
}

/// Fingerprint of a test split: SHA-256 over its sorted response ids.
pub fn split_fingerprint<'a>(ids: impl Iterator<Item = &'a str>) -> String {
    let mut sorted: Vec<&str> = ids.collect();
    sorted.sort_unstable();
    crate::rng::sha256_hex(sorted.join("\n").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn confusion_hand_tally() {
        let counts = confusion(&[1, 0, 1, 1, 0, 0], &[1, 0, 0, 1, 1, 0]).unwrap();
        assert_eq!(
            counts,
            ConfusionCounts { tp: 2, fp: 1, tn: 2, fn_: 1 }
        );
        let perfect = confusion(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!(perfect.fp + perfect.fn_, 0);
        let all_negative = confusion(&[0, 0, 0], &[1, 1, 0]).unwrap();
        assert_eq!(all_negative.tp, 0);
        assert_eq!(metrics(&all_negative).unwrap().recall, 0.0);
    }

    #[test]
    fn confusion_length_mismatch() {
        assert!(matches!(
            confusion(&[1, 0], &[1]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn metrics_direct_formulas() {
        let m = metrics(&ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 4 }).unwrap();
        assert!((m.precision - 75.0).abs() < 1e-9);
        assert!((m.recall - 60.0).abs() < 1e-9);
        assert!((m.f1 - 2.0 * 75.0 * 60.0 / 135.0).abs() < 1e-9);
        assert!((m.accuracy - 70.0).abs() < 1e-9);
    }

    #[test]
    fn zero_denominators_yield_zero_with_high_accuracy() {
        let m = metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 5, tn: 90 }).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.accuracy > 90.0);
        let all = metrics(&ConfusionCounts { tp: 7, fp: 0, fn_: 0, tn: 3 }).unwrap();
        assert_eq!((all.accuracy, all.precision, all.recall, all.f1), (100.0, 100.0, 100.0, 100.0));
    }

    #[test]
    fn metrics_match_brute_force_recount() {
        let mut rng = crate::rng::derive_rng(55, "eval/oracle");
        for _ in 0..100 {
            let n = rng.random_range(1..60);
            let preds: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
            let gold: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
            let counts = confusion(&preds, &gold).unwrap();
            // Independent recount straight from the label pairs.
            let tp = preds.iter().zip(&gold).filter(|&(&p, &g)| p == 1 && g == 1).count();
            let fp = preds.iter().zip(&gold).filter(|&(&p, &g)| p == 1 && g == 0).count();
            let fn_ = preds.iter().zip(&gold).filter(|&(&p, &g)| p == 0 && g == 1).count();
            let tn = preds.iter().zip(&gold).filter(|&(&p, &g)| p == 0 && g == 0).count();
            assert_eq!(counts, ConfusionCounts { tp, fp, tn, fn_ });
            let m = metrics(&counts).unwrap();
            let expect_acc = ((tp + tn) as f64 / n as f64) * 100.0;
            assert_eq!(m.accuracy, expect_acc);
            let expect_p = if tp + fp == 0 { 0.0 } else { (tp as f64 / (tp + fp) as f64) * 100.0 };
            let expect_r = if tp + fn_ == 0 { 0.0 } else { (tp as f64 / (tp + fn_) as f64) * 100.0 };
            assert_eq!(m.precision, expect_p);
            assert_eq!(m.recall, expect_r);
            if expect_p + expect_r > 0.0 {
                assert!((m.f1 - 2.0 * expect_p * expect_r / (expect_p + expect_r)).abs() < 1e-9);
                assert!(m.f1 >= expect_p.min(expect_r) - 1e-9);
                assert!(m.f1 <= expect_p.max(expect_r) + 1e-9);
                assert!(m.f1 <= 2.0 * expect_p.min(expect_r) + 1e-9);
            } else {
                assert_eq!(m.f1, 0.0);
            }
        }
    }

    fn report_for(strategy: Strategy, tp: usize, fingerprint: &str) -> MetricsReport {
        let mut counts = BTreeMap::new();
        for cat in 1u16..=3 {
            counts.insert(cat, ConfusionCounts { tp, fp: 1, tn: 10, fn_: 2 });
        }
        MetricsReport::new(strategy, counts, fingerprint.to_string()).unwrap()
    }

    #[test]
    fn compare_report_shape_and_group_mean() {
        let schema = CategorySchema::with_default_groups(1..=3).unwrap();
        let reports = vec![report_for(Strategy::Baseline, 3, "fp"), report_for(Strategy::Ease, 5, "fp")];
        let cmp = compare_report(&reports, &schema, GroupAggregation::Macro).unwrap();
        // 2 strategies x (3 categories + 1 group row "1-3") + header.
        let lines: Vec<&str> = cmp.csv.trim_end().lines().collect();
        assert_eq!(lines[0], "strategy,category,accuracy,precision,recall,f1");
        assert_eq!(lines.len(), 1 + 2 * 4);
        // Group mean equals the arithmetic mean of per-category values.
        let r = &reports[0];
        let group = r.group_metrics(&[1, 2, 3], GroupAggregation::Macro).unwrap();
        let mean_f1 = (1..=3u16).map(|c| r.per_category[&c].1.f1).sum::<f64>() / 3.0;
        assert!((group.f1 - mean_f1).abs() < 1e-9);
        // Deterministic, column-order stable.
        let cmp2 = compare_report(&reports, &schema, GroupAggregation::Macro).unwrap();
        assert_eq!(cmp.text, cmp2.text);
        assert_eq!(cmp.csv, cmp2.csv);
    }

    #[test]
    fn single_strategy_degenerate_report() {
        let schema = CategorySchema::with_default_groups(1..=3).unwrap();
        let reports = vec![report_for(Strategy::Baseline, 3, "fp")];
        let cmp = compare_report(&reports, &schema, GroupAggregation::Macro).unwrap();
        assert!(cmp.text.contains("baseline"));
        assert!(!cmp.text.contains("ease"));
    }

    #[test]
    fn split_mismatch_detected() {
        let schema = CategorySchema::with_default_groups(1..=3).unwrap();
        let reports = vec![report_for(Strategy::Baseline, 3, "fp1"), report_for(Strategy::Ease, 5, "fp2")];
        assert!(matches!(
            compare_report(&reports, &schema, GroupAggregation::Macro),
            Err(EvalError::SplitMismatch { .. })
        ));
    }

    #[test]
    fn missing_category_detected() {
        let schema = CategorySchema::with_default_groups(1..=4).unwrap();
        let reports = vec![report_for(Strategy::Baseline, 3, "fp")];
        assert!(matches!(
            compare_report(&reports, &schema, GroupAggregation::Macro),
            Err(EvalError::MissingCategory { category: 4, .. })
        ));
    }

    #[test]
    fn masking_detector_flags_collapsed_categories() {
        let schema = CategorySchema::with_default_groups([9]).unwrap();
        let mut counts = BTreeMap::new();
        counts.insert(9u16, ConfusionCounts { tp: 0, fp: 0, fn_: 5, tn: 90 });
        let report = MetricsReport::new(Strategy::Baseline, counts, "fp".into()).unwrap();
        let cmp = compare_report(&[report], &schema, GroupAggregation::Macro).unwrap();
        assert_eq!(cmp.masking_flags.len(), 1);
        assert_eq!(cmp.masking_flags[0].category, 9);
    }

    #[test]
    fn micro_aggregation_pools_counts() {
        let schema = CategorySchema::with_default_groups(1..=3).unwrap();
        let report = report_for(Strategy::Baseline, 3, "fp");
        let micro = report.group_metrics(&[1, 2, 3], GroupAggregation::Micro).unwrap();
        let pooled = ConfusionCounts { tp: 9, fp: 3, tn: 30, fn_: 6 };
        assert_eq!(micro, metrics(&pooled).unwrap());
        let _ = schema;
    }
}
