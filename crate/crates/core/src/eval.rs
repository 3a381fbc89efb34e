//! Evaluation against labelled implication datasets: ROC AUC, precision–recall
//! curves and directional accuracy.

use std::collections::HashMap;
use std::io::BufRead;

use serde::Serialize;

use crate::error::{Error, Result};

fn class_counts(scores: &[(f64, bool)]) -> (usize, usize) {
    let pos = scores.iter().filter(|(_, y)| *y).count();
    (pos, scores.len() - pos)
}

fn sorted_descending(scores: &[(f64, bool)]) -> Vec<(f64, bool)> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

/// Groups of equal score in descending order, as `(score, positives, negatives)`.
fn threshold_groups(scores: &[(f64, bool)]) -> Vec<(f64, usize, usize)> {
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (s, y) in sorted_descending(scores) {
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if y {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((s, y as usize, (!y) as usize)),
        }
    }
    groups
}

/// Area under the ROC curve as the Mann–Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting ½.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let (pos, neg) = class_counts(scores);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // midranks, 1-based
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * sorted[i..j].iter().filter(|(_, y)| *y).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// ROC points `(false positive rate, true positive rate)` from `(0, 0)` to
/// `(1, 1)`, one per distinct threshold.
pub fn roc_curve(scores: &[(f64, bool)]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = class_counts(scores);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0, 0);
    for (_, p, n) in threshold_groups(scores) {
        tp += p;
        fp += n;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision and recall at every distinct threshold, highest first. Tied
/// scores enter together.
pub fn pr_curve(scores: &[(f64, bool)]) -> Result<Vec<PrPoint>> {
    let (pos, _) = class_counts(scores);
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let (mut tp, mut fp) = (0, 0);
    Ok(threshold_groups(scores)
        .into_iter()
        .map(|(threshold, p, n)| {
            tp += p;
            fp += n;
            PrPoint {
                threshold,
                recall: tp as f64 / pos as f64,
                precision: tp as f64 / (tp + fp) as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// The antecedent implies the consequent, not the converse.
    Forward,
    /// The consequent implies the antecedent, not the converse.
    Backward,
}

/// Fraction of rows whose higher-scoring direction matches the label.
/// Exact ties earn half credit, so a symmetric scorer lands on 0.5.
///
/// Each item is `(score of antecedent → consequent, score of the converse,
/// labelled direction)`.
pub fn directional_accuracy(items: &[(f64, f64, Direction)]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyInput("directional accuracy needs at least one row"));
    }
    let credit: f64 = items
        .iter()
        .map(|&(fwd, bwd, dir)| {
            if fwd == bwd {
                0.5
            } else if (fwd > bwd) == (dir == Direction::Forward) {
                1.0
            } else {
                0.0
            }
        })
        .sum();
    Ok(credit / items.len() as f64)
}

/// Scores both directions of each `(rule, direction)` with `scorer`, then
/// computes directional accuracy.
pub fn directional_accuracy_with<R, F>(rows: &[(R, Direction)], mut scorer: F) -> Result<f64>
where
    F: FnMut(&R, Direction) -> Result<f64>,
{
    let mut items = Vec::with_capacity(rows.len());
    for (rule, dir) in rows {
        items.push((scorer(rule, Direction::Forward)?, scorer(rule, Direction::Backward)?, *dir));
    }
    directional_accuracy(&items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Label {
    Implies(bool),
    Directional(Direction),
}

/// Identifies a scored rule by relation names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleKey {
    pub antecedent: String,
    pub consequent: String,
    pub reversed: bool,
}

impl RuleKey {
    pub fn new(antecedent: &str, consequent: &str, reversed: bool) -> Self {
        RuleKey {
            antecedent: antecedent.to_owned(),
            consequent: consequent.to_owned(),
            reversed,
        }
    }

    pub fn converse(&self) -> Self {
        RuleKey {
            antecedent: self.consequent.clone(),
            consequent: self.antecedent.clone(),
            reversed: self.reversed,
        }
    }
}

/// One row of a labelled dataset, e.g. `PERSON tutors-at UNIVERSITY →
/// PERSON works-for UNIVERSITY`. Argument placeholders only decide whether
/// the consequent's arguments are flipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelledRule {
    pub antecedent_args: (String, String),
    pub consequent_args: (String, String),
    pub rule: RuleKey,
    pub label: Label,
}

const LABEL_HEADER: &str = "antecedent_subject";

/// Reads the seven-column labelled TSV:
/// `antecedent_subject antecedent_relation antecedent_object
/// consequent_subject consequent_relation consequent_object label`.
///
/// Labels are `1/0`, `true/false`, `yes/no` for the full dataset and
/// `forward/backward` for directional rows. A header row is skipped.
pub fn read_labelled<R: BufRead>(reader: R) -> Result<Vec<LabelledRule>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || (i == 0 && line.starts_with(LABEL_HEADER)) {
            continue;
        }
        rows.push(parse_labelled(line).map_err(|message| Error::Parse { line: i + 1, message })?);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("labelled dataset has no rows"));
    }
    Ok(rows)
}

fn parse_labelled(line: &str) -> std::result::Result<LabelledRule, String> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 7 {
        return Err(format!("expected 7 tab-separated fields, found {}", f.len()));
    }
    if f[..6].iter().any(|s| s.is_empty()) {
        return Err("empty field".into());
    }
    let label = match f[6].trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "positive" => Label::Implies(true),
        "0" | "false" | "no" | "negative" => Label::Implies(false),
        "forward" => Label::Directional(Direction::Forward),
        "backward" => Label::Directional(Direction::Backward),
        other => return Err(format!("unknown label `{other}`")),
    };
    let (as_, ao, cs, co) = (f[0], f[2], f[3], f[5]);
    let reversed = as_ != ao && cs == ao && co == as_;
    Ok(LabelledRule {
        antecedent_args: (as_.to_owned(), ao.to_owned()),
        consequent_args: (cs.to_owned(), co.to_owned()),
        rule: RuleKey::new(f[1], f[4], reversed),
        label,
    })
}

/// Metrics for one scoring model over a labelled dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub auc: Option<f64>,
    pub directional_accuracy: Option<f64>,
    pub oov_count: usize,
    pub positives: usize,
    pub negatives: usize,
    pub directional_rows: usize,
    #[serde(skip)]
    pub pr_points: Vec<PrPoint>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn pr_csv(&self) -> String {
        let mut out = String::from("threshold,recall,precision\n");
        for p in &self.pr_points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.recall, p.precision));
        }
        out
    }
}

/// Evaluates `scores` (keyed by rule) against labelled rows. Rules missing
/// from `scores` score 0 and are counted as out of vocabulary.
pub fn evaluate(model: &str, rows: &[LabelledRule], scores: &HashMap<RuleKey, f64>) -> Result<EvalReport> {
    let mut oov = 0;
    let mut lookup = |key: &RuleKey| match scores.get(key) {
        Some(&s) => s,
        None => {
            oov += 1;
            0.0
        }
    };
    let mut full = Vec::new();
    let mut directional = Vec::new();
    for row in rows {
        match row.label {
            Label::Implies(y) => full.push((lookup(&row.rule), y)),
            Label::Directional(d) => {
                let fwd = lookup(&row.rule);
                let bwd = lookup(&row.rule.converse());
                directional.push((fwd, bwd, d));
            }
        }
    }
    let (positives, negatives) = class_counts(&full);
    let auc_value = if positives > 0 && negatives > 0 {
        Some(auc(&full)?)
    } else {
        None
    };
    let pr_points = if positives > 0 { pr_curve(&full)? } else { Vec::new() };
    let directional_accuracy = if directional.is_empty() {
        None
    } else {
        Some(directional_accuracy(&directional)?)
    };
    Ok(EvalReport {
        model: model.to_owned(),
        auc: auc_value,
        directional_accuracy,
        oov_count: oov,
        positives,
        negatives,
        directional_rows: directional.len(),
        pr_points,
    })
}
