//! Set-overlap implication measures: DIRT, Cover and BInc.
//!
//! Each measure compares the weighted feature sets `F_p` and `F_q` of the
//! antecedent and consequent. The feature representation decides what a
//! feature is:
//!
//! - `ArgumentTuple`: the tuple `(s, o)`; one score.
//! - `SlotIndependent`: subjects against subjects and objects against
//!   objects; two scores.
//! - `Unary`: every antecedent slot against every consequent slot; four
//!   scores.
//!
//! Multi-slot scores are combined by geometric mean.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::corpus::{Corpus, RelationId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    /// `w(r, t) = 1`
    Unit,
    /// `w(r, t) = PMI(r; t)`
    Pmi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureRep {
    ArgumentTuple,
    SlotIndependent,
    Unary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetMeasure {
    Dirt,
    Cover,
    BInc,
}

/// A candidate rule `antecedent → consequent`. When `reversed` is set the
/// consequent takes the antecedent's arguments in flipped order, and is
/// scored through its reversed relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImplicationRule {
    pub antecedent: RelationId,
    pub consequent: RelationId,
    pub reversed: bool,
}

impl ImplicationRule {
    pub fn new(antecedent: RelationId, consequent: RelationId) -> Self {
        ImplicationRule {
            antecedent,
            consequent,
            reversed: false,
        }
    }

    pub fn with_reversal(antecedent: RelationId, consequent: RelationId, reversed: bool) -> Self {
        ImplicationRule {
            antecedent,
            consequent,
            reversed,
        }
    }

    /// Looks both relations up by name.
    pub fn from_names(corpus: &Corpus, antecedent: &str, consequent: &str, reversed: bool) -> Result<Self> {
        let p = corpus
            .relation_id(antecedent)
            .ok_or_else(|| Error::UnknownRelation(antecedent.to_owned()))?;
        let q = corpus
            .relation_id(consequent)
            .ok_or_else(|| Error::UnknownRelation(consequent.to_owned()))?;
        Ok(Self::with_reversal(p, q, reversed))
    }

    /// The converse rule `consequent → antecedent`, keeping the reversal flag.
    pub fn converse(self) -> Self {
        ImplicationRule {
            antecedent: self.consequent,
            consequent: self.antecedent,
            reversed: self.reversed,
        }
    }

    /// Resolves the pair of relations actually compared: the consequent is
    /// swapped for its reversed partner when the rule is reversed.
    pub fn resolve(&self, corpus: &Corpus) -> Result<(RelationId, RelationId)> {
        corpus.check_relation(self.antecedent)?;
        corpus.check_relation(self.consequent)?;
        let q = if self.reversed {
            corpus.reversed(self.consequent).ok_or(Error::NotAugmented)?
        } else {
            self.consequent
        };
        Ok((self.antecedent, q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Tuple,
    Subject,
    Object,
}

impl FeatureRep {
    fn slot_pairs(self) -> &'static [(Slot, Slot)] {
        match self {
            FeatureRep::ArgumentTuple => &[(Slot::Tuple, Slot::Tuple)],
            FeatureRep::SlotIndependent => &[(Slot::Subject, Slot::Subject), (Slot::Object, Slot::Object)],
            FeatureRep::Unary => &[
                (Slot::Subject, Slot::Subject),
                (Slot::Subject, Slot::Object),
                (Slot::Object, Slot::Subject),
                (Slot::Object, Slot::Object),
            ],
        }
    }
}

/// Sorted `(feature key, weight)` pairs.
type Features = Vec<(u64, f64)>;

/// Scores rules against one corpus with a fixed weighting and representation.
///
/// Slot scores with a non-positive denominator or a negative numerator,
/// possible only under PMI weights, are clamped to 0 and counted.
#[derive(Debug)]
pub struct SetScorer<'a> {
    corpus: &'a Corpus,
    weights: WeightScheme,
    rep: FeatureRep,
    clamped: AtomicU64,
}

impl<'a> SetScorer<'a> {
    pub fn new(corpus: &'a Corpus, weights: WeightScheme, rep: FeatureRep) -> Self {
        SetScorer {
            corpus,
            weights,
            rep,
            clamped: AtomicU64::new(0),
        }
    }

    /// Number of slot scores clamped to 0 so far.
    pub fn clamped(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    pub fn score(&self, measure: SetMeasure, rule: &ImplicationRule) -> Result<f64> {
        match measure {
            SetMeasure::Dirt => self.dirt(rule),
            SetMeasure::Cover => self.cover(rule),
            SetMeasure::BInc => self.binc(rule),
        }
    }

    pub fn dirt(&self, rule: &ImplicationRule) -> Result<f64> {
        self.combine(rule, |fp, fq| {
            let (shared_p, shared_q) = shared_mass(fp, fq);
            (shared_p + shared_q, total(fp) + total(fq))
        })
    }

    pub fn cover(&self, rule: &ImplicationRule) -> Result<f64> {
        self.combine(rule, |fp, fq| (shared_mass(fp, fq).0, total(fp)))
    }

    /// Geometric mean of DIRT and Cover.
    pub fn binc(&self, rule: &ImplicationRule) -> Result<f64> {
        let d = self.dirt(rule)?;
        let c = self.cover(rule)?;
        Ok((d * c).sqrt())
    }

    fn combine<F>(&self, rule: &ImplicationRule, ratio: F) -> Result<f64>
    where
        F: Fn(&Features, &Features) -> (f64, f64),
    {
        let (p, q) = rule.resolve(self.corpus)?;
        let mut slot_scores = Vec::with_capacity(4);
        for &(ps, qs) in self.rep.slot_pairs() {
            let fp = self.features(p, ps)?;
            let fq = self.features(q, qs)?;
            let (num, den) = ratio(&fp, &fq);
            let score = if den <= 0.0 || num < 0.0 || !num.is_finite() || !den.is_finite() {
                self.clamped.fetch_add(1, Ordering::Relaxed);
                0.0
            } else {
                num / den
            };
            slot_scores.push(score);
        }
        Ok(geometric_mean(&slot_scores))
    }

    fn features(&self, r: RelationId, slot: Slot) -> Result<Features> {
        let corpus = self.corpus;
        let tuples = corpus.relation_tuples(r);
        match slot {
            Slot::Tuple => tuples
                .iter()
                .map(|&(t, _)| {
                    let key = ((t.subject.0 as u64) << 32) | t.object.0 as u64;
                    let w = match self.weights {
                        WeightScheme::Unit => 1.0,
                        WeightScheme::Pmi => corpus.pmi_weight(r, t)?,
                    };
                    Ok((key, w))
                })
                .collect(),
            Slot::Subject | Slot::Object => {
                let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
                for &(t, c) in tuples {
                    let a = if slot == Slot::Subject { t.subject } else { t.object };
                    *counts.entry(a.0).or_default() += c;
                }
                let n = corpus.len() as f64;
                let n_r = corpus.relation_count(r) as f64;
                Ok(counts
                    .into_iter()
                    .map(|(a, n_ra)| {
                        let w = match self.weights {
                            WeightScheme::Unit => 1.0,
                            WeightScheme::Pmi => {
                                let id = crate::corpus::ArgumentId(a);
                                let n_a = if slot == Slot::Subject {
                                    corpus.subject_count(id)
                                } else {
                                    corpus.object_count(id)
                                } as f64;
                                (n_ra as f64 * n / (n_r * n_a)).ln()
                            }
                        };
                        (a as u64, w)
                    })
                    .collect())
            }
        }
    }
}

fn total(f: &Features) -> f64 {
    f.iter().map(|(_, w)| w).sum()
}

/// Sums of the antecedent and consequent weights over the shared features.
fn shared_mass(fp: &Features, fq: &Features) -> (f64, f64) {
    let (mut i, mut j) = (0, 0);
    let (mut sp, mut sq) = (0.0, 0.0);
    while i < fp.len() && j < fq.len() {
        match fp[i].0.cmp(&fq[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sp += fp[i].1;
                sq += fq[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    (sp, sq)
}

/// `exp(mean(ln x))`, or 0 when any factor is 0.
pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|&v| v <= 0.0) {
        return 0.0;
    }
    if values.len() == 1 {
        return values[0];
    }
    // summed in sorted order so the result does not depend on slot order
    let mut logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    logs.sort_by(f64::total_cmp);
    (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

pub fn dirt(corpus: &Corpus, rule: &ImplicationRule, weights: WeightScheme, rep: FeatureRep) -> Result<f64> {
    SetScorer::new(corpus, weights, rep).dirt(rule)
}

pub fn cover(corpus: &Corpus, rule: &ImplicationRule, weights: WeightScheme, rep: FeatureRep) -> Result<f64> {
    SetScorer::new(corpus, weights, rep).cover(rule)
}

pub fn binc(corpus: &Corpus, rule: &ImplicationRule, weights: WeightScheme, rep: FeatureRep) -> Result<f64> {
    SetScorer::new(corpus, weights, rep).binc(rule)
}
