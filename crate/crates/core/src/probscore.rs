//! Probabilistic implication scores.
//!
//! Each relation `r` carries a boolean variable `Z_r`, and the argument tuple
//! is a single variable `T` ranging over the observed tuples. Relations are
//! conditionally independent given the tuple:
//!
//! ```text
//! P(T, Z_1, ..., Z_R) = P(T) Π_r P(Z_r | T)
//! ```
//!
//! so a rule `p → q` scores
//!
//! ```text
//! P(Z_q = 1 | Z_p = 1) = Σ_t P(T = t) P(Z_p = 1 | t) P(Z_q = 1 | t) / P(Z_p = 1)
//! ```
//!
//! The three scores differ only in the estimator for `P(Z_r = 1 | T = t)`:
//!
//! - ProbE: `n_rt / n_t`, the empirical conditional.
//! - ProbL: `σ(φ(r, t))` from a link-prediction model, over every tuple.
//! - ProbEL: `σ(φ(r, t))` where `t ∈ T_r`, 0 elsewhere.
//!
//! All three take `P(T = t) = n_t / n`.

use std::collections::BTreeMap;

use crate::corpus::{Corpus, RelationId, Tuple};
use crate::error::{Error, Result};
use crate::linkpred::EmbeddingState;
use crate::setscore::ImplicationRule;
use crate::trainer::sigmoid;

#[derive(Debug, Clone, Copy)]
pub enum Estimator<'a> {
    Empirical,
    LinkFull(&'a EmbeddingState),
    LinkObserved(&'a EmbeddingState),
}

/// `P(Z_r = 1 | T = t)` over the estimator's support, with the marginal
/// `P(Z_r = 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub relation: RelationId,
    pub conditionals: BTreeMap<Tuple, f64>,
    pub marginal: f64,
}

/// The joint model over one corpus with a chosen estimator.
#[derive(Debug, Clone, Copy)]
pub struct ProbModel<'a> {
    corpus: &'a Corpus,
    estimator: Estimator<'a>,
}

impl<'a> ProbModel<'a> {
    pub fn new(corpus: &'a Corpus, estimator: Estimator<'a>) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if let Estimator::LinkFull(state) | Estimator::LinkObserved(state) = estimator {
            if state.num_relations() < corpus.num_base_relations() || state.num_arguments() < corpus.num_arguments() {
                return Err(Error::VocabularyMismatch {
                    state_relations: state.num_relations(),
                    state_arguments: state.num_arguments(),
                    corpus_relations: corpus.num_base_relations(),
                    corpus_arguments: corpus.num_arguments(),
                });
            }
        }
        Ok(ProbModel { corpus, estimator })
    }

    pub fn empirical(corpus: &'a Corpus) -> Result<Self> {
        Self::new(corpus, Estimator::Empirical)
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    /// `P(T = t) = n_t / n`.
    pub fn tuple_probability(&self, t: Tuple) -> f64 {
        self.corpus.tuple_count(t) as f64 / self.corpus.len() as f64
    }

    fn link_probability(&self, state: &EmbeddingState, r: RelationId, t: Tuple) -> f64 {
        // ids are in range: checked against the corpus vocabulary at construction
        let z = state
            .score_in(self.corpus, r, t.subject, t.object)
            .expect("corpus ids fit the embedding state");
        sigmoid(z)
    }

    /// `P(Z_r = 1 | T = t)`.
    pub fn conditional(&self, r: RelationId, t: Tuple) -> f64 {
        match self.estimator {
            Estimator::Empirical => {
                let n_t = self.corpus.tuple_count(t);
                if n_t == 0 {
                    0.0
                } else {
                    self.corpus.count(r, t) as f64 / n_t as f64
                }
            }
            Estimator::LinkFull(state) => self.link_probability(state, r, t),
            Estimator::LinkObserved(state) => {
                if self.corpus.contains(r, t) {
                    self.link_probability(state, r, t)
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(Z_r = 1)`, summed over the estimator's support.
    pub fn marginal(&self, r: RelationId) -> f64 {
        match self.estimator {
            Estimator::Empirical => self.corpus.relation_count(r) as f64 / self.corpus.len() as f64,
            Estimator::LinkFull(_) => self
                .corpus
                .tuples()
                .iter()
                .map(|&(t, _)| self.tuple_probability(t) * self.conditional(r, t))
                .sum(),
            Estimator::LinkObserved(_) => self
                .corpus
                .relation_tuples(r)
                .iter()
                .map(|&(t, _)| self.tuple_probability(t) * self.conditional(r, t))
                .sum(),
        }
    }

    /// Tuples where `P(Z_r = 1 | t)` can be non-zero.
    fn support(&self, r: RelationId) -> Vec<Tuple> {
        match self.estimator {
            Estimator::LinkFull(_) => self.corpus.tuples().iter().map(|(t, _)| *t).collect(),
            _ => self.corpus.relation_tuples(r).iter().map(|(t, _)| *t).collect(),
        }
    }

    pub fn table(&self, r: RelationId) -> Result<ConditionalTable> {
        self.corpus.check_relation(r)?;
        Ok(ConditionalTable {
            relation: r,
            conditionals: self
                .support(r)
                .into_iter()
                .map(|t| (t, self.conditional(r, t)))
                .collect(),
            marginal: self.marginal(r),
        })
    }

    /// `P(Z_q = 1 | Z_p = 1)` for the rule, routing reversed consequents
    /// through their reversed relation.
    pub fn implication(&self, rule: &ImplicationRule) -> Result<f64> {
        let (p, q) = rule.resolve(self.corpus)?;
        let denominator = self.marginal(p);
        if denominator <= 0.0 {
            return Err(Error::UndefinedConditional);
        }
        let numerator: f64 = match self.estimator {
            Estimator::LinkFull(_) => self
                .corpus
                .tuples()
                .iter()
                .map(|&(t, _)| self.tuple_probability(t) * self.conditional(p, t) * self.conditional(q, t))
                .sum(),
            // Both conditionals vanish off T_p ∩ T_q.
            _ => intersect(self.corpus.relation_tuples(p), self.corpus.relation_tuples(q))
                .map(|t| self.tuple_probability(t) * self.conditional(p, t) * self.conditional(q, t))
                .sum(),
        };
        Ok(clamp_unit(numerator / denominator))
    }

    /// `P(Z_target = 1 | Z_c = v_c for every condition)` under the
    /// conditional-independence factorization.
    pub fn query(&self, target: RelationId, conditions: &[(RelationId, bool)]) -> Result<f64> {
        self.query_value(target, true, conditions)
    }

    /// `P(Z_target = value | conditions)`.
    pub fn query_value(&self, target: RelationId, value: bool, conditions: &[(RelationId, bool)]) -> Result<f64> {
        if conditions.is_empty() {
            return Err(Error::EmptyInput("conditional query needs at least one condition"));
        }
        self.corpus.check_relation(target)?;
        for &(r, _) in conditions {
            self.corpus.check_relation(r)?;
        }
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for &(t, _) in self.corpus.tuples() {
            let mut weight = self.tuple_probability(t);
            for &(r, z) in conditions {
                let p = self.conditional(r, t);
                weight *= if z { p } else { 1.0 - p };
            }
            denominator += weight;
            let p = self.conditional(target, t);
            numerator += weight * if value { p } else { 1.0 - p };
        }
        if denominator <= 0.0 {
            return Err(Error::UndefinedConditional);
        }
        Ok(clamp_unit(numerator / denominator))
    }

    /// `P(T = t, Z = assignment)`, with `assignment[r]` the value of `Z_r`.
    pub fn joint(&self, t: Tuple, assignment: &[bool]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .fold(self.tuple_probability(t), |acc, (r, &z)| {
                let p = self.conditional(RelationId(r as u32), t);
                acc * if z { p } else { 1.0 - p }
            })
    }
}

fn intersect<'s>(a: &'s [(Tuple, u64)], b: &'s [(Tuple, u64)]) -> impl Iterator<Item = Tuple> + 's {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .filter(move |(t, _)| large.binary_search_by(|(x, _)| x.cmp(t)).is_ok())
        .map(|(t, _)| *t)
}

// Sums of products of probabilities can overshoot 1 by an ulp.
fn clamp_unit(x: f64) -> f64 {
    // an empty f64 sum is -0.0; adding 0.0 keeps the sign positive
    x.clamp(0.0, 1.0) + 0.0
}

/// Empirical estimator.
pub fn prob_e(corpus: &Corpus, rule: &ImplicationRule) -> Result<f64> {
    ProbModel::empirical(corpus)?.implication(rule)
}

/// Link-prediction estimator over every observed tuple.
pub fn prob_l(corpus: &Corpus, state: &EmbeddingState, rule: &ImplicationRule) -> Result<f64> {
    ProbModel::new(corpus, Estimator::LinkFull(state))?.implication(rule)
}

/// Link-prediction estimator restricted to observed relation–tuple pairs.
pub fn prob_el(corpus: &Corpus, state: &EmbeddingState, rule: &ImplicationRule) -> Result<f64> {
    ProbModel::new(corpus, Estimator::LinkObserved(state))?.implication(rule)
}

pub fn conditional_query(
    corpus: &Corpus,
    estimator: Estimator<'_>,
    target: RelationId,
    conditions: &[(RelationId, bool)],
) -> Result<f64> {
    ProbModel::new(corpus, estimator)?.query(target, conditions)
}
