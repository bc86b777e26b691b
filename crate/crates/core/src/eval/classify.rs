use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::kg::{RelationId, Triple};
use crate::scalar::Scalar;

use super::scorer::Scorer;

/// Threshold maximising accuracy of "true iff score >= threshold" on
/// `scored`, with its number of correct predictions. Candidates are the
/// midpoints between consecutive distinct scores plus both infinities; the
/// lowest threshold wins ties.
pub fn best_threshold(scored: &[(f64, bool)]) -> (f64, usize) {
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = sorted.iter().filter(|s| s.1).count();
    // everything predicted true
    let mut correct = positives;
    let (mut best, mut best_correct) = (f64::NEG_INFINITY, correct);
    for k in 0..sorted.len() {
        // move sorted[k] to the predicted-false side
        correct = if sorted[k].1 { correct - 1 } else { correct + 1 };
        if k + 1 < sorted.len() && sorted[k + 1].0 == sorted[k].0 {
            continue;
        }
        if correct > best_correct {
            best_correct = correct;
            best = match sorted.get(k + 1) {
                Some(next) => sorted[k].0 + (next.0 - sorted[k].0) / 2.0,
                None => f64::INFINITY,
            };
        }
    }
    (best, best_correct)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Thresholds {
    pub per_relation: BTreeMap<RelationId, f64>,
    pub global: f64,
}

impl Thresholds {
    /// Fits one threshold per relation plus a global fallback.
    pub fn fit(scored: &[(RelationId, f64, bool)]) -> Result<Self> {
        if scored.is_empty() {
            return Err(Error::Evaluation("no validation triples to fit thresholds".into()));
        }
        let all: Vec<(f64, bool)> = scored.iter().map(|&(_, s, y)| (s, y)).collect();
        let mut groups: BTreeMap<RelationId, Vec<(f64, bool)>> = BTreeMap::new();
        for &(r, s, y) in scored {
            groups.entry(r).or_default().push((s, y));
        }
        Ok(Thresholds {
            per_relation: groups.iter().map(|(&r, g)| (r, best_threshold(g).0)).collect(),
            global: best_threshold(&all).0,
        })
    }

    pub fn get(&self, relation: RelationId) -> f64 {
        self.per_relation.get(&relation).copied().unwrap_or(self.global)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelationAccuracy {
    pub correct: usize,
    pub total: usize,
    pub threshold: f64,
    /// No validation data; the global threshold was used.
    pub fallback: bool,
}

impl RelationAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_relation: BTreeMap<RelationId, RelationAccuracy>,
    pub thresholds: Thresholds,
}

/// Applies `thresholds` to scored test triples.
pub fn classify_scored(thresholds: &Thresholds, scored: &[(RelationId, f64, bool)]) -> Result<ClassificationReport> {
    if scored.is_empty() {
        return Err(Error::Evaluation("no test triples to classify".into()));
    }
    let mut per_relation: BTreeMap<RelationId, RelationAccuracy> = BTreeMap::new();
    for &(r, s, y) in scored {
        let fallback = !thresholds.per_relation.contains_key(&r);
        let threshold = thresholds.get(r);
        let e = per_relation.entry(r).or_insert(RelationAccuracy {
            correct: 0,
            total: 0,
            threshold,
            fallback,
        });
        e.total += 1;
        if (s >= threshold) == y {
            e.correct += 1;
        }
    }
    for (r, acc) in &per_relation {
        if acc.fallback {
            warn!("relation {r} has no validation triples; using the global threshold");
        }
    }
    let correct = per_relation.values().map(|a| a.correct).sum();
    Ok(ClassificationReport {
        accuracy: correct as f64 / scored.len() as f64,
        correct,
        total: scored.len(),
        per_relation,
        thresholds: thresholds.clone(),
    })
}

fn score_all<T: Scalar>(scorer: &Scorer<T>, labelled: &[(Triple, bool)]) -> Result<Vec<(RelationId, f64, bool)>> {
    labelled
        .iter()
        .map(|&(t, y)| Ok((t.relation, scorer.score(t.head, t.relation, t.tail)?.as_f64(), y)))
        .collect()
}

/// Per-relation thresholds fitted on `valid`, accuracy measured on `test`.
pub fn triple_classification_eval<T: Scalar>(
    scorer: &Scorer<T>,
    valid: &[(Triple, bool)],
    test: &[(Triple, bool)],
) -> Result<ClassificationReport> {
    let thresholds = Thresholds::fit(&score_all(scorer, valid)?)?;
    classify_scored(&thresholds, &score_all(scorer, test)?)
}

/// Positives labelled true followed by negatives labelled false.
pub fn label_pairs(positives: &[Triple], negatives: &[Triple]) -> Vec<(Triple, bool)> {
    positives
        .iter()
        .map(|&t| (t, true))
        .chain(negatives.iter().map(|&t| (t, false)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_scores_give_perfect_accuracy() {
        let scored: Vec<_> = (0..10).map(|i| (0, if i % 2 == 0 { 1.0 } else { 0.0 }, i % 2 == 0)).collect();
        let th = Thresholds::fit(&scored).unwrap();
        let t = th.get(0);
        assert!(t > 0.0 && t < 1.0);
        assert_eq!(classify_scored(&th, &scored).unwrap().accuracy, 1.0);
    }

    #[test]
    fn constant_scores_give_half_under_balance() {
        let scored: Vec<_> = (0..10).map(|i| (0, 0.5, i % 2 == 0)).collect();
        let th = Thresholds::fit(&scored).unwrap();
        assert_eq!(classify_scored(&th, &scored).unwrap().accuracy, 0.5);
    }

    #[test]
    fn sweep_matches_exhaustive_search() {
        let scored = [(0.1, false), (0.4, true), (0.35, false), (0.8, true), (0.5, false), (0.5, true), (0.9, true)];
        let (t, c) = best_threshold(&scored);
        let count = |th: f64| scored.iter().filter(|&&(s, y)| (s >= th) == y).count();
        assert_eq!(count(t), c);
        let brute = scored
            .iter()
            .map(|s| count(s.0))
            .chain([count(f64::INFINITY)])
            .max()
            .unwrap();
        assert_eq!(c, brute);
    }

    #[test]
    fn unseen_relation_falls_back_to_global() {
        let valid = [(0, 1.0, true), (0, 0.0, false), (1, 5.0, true), (1, 4.0, false)];
        let th = Thresholds::fit(&valid).unwrap();
        let report = classify_scored(&th, &[(2, 4.5, true), (0, 0.9, true)]).unwrap();
        let unseen = report.per_relation[&2];
        assert!(unseen.fallback);
        assert_eq!(unseen.threshold, th.global);
        assert!(!report.per_relation[&0].fallback);
    }
}
