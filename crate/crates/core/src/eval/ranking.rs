use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::{FilterIndex, Side, Triple};
use crate::scalar::Scalar;

use super::scorer::Scorer;

/// Pessimistic filtered rank: one plus the number of unfiltered candidates
/// (other than the target) scoring at least as high as the target.
pub fn filtered_rank<T: Scalar>(scorer: &Scorer<T>, triple: Triple, side: Side, filter: &FilterIndex) -> Result<usize> {
    let scores = scorer.score_candidates(triple, side)?;
    Ok(rank_from_scores(&scores, triple, side, filter))
}

pub(crate) fn rank_from_scores<T: Scalar>(scores: &[T], triple: Triple, side: Side, filter: &FilterIndex) -> usize {
    let target = match side {
        Side::Head => triple.head,
        Side::Tail => triple.tail,
    };
    let known = filter.known(&triple, side);
    let ts = scores[target as usize];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(c, &s)| {
            let c = c as u32;
            c != target && s >= ts && known.binary_search(&c).is_err()
        })
        .count()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mrr: f64,
    pub mr: f64,
    pub hits10: f64,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        let n = ranks.len() as f64;
        Metrics {
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            mr: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
            hits10: hits_at(ranks, 10),
        }
    }

    fn mean(a: &Metrics, b: &Metrics) -> Self {
        Metrics {
            mrr: (a.mrr + b.mrr) / 2.0,
            mr: (a.mr + b.mr) / 2.0,
            hits10: (a.hits10 + b.hits10) / 2.0,
        }
    }
}

pub fn hits_at(ranks: &[usize], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingResult {
    pub head: Metrics,
    pub tail: Metrics,
    /// Unweighted mean of the head and tail metrics.
    pub average: Metrics,
    pub triples: Vec<Triple>,
    pub head_ranks: Vec<usize>,
    pub tail_ranks: Vec<usize>,
}

impl RankingResult {
    pub fn from_ranks(triples: Vec<Triple>, head_ranks: Vec<usize>, tail_ranks: Vec<usize>) -> Self {
        let head = Metrics::from_ranks(&head_ranks);
        let tail = Metrics::from_ranks(&tail_ranks);
        RankingResult {
            average: Metrics::mean(&head, &tail),
            head,
            tail,
            triples,
            head_ranks,
            tail_ranks,
        }
    }
}

/// Head and tail prediction over every triple of `test`.
pub fn link_prediction_eval<T: Scalar>(scorer: &Scorer<T>, test: &[Triple], filter: &FilterIndex) -> Result<RankingResult> {
    if test.is_empty() {
        return Err(Error::Evaluation("no triples to rank".into()));
    }
    let ranks: Vec<(usize, usize)> = test
        .par_iter()
        .map(|&t| {
            Ok((
                filtered_rank(scorer, t, Side::Head, filter)?,
                filtered_rank(scorer, t, Side::Tail, filter)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (head, tail) = ranks.into_iter().unzip();
    Ok(RankingResult::from_ranks(test.to_vec(), head, tail))
}
