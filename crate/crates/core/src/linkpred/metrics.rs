use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::objective::distmult_score;
use super::rgcn::rgcn_forward;
use crate::error::Result;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RankMetrics {
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub mrr: f64,
}

impl RankMetrics {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        if ranks.is_empty() {
            return Self::default();
        }
        let n = ranks.len() as f64;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Self {
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        }
    }
}

/// 1-based rank of `target` among `candidates` when sorted by descending
/// score with ties broken by ascending entity id.
fn rank_of(target: usize, scores: &[f64], skip: impl Fn(usize) -> bool) -> usize {
    let ts = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(e, &s)| e != target && !skip(e) && (s > ts || (s == ts && e < target)))
        .count()
}

/// Tail and head ranks for every test triple, given precomputed node states.
pub fn ranks_with_states(
    params: &ModelParams,
    states: &Array2<f64>,
    known: &HashSet<(EntityId, RelationId, EntityId)>,
    test: &[Triple],
    filtered: bool,
) -> Vec<usize> {
    let n = states.nrows();
    let mut ranks = Vec::with_capacity(test.len() * 2);
    let mut scores = vec![0.0; n];
    for t in test {
        for (e, s) in scores.iter_mut().enumerate() {
            *s = distmult_score(params, states, t.head, t.relation, EntityId(e as u32));
        }
        ranks.push(rank_of(t.tail.index(), &scores, |e| {
            filtered && known.contains(&(t.head, t.relation, EntityId(e as u32)))
        }));
        for (e, s) in scores.iter_mut().enumerate() {
            *s = distmult_score(params, states, EntityId(e as u32), t.relation, t.tail);
        }
        ranks.push(rank_of(t.head.index(), &scores, |e| {
            filtered && known.contains(&(EntityId(e as u32), t.relation, t.tail))
        }));
    }
    ranks
}

/// Hits@{1,3,10} and MRR over tail and head queries of every test triple.
/// Filtered mode ignores candidates that form another known-true triple
/// (present in the graph or in the test set).
pub fn rank_metrics(params: &ModelParams, graph: &KnowledgeGraph, test: &[Triple], filtered: bool) -> Result<RankMetrics> {
    let states = rgcn_forward(graph, params, None)?;
    let known: HashSet<_> = graph.triples().chain(test.iter().copied()).map(|t| t.key()).collect();
    Ok(RankMetrics::from_ranks(&ranks_with_states(params, &states, &known, test, filtered)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_to_metrics() {
        let m = RankMetrics::from_ranks(&[1, 2, 4, 20]);
        assert_eq!(m.hits1, 0.25);
        assert_eq!(m.hits3, 0.5);
        assert_eq!(m.hits10, 0.75);
        assert!((m.mrr - (1.0 + 0.5 + 0.25 + 0.05) / 4.0).abs() < 1e-12);
        assert_eq!(RankMetrics::from_ranks(&[]), RankMetrics::default());
    }

    #[test]
    fn tie_order_by_id() {
        let scores = [0.0; 5];
        for t in 0..5 {
            assert_eq!(rank_of(t, &scores, |_| false), t + 1);
        }
        assert_eq!(rank_of(3, &scores, |e| e == 1), 3);
    }
}
