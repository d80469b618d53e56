//! Fusion of reasoning and link-prediction probabilities, thresholded
//! predictions, and F1 / Ign F1 scoring.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Document;
use crate::kg::KnowledgeGraph;
use crate::linkpred::{distmult_score, sigmoid, ModelParams};
use crate::reasoning::{extract_paths, PairReasoning, PathKind, ReasoningScorer};

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} = {x} outside [0, 1]")))
    }
}

/// `lambda · reasoning + (1 − lambda) · linkpred`.
pub fn aggregate(reasoning: f64, linkpred: f64, lambda: f64) -> Result<f64> {
    check_unit("reasoning probability", reasoning)?;
    check_unit("link-prediction probability", linkpred)?;
    check_unit("lambda", lambda)?;
    Ok((lambda * reasoning + (1.0 - lambda) * linkpred).clamp(0.0, 1.0))
}

pub fn aggregate_max(reasoning: f64, linkpred: f64) -> Result<f64> {
    check_unit("reasoning probability", reasoning)?;
    check_unit("link-prediction probability", linkpred)?;
    Ok(reasoning.max(linkpred))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    #[default]
    Convex,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub operator: Operator,
    pub lambda: f64,
    pub threshold: f64,
    /// Per-relation overrides of `threshold`.
    pub relation_thresholds: BTreeMap<String, f64>,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            operator: Operator::Convex,
            lambda: 0.5,
            threshold: 0.5,
            relation_thresholds: BTreeMap::new(),
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        for (name, t) in std::iter::once(("threshold", &self.threshold)).chain(
            self.relation_thresholds.iter().map(|(k, v)| (k.as_str(), v)),
        ) {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(Error::Config(format!("threshold for {name} = {t} outside (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn combine(&self, reasoning: f64, linkpred: f64) -> Result<f64> {
        match self.operator {
            Operator::Convex => aggregate(reasoning, linkpred, self.lambda),
            Operator::Max => aggregate_max(reasoning, linkpred),
        }
    }

    pub fn threshold_for(&self, relation: &str) -> f64 {
        self.relation_thresholds.get(relation).copied().unwrap_or(self.threshold)
    }
}

/// Scores of one ordered entity pair of a document, one entry per label
/// relation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScore {
    pub doc_id: String,
    pub head: usize,
    pub tail: usize,
    pub head_name: String,
    pub tail_name: String,
    pub reasoning: Vec<f64>,
    pub linkpred: Vec<f64>,
    pub final_probs: Vec<f64>,
    pub winners: Vec<Option<PathKind>>,
}

/// A document-level fact. Identity is `(doc_id, head, relation, tail)`;
/// the names are carried for Ign F1 and output.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub doc_id: String,
    pub head: usize,
    pub tail: usize,
    pub relation: String,
    pub head_name: String,
    pub tail_name: String,
}

impl Fact {
    pub fn named_triple(&self) -> (&str, &str, &str) {
        (&self.head_name, &self.relation, &self.tail_name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub fact: Fact,
    pub prob: f64,
    pub kind: Option<PathKind>,
}

/// Thresholded predictions, sorted by fact and free of duplicates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub predictions: Vec<Prediction>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn facts(&self) -> BTreeSet<Fact> {
        self.predictions.iter().map(|p| p.fact.clone()).collect()
    }

    /// JSON Lines `{"title", "h_idx", "t_idx", "r", "score"}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.predictions {
            let line = serde_json::json!({
                "title": p.fact.doc_id,
                "h_idx": p.fact.head,
                "t_idx": p.fact.tail,
                "r": p.fact.relation,
                "score": p.prob,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Emits every `(pair, relation)` whose final probability reaches the
/// relation's threshold.
pub fn predict(scores: &[PairScore], relations: &[String], config: &AggregationConfig) -> PredictionSet {
    let mut best: BTreeMap<Fact, (f64, Option<PathKind>)> = BTreeMap::new();
    for s in scores {
        for (r, name) in relations.iter().enumerate() {
            let p = s.final_probs[r];
            if p >= config.threshold_for(name) {
                let fact = Fact {
                    doc_id: s.doc_id.clone(),
                    head: s.head,
                    tail: s.tail,
                    relation: name.clone(),
                    head_name: s.head_name.clone(),
                    tail_name: s.tail_name.clone(),
                };
                let entry = best.entry(fact).or_insert((p, s.winners[r]));
                if p > entry.0 {
                    *entry = (p, s.winners[r]);
                }
            }
        }
    }
    PredictionSet {
        predictions: best
            .into_iter()
            .map(|(fact, (prob, kind))| Prediction { fact, prob, kind })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ign_f1: f64,
}

fn micro_f1(pred: &BTreeSet<&Fact>, gold: &BTreeSet<&Fact>) -> (f64, f64, f64) {
    let correct = pred.intersection(gold).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { correct / pred.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { correct / gold.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Micro F1 of `pred` against `gold`, and Ign F1 after dropping from both
/// sides every fact whose named triple occurs in `train`. Empty sets score 0.
pub fn f1_metrics(pred: &BTreeSet<Fact>, gold: &BTreeSet<Fact>, train: &BTreeSet<Fact>) -> F1Scores {
    let (precision, recall, f1) = micro_f1(&pred.iter().collect(), &gold.iter().collect());
    let seen: HashSet<(&str, &str, &str)> = train.iter().map(Fact::named_triple).collect();
    let ip: BTreeSet<&Fact> = pred.iter().filter(|f| !seen.contains(&f.named_triple())).collect();
    let ig: BTreeSet<&Fact> = gold.iter().filter(|f| !seen.contains(&f.named_triple())).collect();
    if ip.is_empty() || ig.is_empty() {
        log::warn!(
            "Ign F1 over an empty set ({} predictions, {} gold after removing training facts); reporting 0",
            ip.len(),
            ig.len()
        );
    }
    let (_, _, ign_f1) = micro_f1(&ip, &ig);
    F1Scores {
        precision,
        recall,
        f1,
        ign_f1,
    }
}

/// Gold facts of `docs`.
pub fn gold_facts(docs: &[Document]) -> BTreeSet<Fact> {
    docs.iter()
        .flat_map(|d| {
            d.gold_facts.iter().map(move |f| Fact {
                doc_id: d.doc_id.clone(),
                head: f.head_idx,
                tail: f.tail_idx,
                relation: f.relation.clone(),
                head_name: d.canonical_name(f.head_idx).to_owned(),
                tail_name: d.canonical_name(f.tail_idx).to_owned(),
            })
        })
        .collect()
}

pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over every `(pair, relation)` cell, with
/// probabilities clamped to `[ε, 1 − ε]`.
pub fn bce_loss(probs: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<f64> {
    if probs.len() != labels.len() || probs.iter().zip(labels).any(|(p, y)| p.len() != y.len()) {
        return Err(Error::Validation("probability and label shapes differ".into()));
    }
    let mut total = 0.0;
    let mut cells = 0usize;
    for (p, y) in probs.iter().zip(labels) {
        for (&p, &y) in p.iter().zip(y) {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            cells += 1;
        }
    }
    Ok(if cells == 0 { 0.0 } else { total / cells as f64 })
}

/// Link-prediction probability `sigmoid(score(h, r, t))` for every label
/// relation, 0 where an entity or relation is missing from the graph.
pub fn linkpred_probs(
    graph: &KnowledgeGraph,
    params: &ModelParams,
    states: &Array2<f64>,
    head: &str,
    tail: &str,
    relations: &[String],
) -> Vec<f64> {
    let (Some(h), Some(t)) = (graph.entity(head), graph.entity(tail)) else {
        return vec![0.0; relations.len()];
    };
    relations
        .iter()
        .map(|r| match graph.relation(r) {
            Some(r) if r.index() < params.num_relations() && h.index() < states.nrows() && t.index() < states.nrows() => {
                sigmoid(distmult_score(params, states, h, r, t))
            }
            _ => 0.0,
        })
        .collect()
}

/// Reasoning, link-prediction and fused scores for every ordered entity
/// pair of every document.
pub fn score_documents(
    docs: &[Document],
    graph: &KnowledgeGraph,
    params: &ModelParams,
    states: &Array2<f64>,
    scorer: &ReasoningScorer,
    config: &AggregationConfig,
) -> Result<Vec<PairScore>> {
    config.validate()?;
    let relations = &scorer.relations;
    let mut out = Vec::new();
    for doc in docs {
        for h in 0..doc.num_entities() {
            for t in 0..doc.num_entities() {
                if h == t {
                    continue;
                }
                let paths = extract_paths(doc, h, t);
                let reasoning = if paths.is_empty() {
                    PairReasoning::empty(relations.len())
                } else {
                    let features: Vec<Vec<f64>> =
                        paths.iter().map(|p| scorer.space.featurize(p, doc, graph)).collect();
                    let kinds: Vec<PathKind> = paths.iter().map(|p| p.kind).collect();
                    scorer.score_pair(&features, &kinds)?
                };
                let (hn, tn) = (doc.canonical_name(h), doc.canonical_name(t));
                let linkpred = linkpred_probs(graph, params, states, hn, tn, relations);
                let final_probs = reasoning
                    .probs
                    .iter()
                    .zip(&linkpred)
                    .map(|(&r, &l)| config.combine(r, l))
                    .collect::<Result<Vec<f64>>>()?;
                out.push(PairScore {
                    doc_id: doc.doc_id.clone(),
                    head: h,
                    tail: t,
                    head_name: hn.to_owned(),
                    tail_name: tn.to_owned(),
                    reasoning: reasoning.probs,
                    linkpred,
                    final_probs,
                    winners: reasoning.winners,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fact(doc: &str, h: usize, r: &str, t: usize) -> Fact {
        Fact {
            doc_id: doc.into(),
            head: h,
            tail: t,
            relation: r.into(),
            head_name: format!("e{h}"),
            tail_name: format!("e{t}"),
        }
    }

    fn pair(final_probs: Vec<f64>) -> PairScore {
        PairScore {
            doc_id: "d".into(),
            head: 0,
            tail: 1,
            head_name: "e0".into(),
            tail_name: "e1".into(),
            reasoning: final_probs.clone(),
            linkpred: final_probs.clone(),
            winners: vec![None; final_probs.len()],
            final_probs,
        }
    }

    #[test]
    fn convex_combination() {
        assert!((aggregate(0.8, 0.4, 0.5).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(aggregate(0.3, 0.3, 0.77).unwrap(), 0.3);
        assert_eq!(aggregate(0.9, 0.1, 1.0).unwrap(), 0.9);
        assert!(matches!(aggregate(1.2, 0.1, 0.5), Err(Error::Validation(_))));
        assert!(matches!(aggregate(0.2, 0.1, -0.5), Err(Error::Validation(_))));
        assert_eq!(aggregate_max(0.2, 0.7).unwrap(), 0.7);
    }

    #[test]
    fn thresholding() {
        let rels = vec!["r1".to_string(), "r2".to_string()];
        let config = AggregationConfig::default();
        assert!(predict(&[pair(vec![0.0, 0.0])], &rels, &config).is_empty());
        let set = predict(&[pair(vec![0.9, 0.3])], &rels, &config);
        assert_eq!(set.facts(), [fact("d", 0, "r1", 1)].into());
        let strict = AggregationConfig {
            relation_thresholds: [("r1".to_string(), 0.95)].into(),
            ..AggregationConfig::default()
        };
        assert!(predict(&[pair(vec![0.9, 0.3])], &rels, &strict).is_empty());
    }

    #[test]
    fn f1_hand_cases() {
        let (a, b, c) = (fact("d", 0, "r", 1), fact("d", 1, "r", 2), fact("d", 2, "r", 0));
        let none = BTreeSet::new();
        let s = f1_metrics(&[a.clone(), b.clone()].into(), &[a.clone(), b.clone()].into(), &none);
        assert_eq!((s.f1, s.ign_f1), (1.0, 1.0));
        let s = f1_metrics(&[a.clone(), b.clone()].into(), &[b.clone(), c].into(), &none);
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        // same named triple in another training document
        let train = [fact("train", 0, "r", 1)].into();
        let s = f1_metrics(&[a.clone()].into(), &[a].into(), &train);
        assert_eq!((s.f1, s.ign_f1), (1.0, 0.0));
    }

    #[test]
    fn bce_closed_forms() {
        let half = vec![vec![0.5; 3]; 2];
        let ys = vec![vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]];
        assert!((bce_loss(&half, &ys).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&ys, &ys).unwrap() < 1e-6);
        assert!(bce_loss(&half, &ys[..1]).is_err());
    }

    #[test]
    fn prediction_lines() {
        let rels = vec!["r1".to_string()];
        let set = predict(&[pair(vec![0.75])], &rels, &AggregationConfig::default());
        let line: serde_json::Value = serde_json::from_str(set.to_jsonl().trim()).unwrap();
        assert_eq!(line, serde_json::json!({"title": "d", "h_idx": 0, "t_idx": 1, "r": "r1", "score": 0.75}));
    }
}
