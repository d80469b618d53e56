//! Per-relation path scorers.
//!
//! Every relation `r` owns a small MLP that maps a path feature vector to a
//! logit. The probability of `r` for an entity pair is the maximum over its
//! paths of `sigmoid(MLP_r(x))`; the path attaining it decides the winning
//! reasoning kind.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureSpace;
use super::paths::{extract_paths, PathKind};
use crate::error::{Error, Result};
use crate::ingest::Document;
use crate::kg::KnowledgeGraph;
use crate::linkpred::{sigmoid, log_sigmoid};
use crate::optim::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// 1 = logistic layer, 2 = one hidden ReLU layer per relation.
    pub depth: usize,
    pub hidden: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 200,
            seed: 0,
            depth: 1,
            hidden: 8,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("scorer learning rate {} invalid", self.lr)));
        }
        if !(1..=2).contains(&self.depth) {
            return Err(Error::Config(format!("scorer depth {} not in 1..=2", self.depth)));
        }
        if self.depth == 2 && self.hidden == 0 {
            return Err(Error::Config("hidden width must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningScorer {
    pub relations: Vec<String>,
    pub space: FeatureSpace,
    pub depth: usize,
    pub hidden: usize,
    /// Depth 1: `[W (R×F), b (R×1)]`. Depth 2: `[W1 (RH×F), b1 (RH×1),
    /// W2 (R×H), b2 (R×1)]`, relation `r` owning hidden rows `rH..(r+1)H`.
    pub weights: Vec<Array2<f64>>,
}

/// Reasoning output for one entity pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReasoning {
    pub probs: Vec<f64>,
    /// Kind of the path that attains each relation's probability.
    pub winners: Vec<Option<PathKind>>,
}

impl PairReasoning {
    pub fn empty(num_relations: usize) -> Self {
        Self {
            probs: vec![0.0; num_relations],
            winners: vec![None; num_relations],
        }
    }

    /// Kind of the single most confident (pair, relation) cell.
    pub fn best_kind(&self) -> Option<PathKind> {
        let mut best: Option<(f64, PathKind)> = None;
        for (p, k) in self.probs.iter().zip(&self.winners) {
            if let Some(k) = k {
                if best.map_or(true, |(bp, _)| *p > bp) {
                    best = Some((*p, *k));
                }
            }
        }
        best.map(|(_, k)| k)
    }
}

impl ReasoningScorer {
    pub fn init(relations: Vec<String>, space: FeatureSpace, config: &ScorerConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (r, f, h) = (relations.len(), space.dim(), config.hidden);
        let mut uniform = |rows: usize, cols: usize, bound: f64| {
            Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
        };
        let weights = if config.depth == 1 {
            vec![uniform(r, f, 0.1), Array2::zeros((r, 1))]
        } else {
            vec![
                uniform(r * h, f, (6.0 / (f + h) as f64).sqrt()),
                Array2::zeros((r * h, 1)),
                uniform(r, h, (6.0 / (h + 1) as f64).sqrt()),
                Array2::zeros((r, 1)),
            ]
        };
        let mut scorer = Self {
            relations,
            space,
            depth: config.depth,
            hidden: config.hidden,
            weights,
        };
        scorer.round_to_f32();
        scorer
    }

    /// Rounds every weight to the nearest `f32` so checkpoints are exact.
    pub fn round_to_f32(&mut self) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v as f32 as f64);
        }
    }

    /// Checks the weight shapes against the relation count, feature space
    /// and depth.
    pub fn check_shapes(&self) -> Result<()> {
        let (r, f, h) = (self.num_relations(), self.space.dim(), self.hidden);
        let expected: Vec<(usize, usize)> = match self.depth {
            1 => vec![(r, f), (r, 1)],
            2 => vec![(r * h, f), (r * h, 1), (r, h), (r, 1)],
            d => return Err(Error::Config(format!("scorer depth {d} not in 1..=2"))),
        };
        let got: Vec<(usize, usize)> = self.weights.iter().map(|w| w.dim()).collect();
        if got != expected {
            return Err(Error::Config(format!("scorer weight shapes {got:?}, expected {expected:?}")));
        }
        Ok(())
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r == name)
    }

    /// Logits of every relation for one feature vector.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let dot = |row: ndarray::ArrayView1<f64>| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let r = self.num_relations();
        if self.depth == 1 {
            (0..r).map(|i| dot(self.weights[0].row(i)) + self.weights[1][[i, 0]]).collect()
        } else {
            let h = self.hidden;
            (0..r)
                .map(|i| {
                    let mut z = self.weights[3][[i, 0]];
                    for u in 0..h {
                        let a = (dot(self.weights[0].row(i * h + u)) + self.weights[1][[i * h + u, 0]]).max(0.0);
                        z += self.weights[2][[i, u]] * a;
                    }
                    z
                })
                .collect()
        }
    }

    /// Adds `coef · ∂logit_r(x)/∂θ` to `grads`.
    fn accumulate_grad(&self, x: &[f64], r: usize, coef: f64, grads: &mut [Array2<f64>]) {
        if self.depth == 1 {
            for (g, &xi) in grads[0].row_mut(r).iter_mut().zip(x) {
                *g += coef * xi;
            }
            grads[1][[r, 0]] += coef;
            return;
        }
        let h = self.hidden;
        for u in 0..h {
            let row = r * h + u;
            let pre: f64 =
                self.weights[0].row(row).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.weights[1][[row, 0]];
            let a = pre.max(0.0);
            grads[2][[r, u]] += coef * a;
            if pre > 0.0 {
                let back = coef * self.weights[2][[r, u]];
                for (g, &xi) in grads[0].row_mut(row).iter_mut().zip(x) {
                    *g += back * xi;
                }
                grads[1][[row, 0]] += back;
            }
        }
        grads[3][[r, 0]] += coef;
    }

    /// Per-relation max over paths of `sigmoid(MLP_r(x))`.
    pub fn score_pair(&self, features: &[Vec<f64>], kinds: &[PathKind]) -> Result<PairReasoning> {
        if features.len() != kinds.len() {
            return Err(Error::Config("one path kind per feature vector required".into()));
        }
        if let Some(bad) = features.iter().find(|x| x.len() != self.feature_dim()) {
            return Err(Error::Config(format!(
                "feature vector has {} dimensions, scorer expects {}",
                bad.len(),
                self.feature_dim()
            )));
        }
        let mut out = PairReasoning::empty(self.num_relations());
        for (x, &kind) in features.iter().zip(kinds) {
            for (r, z) in self.logits(x).into_iter().enumerate() {
                let p = sigmoid(z);
                if out.winners[r].is_none() || p > out.probs[r] {
                    out.probs[r] = p;
                    out.winners[r] = Some(kind);
                }
            }
        }
        Ok(out)
    }
}

/// One entity pair with its path features and gold relation indexes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub features: Vec<Vec<f64>>,
    pub kinds: Vec<PathKind>,
    pub labels: BTreeSet<usize>,
}

/// Mean BCE over every (pair, relation) cell of pairs that have paths.
pub fn scorer_loss(scorer: &ReasoningScorer, examples: &[PairExample]) -> f64 {
    loss_and_grad(scorer, examples, None)
}

fn loss_and_grad(scorer: &ReasoningScorer, examples: &[PairExample], mut grads: Option<&mut [Array2<f64>]>) -> f64 {
    let nr = scorer.num_relations();
    let cells = examples.iter().filter(|e| !e.features.is_empty()).count() * nr;
    if cells == 0 {
        return 0.0;
    }
    let mut loss = 0.0;
    for ex in examples.iter().filter(|e| !e.features.is_empty()) {
        let logits: Vec<Vec<f64>> = ex.features.iter().map(|x| scorer.logits(x)).collect();
        for r in 0..nr {
            let (best, z) = logits
                .iter()
                .enumerate()
                .map(|(i, l)| (i, l[r]))
                .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            let y = if ex.labels.contains(&r) { 1.0 } else { 0.0 };
            loss -= y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z);
            if let Some(g) = grads.as_deref_mut() {
                scorer.accumulate_grad(&ex.features[best], r, (sigmoid(z) - y) / cells as f64, g);
            }
        }
    }
    loss / cells as f64
}

/// Fits the per-relation scorers by Adam on mean BCE. Gradients flow through
/// the arg-max path of each (pair, relation) cell.
pub fn fit_scorer(
    relations: Vec<String>,
    space: FeatureSpace,
    examples: &[PairExample],
    config: &ScorerConfig,
) -> Result<ReasoningScorer> {
    config.validate()?;
    let has_positive = examples.iter().any(|e| !e.features.is_empty() && !e.labels.is_empty());
    if !has_positive {
        return Err(Error::Training("no positive (pair, relation) example with a reasoning path".into()));
    }
    let mut scorer = ReasoningScorer::init(relations, space, config);
    let mut adam = Adam::new(config.lr, scorer.weights.iter().map(|w| w.dim()));
    for epoch in 0..config.epochs {
        let mut grads: Vec<Array2<f64>> = scorer.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
        let loss = loss_and_grad(&scorer, examples, Some(&mut grads));
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("scorer loss {loss} at epoch {epoch}")));
        }
        adam.step(scorer.weights.iter_mut().collect(), grads.iter().collect());
        if epoch % 50 == 0 {
            log::debug!("scorer epoch {epoch}: loss {loss:.6}");
        }
    }
    scorer.round_to_f32();
    Ok(scorer)
}

/// Sorted distinct gold relation names of `docs`.
pub fn label_relations(docs: &[Document]) -> Vec<String> {
    let set: BTreeSet<&str> = docs
        .iter()
        .flat_map(|d| d.gold_facts.iter().map(|f| f.relation.as_str()))
        .collect();
    set.into_iter().map(str::to_owned).collect()
}

/// Builds one example per ordered entity pair of every document.
pub fn pair_examples(
    docs: &[Document],
    graph: &KnowledgeGraph,
    space: &FeatureSpace,
    relations: &[String],
) -> Vec<PairExample> {
    let mut out = Vec::new();
    for doc in docs {
        for h in 0..doc.num_entities() {
            for t in 0..doc.num_entities() {
                if h == t {
                    continue;
                }
                let paths = extract_paths(doc, h, t);
                let labels = doc
                    .gold_facts
                    .iter()
                    .filter(|f| f.head_idx == h && f.tail_idx == t)
                    .filter_map(|f| relations.iter().position(|r| r == &f.relation))
                    .collect();
                out.push(PairExample {
                    features: paths.iter().map(|p| space.featurize(p, doc, graph)).collect(),
                    kinds: paths.iter().map(|p| p.kind).collect(),
                    labels,
                });
            }
        }
    }
    out
}

/// Trains scorers for every gold relation of `docs`.
pub fn train_scorer(docs: &[Document], graph: &KnowledgeGraph, config: &ScorerConfig) -> Result<ReasoningScorer> {
    let relations = label_relations(docs);
    let space = FeatureSpace::from_documents(docs);
    let examples = pair_examples(docs, graph, &space, &relations);
    fit_scorer(relations, space, &examples, config)
}
