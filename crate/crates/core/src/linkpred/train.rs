use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Activation, Architecture, ModelParams};
use super::objective::{objective_and_grad, Sample};
use super::rgcn::{EdgeMask, MessageGraph};
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::optim::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub dropout_self: f64,
    pub dropout_other: f64,
    pub l2_decoder: f64,
    pub dim: usize,
    pub neg_per_pos: usize,
    pub seed: u64,
    pub rgcn_layers: usize,
    pub blocks: usize,
    pub activation: Activation,
    pub output_activation: Activation,
    pub inverse_edges: bool,
    /// Skip the encoder and score raw embeddings (plain DistMult).
    pub decoder_only: bool,
    /// Positives per optimisation step; 0 means the whole graph.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 100,
            dropout_self: 0.2,
            dropout_other: 0.4,
            l2_decoder: 0.01,
            dim: 200,
            neg_per_pos: 10,
            seed: 0,
            rgcn_layers: 1,
            blocks: 1,
            activation: Activation::Relu,
            output_activation: Activation::Identity,
            inverse_edges: true,
            decoder_only: false,
            batch_size: 0,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            dim: self.dim,
            layers: if self.decoder_only { 0 } else { self.rgcn_layers },
            blocks: self.blocks,
            activation: self.activation,
            output_activation: self.output_activation,
            inverse_edges: self.inverse_edges,
            use_encoder: !self.decoder_only,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        for (name, p) in [("dropout_self", self.dropout_self), ("dropout_other", self.dropout_other)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        if !(self.l2_decoder >= 0.0 && self.l2_decoder.is_finite()) {
            return Err(Error::Config(format!("l2_decoder {} must be >= 0", self.l2_decoder)));
        }
        self.architecture().validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: ModelParams,
    /// Mean loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Uniformly replaces the head or the tail of a positive triple.
pub fn corrupt<R: Rng>(positive: &Sample, num_entities: usize, rng: &mut R) -> Sample {
    let replacement = rng.gen_range(0..num_entities);
    let mut s = Sample { label: 0.0, ..*positive };
    if rng.gen_bool(0.5) {
        s.head = replacement;
    } else {
        s.tail = replacement;
    }
    s
}

pub fn train(graph: &KnowledgeGraph, config: &TrainConfig) -> Result<ModelParams> {
    train_with_report(graph, config).map(|r| r.params)
}

/// Full training run: Adam on BCE over positives and corrupted negatives,
/// with fresh edge dropout at every step. Deterministic for a fixed seed.
pub fn train_with_report(graph: &KnowledgeGraph, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if !graph.is_frozen() {
        return Err(Error::Training("vocabulary must be frozen before training".into()));
    }
    if graph.is_empty() || graph.num_entities() == 0 {
        return Err(Error::Training("graph has no triples".into()));
    }
    let arch = config.architecture();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(arch, graph.num_entities(), graph.num_relations(), &mut rng);
    let mg = MessageGraph::from_graph(graph, arch.inverse_edges);
    let positives: Vec<Sample> = graph
        .triples()
        .map(|t| Sample {
            head: t.head.index(),
            relation: t.relation.index(),
            tail: t.tail.index(),
            label: 1.0,
        })
        .collect();
    let batch = if config.batch_size == 0 {
        positives.len()
    } else {
        config.batch_size
    };
    let mut adam = Adam::new(config.lr, params.blocks().iter().map(|b| b.dim()));
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for (step, chunk) in order.chunks(batch).enumerate() {
            let mask = if arch.use_encoder {
                EdgeMask::sample(&mg, config.dropout_self, config.dropout_other, &mut rng)
            } else {
                EdgeMask::all(&mg)
            };
            let mut samples = Vec::with_capacity(chunk.len() * (1 + config.neg_per_pos));
            for &i in chunk {
                samples.push(positives[i]);
                for _ in 0..config.neg_per_pos {
                    samples.push(corrupt(&positives[i], graph.num_entities(), &mut rng));
                }
            }
            let (loss, grads) = objective_and_grad(&mg, &params, &mask, &samples, config.l2_decoder)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "loss became {loss} at epoch {epoch}, step {step}; last mean loss {:?}",
                    epoch_losses.last()
                )));
            }
            adam.step(params.blocks_mut(), grads.blocks());
            if !params.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite parameters after epoch {epoch}, step {step} (loss {loss})"
                )));
            }
            total += loss;
            steps += 1;
        }
        let mean = total / steps.max(1) as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    params.round_to_f32();
    Ok(TrainReport { params, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{NamedTriple, Provenance};

    fn tiny_graph() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for (h, r, t) in [("a", "r", "b"), ("b", "r", "c"), ("c", "s", "a")] {
            g.add_named(&NamedTriple::new(h, r, t, Provenance::CoreLabel)).unwrap();
        }
        g.freeze_vocab();
        g
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            dim: 4,
            epochs: 5,
            neg_per_pos: 2,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let g = tiny_graph();
        let a = train(&g, &small_config()).unwrap();
        let b = train(&g, &small_config()).unwrap();
        assert_eq!(a, b);
        let c = train(&g, &TrainConfig { seed: 12, ..small_config() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_lr_keeps_initialisation() {
        let g = tiny_graph();
        let config = TrainConfig { lr: 0.0, ..small_config() };
        let trained = train(&g, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let init = ModelParams::init(config.architecture(), g.num_entities(), g.num_relations(), &mut rng);
        assert_eq!(trained, init);
    }

    #[test]
    fn empty_or_unfrozen_graph_rejected() {
        let mut g = KnowledgeGraph::new();
        assert!(matches!(train(&g, &small_config()), Err(Error::Training(_))));
        g.freeze_vocab();
        assert!(matches!(train(&g, &small_config()), Err(Error::Training(_))));
    }

    #[test]
    fn invalid_config_rejected() {
        let g = tiny_graph();
        let bad = TrainConfig {
            dropout_other: 1.0,
            ..small_config()
        };
        assert!(matches!(train(&g, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let g = tiny_graph();
        let bad = TrainConfig {
            lr: 1e300,
            epochs: 50,
            ..small_config()
        };
        assert!(matches!(train(&g, &bad), Err(Error::Divergence(_))));
    }
}
