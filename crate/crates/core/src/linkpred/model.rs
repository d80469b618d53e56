use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative at the pre-activation value (0 at the ReLU kink).
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Encoder architecture knobs that shape the parameter tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub dim: usize,
    pub layers: usize,
    /// Number of diagonal blocks in every encoder weight matrix; 1 = dense.
    pub blocks: usize,
    /// Non-linearity of every encoder layer except the last.
    pub activation: Activation,
    /// Non-linearity of the last encoder layer, whose output feeds DistMult.
    pub output_activation: Activation,
    /// Messages also flow tail -> head, through a separate weight per relation.
    pub inverse_edges: bool,
    /// Without the encoder, node states are the raw entity embeddings.
    pub use_encoder: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            dim: 200,
            layers: 1,
            blocks: 1,
            activation: Activation::Relu,
            output_activation: Activation::Identity,
            inverse_edges: true,
            use_encoder: true,
        }
    }
}

impl Architecture {
    pub fn layer_activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers {
            self.output_activation
        } else {
            self.activation
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if self.blocks == 0 || self.dim % self.blocks != 0 {
            return Err(Error::Config(format!(
                "block count {} must divide the dimension {}",
                self.blocks, self.dim
            )));
        }
        if self.use_encoder && self.layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        Ok(())
    }

    pub fn relation_slots(&self, num_relations: usize) -> usize {
        if self.inverse_edges {
            2 * num_relations
        } else {
            num_relations
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgcnLayer {
    /// `W_0`, applied to the node's own state. Row-vector convention:
    /// `h_out = h_in · W`.
    pub self_loop: Array2<f64>,
    /// `W_r` per relation slot (forward relations, then inverses).
    pub relation_weights: Vec<Array2<f64>>,
}

/// Entity embeddings, DistMult relation diagonals and encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub entity_emb: Array2<f64>,
    pub relation_diag: Array2<f64>,
    pub layers: Vec<RgcnLayer>,
}

fn block_mask(dim: usize, blocks: usize) -> impl Fn(usize, usize) -> bool {
    let size = dim / blocks.max(1);
    move |i, j| i / size == j / size
}

fn to_f32_grid(x: f64) -> f64 {
    x as f32 as f64
}

impl ModelParams {
    pub fn zeros(arch: Architecture, num_entities: usize, num_relations: usize) -> Self {
        let d = arch.dim;
        let layers = if arch.use_encoder {
            (0..arch.layers)
                .map(|_| RgcnLayer {
                    self_loop: Array2::zeros((d, d)),
                    relation_weights: (0..arch.relation_slots(num_relations))
                        .map(|_| Array2::zeros((d, d)))
                        .collect(),
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            arch,
            entity_emb: Array2::zeros((num_entities, d)),
            relation_diag: Array2::zeros((num_relations, d)),
            layers,
        }
    }

    /// Xavier-uniform initialisation. Values are rounded to `f32` so that
    /// checkpoints reproduce parameters bit for bit.
    pub fn init<R: Rng>(arch: Architecture, num_entities: usize, num_relations: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch, num_entities, num_relations);
        let d = arch.dim as f64;
        let emb_bound = (6.0 / (num_entities.max(1) as f64 + d)).sqrt();
        p.entity_emb.mapv_inplace(|_| rng.gen_range(-emb_bound..=emb_bound));
        let rel_bound = (6.0 / (num_relations.max(1) as f64 + d)).sqrt();
        p.relation_diag.mapv_inplace(|_| rng.gen_range(-rel_bound..=rel_bound));
        let inside = block_mask(arch.dim, arch.blocks);
        let w_bound = (6.0 / (2.0 * d / arch.blocks as f64)).sqrt();
        for layer in &mut p.layers {
            for w in std::iter::once(&mut layer.self_loop).chain(layer.relation_weights.iter_mut()) {
                for ((i, j), v) in w.indexed_iter_mut() {
                    *v = if inside(i, j) { rng.gen_range(-w_bound..=w_bound) } else { 0.0 };
                }
            }
        }
        p.round_to_f32();
        p
    }

    pub fn round_to_f32(&mut self) {
        for block in self.blocks_mut() {
            block.mapv_inplace(to_f32_grid);
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity_emb.nrows()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_diag.nrows()
    }

    pub fn dim(&self) -> usize {
        self.arch.dim
    }

    /// Every parameter block in a fixed order: embeddings, relation
    /// diagonals, then per layer the self-loop and relation weights.
    pub fn blocks(&self) -> Vec<&Array2<f64>> {
        let mut out = vec![&self.entity_emb, &self.relation_diag];
        for layer in &self.layers {
            out.push(&layer.self_loop);
            out.extend(layer.relation_weights.iter());
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.entity_emb, &mut self.relation_diag];
        for layer in &mut self.layers {
            out.push(&mut layer.self_loop);
            out.extend(layer.relation_weights.iter_mut());
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch, self.num_entities(), self.num_relations())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Zeroes encoder-weight entries outside the diagonal blocks.
    pub fn apply_block_mask(&mut self) {
        if self.arch.blocks <= 1 {
            return;
        }
        let inside = block_mask(self.arch.dim, self.arch.blocks);
        for layer in &mut self.layers {
            for w in std::iter::once(&mut layer.self_loop).chain(layer.relation_weights.iter_mut()) {
                for ((i, j), v) in w.indexed_iter_mut() {
                    if !inside(i, j) {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Checks that the tensor shapes agree with each other and with a graph
    /// of the given size.
    pub fn check_shapes(&self, num_entities: usize, num_relations: usize) -> Result<()> {
        let d = self.arch.dim;
        let mismatch = |what: &str, got: (usize, usize), want: (usize, usize)| {
            Err(Error::Config(format!("{what} has shape {got:?}, expected {want:?}")))
        };
        if self.entity_emb.dim() != (num_entities, d) {
            return mismatch("entity embedding", self.entity_emb.dim(), (num_entities, d));
        }
        if self.relation_diag.dim() != (num_relations, d) {
            return mismatch("relation diagonal", self.relation_diag.dim(), (num_relations, d));
        }
        let expected_layers = if self.arch.use_encoder { self.arch.layers } else { 0 };
        if self.layers.len() != expected_layers {
            return Err(Error::Config(format!(
                "{} encoder layers present, expected {expected_layers}",
                self.layers.len()
            )));
        }
        let slots = self.arch.relation_slots(num_relations);
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.self_loop.dim() != (d, d) {
                return mismatch(&format!("layer {l} self-loop"), layer.self_loop.dim(), (d, d));
            }
            if layer.relation_weights.len() != slots {
                return Err(Error::Config(format!(
                    "layer {l} has {} relation weights, expected {slots}",
                    layer.relation_weights.len()
                )));
            }
            for (r, w) in layer.relation_weights.iter().enumerate() {
                if w.dim() != (d, d) {
                    return mismatch(&format!("layer {l} relation {r} weight"), w.dim(), (d, d));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_respects_blocks_and_shapes() {
        let arch = Architecture {
            dim: 6,
            blocks: 3,
            ..Architecture::default()
        };
        let p = ModelParams::init(arch, 4, 3, &mut ChaCha8Rng::seed_from_u64(1));
        p.check_shapes(4, 3).unwrap();
        assert_eq!(p.layers[0].relation_weights.len(), 6);
        let w = &p.layers[0].relation_weights[0];
        assert_eq!(w[[0, 2]], 0.0);
        assert_ne!(w[[0, 1]], 0.0);
        assert!(p.blocks().iter().all(|b| b.iter().all(|&v| v == v as f32 as f64)));
        assert!(p.check_shapes(5, 3).is_err());
    }

    #[test]
    fn bad_architectures() {
        let bad = Architecture {
            dim: 5,
            blocks: 2,
            ..Architecture::default()
        };
        assert!(bad.validate().is_err());
        let bad = Architecture {
            dim: 0,
            ..Architecture::default()
        };
        assert!(bad.validate().is_err());
    }
}
