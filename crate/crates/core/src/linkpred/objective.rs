//! DistMult decoding and the training objective.

use ndarray::Array2;

use super::model::ModelParams;
use super::rgcn::{backward, forward, EdgeMask, MessageGraph};
use crate::error::Result;
use crate::kg::{EntityId, RelationId};

/// Bilinear DistMult score `Σ_k s_h[k] · diag_r[k] · s_t[k]` (pre-sigmoid).
/// The head-tail product is formed first so swapping them is exact.
pub fn distmult_score(params: &ModelParams, states: &Array2<f64>, h: EntityId, r: RelationId, t: EntityId) -> f64 {
    let diag = params.relation_diag.row(r.index());
    let (sh, st) = (states.row(h.index()), states.row(t.index()));
    sh.iter()
        .zip(diag.iter())
        .zip(st.iter())
        .map(|((a, d), c)| d * (a * c))
        .sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)`, stable for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// One labelled (head, relation, tail) example for the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub label: f64,
}

/// Mean binary cross-entropy over `samples` plus `l2 · mean(diag²)`.
pub fn objective_value(
    graph: &MessageGraph,
    params: &ModelParams,
    mask: &EdgeMask,
    samples: &[Sample],
    l2: f64,
) -> Result<f64> {
    let cache = forward(graph, params, mask)?;
    Ok(decoder_loss(params, &cache.output, samples, l2, None))
}

/// Loss and its gradient with respect to every parameter block.
pub fn objective_and_grad(
    graph: &MessageGraph,
    params: &ModelParams,
    mask: &EdgeMask,
    samples: &[Sample],
    l2: f64,
) -> Result<(f64, ModelParams)> {
    let cache = forward(graph, params, mask)?;
    let mut grads = params.zeros_like();
    let mut d_states = Array2::zeros(cache.output.dim());
    let loss = decoder_loss(params, &cache.output, samples, l2, Some((&mut grads, &mut d_states)));
    if params.arch.use_encoder {
        backward(graph, params, mask, &cache, d_states, &mut grads);
    } else {
        grads.entity_emb += &d_states;
    }
    Ok((loss, grads))
}

fn decoder_loss(
    params: &ModelParams,
    states: &Array2<f64>,
    samples: &[Sample],
    l2: f64,
    grads: Option<(&mut ModelParams, &mut Array2<f64>)>,
) -> f64 {
    let n = samples.len().max(1) as f64;
    let diag = &params.relation_diag;
    let reg_count = diag.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grads = grads;
    for s in samples {
        let (sh, dr, st) = (states.row(s.head), diag.row(s.relation), states.row(s.tail));
        let score: f64 = sh.iter().zip(dr.iter()).zip(st.iter()).map(|((a, d), c)| d * (a * c)).sum();
        loss += softplus(score) - s.label * score;
        if let Some((g, d_states)) = grads.as_mut() {
            let coef = (sigmoid(score) - s.label) / n;
            if coef == 0.0 {
                continue;
            }
            let hd = &sh * &dr;
            let td = &st * &dr;
            let ht = &sh * &st;
            d_states.row_mut(s.tail).scaled_add(coef, &hd);
            d_states.row_mut(s.head).scaled_add(coef, &td);
            g.relation_diag.row_mut(s.relation).scaled_add(coef, &ht);
        }
    }
    let reg: f64 = diag.iter().map(|v| v * v).sum::<f64>() / reg_count;
    if let Some((g, _)) = grads {
        g.relation_diag.scaled_add(2.0 * l2 / reg_count, diag);
    }
    loss / n + l2 * reg
}
