//! Relational graph convolution.
//!
//! One layer computes, for every node `i`,
//!
//! ```text
//! h_i' = act( Σ_r Σ_{j ∈ N_i^r} (1 / c_{i,r}) · h_j W_r  +  h_i W_0 )
//! ```
//!
//! with `c_{i,r} = |N_i^r|` counted after edge dropout. Hidden layers use
//! `activation`; the last layer uses `output_activation`. Neighbourhoods are
//! incoming edges; with `inverse_edges` each triple also sends a message
//! backwards through a separate per-relation weight.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;

use super::model::{ModelParams, RgcnLayer};
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MessageEdge {
    pub dst: usize,
    pub slot: usize,
    pub src: usize,
}

/// Encoder view of a graph: directed messages sorted by (dst, slot, src), so
/// every neighbourhood `N_i^r` is a contiguous run.
#[derive(Debug, Clone)]
pub struct MessageGraph {
    pub num_nodes: usize,
    pub num_relations: usize,
    pub num_slots: usize,
    pub edges: Vec<MessageEdge>,
    groups: Vec<(usize, usize)>,
}

impl MessageGraph {
    pub fn new(num_nodes: usize, num_relations: usize, inverse_edges: bool, triples: &[(usize, usize, usize)]) -> Self {
        let mut edges = Vec::with_capacity(triples.len() * 2);
        for &(h, r, t) in triples {
            edges.push(MessageEdge { dst: t, slot: r, src: h });
            if inverse_edges {
                edges.push(MessageEdge {
                    dst: h,
                    slot: num_relations + r,
                    src: t,
                });
            }
        }
        edges.sort();
        edges.dedup();
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=edges.len() {
            if i == edges.len() || (edges[i].dst, edges[i].slot) != (edges[start].dst, edges[start].slot) {
                if i > start {
                    groups.push((start, i));
                }
                start = i;
            }
        }
        Self {
            num_nodes,
            num_relations,
            num_slots: if inverse_edges { 2 * num_relations } else { num_relations },
            edges,
            groups,
        }
    }

    pub fn from_graph(graph: &KnowledgeGraph, inverse_edges: bool) -> Self {
        let triples: Vec<_> = graph
            .triples()
            .map(|t| (t.head.index(), t.relation.index(), t.tail.index()))
            .collect();
        Self::new(graph.num_entities(), graph.num_relations(), inverse_edges, &triples)
    }
}

/// Edge dropout decisions for one forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    pub keep_edge: Vec<bool>,
    pub keep_self: Vec<bool>,
}

impl EdgeMask {
    pub fn all(graph: &MessageGraph) -> Self {
        Self {
            keep_edge: vec![true; graph.edges.len()],
            keep_self: vec![true; graph.num_nodes],
        }
    }

    /// Drops self-loops with probability `drop_self` and other edges with
    /// probability `drop_other`. Normalisation happens afterwards, over the
    /// surviving edges.
    pub fn sample<R: Rng>(graph: &MessageGraph, drop_self: f64, drop_other: f64, rng: &mut R) -> Self {
        let keep_edge = (0..graph.edges.len()).map(|_| rng.gen::<f64>() >= drop_other).collect();
        let keep_self = (0..graph.num_nodes).map(|_| rng.gen::<f64>() >= drop_self).collect();
        Self { keep_edge, keep_self }
    }
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input state of every layer (`inputs[0]` = embeddings).
    pub inputs: Vec<Array2<f64>>,
    pub preacts: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

fn check(graph: &MessageGraph, params: &ModelParams, mask: &EdgeMask) -> Result<()> {
    params.check_shapes(graph.num_nodes, graph.num_relations)?;
    if params.arch.use_encoder && params.arch.relation_slots(graph.num_relations) != graph.num_slots {
        return Err(Error::Config("message graph and model disagree on inverse edges".into()));
    }
    if mask.keep_edge.len() != graph.edges.len() || mask.keep_self.len() != graph.num_nodes {
        return Err(Error::Config("dropout mask does not match the graph".into()));
    }
    Ok(())
}

fn add_scaled(mut acc: ndarray::ArrayViewMut1<f64>, x: ArrayView1<f64>, scale: f64) {
    acc.scaled_add(scale, &x);
}

fn layer_forward(graph: &MessageGraph, layer: &RgcnLayer, mask: &EdgeMask, h: &Array2<f64>) -> Array2<f64> {
    let mut z = Array2::zeros(h.dim());
    for i in 0..graph.num_nodes {
        if mask.keep_self[i] {
            let msg = h.row(i).dot(&layer.self_loop);
            add_scaled(z.row_mut(i), msg.view(), 1.0);
        }
    }
    let mut mean = Array1::zeros(h.ncols());
    for &(start, end) in &graph.groups {
        let (dst, slot) = (graph.edges[start].dst, graph.edges[start].slot);
        mean.fill(0.0);
        let mut kept = 0usize;
        for k in start..end {
            if mask.keep_edge[k] {
                mean += &h.row(graph.edges[k].src);
                kept += 1;
            }
        }
        if kept == 0 {
            continue;
        }
        mean /= kept as f64;
        let msg = mean.dot(&layer.relation_weights[slot]);
        add_scaled(z.row_mut(dst), msg.view(), 1.0);
    }
    z
}

pub fn forward(graph: &MessageGraph, params: &ModelParams, mask: &EdgeMask) -> Result<ForwardCache> {
    check(graph, params, mask)?;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut preacts = Vec::with_capacity(params.layers.len());
    let mut h = params.entity_emb.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let act = params.arch.layer_activation(l);
        let z = layer_forward(graph, layer, mask, &h);
        let next = z.mapv(|v| act.apply(v));
        inputs.push(std::mem::replace(&mut h, next));
        preacts.push(z);
    }
    Ok(ForwardCache {
        inputs,
        preacts,
        output: h,
    })
}

/// Accumulates into `grads` the gradient of a loss with respect to every
/// encoder parameter and the entity embeddings, given the gradient
/// `d_output` of that loss with respect to the final node states.
pub fn backward(
    graph: &MessageGraph,
    params: &ModelParams,
    mask: &EdgeMask,
    cache: &ForwardCache,
    d_output: Array2<f64>,
    grads: &mut ModelParams,
) {
    let mut d_h = d_output;
    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let h = &cache.inputs[l];
        let act = params.arch.layer_activation(l);
        let d_z = &d_h * &cache.preacts[l].mapv(|v| act.derivative(v));
        let mut d_in = Array2::zeros(h.dim());
        let g = &mut grads.layers[l];
        for i in 0..graph.num_nodes {
            if !mask.keep_self[i] {
                continue;
            }
            let dz = d_z.row(i);
            outer_add(&mut g.self_loop, h.row(i), dz);
            let back = layer.self_loop.dot(&dz);
            add_scaled(d_in.row_mut(i), back.view(), 1.0);
        }
        let mut mean = Array1::zeros(h.ncols());
        for &(start, end) in &graph.groups {
            let (dst, slot) = (graph.edges[start].dst, graph.edges[start].slot);
            let kept: Vec<usize> = (start..end).filter(|&k| mask.keep_edge[k]).collect();
            if kept.is_empty() {
                continue;
            }
            let c = kept.len() as f64;
            mean.fill(0.0);
            for &k in &kept {
                mean += &h.row(graph.edges[k].src);
            }
            mean /= c;
            let dz = d_z.row(dst);
            outer_add(&mut g.relation_weights[slot], mean.view(), dz);
            let back = layer.relation_weights[slot].dot(&dz) / c;
            for &k in &kept {
                add_scaled(d_in.row_mut(graph.edges[k].src), back.view(), 1.0);
            }
        }
        d_h = d_in;
    }
    grads.entity_emb += &d_h;
    grads.apply_block_mask();
}

fn outer_add(acc: &mut Array2<f64>, left: ArrayView1<f64>, right: ArrayView1<f64>) {
    for (i, &a) in left.iter().enumerate() {
        if a != 0.0 {
            acc.slice_mut(s![i, ..]).scaled_add(a, &right);
        }
    }
}

/// Node states after the encoder (or the raw embeddings when the model runs
/// without one). `mask = None` keeps every edge.
pub fn rgcn_forward(graph: &KnowledgeGraph, params: &ModelParams, mask: Option<&EdgeMask>) -> Result<Array2<f64>> {
    let mg = MessageGraph::from_graph(graph, params.arch.inverse_edges);
    let full;
    let mask = match mask {
        Some(m) => m,
        None => {
            full = EdgeMask::all(&mg);
            &full
        }
    };
    Ok(forward(&mg, params, mask)?.output)
}
