//! Analytic gradients of the link-prediction objective against central
//! finite differences.

use kgrelex_core::linkpred::rgcn::forward;
use kgrelex_core::linkpred::{
    objective_and_grad, objective_value, Activation, Architecture, EdgeMask, MessageGraph, ModelParams, Sample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-3;

pub struct Instance {
    pub graph: MessageGraph,
    pub params: ModelParams,
    pub mask: EdgeMask,
    pub samples: Vec<Sample>,
    pub l2: f64,
}

fn random_instance(rng: &mut ChaCha8Rng, case: usize) -> Instance {
    loop {
        let n = rng.gen_range(3..=10);
        let r = rng.gen_range(1..=3);
        let dim = [2, 4, 6, 8][rng.gen_range(0..4)];
        let arch = Architecture {
            dim,
            layers: 1 + case % 2,
            blocks: if dim % 2 == 0 && case % 3 == 0 { 2 } else { 1 },
            activation: if case % 4 == 3 { Activation::Identity } else { Activation::Relu },
            output_activation: if case % 3 == 1 { Activation::Identity } else { Activation::Relu },
            inverse_edges: case % 5 != 1,
            use_encoder: case % 7 != 6,
        };
        let triples: Vec<_> = (0..rng.gen_range(n..3 * n))
            .map(|_| (rng.gen_range(0..n), rng.gen_range(0..r), rng.gen_range(0..n)))
            .collect();
        let graph = MessageGraph::new(n, r, arch.inverse_edges, &triples);
        let mut params = ModelParams::zeros(arch, n, r);
        for block in params.blocks_mut() {
            block.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        }
        params.apply_block_mask();
        let mask = EdgeMask::sample(&graph, 0.2, 0.4, rng);
        let samples: Vec<Sample> = (0..rng.gen_range(3..12))
            .map(|_| Sample {
                head: rng.gen_range(0..n),
                relation: rng.gen_range(0..r),
                tail: rng.gen_range(0..n),
                label: if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
            })
            .collect();
        // Stay away from the ReLU kink, where the objective is not differentiable.
        if arch.use_encoder {
            let cache = forward(&graph, &params, &mask).unwrap();
            let near_kink = cache.preacts.iter().flatten().any(|z| z.abs() < 1e-2);
            if near_kink {
                continue;
            }
        }
        return Instance {
            graph,
            params,
            mask,
            samples,
            l2: rng.gen_range(0.0..0.1),
        };
    }
}

/// Worst elementwise relative error `|a - n| / max(|a| + |n|, 1e-6)`.
pub fn max_relative_error(inst: &Instance) -> f64 {
    let (_, analytic) = objective_and_grad(&inst.graph, &inst.params, &inst.mask, &inst.samples, inst.l2).unwrap();
    let analytic_blocks: Vec<_> = analytic.blocks().into_iter().cloned().collect();
    let mut probe = inst.params.clone();
    let mut worst: f64 = 0.0;
    for b in 0..analytic_blocks.len() {
        let shape = analytic_blocks[b].dim();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let original = probe.blocks()[b][[i, j]];
                probe.blocks_mut()[b][[i, j]] = original + EPS;
                let plus = objective_value(&inst.graph, &probe, &inst.mask, &inst.samples, inst.l2).unwrap();
                probe.blocks_mut()[b][[i, j]] = original - EPS;
                let minus = objective_value(&inst.graph, &probe, &inst.mask, &inst.samples, inst.l2).unwrap();
                probe.blocks_mut()[b][[i, j]] = original;
                let numeric = (plus - minus) / (2.0 * EPS);
                let a = analytic_blocks[b][[i, j]];
                // Off-block entries of block-diagonal weights are not free parameters.
                if inst.params.arch.blocks > 1 && b >= 2 && inst.params.blocks()[b][[i, j]] == 0.0 {
                    assert_eq!(a, 0.0);
                    continue;
                }
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..24 {
        let inst = random_instance(&mut rng, case);
        let err = max_relative_error(&inst);
        assert!(
            err < TOL,
            "case {case}: relative error {err:.3e} (arch {:?})",
            inst.params.arch
        );
    }
}
