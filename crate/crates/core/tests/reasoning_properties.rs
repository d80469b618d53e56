//! Reasoning paths against a brute-force enumerator, and scorer behaviour
//! against independent computations.

use std::collections::BTreeSet;

use kgrelex_core::ingest::{Document, Mention};
use kgrelex_core::kg::KnowledgeGraph;
use kgrelex_core::reasoning::{
    extract_paths, fit_scorer, scorer_loss, FeatureSpace, PairExample, PathKind, ReasoningScorer, ScorerConfig,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Pos = (usize, usize, usize);
type PathSig = (PathKind, Vec<usize>, Pos, Pos, Option<usize>);

/// Enumerates the three path kinds straight from their definitions.
fn brute_force(doc: &Document, h: usize, t: usize) -> Vec<PathSig> {
    let pos = |m: &Mention| (m.sent_id, m.start, m.end);
    let in_sentence = |e: usize, s: usize| doc.entity_clusters[e].iter().any(|m| m.sent_id == s);
    let mut out = Vec::new();
    if h == t {
        return out;
    }
    for mh in &doc.entity_clusters[h] {
        for mt in &doc.entity_clusters[t] {
            let (s1, s2) = (mh.sent_id, mt.sent_id);
            if s1 == s2 {
                out.push((PathKind::Intra, vec![s1], pos(mh), pos(mt), None));
                continue;
            }
            let mut any = false;
            for b in 0..doc.entity_clusters.len() {
                if b != h && b != t && in_sentence(b, s1) && in_sentence(b, s2) {
                    out.push((PathKind::Logical, vec![s1, s2], pos(mh), pos(mt), Some(b)));
                    any = true;
                }
            }
            if any {
                out.push((PathKind::Coreference, vec![s1, s2], pos(mh), pos(mt), None));
            }
        }
    }
    out.sort();
    out
}

fn small_document() -> impl Strategy<Value = Document> {
    (1usize..=5, 2usize..=6).prop_flat_map(|(n_sents, n_ents)| {
        prop::collection::vec(prop::collection::vec((0..n_sents, 0usize..4), 1..=3), n_ents).prop_map(move |clusters| {
            Document {
                doc_id: "d".into(),
                sentences: vec![vec!["w".to_string(); 5]; n_sents],
                entity_clusters: clusters
                    .into_iter()
                    .enumerate()
                    .map(|(e, ms)| {
                        ms.into_iter()
                            .map(|(sent_id, start)| Mention {
                                entity_index: e,
                                sent_id,
                                start,
                                end: start + 1,
                                surface: format!("E{e}"),
                                etype: "T".into(),
                            })
                            .collect()
                    })
                    .collect(),
                gold_facts: vec![],
            }
        })
    })
}

proptest! {
    #[test]
    fn paths_equal_brute_force(doc in small_document()) {
        for h in 0..doc.num_entities() {
            for t in 0..doc.num_entities() {
                let paths = extract_paths(&doc, h, t);
                prop_assert!(paths.iter().all(|p| p.is_well_formed()));
                let mut got: Vec<PathSig> = paths
                    .iter()
                    .map(|p| {
                        let pos = |m: &Mention| (m.sent_id, m.start, m.end);
                        (p.kind, p.sentence_ids.clone(), pos(&p.head_mention), pos(&p.tail_mention), p.bridge_entity())
                    })
                    .collect();
                let sorted = {
                    let mut s = got.clone();
                    s.sort_by(|a, b| (a.0, &a.1, a.2, a.3, a.4.unwrap_or(usize::MAX)).cmp(&(b.0, &b.1, b.2, b.3, b.4.unwrap_or(usize::MAX))));
                    s
                };
                prop_assert_eq!(&got, &sorted, "paths not in canonical order");
                got.sort();
                prop_assert_eq!(got, brute_force(&doc, h, t));
            }
        }
    }

    #[test]
    fn features_are_finite_and_pure(doc in small_document()) {
        let space = FeatureSpace::from_documents(std::slice::from_ref(&doc));
        let g = KnowledgeGraph::new();
        for p in extract_paths(&doc, 0, 1) {
            let x = space.featurize(&p, &doc, &g);
            prop_assert_eq!(x.len(), space.dim());
            prop_assert!(x.iter().all(|v| v.is_finite()));
            prop_assert_eq!(x, space.featurize(&p, &doc, &g));
        }
    }
}

fn random_scorer(rng: &mut ChaCha8Rng, relations: usize, depth: usize) -> ReasoningScorer {
    let config = ScorerConfig {
        depth,
        hidden: 3,
        seed: rng.gen(),
        ..ScorerConfig::default()
    };
    let mut s = ReasoningScorer::init(
        (0..relations).map(|r| format!("r{r}")).collect(),
        FeatureSpace { entity_types: vec![] },
        &config,
    );
    for w in &mut s.weights {
        w.mapv_inplace(|_| rng.gen_range(-2.0..2.0));
    }
    s
}

#[test]
fn score_pair_is_the_matrix_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..200 {
        let s = random_scorer(&mut rng, 4, 1 + case % 2);
        let n_paths = rng.gen_range(1..6);
        let features: Vec<Vec<f64>> = (0..n_paths).map(|_| (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let kinds: Vec<PathKind> = (0..n_paths).map(|_| PathKind::ALL[rng.gen_range(0..3)]).collect();
        let out = s.score_pair(&features, &kinds).unwrap();
        // Path × relation probability matrix.
        let matrix = Array2::from_shape_fn((n_paths, 4), |(i, r)| 1.0 / (1.0 + (-s.logits(&features[i])[r]).exp()));
        for r in 0..4 {
            let col = matrix.column(r);
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((out.probs[r] - max).abs() < 1e-12);
            assert!(col.iter().all(|&p| p <= out.probs[r] + 1e-12));
            let first = col.iter().position(|&p| (p - max).abs() < 1e-12).unwrap();
            assert_eq!(out.winners[r], Some(kinds[first]));
        }
    }
}

#[test]
fn raising_a_weight_never_lowers_the_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let mut s = random_scorer(&mut rng, 2, 1);
        let x: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..1.0)).collect();
        let k = rng.gen_range(0..9);
        let before = s.score_pair(&[x.clone()], &[PathKind::Intra]).unwrap().probs[1];
        s.weights[0][[1, k]] += rng.gen_range(0.0..3.0);
        let after = s.score_pair(&[x], &[PathKind::Intra]).unwrap().probs[1];
        assert!(after >= before);
    }
}

fn separable_examples(rng: &mut ChaCha8Rng) -> (Vec<PairExample>, Vec<Vec<f64>>, Vec<f64>) {
    let truth = [1.5, -2.0, 0.5, 1.0, 0.0, -1.0, 2.0, 0.0, 0.5];
    let mut examples = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    while examples.len() < 60 {
        let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m: f64 = x.iter().zip(truth).map(|(a, b)| a * b).sum();
        if m.abs() < 0.5 {
            continue;
        }
        let y = if m > 0.0 { 1.0 } else { 0.0 };
        examples.push(PairExample {
            features: vec![x.clone()],
            kinds: vec![PathKind::Intra],
            labels: if y > 0.0 { [0].into() } else { BTreeSet::new() },
        });
        xs.push(x);
        ys.push(y);
    }
    (examples, xs, ys)
}

/// Plain batch gradient descent on the logistic loss, with no shared code.
fn reference_logistic_fit(xs: &[Vec<f64>], ys: &[f64], steps: usize, lr: f64) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; xs[0].len()];
    let mut b = 0.0;
    for _ in 0..steps {
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let z: f64 = x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-z).exp());
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += (p - y) * xi / xs.len() as f64;
            }
            gb += (p - y) / xs.len() as f64;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g;
        }
        b -= lr * gb;
    }
    (w, b)
}

fn logistic_loss(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            let z: f64 = x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
            let p = (1.0 / (1.0 + (-z).exp())).clamp(1e-12, 1.0 - 1e-12);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / xs.len() as f64
}

#[test]
fn separable_data_is_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (examples, xs, ys) = separable_examples(&mut rng);
    let space = FeatureSpace { entity_types: vec![] };
    let config = ScorerConfig {
        epochs: 1500,
        lr: 0.05,
        ..ScorerConfig::default()
    };
    let fitted = fit_scorer(vec!["r".into()], space.clone(), &examples, &config).unwrap();
    let loss = scorer_loss(&fitted, &examples);
    assert!(loss < 0.1, "training BCE {loss}");

    // The scorer's loss is the ordinary logistic loss of its weights.
    let w: Vec<f64> = fitted.weights[0].row(0).to_vec();
    let b = fitted.weights[1][[0, 0]];
    assert!((logistic_loss(&w, b, &xs, &ys) - loss).abs() < 1e-9);

    let (rw, rb) = reference_logistic_fit(&xs, &ys, 20_000, 1.0);
    assert!(logistic_loss(&rw, rb, &xs, &ys) < 0.1);
    for x in &xs {
        let ours = fitted.logits(x)[0] > 0.0;
        let theirs = x.iter().zip(&rw).map(|(a, c)| a * c).sum::<f64>() + rb > 0.0;
        assert_eq!(ours, theirs);
    }

    let again = fit_scorer(vec!["r".into()], space, &examples, &config).unwrap();
    assert_eq!(again, fitted);
}
