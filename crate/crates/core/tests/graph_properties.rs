//! Randomized checks of the triple store and of ingestion.

use std::collections::{BTreeMap, BTreeSet};

use kgrelex_core::context::{parse_context_paths, parse_entity_context, path_to_triples, triples_to_path, ContextPath, Hop};
use kgrelex_core::ingest::{dataset_stats, parse_documents, parse_triple_lines, serialize_documents, Document, LabeledFact, Mention};
use kgrelex_core::kg::{Direction, KnowledgeGraph, NamedTriple, Provenance};
use proptest::prelude::*;

fn provenance() -> impl Strategy<Value = Provenance> {
    (0usize..6).prop_map(|i| Provenance::ALL[i])
}

fn named_triples() -> impl Strategy<Value = Vec<(u8, u8, u8, Provenance)>> {
    prop::collection::vec((0u8..8, 0u8..4, 0u8..8, provenance()), 0..40)
}

fn build(triples: &[(u8, u8, u8, Provenance)]) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    for &(h, r, t, p) in triples {
        g.add_named(&NamedTriple::new(format!("e{h}"), format!("r{r}"), format!("e{t}"), p)).unwrap();
    }
    g
}

/// Strongest provenance per named triple, computed directly.
fn expected_store(triples: &[(u8, u8, u8, Provenance)]) -> BTreeMap<(String, String, String), Provenance> {
    let mut out: BTreeMap<_, Provenance> = BTreeMap::new();
    for &(h, r, t, p) in triples {
        let key = (format!("e{h}"), format!("r{r}"), format!("e{t}"));
        let slot = out.entry(key).or_insert(p);
        if p.rank() < slot.rank() {
            *slot = p;
        }
    }
    out
}

fn named_view(g: &KnowledgeGraph) -> BTreeMap<(String, String, String), Provenance> {
    g.triples()
        .map(|t| {
            (
                (
                    g.entity_name(t.head).to_owned(),
                    g.relation_name(t.relation).to_owned(),
                    g.entity_name(t.tail).to_owned(),
                ),
                t.provenance,
            )
        })
        .collect()
}

proptest! {
    #[test]
    fn store_matches_set_oracle(triples in named_triples()) {
        let g = build(&triples);
        prop_assert!(g.indexes_consistent());
        prop_assert_eq!(named_view(&g), expected_store(&triples));
    }

    #[test]
    fn neighbors_match_brute_force(triples in named_triples(), e in 0u8..8, r in 0u8..4) {
        let g = build(&triples);
        let (Some(e), Some(r)) = (g.entity(&format!("e{e}")), g.relation(&format!("r{r}"))) else {
            return Ok(());
        };
        let out: Vec<_> = g.triples().filter(|t| t.head == e && t.relation == r).map(|t| t.tail).collect();
        let inc: Vec<_> = g.triples().filter(|t| t.tail == e && t.relation == r).map(|t| t.head).collect();
        let out_set: BTreeSet<_> = out.iter().copied().collect();
        let inc_set: BTreeSet<_> = inc.iter().copied().collect();
        prop_assert_eq!(g.neighbors(e, r, Direction::Out).unwrap().iter().copied().collect::<BTreeSet<_>>(), out_set);
        prop_assert_eq!(g.neighbors(e, r, Direction::In).unwrap().iter().copied().collect::<BTreeSet<_>>(), inc_set);
    }

    #[test]
    fn freeze_ignores_insertion_order(triples in named_triples(), seed in any::<u64>()) {
        let mut shuffled = triples.clone();
        // Deterministic permutation from the seed.
        let n = shuffled.len();
        for i in (1..n).rev() {
            let j = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64)) >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let (mut a, mut b) = (build(&triples), build(&shuffled));
        prop_assert_eq!(a.freeze_vocab(), b.freeze_vocab());
        prop_assert_eq!(&a, &b);
        prop_assert!(a.indexes_consistent());
    }

    #[test]
    fn triple_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = parse_triple_lines(&bytes);
        let _ = parse_entity_context(&bytes);
        let _ = parse_context_paths(&bytes);
        let _ = parse_documents(&bytes);
    }

    #[test]
    fn document_json_round_trip(docs in prop::collection::vec(document(), 0..4)) {
        let text = serialize_documents(&docs);
        prop_assert_eq!(parse_documents(text.as_bytes()).unwrap(), docs);
    }

    #[test]
    fn stats_are_permutation_invariant(mut docs in prop::collection::vec(document(), 0..5)) {
        let before = dataset_stats(&docs);
        docs.reverse();
        prop_assert_eq!(dataset_stats(&docs), before);
    }

    #[test]
    fn context_path_chain_round_trip(head in "[a-c]", hops in prop::collection::vec(("[pq]", "[a-f]"), 1..=4)) {
        let path = ContextPath {
            head,
            tail: hops.last().unwrap().1.clone(),
            hops: hops.into_iter().map(|(rel, node)| Hop { rel, node }).collect(),
            pagerank: None,
        };
        let triples = path_to_triples(&path).unwrap();
        prop_assert_eq!(triples.len(), path.hops.len());
        prop_assert!(triples.iter().all(|t| t.provenance == Provenance::PathContext));
        prop_assert_eq!(triples_to_path(&triples).unwrap(), path);
    }
}

fn document() -> impl Strategy<Value = Document> {
    (1usize..4, 1usize..5).prop_flat_map(|(n_sents, n_ents)| {
        let sentences = prop::collection::vec(prop::collection::vec("[a-z]{1,4}", 3..6), n_sents);
        let clusters = prop::collection::vec(
            prop::collection::vec((0..n_sents, 0usize..3, "[A-Z][a-z]{0,3}", "(PER|LOC|ORG)"), 1..3),
            n_ents,
        );
        let labels = prop::collection::vec((0..n_ents, 0..n_ents, "P[0-9]{1,2}", prop::collection::vec(0..n_sents, 0..2)), 0..4);
        ("[a-z ]{1,8}", sentences, clusters, labels).prop_map(|(title, sentences, clusters, labels)| {
            let entity_clusters = clusters
                .into_iter()
                .enumerate()
                .map(|(e, ms)| {
                    ms.into_iter()
                        .map(|(sent_id, start, surface, etype)| Mention {
                            entity_index: e,
                            sent_id,
                            start,
                            end: start + 1,
                            surface,
                            etype,
                        })
                        .collect()
                })
                .collect();
            let gold_facts = labels
                .into_iter()
                .filter(|(h, t, _, _)| h != t)
                .map(|(head_idx, tail_idx, relation, evidence)| LabeledFact { head_idx, tail_idx, relation, evidence })
                .collect();
            Document { doc_id: title, sentences, entity_clusters, gold_facts }
        })
    })
}
