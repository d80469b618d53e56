//! Structural feature vectors for reasoning paths.
//!
//! Layout (`dim = 9 + 2·|types|`):
//!
//! | slots          | feature                                              |
//! |----------------|------------------------------------------------------|
//! | 0..3           | path kind one-hot (PI, PL, PC)                       |
//! | 3              | sentence distance                                    |
//! | 4              | mentions of the bridge entity, 0 without one         |
//! | 5, 6           | head / tail mention count                            |
//! | 7..7+T         | head entity-type one-hot                             |
//! | 7+T..7+2T      | tail entity-type one-hot                             |
//! | 7+2T           | graph relations between head and tail                |
//! | 8+2T           | path sentences mentioning both head and tail         |
//!
//! Graph relations are counted in both directions and exclude `CoreLabel`
//! triples, which would otherwise leak the training labels.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::paths::{PathKind, ReasoningPath};
use crate::ingest::Document;
use crate::kg::{KnowledgeGraph, Provenance};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub entity_types: Vec<String>,
}

impl FeatureSpace {
    pub fn from_documents(docs: &[Document]) -> Self {
        let types: BTreeSet<&str> = docs
            .iter()
            .flat_map(|d| d.entity_clusters.iter().flatten())
            .map(|m| m.etype.as_str())
            .collect();
        Self {
            entity_types: types.into_iter().map(str::to_owned).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        9 + 2 * self.entity_types.len()
    }

    fn type_slot(&self, etype: &str) -> Option<usize> {
        self.entity_types.binary_search_by(|t| t.as_str().cmp(etype)).ok()
    }

    pub fn featurize(&self, path: &ReasoningPath, doc: &Document, graph: &KnowledgeGraph) -> Vec<f64> {
        let t = self.entity_types.len();
        let mut x = vec![0.0; self.dim()];
        x[path.kind.index()] = 1.0;
        let distance = match path.sentence_ids.as_slice() {
            [a, b] => a.abs_diff(*b),
            _ => 0,
        };
        x[3] = distance as f64;
        if path.kind == PathKind::Logical {
            if let Some(b) = path.bridge_entity() {
                x[4] = doc.entity_clusters[b].len() as f64;
            }
        }
        let (h, tl) = (path.head_mention.entity_index, path.tail_mention.entity_index);
        x[5] = doc.entity_clusters[h].len() as f64;
        x[6] = doc.entity_clusters[tl].len() as f64;
        if let Some(s) = self.type_slot(doc.entity_type(h)) {
            x[7 + s] = 1.0;
        }
        if let Some(s) = self.type_slot(doc.entity_type(tl)) {
            x[7 + t + s] = 1.0;
        }
        x[7 + 2 * t] = graph_links(graph, doc.canonical_name(h), doc.canonical_name(tl)) as f64;
        let mentions_both = |s: usize| {
            doc.entity_clusters[h].iter().any(|m| m.sent_id == s) && doc.entity_clusters[tl].iter().any(|m| m.sent_id == s)
        };
        x[8 + 2 * t] = path.sentence_ids.iter().filter(|&&s| mentions_both(s)).count() as f64;
        x
    }
}

fn graph_links(graph: &KnowledgeGraph, head: &str, tail: &str) -> usize {
    let (Some(h), Some(t)) = (graph.entity(head), graph.entity(tail)) else {
        return 0;
    };
    graph
        .relations_between(h, t)
        .chain(graph.relations_between(t, h))
        .filter(|&(_, p)| p != Provenance::CoreLabel)
        .count()
}
