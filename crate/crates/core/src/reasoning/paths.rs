//! Reasoning paths between two entities of a document.
//!
//! * intra-sentence (`PI`): a head mention and a tail mention share a sentence;
//! * logical (`PL`): head mention in `s1`, tail mention in `s2`, and a bridge
//!   entity mentioned in both sentences;
//! * co-reference (`PC`): head mention in `s1`, tail mention in `s2`, and the
//!   two sentences linked because some third entity is mentioned in both.
//!
//! `PL` yields one path per bridge entity; `PC` yields one path per sentence
//! pair regardless of how many entities link them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ingest::{Document, Mention};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PathKind {
    #[serde(rename = "PI")]
    Intra,
    #[serde(rename = "PL")]
    Logical,
    #[serde(rename = "PC")]
    Coreference,
}

impl PathKind {
    pub const ALL: [PathKind; 3] = [PathKind::Intra, PathKind::Logical, PathKind::Coreference];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            PathKind::Intra => "PI",
            PathKind::Logical => "PL",
            PathKind::Coreference => "PC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningPath {
    pub kind: PathKind,
    pub head_mention: Mention,
    pub tail_mention: Mention,
    /// Bridge mentions in `s1` and `s2`; empty unless the path is logical.
    pub bridge_mentions: Vec<Mention>,
    pub sentence_ids: Vec<usize>,
}

impl ReasoningPath {
    pub fn bridge_entity(&self) -> Option<usize> {
        self.bridge_mentions.first().map(|m| m.entity_index)
    }

    /// Checks the structural invariants of the path's kind.
    pub fn is_well_formed(&self) -> bool {
        let (h, t) = (&self.head_mention, &self.tail_mention);
        match self.kind {
            PathKind::Intra => {
                self.sentence_ids == [h.sent_id] && h.sent_id == t.sent_id && self.bridge_mentions.is_empty()
            }
            PathKind::Logical => {
                let [b1, b2] = self.bridge_mentions.as_slice() else {
                    return false;
                };
                self.sentence_ids == [h.sent_id, t.sent_id]
                    && h.sent_id != t.sent_id
                    && b1.entity_index == b2.entity_index
                    && b1.entity_index != h.entity_index
                    && b1.entity_index != t.entity_index
                    && b1.sent_id == h.sent_id
                    && b2.sent_id == t.sent_id
            }
            PathKind::Coreference => {
                self.sentence_ids == [h.sent_id, t.sent_id] && h.sent_id != t.sent_id && self.bridge_mentions.is_empty()
            }
        }
    }

    fn sort_key(&self) -> (PathKind, Vec<usize>, (usize, usize, usize), (usize, usize, usize), usize) {
        let pos = |m: &Mention| (m.sent_id, m.start, m.end);
        (
            self.kind,
            self.sentence_ids.clone(),
            pos(&self.head_mention),
            pos(&self.tail_mention),
            self.bridge_entity().unwrap_or(usize::MAX),
        )
    }
}

fn first_mention_in(cluster: &[Mention], sentence: usize) -> Option<&Mention> {
    cluster
        .iter()
        .filter(|m| m.sent_id == sentence)
        .min_by_key(|m| (m.start, m.end))
}

/// Every reasoning path between entity clusters `head` and `tail`, ordered by
/// kind, sentence ids, then mention positions.
pub fn extract_paths(doc: &Document, head: usize, tail: usize) -> Vec<ReasoningPath> {
    let mut paths = Vec::new();
    if head == tail || head >= doc.num_entities() || tail >= doc.num_entities() {
        return paths;
    }
    let sentences_of: Vec<BTreeSet<usize>> = doc
        .entity_clusters
        .iter()
        .map(|c| c.iter().map(|m| m.sent_id).collect())
        .collect();
    let bridges_between = |s1: usize, s2: usize| -> Vec<usize> {
        (0..doc.num_entities())
            .filter(|&e| e != head && e != tail)
            .filter(|&e| sentences_of[e].contains(&s1) && sentences_of[e].contains(&s2))
            .collect()
    };

    for mh in &doc.entity_clusters[head] {
        for mt in &doc.entity_clusters[tail] {
            let (s1, s2) = (mh.sent_id, mt.sent_id);
            if s1 == s2 {
                paths.push(ReasoningPath {
                    kind: PathKind::Intra,
                    head_mention: mh.clone(),
                    tail_mention: mt.clone(),
                    bridge_mentions: Vec::new(),
                    sentence_ids: vec![s1],
                });
                continue;
            }
            let bridges = bridges_between(s1, s2);
            if bridges.is_empty() {
                continue;
            }
            for &b in &bridges {
                let cluster = &doc.entity_clusters[b];
                let (Some(b1), Some(b2)) = (first_mention_in(cluster, s1), first_mention_in(cluster, s2)) else {
                    continue;
                };
                paths.push(ReasoningPath {
                    kind: PathKind::Logical,
                    head_mention: mh.clone(),
                    tail_mention: mt.clone(),
                    bridge_mentions: vec![b1.clone(), b2.clone()],
                    sentence_ids: vec![s1, s2],
                });
            }
            paths.push(ReasoningPath {
                kind: PathKind::Coreference,
                head_mention: mh.clone(),
                tail_mention: mt.clone(),
                bridge_mentions: Vec::new(),
                sentence_ids: vec![s1, s2],
            });
        }
    }
    paths.sort_by_cached_key(ReasoningPath::sort_key);
    paths
}
