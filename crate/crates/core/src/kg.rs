//! Provenance-aware in-memory knowledge graph.
//!
//! Entities and relations are interned into dense id spaces. Every stored
//! triple carries exactly one [`Provenance`] tag; inserting a triple that is
//! already present only ever upgrades that tag. Forward and reverse adjacency
//! lists are kept sorted and duplicate-free so that neighbourhood queries
//! (`N_i^r` in the encoder) are a single map lookup.
//!
//! [`KnowledgeGraph::freeze_vocab`] renumbers both vocabularies into a
//! canonical (name-sorted) order and makes them immutable. Ids obtained before
//! freezing must be looked up again afterwards.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HAS_SYNONYM: &str = "hasSynonym";
pub const HAS_ENTITY_TYPE: &str = "hasEntityType";
pub const RESERVED_RELATIONS: [&str; 2] = [HAS_SYNONYM, HAS_ENTITY_TYPE];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Origin of a triple. Declaration order is dedup priority, strongest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    CoreLabel,
    Extracted,
    PathContext,
    SynonymContext,
    TypeContext,
    Predicted,
}

impl Provenance {
    pub const ALL: [Provenance; 6] = [
        Provenance::CoreLabel,
        Provenance::Extracted,
        Provenance::PathContext,
        Provenance::SynonymContext,
        Provenance::TypeContext,
        Provenance::Predicted,
    ];

    /// Lower is stronger.
    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn stronger(self, other: Provenance) -> Provenance {
        if self.rank() <= other.rank() {
            self
        } else {
            other
        }
    }

    pub fn from_rank(rank: u8) -> Option<Provenance> {
        Self::ALL.get(rank as usize).copied()
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::CoreLabel => "core",
            Provenance::Extracted => "extracted",
            Provenance::PathContext => "path-context",
            Provenance::SynonymContext => "synonym-context",
            Provenance::TypeContext => "type-context",
            Provenance::Predicted => "predicted",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
    pub provenance: Provenance,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId, provenance: Provenance) -> Self {
        Self {
            head,
            relation,
            tail,
            provenance,
        }
    }

    pub fn key(&self) -> (EntityId, RelationId, EntityId) {
        (self.head, self.relation, self.tail)
    }
}

/// A triple expressed with names, before interning.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NamedTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub provenance: Provenance,
}

impl NamedTriple {
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
        provenance: Provenance,
    ) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
            provenance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

/// Name <-> dense id table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i as u32).is_some() {
                return Err(Error::Vocabulary(format!("duplicate name `{n}`")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VocabSummary {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub by_provenance: BTreeMap<Provenance, usize>,
}

type Adjacency = BTreeMap<(EntityId, RelationId), Vec<EntityId>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    triples: BTreeMap<(EntityId, RelationId, EntityId), Provenance>,
    fwd: Adjacency,
    rev: Adjacency,
    frozen: bool,
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        let mut relations = Vocab::default();
        for r in RESERVED_RELATIONS {
            relations.intern(r);
        }
        Self {
            entities: Vocab::default(),
            relations,
            triples: BTreeMap::new(),
            fwd: BTreeMap::new(),
            rev: BTreeMap::new(),
            frozen: false,
        }
    }

    /// Rebuild a graph from already-frozen vocabularies and raw triples.
    pub fn from_parts(
        entities: Vocab,
        relations: Vocab,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self> {
        for r in RESERVED_RELATIONS {
            if relations.get(r).is_none() {
                return Err(Error::Vocabulary(format!("reserved relation `{r}` missing")));
            }
        }
        let mut g = Self {
            entities,
            relations,
            triples: BTreeMap::new(),
            fwd: BTreeMap::new(),
            rev: BTreeMap::new(),
            frozen: true,
        };
        for t in triples {
            g.add_triple(t)?;
        }
        Ok(g)
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        self.entities.name(id.0).unwrap_or("<unknown>")
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations.name(id.0).unwrap_or("<unknown>")
    }

    pub fn require_entity(&self, name: &str) -> Result<EntityId> {
        self.entity(name)
            .ok_or_else(|| Error::Vocabulary(format!("unknown entity `{name}`")))
    }

    pub fn require_relation(&self, name: &str) -> Result<RelationId> {
        self.relation(name)
            .ok_or_else(|| Error::Vocabulary(format!("unknown relation `{name}`")))
    }

    pub fn intern_entity(&mut self, name: &str) -> Result<EntityId> {
        if let Some(id) = self.entity(name) {
            return Ok(id);
        }
        if self.frozen {
            return Err(Error::Frozen(format!("entity `{name}`")));
        }
        Ok(EntityId(self.entities.intern(name)))
    }

    pub fn intern_relation(&mut self, name: &str) -> Result<RelationId> {
        if let Some(id) = self.relation(name) {
            return Ok(id);
        }
        if self.frozen {
            return Err(Error::Frozen(format!("relation `{name}`")));
        }
        Ok(RelationId(self.relations.intern(name)))
    }

    fn check_ids(&self, t: &Triple) -> Result<()> {
        if t.head.index() >= self.entities.len() {
            return Err(Error::Vocabulary(format!("unknown entity id {}", t.head.0)));
        }
        if t.tail.index() >= self.entities.len() {
            return Err(Error::Vocabulary(format!("unknown entity id {}", t.tail.0)));
        }
        if t.relation.index() >= self.relations.len() {
            return Err(Error::Vocabulary(format!("unknown relation id {}", t.relation.0)));
        }
        Ok(())
    }

    /// Insert a triple. Returns `true` if it was not present before; an
    /// existing triple keeps the stronger of the two provenance tags.
    pub fn add_triple(&mut self, t: Triple) -> Result<bool> {
        self.check_ids(&t)?;
        if let Some(p) = self.triples.get_mut(&t.key()) {
            *p = p.stronger(t.provenance);
            return Ok(false);
        }
        self.triples.insert(t.key(), t.provenance);
        insert_sorted(self.fwd.entry((t.head, t.relation)).or_default(), t.tail);
        insert_sorted(self.rev.entry((t.tail, t.relation)).or_default(), t.head);
        Ok(true)
    }

    /// Intern the names (unless frozen) and insert.
    pub fn add_named(&mut self, t: &NamedTriple) -> Result<bool> {
        let head = self.intern_entity(&t.head)?;
        let relation = self.intern_relation(&t.relation)?;
        let tail = self.intern_entity(&t.tail)?;
        self.add_triple(Triple::new(head, relation, tail, t.provenance))
    }

    pub fn contains(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.triples.contains_key(&(head, relation, tail))
    }

    pub fn provenance(&self, head: EntityId, relation: RelationId, tail: EntityId) -> Option<Provenance> {
        self.triples.get(&(head, relation, tail)).copied()
    }

    /// All triples in (head, relation, tail) order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.triples
            .iter()
            .map(|(&(h, r, t), &p)| Triple::new(h, r, t, p))
    }

    pub fn neighbors(&self, e: EntityId, r: RelationId, direction: Direction) -> Result<&[EntityId]> {
        if e.index() >= self.entities.len() {
            return Err(Error::Vocabulary(format!("unknown entity id {}", e.0)));
        }
        if r.index() >= self.relations.len() {
            return Err(Error::Vocabulary(format!("unknown relation id {}", r.0)));
        }
        let index = match direction {
            Direction::Out => &self.fwd,
            Direction::In => &self.rev,
        };
        Ok(index.get(&(e, r)).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// Outgoing `(relation, tail)` pairs of `e`, sorted by relation then tail.
    pub fn out_edges(&self, e: EntityId) -> impl Iterator<Item = (RelationId, EntityId)> + '_ {
        self.fwd
            .range((e, RelationId(0))..=(e, RelationId(u32::MAX)))
            .flat_map(|(&(_, r), tails)| tails.iter().map(move |&t| (r, t)))
    }

    /// Relations linking `head` to `tail` in the forward direction.
    pub fn relations_between(&self, head: EntityId, tail: EntityId) -> impl Iterator<Item = (RelationId, Provenance)> + '_ {
        self.fwd
            .range((head, RelationId(0))..=(head, RelationId(u32::MAX)))
            .filter(move |(_, tails)| tails.binary_search(&tail).is_ok())
            .map(move |(&(_, r), _)| (r, self.triples[&(head, r, tail)]))
    }

    /// Makes the vocabularies immutable and renumbers them canonically:
    /// entities by name, relations with the reserved names first and the rest
    /// by name. The result therefore does not depend on insertion order.
    pub fn freeze_vocab(&mut self) -> VocabSummary {
        if !self.frozen {
            let mut ent_names = self.entities.names.clone();
            ent_names.sort();
            let mut rel_names: Vec<String> = self
                .relations
                .names
                .iter()
                .filter(|n| !RESERVED_RELATIONS.contains(&n.as_str()))
                .cloned()
                .collect();
            rel_names.sort();
            let rel_names: Vec<String> = RESERVED_RELATIONS
                .iter()
                .map(|s| s.to_string())
                .chain(rel_names)
                .collect();
            let entities = Vocab::from_names(ent_names).expect("names are unique");
            let relations = Vocab::from_names(rel_names).expect("names are unique");
            let remapped: Vec<Triple> = self
                .triples()
                .map(|t| {
                    Triple::new(
                        EntityId(entities.get(self.entity_name(t.head)).unwrap()),
                        RelationId(relations.get(self.relation_name(t.relation)).unwrap()),
                        EntityId(entities.get(self.entity_name(t.tail)).unwrap()),
                        t.provenance,
                    )
                })
                .collect();
            *self = Self::from_parts(entities, relations, remapped).expect("remapped ids are valid");
        }
        self.summary()
    }

    pub fn summary(&self) -> VocabSummary {
        let mut by_provenance = BTreeMap::new();
        for p in self.triples.values() {
            *by_provenance.entry(*p).or_insert(0) += 1;
        }
        VocabSummary {
            entities: self.entities.len(),
            relations: self.relations.len(),
            triples: self.triples.len(),
            by_provenance,
        }
    }

    /// Rebuilds both adjacency indexes from the raw triple set and compares.
    pub fn indexes_consistent(&self) -> bool {
        let mut fwd: Adjacency = BTreeMap::new();
        let mut rev: Adjacency = BTreeMap::new();
        for &(h, r, t) in self.triples.keys() {
            fwd.entry((h, r)).or_default().push(t);
            rev.entry((t, r)).or_default().push(h);
        }
        for list in fwd.values_mut().chain(rev.values_mut()) {
            list.sort();
            list.dedup();
        }
        fwd == self.fwd && rev == self.rev
    }
}

fn insert_sorted(list: &mut Vec<EntityId>, e: EntityId) {
    if let Err(pos) = list.binary_search(&e) {
        list.insert(pos, e);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn usa_context() -> Vec<NamedTriple> {
        vec![
            NamedTriple::new("USA", HAS_SYNONYM, "US", Provenance::SynonymContext),
            NamedTriple::new("USA", HAS_SYNONYM, "America", Provenance::SynonymContext),
            NamedTriple::new("USA", HAS_SYNONYM, "United States", Provenance::SynonymContext),
            NamedTriple::new("USA", HAS_ENTITY_TYPE, "Country", Provenance::TypeContext),
        ]
    }

    #[test]
    fn insert_and_reinsert() {
        let mut g = KnowledgeGraph::new();
        let t = NamedTriple::new("USA", HAS_SYNONYM, "US", Provenance::SynonymContext);
        assert!(g.add_named(&t).unwrap());
        assert_eq!(g.len(), 1);
        assert!(!g.add_named(&t).unwrap());
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn provenance_upgrade() {
        let mut g = KnowledgeGraph::new();
        g.add_named(&NamedTriple::new("a", "r", "b", Provenance::Extracted)).unwrap();
        let inserted = g
            .add_named(&NamedTriple::new("a", "r", "b", Provenance::CoreLabel))
            .unwrap();
        assert!(!inserted);
        let (a, r, b) = (g.entity("a").unwrap(), g.relation("r").unwrap(), g.entity("b").unwrap());
        assert_eq!(g.provenance(a, r, b), Some(Provenance::CoreLabel));
    }

    #[test]
    fn all_provenance_pairs_keep_stronger() {
        for first in Provenance::ALL {
            for second in Provenance::ALL {
                let mut g = KnowledgeGraph::new();
                g.add_named(&NamedTriple::new("a", "r", "b", first)).unwrap();
                g.add_named(&NamedTriple::new("a", "r", "b", second)).unwrap();
                let t = g.triples().next().unwrap();
                let expected = if first.rank() < second.rank() { first } else { second };
                assert_eq!(t.provenance, expected, "{first:?} then {second:?}");
            }
        }
    }

    #[test]
    fn unknown_ids_rejected() {
        let mut g = KnowledgeGraph::new();
        let bad = Triple::new(EntityId(0), RelationId(0), EntityId(1), Provenance::CoreLabel);
        assert!(matches!(g.add_triple(bad), Err(Error::Vocabulary(_))));
        assert!(g.neighbors(EntityId(3), RelationId(0), Direction::Out).is_err());
        g.intern_entity("x").unwrap();
        assert!(g.neighbors(EntityId(0), RelationId(9), Direction::Out).is_err());
    }

    #[test]
    fn neighbors_both_directions() {
        let mut g = KnowledgeGraph::new();
        for t in ["c", "b"] {
            g.add_named(&NamedTriple::new("a", "r", t, Provenance::CoreLabel)).unwrap();
        }
        g.freeze_vocab();
        let id = |n| g.entity(n).unwrap();
        let r = g.relation("r").unwrap();
        assert_eq!(g.neighbors(id("a"), r, Direction::Out).unwrap(), &[id("b"), id("c")]);
        assert_eq!(g.neighbors(id("b"), r, Direction::In).unwrap(), &[id("a")]);
        assert!(g.neighbors(id("b"), r, Direction::Out).unwrap().is_empty());
    }

    #[test]
    fn freeze_summaries() {
        let mut g = KnowledgeGraph::new();
        let s = g.freeze_vocab();
        assert_eq!((s.entities, s.relations, s.triples), (0, 2, 0));

        let mut g = KnowledgeGraph::new();
        for t in usa_context() {
            g.add_named(&t).unwrap();
        }
        let s = g.freeze_vocab();
        assert_eq!((s.entities, s.relations, s.triples), (5, 2, 4));
        assert_eq!(s.by_provenance[&Provenance::SynonymContext], 3);
        assert_eq!(s.by_provenance[&Provenance::TypeContext], 1);
    }

    #[test]
    fn frozen_vocab_rejects_new_names() {
        let mut g = KnowledgeGraph::new();
        g.add_named(&NamedTriple::new("a", "r", "b", Provenance::CoreLabel)).unwrap();
        g.freeze_vocab();
        assert!(matches!(
            g.add_named(&NamedTriple::new("a", "r", "z", Provenance::CoreLabel)),
            Err(Error::Frozen(_))
        ));
        // Known names can still gain triples after freezing.
        assert!(g
            .add_named(&NamedTriple::new("b", "r", "a", Provenance::Predicted))
            .unwrap());
    }

    #[test]
    fn reserved_relations_come_first() {
        let mut g = KnowledgeGraph::new();
        g.add_named(&NamedTriple::new("a", "aaa", "b", Provenance::CoreLabel)).unwrap();
        g.freeze_vocab();
        assert_eq!(g.relation(HAS_SYNONYM), Some(RelationId(0)));
        assert_eq!(g.relation(HAS_ENTITY_TYPE), Some(RelationId(1)));
        assert_eq!(g.relation("aaa"), Some(RelationId(2)));
    }
}
