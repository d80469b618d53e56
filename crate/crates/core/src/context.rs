//! Context triples: synonyms and entity types of single entities, and
//! multi-hop external paths between entity pairs.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::parse_json_lines;
use crate::kg::{NamedTriple, Provenance, HAS_ENTITY_TYPE, HAS_SYNONYM};

pub const MAX_CONTEXT_HOPS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityContextRecord {
    pub entity: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(rename = "type", default)]
    pub etype: Option<String>,
}

impl EntityContextRecord {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.synonyms {
            if s == &self.entity {
                return Err(Error::Validation(format!("`{}` lists itself as a synonym", self.entity)));
            }
            if !seen.insert(s) {
                return Err(Error::Validation(format!("`{}` repeats synonym `{s}`", self.entity)));
            }
        }
        Ok(())
    }
}

pub fn synonym_triples(rec: &EntityContextRecord) -> Vec<NamedTriple> {
    rec.synonyms
        .iter()
        .map(|s| NamedTriple::new(rec.entity.as_str(), HAS_SYNONYM, s.as_str(), Provenance::SynonymContext))
        .collect()
}

pub fn type_triples(rec: &EntityContextRecord) -> Vec<NamedTriple> {
    rec.etype
        .iter()
        .map(|t| NamedTriple::new(rec.entity.as_str(), HAS_ENTITY_TYPE, t.as_str(), Provenance::TypeContext))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hop {
    pub rel: String,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPath {
    pub head: String,
    pub tail: String,
    pub hops: Vec<Hop>,
    #[serde(default)]
    pub pagerank: Option<f64>,
}

impl ContextPath {
    pub fn validate(&self) -> Result<()> {
        if self.hops.is_empty() || self.hops.len() > MAX_CONTEXT_HOPS {
            return Err(Error::Validation(format!(
                "context path {} -> {} has {} hops (expected 1..={MAX_CONTEXT_HOPS})",
                self.head,
                self.tail,
                self.hops.len()
            )));
        }
        let last = &self.hops[self.hops.len() - 1].node;
        if last != &self.tail {
            return Err(Error::Validation(format!(
                "context path {} -> {} ends at `{last}`",
                self.head, self.tail
            )));
        }
        Ok(())
    }

    fn effective_pagerank(&self) -> Option<f64> {
        self.pagerank.filter(|p| !p.is_nan())
    }
}

/// Converts a path into the chain `(node_{i-1}, rel_i, node_i)` with
/// `node_0 = head`.
pub fn path_to_triples(path: &ContextPath) -> Result<Vec<NamedTriple>> {
    path.validate()?;
    let mut prev = path.head.as_str();
    Ok(path
        .hops
        .iter()
        .map(|hop| {
            let t = NamedTriple::new(prev, hop.rel.as_str(), hop.node.as_str(), Provenance::PathContext);
            prev = &hop.node;
            t
        })
        .collect())
}

/// Inverse of [`path_to_triples`]: walks a chain of triples back into a path.
pub fn triples_to_path(triples: &[NamedTriple]) -> Result<ContextPath> {
    let first = triples
        .first()
        .ok_or_else(|| Error::Validation("empty triple chain".into()))?;
    let mut hops = Vec::with_capacity(triples.len());
    let mut at = &first.head;
    for t in triples {
        if &t.head != at {
            return Err(Error::Validation(format!("chain breaks at `{}` (expected `{at}`)", t.head)));
        }
        hops.push(Hop {
            rel: t.relation.clone(),
            node: t.tail.clone(),
        });
        at = &t.tail;
    }
    let path = ContextPath {
        head: first.head.clone(),
        tail: at.clone(),
        hops,
        pagerank: None,
    };
    path.validate()?;
    Ok(path)
}

/// Total preference order: pagerank (present beats absent, higher first),
/// then fewer hops, then relation names, then node names.
fn preference(a: &ContextPath, b: &ContextPath) -> Ordering {
    let pr = match (a.effective_pagerank(), b.effective_pagerank()) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    pr.then(a.hops.len().cmp(&b.hops.len()))
        .then_with(|| a.hops.iter().map(|h| &h.rel).cmp(b.hops.iter().map(|h| &h.rel)))
        .then_with(|| a.hops.iter().map(|h| &h.node).cmp(b.hops.iter().map(|h| &h.node)))
        .then_with(|| (&a.head, &a.tail).cmp(&(&b.head, &b.tail)))
}

/// Picks the preferred candidate among those with at most `max_hops` hops.
pub fn select_context_path(candidates: &[ContextPath], max_hops: usize) -> Option<&ContextPath> {
    candidates
        .iter()
        .filter(|p| !p.hops.is_empty() && p.hops.len() <= max_hops)
        .min_by(|a, b| preference(a, b))
}

pub fn parse_entity_context(bytes: &[u8]) -> Result<Vec<EntityContextRecord>> {
    let records: Vec<EntityContextRecord> = parse_json_lines(bytes)?;
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| Error::LineParse {
            line: line_of_record(bytes, i),
            message: e.to_string(),
        })?;
    }
    Ok(records)
}

pub fn parse_context_paths(bytes: &[u8]) -> Result<Vec<ContextPath>> {
    let paths: Vec<ContextPath> = parse_json_lines(bytes)?;
    for (i, p) in paths.iter().enumerate() {
        p.validate().map_err(|e| Error::LineParse {
            line: line_of_record(bytes, i),
            message: e.to_string(),
        })?;
    }
    Ok(paths)
}

/// 1-based line number of the `index`-th non-blank line.
fn line_of_record(bytes: &[u8], index: usize) -> usize {
    let text = String::from_utf8_lossy(bytes);
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .nth(index)
        .map(|(i, _)| i + 1)
        .unwrap_or(0)
}
