//! Document and external-triple ingestion.
//!
//! Documents use the DocRED JSON layout: an array of records with `title`,
//! `sents`, `vertexSet` and (optionally, absent on unlabeled splits)
//! `labels`. External triples are JSON Lines `{"h", "r", "t", "score"?}`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, NamedTriple, Provenance};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub entity_index: usize,
    pub sent_id: usize,
    /// Token span `[start, end)` within the sentence.
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub etype: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledFact {
    pub head_idx: usize,
    pub tail_idx: usize,
    pub relation: String,
    pub evidence: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<String>>,
    pub entity_clusters: Vec<Vec<Mention>>,
    pub gold_facts: Vec<LabeledFact>,
}

impl Document {
    /// Surface form of the cluster's first mention.
    pub fn canonical_name(&self, entity: usize) -> &str {
        &self.entity_clusters[entity][0].surface
    }

    pub fn entity_type(&self, entity: usize) -> &str {
        &self.entity_clusters[entity][0].etype
    }

    pub fn num_entities(&self) -> usize {
        self.entity_clusters.len()
    }

    pub fn to_json(&self) -> Value {
        let vertex_set: Vec<Value> = self
            .entity_clusters
            .iter()
            .map(|cluster| {
                Value::Array(
                    cluster
                        .iter()
                        .map(|m| {
                            json!({
                                "name": m.surface,
                                "sent_id": m.sent_id,
                                "pos": [m.start, m.end],
                                "type": m.etype,
                            })
                        })
                        .collect(),
                )
            })
            .collect();
        let labels: Vec<Value> = self
            .gold_facts
            .iter()
            .map(|f| json!({"h": f.head_idx, "t": f.tail_idx, "r": f.relation, "evidence": f.evidence}))
            .collect();
        json!({
            "title": self.doc_id,
            "sents": self.sentences,
            "vertexSet": vertex_set,
            "labels": labels,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.sentences.len();
        let fail = |msg: String| Err(Error::Validation(format!("document `{}`: {msg}", self.doc_id)));
        if k == 0 {
            return fail("document has no sentences".into());
        }
        for (e, cluster) in self.entity_clusters.iter().enumerate() {
            if cluster.is_empty() {
                return fail(format!("entity {e} has no mentions"));
            }
            for m in cluster {
                if m.sent_id >= k {
                    return fail(format!("entity {e}: sent_id {} out of range ({k} sentences)", m.sent_id));
                }
                let len = self.sentences[m.sent_id].len();
                if m.start >= m.end || m.end > len {
                    return fail(format!(
                        "entity {e}: span [{}, {}) invalid for sentence {} of length {len}",
                        m.start, m.end, m.sent_id
                    ));
                }
            }
        }
        let n = self.entity_clusters.len();
        for f in &self.gold_facts {
            if f.head_idx >= n || f.tail_idx >= n {
                return fail(format!("label ({}, {}) references a missing entity", f.head_idx, f.tail_idx));
            }
            if f.head_idx == f.tail_idx {
                return fail(format!("label has head == tail ({})", f.head_idx));
            }
            if let Some(&s) = f.evidence.iter().find(|&&s| s >= k) {
                return fail(format!("evidence sentence {s} out of range"));
            }
        }
        Ok(())
    }
}

struct FieldReader<'a> {
    doc: usize,
    obj: &'a Map<String, Value>,
}

impl<'a> FieldReader<'a> {
    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::DocumentParse {
            doc: self.doc,
            field: field.to_owned(),
            message: message.into(),
        }
    }

    fn get(&self, field: &str) -> Result<&'a Value> {
        self.obj.get(field).ok_or_else(|| self.err(field, "missing"))
    }

    fn string(&self, v: &Value, field: &str) -> Result<String> {
        v.as_str().map(str::to_owned).ok_or_else(|| self.err(field, "expected a string"))
    }

    fn index(&self, v: &Value, field: &str) -> Result<usize> {
        v.as_u64()
            .and_then(|x| usize::try_from(x).ok())
            .ok_or_else(|| self.err(field, "expected a non-negative integer"))
    }

    fn array(&self, v: &'a Value, field: &str) -> Result<&'a Vec<Value>> {
        v.as_array().ok_or_else(|| self.err(field, "expected an array"))
    }
}

fn parse_document(doc: usize, value: &Value) -> Result<Document> {
    let obj = value.as_object().ok_or_else(|| Error::DocumentParse {
        doc,
        field: "<record>".into(),
        message: "expected an object".into(),
    })?;
    let r = FieldReader { doc, obj };

    let doc_id = r.string(r.get("title")?, "title")?;

    let mut sentences = Vec::new();
    for sent in r.array(r.get("sents")?, "sents")? {
        let tokens = r
            .array(sent, "sents")?
            .iter()
            .map(|t| r.string(t, "sents"))
            .collect::<Result<Vec<_>>>()?;
        sentences.push(tokens);
    }

    let mut entity_clusters = Vec::new();
    for (entity_index, cluster) in r.array(r.get("vertexSet")?, "vertexSet")?.iter().enumerate() {
        let mut mentions = Vec::new();
        for m in r.array(cluster, "vertexSet")? {
            let mo = m.as_object().ok_or_else(|| r.err("vertexSet", "mention is not an object"))?;
            let field = |name: &str| mo.get(name).ok_or_else(|| r.err(&format!("vertexSet.{name}"), "missing"));
            let pos = r.array(field("pos")?, "vertexSet.pos")?;
            if pos.len() != 2 {
                return Err(r.err("vertexSet.pos", "expected [start, end]"));
            }
            mentions.push(Mention {
                entity_index,
                sent_id: r.index(field("sent_id")?, "vertexSet.sent_id")?,
                start: r.index(&pos[0], "vertexSet.pos")?,
                end: r.index(&pos[1], "vertexSet.pos")?,
                surface: r.string(field("name")?, "vertexSet.name")?,
                etype: r.string(field("type")?, "vertexSet.type")?,
            });
        }
        entity_clusters.push(mentions);
    }

    let mut gold_facts = Vec::new();
    if let Some(labels) = obj.get("labels") {
        for l in r.array(labels, "labels")? {
            let lo = l.as_object().ok_or_else(|| r.err("labels", "label is not an object"))?;
            let field = |name: &str| lo.get(name).ok_or_else(|| r.err(&format!("labels.{name}"), "missing"));
            let evidence = match lo.get("evidence") {
                Some(ev) => r
                    .array(ev, "labels.evidence")?
                    .iter()
                    .map(|s| r.index(s, "labels.evidence"))
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            gold_facts.push(LabeledFact {
                head_idx: r.index(field("h")?, "labels.h")?,
                tail_idx: r.index(field("t")?, "labels.t")?,
                relation: r.string(field("r")?, "labels.r")?,
                evidence,
            });
        }
    }

    let doc = Document {
        doc_id,
        sentences,
        entity_clusters,
        gold_facts,
    };
    doc.validate()?;
    Ok(doc)
}

/// Parses a DocRED-format document file. An empty (or blank) file holds no
/// documents.
pub fn parse_documents(bytes: &[u8]) -> Result<Vec<Document>> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let root: Value = serde_json::from_slice(bytes).map_err(|e| Error::DocumentParse {
        doc: 0,
        field: "<file>".into(),
        message: e.to_string(),
    })?;
    let records = root.as_array().ok_or_else(|| Error::DocumentParse {
        doc: 0,
        field: "<file>".into(),
        message: "top level must be a JSON array".into(),
    })?;
    records
        .iter()
        .enumerate()
        .map(|(i, v)| parse_document(i, v))
        .collect()
}

pub fn serialize_documents(docs: &[Document]) -> String {
    let arr: Vec<Value> = docs.iter().map(Document::to_json).collect();
    serde_json::to_string(&arr).expect("documents serialize")
}

/// Adds every entity cluster of `docs` to the entity vocabulary.
pub fn register_entities(docs: &[Document], graph: &mut KnowledgeGraph) -> Result<()> {
    for doc in docs {
        for e in 0..doc.num_entities() {
            graph.intern_entity(doc.canonical_name(e))?;
        }
    }
    Ok(())
}

/// Inserts one `CoreLabel` triple per gold fact. All document entities are
/// registered in the vocabulary, fact or not. Returns the number of triples
/// that were new to the graph.
pub fn core_triples(docs: &[Document], graph: &mut KnowledgeGraph) -> Result<usize> {
    register_entities(docs, graph)?;
    let mut inserted = 0;
    for doc in docs {
        for f in &doc.gold_facts {
            let t = NamedTriple::new(
                doc.canonical_name(f.head_idx),
                f.relation.as_str(),
                doc.canonical_name(f.tail_idx),
                Provenance::CoreLabel,
            );
            if graph.add_named(&t)? {
                inserted += 1;
            }
        }
    }
    Ok(inserted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalTriple {
    pub h: String,
    pub r: String,
    pub t: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Parses a JSON Lines triple file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_triple_lines(bytes: &[u8]) -> Result<Vec<ExternalTriple>> {
    parse_json_lines(bytes)
}

pub(crate) fn parse_json_lines<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::LineParse {
            line,
            message: "invalid UTF-8".into(),
        }
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::LineParse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads pre-extracted triples into `graph` with the given provenance.
/// Names that match no known entity become new entities.
pub fn load_external_triples(bytes: &[u8], provenance: Provenance, graph: &mut KnowledgeGraph) -> Result<usize> {
    let records = parse_triple_lines(bytes)?;
    let known = graph.num_entities();
    let mut inserted = 0;
    for rec in &records {
        if graph.add_named(&NamedTriple::new(rec.h.as_str(), rec.r.as_str(), rec.t.as_str(), provenance))? {
            inserted += 1;
        }
    }
    let added = graph.num_entities() - known;
    if added > 0 {
        log::info!("{provenance} triples introduced {added} entities not seen in any document");
    }
    Ok(inserted)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_triples: usize,
    pub n_relations: usize,
    pub n_entities: usize,
    pub n_entity_types: usize,
    pub n_docs: usize,
}

pub fn dataset_stats(docs: &[Document]) -> DatasetStats {
    let mut relations = BTreeSet::new();
    let mut entities = BTreeSet::new();
    let mut types = BTreeSet::new();
    let mut n_triples = 0;
    for doc in docs {
        n_triples += doc.gold_facts.len();
        relations.extend(doc.gold_facts.iter().map(|f| f.relation.as_str()));
        for e in 0..doc.num_entities() {
            entities.insert(doc.canonical_name(e));
        }
        types.extend(doc.entity_clusters.iter().flatten().map(|m| m.etype.as_str()));
    }
    DatasetStats {
        n_triples,
        n_relations: relations.len(),
        n_entities: entities.len(),
        n_entity_types: types.len(),
        n_docs: docs.len(),
    }
}
