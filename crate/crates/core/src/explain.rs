//! Path-based explanations: beam search over the training graph augmented
//! with predicted facts.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde_json::{json, Value};

use crate::aggregate::PredictionSet;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Provenance, RelationId, Triple, HAS_ENTITY_TYPE, HAS_SYNONYM};
use crate::linkpred::{distmult_score, log_sigmoid, ModelParams};

pub const MAX_PATH_LEN: usize = 4;

/// Training graph plus every predicted fact as a `Predicted` triple. A
/// prediction that repeats a training triple keeps the training provenance.
pub fn build_explanation_graph(train: &KnowledgeGraph, predictions: &PredictionSet) -> Result<KnowledgeGraph> {
    let mut graph = train.clone();
    for p in &predictions.predictions {
        let f = &p.fact;
        let head = graph.require_entity(&f.head_name)?;
        let relation = graph.require_relation(&f.relation)?;
        let tail = graph.require_entity(&f.tail_name)?;
        graph.add_triple(Triple::new(head, relation, tail, Provenance::Predicted))?;
    }
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamConfig {
    pub beam: usize,
    pub max_len: usize,
    pub top_n: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam: 128,
            max_len: MAX_PATH_LEN,
            top_n: 10,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::Config("beam width must be >= 1".into()));
        }
        if !(1..=MAX_PATH_LEN).contains(&self.max_len) {
            return Err(Error::Config(format!("max_len {} not in 1..={MAX_PATH_LEN}", self.max_len)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationPath {
    pub nodes: Vec<EntityId>,
    pub edges: Vec<RelationId>,
    /// Sum of edge log-plausibilities plus the query-consistency bonus of
    /// the last node.
    pub score: f64,
}

impl ExplanationPath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn end(&self) -> EntityId {
        *self.nodes.last().expect("paths start at the query head")
    }

    pub fn hops(&self) -> impl Iterator<Item = (EntityId, RelationId, EntityId)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, &r)| (self.nodes[i], r, self.nodes[i + 1]))
    }

    /// Every hop is a triple of `graph`.
    pub fn is_walkable(&self, graph: &KnowledgeGraph) -> bool {
        self.nodes.len() == self.edges.len() + 1 && self.hops().all(|(h, r, t)| graph.contains(h, r, t))
    }

    fn lex_key(&self) -> (Vec<u32>, Vec<u32>) {
        (
            self.nodes.iter().map(|e| e.0).collect(),
            self.edges.iter().map(|r| r.0).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationAnswer {
    pub entity: EntityId,
    pub path: ExplanationPath,
    pub score: f64,
}

/// Scores partial and complete paths with a trained DistMult decoder.
pub struct PathScorer<'a> {
    pub params: &'a ModelParams,
    pub states: &'a Array2<f64>,
}

impl PathScorer<'_> {
    fn edge(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        log_sigmoid(distmult_score(self.params, self.states, h, r, t))
    }

    pub fn path_score(&self, nodes: &[EntityId], edges: &[RelationId], query: RelationId) -> f64 {
        let walk: f64 = edges.iter().enumerate().map(|(i, &r)| self.edge(nodes[i], r, nodes[i + 1])).sum();
        walk + self.edge(nodes[0], query, *nodes.last().unwrap())
    }
}

fn by_score_then_path(a: &ExplanationPath, b: &ExplanationPath) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.lex_key().cmp(&b.lex_key()))
}

/// Keeps every entity's best path and returns the `top_n` best entities,
/// by score then entity id.
fn compile_answers(paths: impl IntoIterator<Item = ExplanationPath>, top_n: usize) -> Vec<ExplanationAnswer> {
    let mut best: BTreeMap<EntityId, ExplanationPath> = BTreeMap::new();
    for p in paths {
        match best.get(&p.end()) {
            Some(q) if by_score_then_path(q, &p).is_le() => {}
            _ => {
                best.insert(p.end(), p);
            }
        }
    }
    let mut answers: Vec<ExplanationAnswer> = best
        .into_iter()
        .map(|(entity, path)| ExplanationAnswer {
            entity,
            score: path.score,
            path,
        })
        .collect();
    answers.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity)));
    answers.truncate(top_n);
    answers
}

fn check_query(graph: &KnowledgeGraph, params: &ModelParams, head: EntityId, relation: RelationId) -> Result<()> {
    if head.index() >= graph.num_entities() || head.index() >= params.num_entities() {
        return Err(Error::Vocabulary(format!("query head {} not in the graph", head.0)));
    }
    if relation.index() >= graph.num_relations() || relation.index() >= params.num_relations() {
        return Err(Error::Vocabulary(format!("query relation {} not in the graph", relation.0)));
    }
    Ok(())
}

/// Breadth-wise beam search from `head` along outgoing edges. Paths never
/// revisit a node. At every step the `beam` best extensions survive and
/// their end nodes become candidate answers.
pub fn beam_search(
    graph: &KnowledgeGraph,
    head: EntityId,
    relation: RelationId,
    scorer: &PathScorer<'_>,
    config: &BeamConfig,
) -> Result<Vec<ExplanationAnswer>> {
    config.validate()?;
    check_query(graph, scorer.params, head, relation)?;
    let mut frontier = vec![ExplanationPath {
        nodes: vec![head],
        edges: Vec::new(),
        score: 0.0,
    }];
    let mut reached = Vec::new();
    for _ in 0..config.max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for (r, t) in graph.out_edges(p.end()) {
                if p.nodes.contains(&t) {
                    continue;
                }
                let mut nodes = p.nodes.clone();
                nodes.push(t);
                let mut edges = p.edges.clone();
                edges.push(r);
                let score = scorer.path_score(&nodes, &edges, relation);
                next.push(ExplanationPath { nodes, edges, score });
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by(by_score_then_path);
        next.truncate(config.beam);
        reached.extend(next.iter().cloned());
        frontier = next;
    }
    Ok(compile_answers(reached, config.top_n))
}

/// Every simple forward path of length `1..=max_len` from `head`.
pub fn enumerate_paths(graph: &KnowledgeGraph, head: EntityId, max_len: usize) -> Vec<(Vec<EntityId>, Vec<RelationId>)> {
    fn walk(
        graph: &KnowledgeGraph,
        nodes: &mut Vec<EntityId>,
        edges: &mut Vec<RelationId>,
        max_len: usize,
        out: &mut Vec<(Vec<EntityId>, Vec<RelationId>)>,
    ) {
        if edges.len() == max_len {
            return;
        }
        let here = *nodes.last().unwrap();
        for (r, t) in graph.out_edges(here).collect::<Vec<_>>() {
            if nodes.contains(&t) {
                continue;
            }
            nodes.push(t);
            edges.push(r);
            out.push((nodes.clone(), edges.clone()));
            walk(graph, nodes, edges, max_len, out);
            nodes.pop();
            edges.pop();
        }
    }
    let mut out = Vec::new();
    walk(graph, &mut vec![head], &mut Vec::new(), max_len, &mut out);
    out
}

/// Scores every enumerated path; equal to [`beam_search`] whenever no beam
/// step has more candidates than the beam width.
pub fn exhaustive_search(
    graph: &KnowledgeGraph,
    head: EntityId,
    relation: RelationId,
    scorer: &PathScorer<'_>,
    config: &BeamConfig,
) -> Result<Vec<ExplanationAnswer>> {
    config.validate()?;
    check_query(graph, scorer.params, head, relation)?;
    let paths = enumerate_paths(graph, head, config.max_len).into_iter().map(|(nodes, edges)| {
        let score = scorer.path_score(&nodes, &edges, relation);
        ExplanationPath { nodes, edges, score }
    });
    Ok(compile_answers(paths, config.top_n))
}

fn display_relation(name: &str) -> &str {
    match name {
        HAS_SYNONYM => "synonym",
        HAS_ENTITY_TYPE => "type",
        other => other,
    }
}

fn stored_relation(name: &str) -> &str {
    match name {
        "synonym" => HAS_SYNONYM,
        "type" => HAS_ENTITY_TYPE,
        other => other,
    }
}

fn escape(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        if matches!(c, '\\' | ',' | '{' | '}') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// One `{node, relation, node}` line per hop. `hasSynonym` and
/// `hasEntityType` print as `synonym` and `type`; `\`, `,`, `{` and `}` in
/// names are backslash-escaped.
pub fn format_explanation(path: &ExplanationPath, graph: &KnowledgeGraph) -> Vec<String> {
    path.hops()
        .map(|(h, r, t)| {
            format!(
                "{{{}, {}, {}}}",
                escape(graph.entity_name(h)),
                escape(display_relation(graph.relation_name(r))),
                escape(graph.entity_name(t))
            )
        })
        .collect()
}

/// Node and relation names recovered from formatted lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedPath {
    pub nodes: Vec<String>,
    pub edges: Vec<String>,
}

fn parse_line(line: &str) -> std::result::Result<[String; 3], String> {
    let inner = line
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or("expected a line of the form {head, relation, tail}")?;
    let mut parts = vec![String::new()];
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e) => parts.last_mut().unwrap().push(e),
                None => return Err("dangling escape".into()),
            },
            ',' => parts.push(String::new()),
            '{' | '}' => return Err(format!("unescaped '{c}'")),
            c => parts.last_mut().unwrap().push(c),
        }
    }
    let parts: Vec<String> = parts
        .into_iter()
        .enumerate()
        .map(|(i, p)| if i == 0 { p } else { p.strip_prefix(' ').map(str::to_owned).unwrap_or(p) })
        .collect();
    <[String; 3]>::try_from(parts).map_err(|p| format!("expected 3 fields, found {}", p.len()))
}

/// Inverse of [`format_explanation`]. Consecutive lines must share their
/// joining node.
pub fn parse_explanation(text: &str) -> Result<NamedPath> {
    let mut path = NamedPath {
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fail = |message: String| Error::LineParse { line: i + 1, message };
        let [h, r, t] = parse_line(line).map_err(fail)?;
        match path.nodes.last() {
            None => path.nodes.push(h),
            Some(prev) if *prev == h => {}
            Some(prev) => return Err(fail(format!("hop starts at {h:?} but previous hop ended at {prev:?}"))),
        }
        path.edges.push(stored_relation(&r).to_owned());
        path.nodes.push(t);
    }
    if path.edges.is_empty() {
        return Err(Error::LineParse {
            line: 0,
            message: "no hops".into(),
        });
    }
    Ok(path)
}

/// `{"query": {"h", "r"}, "answers": [{"entity", "score", "path": [{"h", "r", "t"}]}]}`.
pub fn explanation_json(graph: &KnowledgeGraph, head: EntityId, relation: RelationId, answers: &[ExplanationAnswer]) -> Value {
    let answers: Vec<Value> = answers
        .iter()
        .map(|a| {
            let hops: Vec<Value> = a
                .path
                .hops()
                .map(|(h, r, t)| {
                    json!({"h": graph.entity_name(h), "r": graph.relation_name(r), "t": graph.entity_name(t)})
                })
                .collect();
            json!({"entity": graph.entity_name(a.entity), "score": a.score, "path": hops})
        })
        .collect();
    json!({
        "query": {"h": graph.entity_name(head), "r": graph.relation_name(relation)},
        "answers": answers,
    })
}
