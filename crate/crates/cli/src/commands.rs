use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kgrelex_core::aggregate::{f1_metrics, gold_facts, predict, score_documents, F1Scores, PredictionSet};
use kgrelex_core::checkpoint::Checkpoint;
use kgrelex_core::explain::{
    beam_search, build_explanation_graph, explanation_json, format_explanation, ExplanationAnswer, PathScorer,
};
use kgrelex_core::ingest::{dataset_stats, DatasetStats, Document};
use kgrelex_core::kg::{Provenance, Triple};
use kgrelex_core::linkpred::metrics::ranks_with_states;
use kgrelex_core::linkpred::{rgcn_forward, train_with_report, RankMetrics};
use kgrelex_core::reasoning::train_scorer;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::pipeline::{
    build_training_graph, check_vocabulary, load_checkpoint, load_documents, read_file, require_files, training_inputs,
    write_atomic, Split,
};

pub const STATS_FILE: &str = "stats.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const EXPLANATIONS_FILE: &str = "explanations.jsonl";
pub const EXPLANATIONS_TEXT_FILE: &str = "explanations.txt";

fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serializes");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStats {
    pub file: String,
    #[serde(flatten)]
    pub stats: DatasetStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    #[serde(flatten)]
    pub total: DatasetStats,
    pub files: Vec<FileStats>,
}

fn stats_table(report: &StatsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<28} {:>9} {:>9} {:>9} {:>6} {:>6}", "file", "triples", "relations", "entities", "types", "docs");
    let row = |out: &mut String, name: &str, s: &DatasetStats| {
        let _ = writeln!(
            out,
            "{:<28} {:>9} {:>9} {:>9} {:>6} {:>6}",
            name, s.n_triples, s.n_relations, s.n_entities, s.n_entity_types, s.n_docs
        );
    };
    for f in &report.files {
        row(&mut out, &f.file, &f.stats);
    }
    row(&mut out, "total", &report.total);
    out
}

/// Dataset statistics of the given files, or of every configured split.
pub fn cmd_stats(cfg: &PipelineConfig, docs: &[PathBuf]) -> Result<StatsReport, CliError> {
    let files: Vec<PathBuf> = if docs.is_empty() {
        [&cfg.data.train, &cfg.data.dev, &cfg.data.test].into_iter().flatten().cloned().collect()
    } else {
        docs.to_vec()
    };
    if files.is_empty() {
        return Err(CliError::usage("no document files given (use --docs or data.train/dev/test)"));
    }
    require_files(&files)?;
    let mut all = Vec::new();
    let mut per_file = Vec::new();
    for path in &files {
        let parsed = load_documents(path)?;
        per_file.push(FileStats {
            file: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            stats: dataset_stats(&parsed),
        });
        all.extend(parsed);
    }
    let report = StatsReport {
        total: dataset_stats(&all),
        files: per_file,
    };
    write_atomic(&cfg.output_dir.join(STATS_FILE), &to_json_pretty(&report))?;
    print!("{}", stats_table(&report));
    Ok(report)
}

/// Trains both models and writes the checkpoint atomically. Nothing is
/// written when training fails.
pub fn cmd_train(cfg: &PipelineConfig, checkpoint: &Path) -> Result<Checkpoint, CliError> {
    let train_path = cfg
        .data
        .train
        .as_ref()
        .ok_or_else(|| CliError::usage("no `data.train` file configured"))?;
    require_files(training_inputs(cfg))?;
    let train_docs = load_documents(train_path)?;
    let graph = build_training_graph(cfg, &train_docs)?;
    let report = train_with_report(&graph, &cfg.train)?;
    log::info!("link predictor final loss {:?}", report.epoch_losses.last());
    let scorer = train_scorer(&train_docs, &graph, &cfg.scorer)?;
    let ck = Checkpoint {
        config: cfg.model_echo(),
        graph,
        params: report.params,
        scorer: Some(scorer),
    };
    write_atomic(checkpoint, &ck.encode())?;
    println!("checkpoint written to {}", checkpoint.display());
    Ok(ck)
}

struct Scored {
    predictions: PredictionSet,
    docs: Vec<Document>,
}

fn score_split(cfg: &PipelineConfig, ck: &Checkpoint, split: Split) -> Result<Scored, CliError> {
    let docs = split.load(cfg)?;
    check_vocabulary(ck, &docs)?;
    let scorer = ck
        .scorer
        .as_ref()
        .ok_or_else(|| CliError::data("checkpoint has no reasoning scorer"))?;
    let states = rgcn_forward(&ck.graph, &ck.params, None)?;
    let scores = score_documents(&docs, &ck.graph, &ck.params, &states, scorer, &cfg.aggregation)?;
    Ok(Scored {
        predictions: predict(&scores, &scorer.relations, &cfg.aggregation),
        docs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPredReport {
    pub n_queries: usize,
    #[serde(flatten)]
    pub metrics: RankMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub n_docs: usize,
    pub n_gold: usize,
    pub n_predictions: usize,
    #[serde(flatten)]
    pub scores: F1Scores,
    /// Predictions by the reasoning kind that supported them.
    pub by_path_kind: BTreeMap<String, usize>,
    pub link_prediction: LinkPredReport,
}

fn eval_table(r: &EvalReport) -> String {
    let mut out = String::new();
    let lp = &r.link_prediction.metrics;
    let _ = writeln!(out, "split       {}", r.split);
    let _ = writeln!(out, "F1          {:.4}", r.scores.f1);
    let _ = writeln!(out, "Ign F1      {:.4}", r.scores.ign_f1);
    let _ = writeln!(out, "precision   {:.4}", r.scores.precision);
    let _ = writeln!(out, "recall      {:.4}", r.scores.recall);
    let _ = writeln!(out, "Hits@1      {:.4}", lp.hits1);
    let _ = writeln!(out, "Hits@3      {:.4}", lp.hits3);
    let _ = writeln!(out, "Hits@10     {:.4}", lp.hits10);
    let _ = writeln!(out, "MRR         {:.4}", lp.mrr);
    out
}

/// F1 / Ign F1 of fused predictions and filtered link-prediction ranks of
/// the split's gold facts.
pub fn cmd_evaluate(cfg: &PipelineConfig, checkpoint: &Path, split: Split) -> Result<EvalReport, CliError> {
    let ck = load_checkpoint(checkpoint)?;
    let Scored { predictions, docs } = score_split(cfg, &ck, split)?;
    let gold = gold_facts(&docs);
    let train_facts = match &cfg.data.train {
        Some(p) if p.is_file() => gold_facts(&load_documents(p)?),
        _ => Default::default(),
    };
    let scores = f1_metrics(&predictions.facts(), &gold, &train_facts);

    let mut by_path_kind = BTreeMap::new();
    for p in &predictions.predictions {
        let key = p.kind.map_or("none", |k| k.label());
        *by_path_kind.entry(key.to_owned()).or_insert(0) += 1;
    }

    let g = &ck.graph;
    let test: Vec<Triple> = gold
        .iter()
        .filter_map(|f| {
            Some(Triple::new(
                g.entity(&f.head_name)?,
                g.relation(&f.relation)?,
                g.entity(&f.tail_name)?,
                Provenance::CoreLabel,
            ))
        })
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let states = rgcn_forward(g, &ck.params, None)?;
    let known: HashSet<_> = g.triples().chain(test.iter().copied()).map(|t| t.key()).collect();
    let ranks = ranks_with_states(&ck.params, &states, &known, &test, true);
    let report = EvalReport {
        split: split.name().into(),
        n_docs: docs.len(),
        n_gold: gold.len(),
        n_predictions: predictions.len(),
        scores,
        by_path_kind,
        link_prediction: LinkPredReport {
            n_queries: ranks.len(),
            metrics: RankMetrics::from_ranks(&ranks),
        },
    };
    write_atomic(&cfg.output_dir.join(REPORT_FILE), &to_json_pretty(&report))?;
    print!("{}", eval_table(&report));
    Ok(report)
}

pub fn cmd_predict(cfg: &PipelineConfig, checkpoint: &Path, split: Split) -> Result<PredictionSet, CliError> {
    let ck = load_checkpoint(checkpoint)?;
    let scored = score_split(cfg, &ck, split)?;
    write_atomic(&cfg.output_dir.join(PREDICTIONS_FILE), scored.predictions.to_jsonl().as_bytes())?;
    println!("{} predictions for {} documents", scored.predictions.len(), scored.docs.len());
    Ok(scored.predictions)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub h: String,
    pub r: String,
}

pub fn parse_queries(path: &Path) -> Result<Vec<Query>, CliError> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| CliError::data(format!("{}: not UTF-8", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::data(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query: Query,
    pub answers: Vec<ExplanationAnswer>,
    pub lines: Vec<Vec<String>>,
}

fn render_text(results: &[QueryResult], graph: &kgrelex_core::kg::KnowledgeGraph) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(out, "Query: ({}, {}, ?x)", r.query.h, r.query.r);
        if r.answers.is_empty() {
            let _ = writeln!(out, "Answer: none");
        }
        for (a, lines) in r.answers.iter().zip(&r.lines) {
            let _ = writeln!(out, "Answer: {} (score {:.4})", graph.entity_name(a.entity), a.score);
            let _ = writeln!(out, "Explanation:");
            for l in lines {
                let _ = writeln!(out, "  {l}");
            }
        }
        out.push('\n');
    }
    out
}

/// Beam-search explanations over the training graph plus the predictions
/// on the test split (when one is configured).
pub fn cmd_explain(cfg: &PipelineConfig, checkpoint: &Path, queries: &[Query]) -> Result<Vec<QueryResult>, CliError> {
    let ck = load_checkpoint(checkpoint)?;
    let predictions = match &cfg.data.test {
        Some(p) if p.is_file() => score_split(cfg, &ck, Split::Test)?.predictions,
        _ => PredictionSet::default(),
    };
    let graph = build_explanation_graph(&ck.graph, &predictions)?;
    let states = rgcn_forward(&ck.graph, &ck.params, None)?;
    let scorer = PathScorer {
        params: &ck.params,
        states: &states,
    };
    let beam = cfg.explain.beam_config();
    let mut results = Vec::new();
    let mut jsonl = String::new();
    for q in queries {
        let head = graph.require_entity(&q.h)?;
        let relation = graph.require_relation(&q.r)?;
        let answers = beam_search(&graph, head, relation, &scorer, &beam)?;
        jsonl.push_str(&explanation_json(&graph, head, relation, &answers).to_string());
        jsonl.push('\n');
        let lines = answers.iter().map(|a| format_explanation(&a.path, &graph)).collect();
        results.push(QueryResult {
            query: q.clone(),
            answers,
            lines,
        });
    }
    let text = render_text(&results, &graph);
    write_atomic(&cfg.output_dir.join(EXPLANATIONS_FILE), jsonl.as_bytes())?;
    write_atomic(&cfg.output_dir.join(EXPLANATIONS_TEXT_FILE), text.as_bytes())?;
    print!("{text}");
    Ok(results)
}
