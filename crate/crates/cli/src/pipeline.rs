//! Loading inputs and assembling the training graph.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kgrelex_core::checkpoint::Checkpoint;
use kgrelex_core::context::{
    parse_context_paths, parse_entity_context, path_to_triples, select_context_path, synonym_triples, type_triples,
};
use kgrelex_core::ingest::{core_triples, load_external_triples, parse_documents, register_entities, Document};
use kgrelex_core::kg::{KnowledgeGraph, Provenance};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

/// Fails unless every path exists, before any work starts.
pub fn require_files<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<(), CliError> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::data(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>, CliError> {
    parse_documents(&read_file(path)?).map_err(|e| CliError::at(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn path(self, cfg: &PipelineConfig) -> Option<&PathBuf> {
        match self {
            Split::Train => cfg.data.train.as_ref(),
            Split::Dev => cfg.data.dev.as_ref(),
            Split::Test => cfg.data.test.as_ref(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn load(self, cfg: &PipelineConfig) -> Result<Vec<Document>, CliError> {
        let path = self
            .path(cfg)
            .ok_or_else(|| CliError::usage(format!("no `data.{}` file configured", self.name())))?;
        require_files([path])?;
        load_documents(path)
    }
}

/// Every input file the training run reads.
pub fn training_inputs(cfg: &PipelineConfig) -> Vec<&PathBuf> {
    let d = &cfg.data;
    [&d.train, &d.dev, &d.test, &d.entity_context, &d.context_paths]
        .into_iter()
        .flatten()
        .chain(d.extracted_triples.iter())
        .collect()
}

/// Builds the frozen training graph: entities of every split, gold facts of
/// the training documents, extracted triples, and context triples.
pub fn build_training_graph(cfg: &PipelineConfig, train_docs: &[Document]) -> Result<KnowledgeGraph, CliError> {
    let mut graph = KnowledgeGraph::new();
    for path in [&cfg.data.train, &cfg.data.dev, &cfg.data.test].into_iter().flatten() {
        let docs = load_documents(path)?;
        register_entities(&docs, &mut graph).map_err(|e| CliError::at(path, e))?;
    }
    let n = core_triples(train_docs, &mut graph)?;
    log::info!("{n} gold triples from training documents");
    for path in &cfg.data.extracted_triples {
        let n = load_external_triples(&read_file(path)?, Provenance::Extracted, &mut graph).map_err(|e| CliError::at(path, e))?;
        log::info!("{n} extracted triples from {}", path.display());
    }
    if let Some(path) = &cfg.data.entity_context {
        let records = parse_entity_context(&read_file(path)?).map_err(|e| CliError::at(path, e))?;
        for rec in &records {
            for t in synonym_triples(rec).iter().chain(type_triples(rec).iter()) {
                graph.add_named(t).map_err(|e| CliError::at(path, e))?;
            }
        }
    }
    if let Some(path) = &cfg.data.context_paths {
        let paths = parse_context_paths(&read_file(path)?).map_err(|e| CliError::at(path, e))?;
        let mut by_pair: BTreeMap<(&str, &str), Vec<_>> = BTreeMap::new();
        for p in &paths {
            by_pair.entry((p.head.as_str(), p.tail.as_str())).or_default().push(p.clone());
        }
        let mut used = 0;
        for candidates in by_pair.values() {
            if let Some(best) = select_context_path(candidates, cfg.data.max_hops) {
                for t in path_to_triples(best).map_err(|e| CliError::at(path, e))? {
                    graph.add_named(&t).map_err(|e| CliError::at(path, e))?;
                }
                used += 1;
            }
        }
        log::info!("{used} context paths selected from {} candidates", paths.len());
    }
    let summary = graph.freeze_vocab();
    log::info!(
        "graph: {} entities, {} relations, {} triples",
        summary.entities,
        summary.relations,
        summary.triples
    );
    Ok(graph)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    if !path.is_file() {
        return Err(CliError::data(format!("checkpoint {} does not exist", path.display())));
    }
    Checkpoint::decode(&read_file(path)?).map_err(|e| CliError::at(path, e))
}

/// Every entity of `docs` must be known to the checkpoint.
pub fn check_vocabulary(ck: &Checkpoint, docs: &[Document]) -> Result<(), CliError> {
    for doc in docs {
        for e in 0..doc.num_entities() {
            let name = doc.canonical_name(e);
            if ck.graph.entity(name).is_none() {
                return Err(CliError::data(format!(
                    "vocabulary mismatch: entity `{name}` of document `{}` is not in the checkpoint",
                    doc.doc_id
                )));
            }
        }
    }
    Ok(())
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::data(format!("cannot write {}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(fail)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        fail(e)
    })
}
