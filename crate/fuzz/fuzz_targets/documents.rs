#![no_main]

use kgrelex_core::ingest::{core_triples, dataset_stats, parse_documents};
use kgrelex_core::kg::KnowledgeGraph;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(docs) = parse_documents(data) {
        let _ = dataset_stats(&docs);
        let _ = core_triples(&docs, &mut KnowledgeGraph::new());
    }
});
