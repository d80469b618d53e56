#![no_main]

use kgrelex_core::ingest::{load_external_triples, parse_triple_lines};
use kgrelex_core::kg::{KnowledgeGraph, Provenance};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_triple_lines(data);
    let mut g = KnowledgeGraph::new();
    if load_external_triples(data, Provenance::Extracted, &mut g).is_ok() {
        g.freeze_vocab();
    }
});
