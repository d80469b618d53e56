#![no_main]

use kgrelex_core::context::{parse_entity_context, synonym_triples, type_triples};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_entity_context(data) {
        for r in &records {
            let _ = synonym_triples(r);
            let _ = type_triples(r);
        }
    }
});
