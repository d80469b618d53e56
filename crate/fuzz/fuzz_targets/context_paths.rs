#![no_main]

use kgrelex_core::context::{parse_context_paths, path_to_triples, select_context_path, MAX_CONTEXT_HOPS};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(paths) = parse_context_paths(data) {
        for p in &paths {
            let _ = path_to_triples(p);
        }
        let _ = select_context_path(&paths, MAX_CONTEXT_HOPS);
    }
});
