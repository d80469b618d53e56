#![no_main]

use std::path::Path;

use kgrelex_cli::config::load_config_str;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = load_config_str(text, Path::new("."), &[], None);
    }
});
