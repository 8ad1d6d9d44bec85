#![no_main]

use avril_core::cli::{parse_json, RunManifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_json::<RunManifest>(text, "manifest");
});
