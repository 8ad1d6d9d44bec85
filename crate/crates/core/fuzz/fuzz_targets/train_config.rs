#![no_main]

use avril_core::cli::{parse_json, TrainConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = parse_json::<TrainConfig>(text, "config") {
        let _ = config.validate();
    }
});
