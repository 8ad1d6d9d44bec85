#![no_main]

use avril_core::cli::ModelCard;
use avril_core::diffcore::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ckpt) = Checkpoint::<ModelCard>::from_json(text) {
        let again = Checkpoint::<ModelCard>::from_json(&ckpt.to_json()).expect("reparse");
        assert_eq!(again, ckpt);
    }
});
