#![no_main]

use avril_core::cli::parse_json;
use avril_core::envs::EnvSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_json::<EnvSpec>(text, "env") {
        // building the environment from a validated spec must not panic
        if spec.validate().is_ok() && spec.gridworld().map_or(true, |g| g.n_states() <= 4096) {
            let _ = spec.environment();
        }
    }
});
