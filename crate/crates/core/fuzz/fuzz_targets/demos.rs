#![no_main]

use avril_core::envs::{build_dataset, read_demos, StateSpace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(trajectories) = read_demos(data) {
        // whatever parses must either build a dataset or be rejected cleanly
        let _ = build_dataset(&trajectories, StateSpace::Discrete { n_states: 64 }, 4);
        let _ = build_dataset(&trajectories, StateSpace::Continuous { dim: 4 }, 2);
    }
});
