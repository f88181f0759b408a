//! Study cell configs that pass validation must sample deterministically
//! without panicking, including rejection-heavy corners of the parameter
//! space (capped small so runs stay bounded).

#![no_main]

use libfuzzer_sys::fuzz_target;
use wmaint::{sample_scenario, ScenarioConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(config) = serde_json::from_slice::<ScenarioConfig>(data) else { return };
    if config.n_machines > 4 || config.n_states > 10 || !config.validate().is_empty() {
        return;
    }
    let _ = sample_scenario(&config, 0);
});
