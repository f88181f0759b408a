//! Decoded machine specs that pass validation must never panic downstream:
//! index assembly either returns a table or a typed error.

#![no_main]

use libfuzzer_sys::fuzz_target;
use wmaint::index::w_index;
use wmaint::model::MachineSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<MachineSpec>(data) else { return };
    if spec.n_states > 32 || !spec.validate().is_empty() {
        return;
    }
    let _ = w_index(&spec);
});
