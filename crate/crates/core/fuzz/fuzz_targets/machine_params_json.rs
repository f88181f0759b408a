//! Calibration bundles from the wire either build a spec that validates
//! cleanly or come back as a typed rejection; both paths must be panic-free.

#![no_main]

use libfuzzer_sys::fuzz_target;
use wmaint::index::w_index;
use wmaint::model::{build_machine, MachineParams};

fuzz_target!(|data: &[u8]| {
    let Ok(params) = serde_json::from_slice::<MachineParams>(data) else { return };
    if params.n_states > 32 {
        return;
    }
    if let Ok(spec) = build_machine(&params) {
        assert!(spec.validate().is_empty(), "build_machine produced an invalid spec");
        let _ = w_index(&spec);
    }
});
