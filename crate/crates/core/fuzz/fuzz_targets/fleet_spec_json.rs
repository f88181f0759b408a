//! Valid decoded fleets must survive policy construction and a short
//! simulation without panicking, whatever the machine mix.

#![no_main]

use libfuzzer_sys::fuzz_target;
use wmaint::model::FleetSpec;
use wmaint::policy::Policy;
use wmaint::sim::simulate;

fuzz_target!(|data: &[u8]| {
    let Ok(fleet) = serde_json::from_slice::<FleetSpec>(data) else { return };
    if fleet.machines.len() > 8 || fleet.machines.iter().any(|m| m.n_states > 16) {
        return;
    }
    if !fleet.validate().is_empty() {
        return;
    }
    let _ = Policy::index(&fleet, 0);
    let _ = simulate(&fleet, &Policy::naive(0), 16, 1);
});
