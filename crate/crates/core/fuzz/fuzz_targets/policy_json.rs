//! Decoded policy descriptors either materialize against a reference fleet
//! or fail with a typed error; materialized ones must decide within
//! capacity on arbitrary fleet states.

#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use wmaint::model::{build_machine, FleetSpec, MachineParams, Mode};
use wmaint::policy::{Policy, PolicySpec};

fn reference_fleet() -> &'static FleetSpec {
    static FLEET: OnceLock<FleetSpec> = OnceLock::new();
    FLEET.get_or_init(|| {
        let machines = (0..2)
            .map(|i| {
                build_machine(&MachineParams {
                    beta: 0.95,
                    n_states: 5,
                    deterioration_rate: 0.02 + 0.01 * i as f64,
                    failure_coeff: 0.01,
                    failure_scale: 4.0,
                    intervention_decay: 1.0,
                    maint_intercept: 100.0 + 20.0 * i as f64,
                    maint_slope: 10.0,
                    op_intercept: 25.0,
                    op_slope: 2.0,
                    op_quad: 0.0,
                    fail_cost: 1000.0,
                    mode: Mode::WithFailures,
                })
                .expect("reference calibration is valid")
            })
            .collect();
        FleetSpec { machines, n_repairmen: 1, allow_idle: true }
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<PolicySpec>(data) else { return };
    let fleet = reference_fleet();
    let Ok(policy) = Policy::from_spec(&spec, fleet) else { return };
    for states in [[0usize, 0], [4, 4], [1, 3], [3, 1]] {
        let picked = policy.decide_deterministic(&states, fleet.n_repairmen);
        assert!(picked.len() <= fleet.n_repairmen, "decision exceeded capacity");
        assert!(picked.iter().all(|&m| m < states.len()), "decision named a missing machine");
    }
});
