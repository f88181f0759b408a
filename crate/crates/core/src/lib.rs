//! Index policies for scheduling preventive maintenance across a fleet of
//! deteriorating machines when repairs have random outcomes.
//!
//! Each machine is a discrete-time chain over wear levels 0..n: operating
//! lets it stay, advance one level, or fail back to new (at cost B);
//! intervening moves it to a random strictly better level. A fair
//! intervention charge per level — the W-index — is computed in closed form
//! by [`index`], certified against the exact single-machine solvers of
//! [`mdp`], and drives the fleet schedulers of [`policy`] that are compared
//! under exact evaluation ([`mdp`]) and Monte Carlo simulation ([`sim`])
//! through the experiment harness of [`experiment`].

#![forbid(unsafe_code)]

pub mod experiment;
pub mod index;
pub mod mdp;
pub mod model;
pub mod policy;
pub mod sim;
pub mod stream;

pub use experiment::{run_study, sample_scenario, RunReport, ScenarioConfig, Study};
pub use index::{w_index, IndexTable, IndexVariant};
pub use mdp::{evaluate_policy, gittins_oracle, solve_joint, whittle_oracle, JointMdp};
pub use model::{build_machine, FleetSpec, MachineParams, MachineSpec, Mode};
pub use policy::{enumerate_thresholds, Policy, PolicyKind, PolicySpec};
pub use sim::{simulate, simulate_batch, BatchResult, Trajectory};
