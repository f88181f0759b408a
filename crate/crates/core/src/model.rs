//! Machine and fleet descriptions.
//!
//! A machine occupies one of `n_states` wear levels; 0 is as good as new.
//! Each period it is either operated or intervened. Operation at level x
//! costs K(x) and moves the machine by
//!
//! ```text
//! P0(x, x+1) = p_advance[x]      (one more level of wear)
//! P0(x, 0)   = p_fail[x]         (breakdown, thorough repair, lump cost B)
//! P0(x, x)   = 1 - p_advance[x] - p_fail[x]
//! ```
//!
//! An intervention at level x costs C(x) and lands on a strictly better
//! level y < x with probability P1(x, y); the machine does not wear during
//! that period. The kernel is lower triangular and row stochastic, with
//! rows skewed toward better outcomes (P1 strictly decreasing in y).
//!
//! The wear chain is truncated at `n_states - 1`: the top level cannot
//! advance. In `PureDeterioration` mode there are no failures and the top
//! level is absorbing under operation (optionally it resets at cost B, see
//! [`DeltaBehavior`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failure semantics of the wear chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Operation can fail back to level 0 at lump cost `fail_cost`.
    WithFailures,
    /// No failures; `p_fail` must be identically zero.
    PureDeterioration,
}

/// What operation does at the truncated top level in pure-deterioration mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DeltaBehavior {
    /// Top level self-loops at its own operating cost.
    #[default]
    Absorb,
    /// Top level resets to 0 at cost `fail_cost` (forced replacement).
    ResetWithCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub beta: f64,
    pub n_states: usize,
    /// P0(x, x+1) for x = 0..n_states; the last entry is structurally 0.
    pub p_advance: Vec<f64>,
    /// P0(x, 0) for x = 0..n_states; entry 0 is structurally 0.
    pub p_fail: Vec<f64>,
    /// Lower-triangular kernel, one row per x = 1..n_states; row x holds
    /// P1(x, y) for y = 0..x.
    pub intervention_kernel: Vec<Vec<f64>>,
    /// K(x), expected operating cost per period.
    pub op_cost: Vec<f64>,
    /// C(x), intervention cost.
    pub maint_cost: Vec<f64>,
    /// B, lump cost of a failure (charged on arrival at level 0).
    pub fail_cost: f64,
    pub mode: Mode,
    #[serde(default)]
    pub delta_behavior: DeltaBehavior,
    /// C(n_states), one step past truncation. Only ever multiplied by the
    /// structurally zero top-level advance probability; kept explicit so
    /// index formulas evaluate uniformly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maint_cost_boundary: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Raw calibration bundle from which [`build_machine`] derives a spec.
///
/// Wear advances at rate `r` per attained level: p_advance[x] = min(r(x+1),
/// 1 - p_fail[x]). Failure probability grows exponentially: p_fail[x] =
/// q e^(x/s) for x >= 1. Intervention outcomes decay geometrically:
/// P1(x, y) proportional to e^(-nu y). Costs are C(x) = a + bx and
/// K(x) = e + fx + gx^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineParams {
    pub beta: f64,
    pub n_states: usize,
    /// r, wear rate per attained level.
    pub deterioration_rate: f64,
    /// q, failure probability coefficient.
    pub failure_coeff: f64,
    /// s, exponential scale of the failure probability.
    pub failure_scale: f64,
    /// nu, decay of intervention outcome weights.
    pub intervention_decay: f64,
    /// a, intervention cost intercept.
    pub maint_intercept: f64,
    /// b, intervention cost slope.
    pub maint_slope: f64,
    /// e, operating cost intercept.
    pub op_intercept: f64,
    /// f, operating cost slope.
    pub op_slope: f64,
    /// g, operating cost quadratic coefficient (0 for linear).
    pub op_quad: f64,
    /// B, failure lump cost.
    pub fail_cost: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub machines: Vec<MachineSpec>,
    pub n_repairmen: usize,
    /// Repairmen may idle; machines whose index is not positive are left
    /// alone rather than filled up to capacity.
    pub allow_idle: bool,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid machine spec: {0}")]
    Invalid(String),
}

/// One-period operation outcome probabilities with the top-level semantics
/// already resolved. `reset` carries the failure lump cost whenever it fires.
#[derive(Debug, Clone, Copy)]
pub struct OpRow {
    pub stay: f64,
    pub advance: f64,
    pub reset: f64,
}

impl MachineSpec {
    pub fn stay(&self, x: usize) -> f64 {
        1.0 - self.p_advance[x] - self.p_fail[x]
    }

    /// P1(x, .) for x >= 1, entries y = 0..x.
    pub fn kernel_row(&self, x: usize) -> &[f64] {
        &self.intervention_kernel[x - 1]
    }

    /// Operation transition at level x with [`DeltaBehavior`] applied.
    pub fn op_row(&self, x: usize) -> OpRow {
        if self.mode == Mode::PureDeterioration
            && self.delta_behavior == DeltaBehavior::ResetWithCost
            && x == self.n_states - 1
        {
            return OpRow { stay: 0.0, advance: 0.0, reset: 1.0 };
        }
        OpRow { stay: self.stay(x), advance: self.p_advance[x], reset: self.p_fail[x] }
    }

    /// C(x) for x = 0..=n_states; the boundary value extrapolates the cost
    /// line when not stored explicitly.
    pub fn maint_cost_at(&self, x: usize) -> f64 {
        if x < self.n_states {
            return self.maint_cost[x];
        }
        debug_assert_eq!(x, self.n_states);
        self.maint_cost_boundary.unwrap_or_else(|| {
            let n = self.n_states;
            if n >= 2 {
                2.0 * self.maint_cost[n - 1] - self.maint_cost[n - 2]
            } else {
                self.maint_cost[n - 1]
            }
        })
    }

    /// Invariant violations, each naming the offending state. Empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let n = self.n_states;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            v.push(format!("beta {} outside (0, 1)", self.beta));
        }
        if n == 0 {
            v.push("n_states is 0".into());
            return v;
        }
        for (name, vec) in [
            ("p_advance", &self.p_advance),
            ("p_fail", &self.p_fail),
            ("op_cost", &self.op_cost),
            ("maint_cost", &self.maint_cost),
        ] {
            if vec.len() != n {
                v.push(format!("{name} has length {} but n_states is {n}", vec.len()));
            }
            if let Some(x) = vec.iter().position(|p| !p.is_finite()) {
                v.push(format!("{name} not finite at x={x}"));
            }
        }
        if !self.fail_cost.is_finite() {
            v.push("fail_cost not finite".into());
        }
        if self.p_advance.len() != n || self.p_fail.len() != n {
            return v; // length errors make the positional checks meaningless
        }
        if v.iter().any(|m| m.contains("not finite")) {
            return v;
        }
        for x in 0..n {
            let (pa, pf) = (self.p_advance[x], self.p_fail[x]);
            if !(0.0..=1.0).contains(&pa) {
                v.push(format!("p_advance[{x}]={pa} outside [0, 1]"));
            }
            if !(0.0..=1.0).contains(&pf) {
                v.push(format!("p_fail[{x}]={pf} outside [0, 1]"));
            }
            if pa + pf > 1.0 + 1e-12 {
                v.push(format!("operation row not stochastic at x={x}: p_advance + p_fail = {}", pa + pf));
            }
        }
        if self.p_advance[n - 1] != 0.0 {
            v.push(format!("p_advance[{}] must be 0 at the truncated top level", n - 1));
        }
        if self.p_fail[0] != 0.0 {
            v.push("p_fail[0] must be 0 (no failures when as good as new)".into());
        }
        // The top entry is structurally zeroed, so monotonicity stops at n-2.
        for x in 0..n.saturating_sub(2) {
            if self.p_advance[x + 1] < self.p_advance[x] {
                v.push(format!("p_advance not non-decreasing at x={}", x + 1));
            }
        }
        for x in 0..n.saturating_sub(1) {
            if self.p_fail[x + 1] < self.p_fail[x] {
                v.push(format!("p_fail not non-decreasing at x={}", x + 1));
            }
        }
        if self.mode == Mode::PureDeterioration {
            if let Some(x) = self.p_fail.iter().position(|&p| p != 0.0) {
                v.push(format!("p_fail[{x}] nonzero in pure-deterioration mode"));
            }
        }
        if self.intervention_kernel.len() != n.saturating_sub(1) {
            v.push(format!(
                "intervention_kernel has {} rows but needs one per x = 1..{n}",
                self.intervention_kernel.len()
            ));
        } else {
            for x in 1..n {
                let row = self.kernel_row(x);
                if row.len() != x {
                    v.push(format!("P1({x}, .) has {} entries but needs {x}", row.len()));
                    continue;
                }
                if let Some(y) = row.iter().position(|p| !p.is_finite() || *p < 0.0) {
                    v.push(format!("P1({x}, {y}) invalid"));
                    continue;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    v.push(format!("P1({x}, .) sums to {sum}, not 1"));
                }
                for y in 0..x - 1 {
                    if row[y] <= row[y + 1] {
                        v.push(format!("P1({x}, {y}) <= P1({x}, {})", y + 1));
                    }
                }
            }
        }
        for (name, costs) in [("op_cost", &self.op_cost), ("maint_cost", &self.maint_cost)] {
            if costs.len() != n {
                continue;
            }
            if let Some(x) = costs.iter().position(|&c| c < 0.0) {
                v.push(format!("{name}[{x}] negative"));
            }
            for x in 0..n - 1 {
                if costs[x + 1] < costs[x] {
                    v.push(format!("{name} not non-decreasing at x={}", x + 1));
                }
            }
        }
        if self.fail_cost < 0.0 {
            v.push("fail_cost negative".into());
        }
        if let Some(b) = self.maint_cost_boundary {
            if !b.is_finite() || b < 0.0 {
                v.push("maint_cost_boundary invalid".into());
            }
        }
        v
    }
}

impl FleetSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.machines.is_empty() {
            v.push("fleet has no machines".into());
        }
        if self.n_repairmen < 1 {
            v.push("n_repairmen must be at least 1".into());
        }
        if self.n_repairmen > self.machines.len() {
            v.push(format!(
                "n_repairmen {} exceeds machine count {}",
                self.n_repairmen,
                self.machines.len()
            ));
        }
        for (m, spec) in self.machines.iter().enumerate() {
            for msg in spec.validate() {
                v.push(format!("machine {m}: {msg}"));
            }
        }
        v
    }
}

/// Derives a full [`MachineSpec`] from a calibration bundle and validates it.
///
/// Deterministic: identical bundles yield bit-identical specs. Failure
/// probabilities that would leave the unit interval are clamped and noted in
/// `warnings`; any violated invariant rejects the bundle with the first
/// violation by name.
pub fn build_machine(params: &MachineParams) -> Result<MachineSpec, ModelError> {
    let n = params.n_states;
    if n == 0 {
        return Err(ModelError::Invalid("n_states is 0".into()));
    }
    let mut warnings = Vec::new();
    let mut p_fail = vec![0.0; n];
    if params.mode == Mode::WithFailures {
        for x in 1..n {
            let raw = params.failure_coeff * (x as f64 / params.failure_scale).exp();
            if raw > 1.0 {
                warnings.push(format!("p_fail[{x}] clamped from {raw} to 1"));
                p_fail[x] = 1.0;
            } else {
                p_fail[x] = raw;
            }
        }
    }
    let mut p_advance = vec![0.0; n];
    for x in 0..n.saturating_sub(1) {
        let raw = params.deterioration_rate * (x as f64 + 1.0);
        let cap = 1.0 - p_fail[x];
        if raw > cap {
            warnings.push(format!("p_advance[{x}] clamped from {raw} to {cap}"));
            p_advance[x] = cap;
        } else {
            p_advance[x] = raw;
        }
    }
    let mut kernel = Vec::with_capacity(n.saturating_sub(1));
    for x in 1..n {
        let weights: Vec<f64> = (0..x).map(|y| (-params.intervention_decay * y as f64).exp()).collect();
        let total: f64 = weights.iter().sum();
        kernel.push(weights.into_iter().map(|w| w / total).collect());
    }
    let op_cost = (0..n)
        .map(|x| params.op_intercept + params.op_slope * x as f64 + params.op_quad * (x * x) as f64)
        .collect();
    let maint_cost = (0..n).map(|x| params.maint_intercept + params.maint_slope * x as f64).collect();
    let spec = MachineSpec {
        beta: params.beta,
        n_states: n,
        p_advance,
        p_fail,
        intervention_kernel: kernel,
        op_cost,
        maint_cost,
        fail_cost: if params.mode == Mode::PureDeterioration { 0.0 } else { params.fail_cost },
        mode: params.mode,
        delta_behavior: DeltaBehavior::Absorb,
        maint_cost_boundary: Some(params.maint_intercept + params.maint_slope * n as f64),
        warnings,
    };
    match spec.validate().into_iter().next() {
        Some(first) => Err(ModelError::Invalid(first)),
        None => Ok(spec),
    }
}

/// Calibration bundles for the four-machine demo fleet used in the docs,
/// the CLI examples, and the regression fixtures: 25 wear levels, shared
/// failure curve and intervention decay, per-machine wear rates and costs.
pub fn demo_params(beta: f64) -> Vec<MachineParams> {
    let rates = [0.0208, 0.0245, 0.0180, 0.0149];
    let maint = [(174.5432, 11.8462), (197.2394, 14.5003), (174.4626, 10.5560), (166.8860, 13.9013)];
    let op = [
        (27.7880, 1.3073, 0.4915),
        (26.1096, 1.5329, 0.5054),
        (24.2345, 1.5620, 0.5751),
        (20.9082, 1.8802, 0.5036),
    ];
    (0..4)
        .map(|i| MachineParams {
            beta,
            n_states: 25,
            deterioration_rate: rates[i],
            failure_coeff: 0.0061,
            failure_scale: 6.0,
            intervention_decay: 1.9436,
            maint_intercept: maint[i].0,
            maint_slope: maint[i].1,
            op_intercept: op[i].0,
            op_slope: op[i].1,
            op_quad: op[i].2,
            fail_cost: 4684.7,
            mode: Mode::WithFailures,
        })
        .collect()
}

/// The demo fleet itself: four machines, two repairmen, idling allowed.
pub fn demo_fleet(beta: f64) -> FleetSpec {
    let machines = demo_params(beta).iter().map(|p| build_machine(p).expect("demo calibration is valid")).collect();
    FleetSpec { machines, n_repairmen: 2, allow_idle: true }
}
