//! Closed-form fair-charge indices for a single machine.
//!
//! The index W(x) of wear level x is the intervention charge that makes the
//! scheduler indifferent, at x, between operating and intervening, in the
//! charge-augmented single-machine problem
//!
//! ```text
//! V(y) = min{ K(y) + beta E0[V | y],  C(y) + W + beta E1[V | y] }
//! ```
//!
//! where E0 averages over the operation kernel P0 (stay / advance / reset
//! with lump B) and E1 over the intervention kernel P1. At W = W(x) the
//! operate region is exactly {y : y <= x} modulo the tie at x, so every
//! value the indifference equation touches reduces to first-passage
//! quantities of the operation chain below x. Those come from three
//! per-level ratios:
//!
//! ```text
//! delta(x) = beta P0(x, x+1) / (1 - beta P0(x, x))
//! kappa(x) = K(x)            / (1 - beta P0(x, x))
//! gamma(x) = beta P0(x, 0)   / (1 - beta P0(x, x)),  gamma(0) = 0
//! ```
//!
//! With D(x) = 1 - sum_{i<x} gamma(i) prod_{z<i} delta(z), the expected
//! discount to first reach x from below and the matching accumulated
//! operating cost (failure lump B included, charged one period after the
//! failing decision) are
//!
//! ```text
//! E[beta^tau(0,x)] = prod_{y<x} delta(y) / D(x)
//! E[beta^tau(y,x)] = prod_{h=y..x-1} delta(h) * D(y) / D(x)
//! K(0, tau(0,x))   = sum_{y<x} (kappa(y) + gamma(y) B) prod_{z<y} delta(z) / D(x)
//! K(y, tau(y,x))   = K(y, tau(y,y+1)) + E[beta^tau(y,y+1)] K(y+1, tau(y+1,x))
//! ```
//!
//! Below x the chain climbs back: V(y) = k(y) + e(y) V(x) with
//! e(y) = E[beta^tau(y,x)], k(y) = K(y, tau(y,x)). Weighing those against
//! P1 rows gives Ebar, Kbar (kernel at x, levels y < x) and Ebar', Kbar'
//! (kernel at x+1, levels y <= x, where e(x) = 1, k(x) = 0). Substituting
//! into the indifference pair -- intervene vs operate at x, with level x+1
//! intervening immediately -- and eliminating V(x+1), W leaves one linear
//! equation for V = V(x):
//!
//! ```text
//! V [ 1 - beta P0(x,x) - beta P0(x,x+1) (1 - beta Ebar + beta Ebar')
//!       - beta P0(x,0) E[beta^tau(0,x)] ]
//!   = K(x) + beta P0(x,x+1) (C(x+1) - C(x) + beta (Kbar' - Kbar))
//!     + beta P0(x,0) (B + K(0, tau(0,x)))
//!
//! W(x) = V (1 - beta Ebar) - C(x) - beta Kbar
//! ```
//!
//! At the top level P0(x, x+1) = 0 and the primed terms drop out. The same
//! assembly covers the no-failure variant (P0(x,0) = 0 collapses the gamma
//! terms) and the perfect-intervention variant (P1(x, .) concentrated at 0).
//!
//! H(x) is the fair retirement subsidy of the stopping problem that
//! operates through x and retires on leaving {0..x}; it is the monotone
//! statistic that certifies the threshold structure:
//!
//! ```text
//! H(x) = [ K(x) + beta P0(x,0)(K(0,tau(0,x)) + B)
//!          + beta P0(x,x) C(x) + beta P0(x,x+1) C(x+1)
//!          + beta P0(x,0) E[beta^tau(0,x)] C(x) - C(x) ]
//!        / [ 1 - beta(1 - P0(x,0)) - beta P0(x,0) E[beta^tau(0,x)] ]
//! ```
//!
//! A machine is flagged indexable when H is non-decreasing **and** the
//! assembled W is non-decreasing from level 1 up. Truncating the wear chain
//! can dent either one near the boundary (most visibly with an absorbing
//! top level and discounting close to 1); in that regime the operate region
//! is no longer a clean threshold family, the closed form loses its
//! footing, and the table is returned with `indexable = false` and `w`
//! empty rather than with numbers that look authoritative.
//!
//! W(0) is a convention, not an indifference point: the default -C(0) is the
//! charge that makes a (pointless) level-0 intervention free.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MachineSpec, Mode};

/// First-passage tables of the operation chain. Row x of the triangular
/// tables holds entries for starting levels y = 0..x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryTables {
    pub delta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub gamma: Vec<f64>,
    /// E[beta^tau(0,x)]; entry 0 is 1 (already there).
    pub e_beta_0x: Vec<f64>,
    /// E[beta^tau(y,x)] as `e_beta_yx[x][y]`.
    pub e_beta_yx: Vec<Vec<f64>>,
    /// K(0, tau(0,x)); entry 0 is 0.
    pub k_0x: Vec<f64>,
    /// K(y, tau(y,x)) as `k_yx[x][y]`.
    pub k_yx: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexVariant {
    Failures,
    PureDeterioration,
    PerfectIntervention,
}

/// Convention for the level-0 entry of the index table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum State0Rule {
    /// W(0) = -C(0).
    #[default]
    MinusMaintCost,
    /// W(0) = H(0).
    HFunction,
}

#[derive(Debug, Clone, Copy)]
pub struct IndexOptions {
    pub state0: State0Rule,
    /// Error out when a first-passage denominator D(x) falls below this.
    pub denominator_floor: f64,
    /// H may dip by this much between consecutive levels and still count as
    /// non-decreasing (floating-point ties).
    pub monotone_tolerance: f64,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions { state0: State0Rule::default(), denominator_floor: 1e-12, monotone_tolerance: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexTable {
    #[serde(default)]
    pub machine_id: usize,
    pub variant: IndexVariant,
    pub indexable: bool,
    /// W(x) per level; empty when not indexable.
    pub w: Vec<f64>,
    /// H(x) per level; always populated.
    pub h: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("first-passage denominator D({state}) = {value} fell below the {floor} floor")]
    NearSingular { state: usize, value: f64, floor: f64 },
    #[error("spec has failure mass at level {state}; the pure-deterioration index does not apply")]
    FailuresPresent { state: usize },
    #[error("index computation produced a non-finite value at level {state}")]
    NonFinite { state: usize },
}

pub fn build_auxiliary(spec: &MachineSpec) -> Result<AuxiliaryTables, IndexError> {
    build_auxiliary_with(spec, IndexOptions::default().denominator_floor)
}

pub fn build_auxiliary_with(spec: &MachineSpec, floor: f64) -> Result<AuxiliaryTables, IndexError> {
    let n = spec.n_states;
    let beta = spec.beta;
    let b = spec.fail_cost;

    let mut delta = vec![0.0; n];
    let mut kappa = vec![0.0; n];
    let mut gamma = vec![0.0; n];
    for x in 0..n {
        let row = spec.op_row(x);
        let denom = 1.0 - beta * row.stay;
        if denom < floor {
            return Err(IndexError::NearSingular { state: x, value: denom, floor });
        }
        delta[x] = beta * row.advance / denom;
        kappa[x] = spec.op_cost[x] / denom;
        // gamma(0) = 0 by definition; level 0 has no failures.
        gamma[x] = if x == 0 { 0.0 } else { beta * row.reset / denom };
    }

    // prod[x] = prod_{z<x} delta(z); d[x] = D(x). Both start at 1.
    let mut prod = vec![1.0; n];
    let mut d = vec![1.0; n];
    let mut k_num = vec![0.0; n]; // sum_{y<x} (kappa(y) + gamma(y) B) prod[y]
    for x in 1..n {
        prod[x] = prod[x - 1] * delta[x - 1];
        d[x] = d[x - 1] - gamma[x - 1] * prod[x - 1];
        k_num[x] = k_num[x - 1] + (kappa[x - 1] + gamma[x - 1] * b) * prod[x - 1];
        if d[x] < floor {
            return Err(IndexError::NearSingular { state: x, value: d[x], floor });
        }
    }

    let e_beta_0x: Vec<f64> = (0..n).map(|x| prod[x] / d[x]).collect();
    let k_0x: Vec<f64> = (0..n).map(|x| k_num[x] / d[x]).collect();

    // Per-step climb quantities; their denominator is D(y+1)/D(y), already
    // guarded through d above but re-checked since it feeds a division.
    let mut e_step = vec![0.0; n];
    let mut k_step = vec![0.0; n];
    for y in 0..n {
        let denom = 1.0 - gamma[y] * e_beta_0x[y];
        if denom < floor {
            return Err(IndexError::NearSingular { state: y, value: denom, floor });
        }
        e_step[y] = delta[y] / denom;
        k_step[y] = (kappa[y] + gamma[y] * (k_0x[y] + b)) / denom;
    }

    let mut e_beta_yx = Vec::with_capacity(n);
    let mut k_yx = Vec::with_capacity(n);
    for x in 0..n {
        let mut e_row = vec![0.0; x];
        let mut k_row = vec![0.0; x];
        for y in (0..x).rev() {
            let ahead_e = if y + 1 == x { 1.0 } else { e_row[y + 1] };
            let ahead_k = if y + 1 == x { 0.0 } else { k_row[y + 1] };
            e_row[y] = e_step[y] * ahead_e;
            k_row[y] = k_step[y] + e_step[y] * ahead_k;
        }
        e_beta_yx.push(e_row);
        k_yx.push(k_row);
    }

    let tables = AuxiliaryTables { delta, kappa, gamma, e_beta_0x, e_beta_yx, k_0x, k_yx };
    for x in 0..n {
        if !tables.e_beta_0x[x].is_finite() || !tables.k_0x[x].is_finite() {
            return Err(IndexError::NonFinite { state: x });
        }
    }
    Ok(tables)
}

/// H(x): value of continued operation against retirement at C(x), one entry
/// per level. The level-0 entry reduces to (K(0) + beta P0(0,0) C(0) +
/// beta P0(0,1) C(1) - C(0)) / (1 - beta) because gamma(0) = 0.
pub fn h_function(spec: &MachineSpec, aux: &AuxiliaryTables) -> Vec<f64> {
    let beta = spec.beta;
    (0..spec.n_states)
        .map(|x| {
            let row = spec.op_row(x);
            let c_here = spec.maint_cost[x];
            let c_next = spec.maint_cost_at(x + 1);
            let e0 = aux.e_beta_0x[x];
            let numerator = spec.op_cost[x]
                + beta * row.reset * (aux.k_0x[x] + spec.fail_cost)
                + beta * row.stay * c_here
                + beta * row.advance * c_next
                + beta * row.reset * e0 * c_here
                - c_here;
            let e_revisit = beta * (1.0 - row.reset) + beta * row.reset * e0;
            numerator / (1.0 - e_revisit)
        })
        .collect()
}

/// Expected repair-point terms at level x: the kernel-weighted climb
/// discount E_y[beta^tau(y,x)] and climb cost E_y[K(y, tau(y,x))].
pub fn repair_expectations(spec: &MachineSpec, aux: &AuxiliaryTables, x: usize) -> (f64, f64) {
    let row = spec.kernel_row(x);
    let mut e_bar = 0.0;
    let mut k_bar = 0.0;
    for (y, p) in row.iter().enumerate() {
        e_bar += p * aux.e_beta_yx[x][y];
        k_bar += p * aux.k_yx[x][y];
    }
    (e_bar, k_bar)
}

/// B(x, w): per-cycle cost of committing to intervene whenever the machine
/// reaches x, under intervention charge w. Strictly increasing in w.
pub fn b_policy_cost(spec: &MachineSpec, aux: &AuxiliaryTables, x: usize, w: f64) -> f64 {
    assert!(x >= 1, "the always-intervene commitment needs a level to repair from");
    let (e_bar, k_bar) = repair_expectations(spec, aux, x);
    (w + k_bar + e_bar * spec.maint_cost[x]) / (1.0 - e_bar)
}

/// W(x) for x >= 1: solve the indifference pair at x for V(x), then read the
/// charge off the intervene branch. Level x+1 is treated as intervening
/// immediately, which is what the threshold structure asserts and what the
/// monotone-W gate certifies after the fact.
fn indifference_index(spec: &MachineSpec, aux: &AuxiliaryTables, x: usize, floor: f64) -> Result<f64, IndexError> {
    let beta = spec.beta;
    let row = spec.op_row(x);
    let (e_bar, k_bar) = repair_expectations(spec, aux, x);
    let e0 = aux.e_beta_0x[x];
    let k0 = aux.k_0x[x];
    let mut coef = 1.0 - beta * row.stay - beta * row.reset * e0;
    let mut rhs = spec.op_cost[x] + beta * row.reset * (spec.fail_cost + k0);
    if row.advance != 0.0 {
        // Climb terms seen from x+1's intervention kernel; the y = x entry
        // is the climb of length zero.
        let mut e_bar_next = 0.0;
        let mut k_bar_next = 0.0;
        for (y, p) in spec.kernel_row(x + 1).iter().enumerate() {
            if y == x {
                e_bar_next += p;
            } else {
                e_bar_next += p * aux.e_beta_yx[x][y];
                k_bar_next += p * aux.k_yx[x][y];
            }
        }
        coef -= beta * row.advance * (1.0 - beta * e_bar + beta * e_bar_next);
        rhs += beta
            * row.advance
            * (spec.maint_cost[x + 1] - spec.maint_cost[x] + beta * (k_bar_next - k_bar));
    }
    if coef < floor {
        return Err(IndexError::NearSingular { state: x, value: coef, floor });
    }
    let v = rhs / coef;
    Ok(v * (1.0 - beta * e_bar) - spec.maint_cost[x] - beta * k_bar)
}

fn monotone(h: &[f64], tolerance: f64) -> bool {
    h.windows(2).all(|p| p[1] - p[0] >= -tolerance)
}

fn state0_value(rule: State0Rule, spec: &MachineSpec, h: &[f64]) -> f64 {
    match rule {
        State0Rule::MinusMaintCost => -spec.maint_cost[0],
        State0Rule::HFunction => h[0],
    }
}

pub fn w_index_failures(spec: &MachineSpec) -> Result<IndexTable, IndexError> {
    w_index_failures_with(spec, IndexOptions::default())
}

/// Fair-charge index under failing operation. Not-indexable machines get an
/// empty `w` and `indexable = false`; callers must fall back.
pub fn w_index_failures_with(spec: &MachineSpec, opts: IndexOptions) -> Result<IndexTable, IndexError> {
    assemble(spec, opts, IndexVariant::Failures)
}

/// Shared gate-and-assemble path behind every variant. Two monotonicity
/// checks: H certifies the stopping problem, W certifies that the threshold
/// family the assembly presumes actually nests. Either failing flags the
/// machine as not indexable.
fn assemble(spec: &MachineSpec, opts: IndexOptions, variant: IndexVariant) -> Result<IndexTable, IndexError> {
    let aux = build_auxiliary_with(spec, opts.denominator_floor)?;
    let h = h_function(spec, &aux);
    if let Some(x) = h.iter().position(|v| !v.is_finite()) {
        return Err(IndexError::NonFinite { state: x });
    }
    if !monotone(&h, opts.monotone_tolerance) {
        return Ok(IndexTable { machine_id: 0, variant, indexable: false, w: Vec::new(), h });
    }
    let mut w = Vec::with_capacity(spec.n_states);
    w.push(state0_value(opts.state0, spec, &h));
    for x in 1..spec.n_states {
        w.push(indifference_index(spec, &aux, x, opts.denominator_floor)?);
    }
    if let Some(x) = w.iter().position(|v| !v.is_finite()) {
        return Err(IndexError::NonFinite { state: x });
    }
    if !monotone(&w[1..], opts.monotone_tolerance) {
        return Ok(IndexTable { machine_id: 0, variant, indexable: false, w: Vec::new(), h });
    }
    Ok(IndexTable { machine_id: 0, variant, indexable: true, w, h })
}

pub fn w_index_pure(spec: &MachineSpec) -> Result<IndexTable, IndexError> {
    w_index_pure_with(spec, IndexOptions::default())
}

/// Fair-charge index without failures. Same assembly as the failures route
/// -- the reset terms carry zero mass, gamma vanishes, and the first
/// passage to x happens surely -- but the entry point rejects specs that
/// carry failure mass instead of silently absorbing it.
pub fn w_index_pure_with(spec: &MachineSpec, opts: IndexOptions) -> Result<IndexTable, IndexError> {
    if let Some(x) = spec.p_fail.iter().position(|&p| p != 0.0) {
        return Err(IndexError::FailuresPresent { state: x });
    }
    assemble(spec, opts, IndexVariant::PureDeterioration)
}

pub fn w_index_perfect(spec: &MachineSpec) -> Result<IndexTable, IndexError> {
    w_index_perfect_with(spec, IndexOptions::default())
}

/// Index under the as-good-as-new intervention kernel P1(x, 0) = 1. This is
/// a kernel substitution into the matching variant, so on a spec whose
/// kernel is already perfect it reproduces that variant's output exactly.
pub fn w_index_perfect_with(spec: &MachineSpec, opts: IndexOptions) -> Result<IndexTable, IndexError> {
    let mut perfect = spec.clone();
    for x in 1..perfect.n_states {
        let mut row = vec![0.0; x];
        row[0] = 1.0;
        perfect.intervention_kernel[x - 1] = row;
    }
    let mut table = match spec.mode {
        Mode::WithFailures => w_index_failures_with(&perfect, opts)?,
        Mode::PureDeterioration => w_index_pure_with(&perfect, opts)?,
    };
    table.variant = IndexVariant::PerfectIntervention;
    Ok(table)
}

/// Index table for `spec` through the variant its mode calls for.
pub fn w_index(spec: &MachineSpec) -> Result<IndexTable, IndexError> {
    w_index_with(spec, IndexOptions::default())
}

pub fn w_index_with(spec: &MachineSpec, opts: IndexOptions) -> Result<IndexTable, IndexError> {
    match spec.mode {
        Mode::WithFailures => w_index_failures_with(spec, opts),
        Mode::PureDeterioration => w_index_pure_with(spec, opts),
    }
}
