//! Exact dynamic-programming solvers used as ground truth for the closed
//! forms and the policy experiments.
//!
//! Single machine, intervention charge w (the relaxed problem):
//!
//! ```text
//! V(x) = min{ K(x) + b[P0(x,x)V(x) + P0(x,x+1)V(x+1) + P0(x,0)(B + V(0))],
//!             C(x) + w + b Sum_y P1(x,y) V(y) }
//! ```
//!
//! with the state-0 intervention modeled as a self-loop (C(0) + w + bV(0)).
//! Pi(w) is the set of states where the operation branch wins (ties go to
//! operation); `whittle_oracle` bisects on w for the boundary of membership,
//! and `gittins_oracle` computes the optimal stopping rate
//!
//! ```text
//! G(x) = inf_{tau>0} [K(x,tau) + E[b^tau C(X(tau))|x] - C(x)] / (1 - E[b^tau|x])
//! ```
//!
//! two independent ways: from the climb tables at the revisit time, and as
//! the crossing point of a retire-or-continue stopping problem solved by
//! value iteration over all stopping times.
//!
//! The joint fleet model multiplies the machine chains, restricts actions to
//! at most `n_repairmen` simultaneous interventions, and runs Jacobi value
//! iteration with the stopping rule (b/(1-b))·||V_{k+1}-V_k||_inf <=
//! epsilon·||V||_inf. Transition rows are assembled lazily per (state,
//! action) — nothing the size of the joint kernel is ever materialized.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::index::{build_auxiliary, AuxiliaryTables, IndexError};
use crate::model::{FleetSpec, MachineSpec};
use crate::policy::Policy;

pub const DEFAULT_VI_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_INDEX_TOLERANCE: f64 = 1e-8;
const MAX_BRACKET_DOUBLINGS: usize = 60;
const MAX_CHARGE_SWEEPS: usize = 200_000;
const MAX_BISECTIONS: usize = 300;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("joint model needs {required} expected-value entries; budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },
    #[error("value iteration stalled after {sweeps} sweeps (residual {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("machines must share one discount factor for the joint model")]
    MixedDiscount,
    #[error("fleet has no machines")]
    EmptyFleet,
    #[error("joint model supports at most 64 machines")]
    TooManyMachines,
    #[error("no indifference bracket after {doublings} doublings (lo {lo:.3e}, hi {hi:.3e}); the spec is malformed")]
    BracketFailure { doublings: usize, lo: f64, hi: f64 },
    #[error("closed-form rate {closed_form} and stopping value {stopping} disagree at state {state}: the increasing-rate assumption does not hold")]
    ModelInconsistency { state: usize, closed_form: f64, stopping: f64 },
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Tolerances for the indifference oracles.
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Absolute value-iteration tolerance inside each membership probe.
    pub vi_tolerance: f64,
    /// Absolute width at which the bisection bracket stops shrinking.
    pub index_tolerance: f64,
}

impl Default for OracleOptions {
    fn default() -> OracleOptions {
        OracleOptions { vi_tolerance: DEFAULT_VI_TOLERANCE, index_tolerance: DEFAULT_INDEX_TOLERANCE }
    }
}

/// Solved relaxed problem at one charge.
#[derive(Debug, Clone)]
pub struct WChargeSolution {
    pub w: f64,
    pub value: Vec<f64>,
    /// Pi(w): true where operation is optimal (ties included).
    pub operate_set: Vec<bool>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

// Convergence with an ulp floor: once the residual sits at rounding noise
// for the value scale, further sweeps cannot improve the fixed point.
fn converged(beta: f64, delta: f64, tolerance: f64, norm: f64) -> bool {
    beta / (1.0 - beta) * delta <= tolerance || delta <= 64.0 * f64::EPSILON * norm
}

fn charge_backup(spec: &MachineSpec, w: f64, v: &[f64], out: &mut [f64]) -> f64 {
    let beta = spec.beta;
    let mut delta = 0.0f64;
    for x in 0..spec.n_states {
        let row = spec.op_row(x);
        let climb = if row.advance > 0.0 { row.advance * v[x + 1] } else { 0.0 };
        let operate = spec.op_cost[x] + beta * (row.stay * v[x] + climb + row.reset * (spec.fail_cost + v[0]));
        let repair_target: f64 = if x == 0 {
            v[0]
        } else {
            spec.kernel_row(x).iter().enumerate().map(|(y, p)| p * v[y]).sum()
        };
        let intervene = spec.maint_cost[x] + w + beta * repair_target;
        let best = operate.min(intervene);
        delta = delta.max((best - v[x]).abs());
        out[x] = best;
    }
    delta
}

/// Value iteration for the single-machine problem under intervention charge
/// `w`, to absolute `tolerance`. A warm start skips most of the sweeps when
/// probing nearby charges.
pub fn w_charge_solution(
    spec: &MachineSpec,
    w: f64,
    tolerance: f64,
    warm: Option<&[f64]>,
) -> Result<WChargeSolution, MdpError> {
    let n = spec.n_states;
    let beta = spec.beta;
    let mut v = match warm {
        Some(s) if s.len() == n => s.to_vec(),
        _ => vec![0.0; n],
    };
    let mut next = vec![0.0; n];
    let mut done = false;
    let mut sweeps = 0;
    let mut delta = f64::INFINITY;
    while sweeps < MAX_CHARGE_SWEEPS {
        delta = charge_backup(spec, w, &v, &mut next);
        std::mem::swap(&mut v, &mut next);
        sweeps += 1;
        if converged(beta, delta, tolerance, max_abs(&v)) {
            done = true;
            break;
        }
    }
    if !done {
        return Err(MdpError::NoConvergence { sweeps, residual: delta });
    }
    let mut operate_set = vec![false; n];
    for x in 0..n {
        let row = spec.op_row(x);
        let climb = if row.advance > 0.0 { row.advance * v[x + 1] } else { 0.0 };
        let operate = spec.op_cost[x] + beta * (row.stay * v[x] + climb + row.reset * (spec.fail_cost + v[0]));
        let repair_target: f64 = if x == 0 {
            v[0]
        } else {
            spec.kernel_row(x).iter().enumerate().map(|(y, p)| p * v[y]).sum()
        };
        let intervene = spec.maint_cost[x] + w + beta * repair_target;
        operate_set[x] = operate <= intervene;
    }
    Ok(WChargeSolution { w, value: v, operate_set })
}

/// Pi(w) under default tolerances.
pub fn operate_set(spec: &MachineSpec, w: f64) -> Result<Vec<bool>, MdpError> {
    Ok(w_charge_solution(spec, w, DEFAULT_VI_TOLERANCE, None)?.operate_set)
}

/// The fair intervention charge at `x`: the infimum w for which operating at
/// `x` is optimal in the relaxed problem, found by bisection over an
/// expanding bracket. Independent of every closed-form table.
pub fn whittle_oracle(spec: &MachineSpec, x: usize) -> Result<f64, MdpError> {
    whittle_oracle_with(spec, x, &OracleOptions::default())
}

pub fn whittle_oracle_with(spec: &MachineSpec, x: usize, opts: &OracleOptions) -> Result<f64, MdpError> {
    let beta = spec.beta;
    let max_k = max_abs(&spec.op_cost);
    let max_c = max_abs(&spec.maint_cost);
    let mut lo = -max_c - max_k / (1.0 - beta);
    let mut hi = spec.fail_cost + max_k / (1.0 - beta);
    let mut warm: Option<Vec<f64>> = None;
    let probe = |w: f64, warm: &mut Option<Vec<f64>>| -> Result<bool, MdpError> {
        let sol = w_charge_solution(spec, w, opts.vi_tolerance, warm.as_deref())?;
        let member = sol.operate_set[x];
        *warm = Some(sol.value);
        Ok(member)
    };
    // Grow outward until hi is a member and lo is not.
    let mut width = (hi - lo).max(1.0);
    let mut doublings = 0;
    while !probe(hi, &mut warm)? {
        hi += width;
        width *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(MdpError::BracketFailure { doublings, lo, hi });
        }
    }
    width = (hi - lo).max(1.0);
    doublings = 0;
    while probe(lo, &mut warm)? {
        lo -= width;
        width *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(MdpError::BracketFailure { doublings, lo, hi });
        }
    }
    let mut rounds = 0;
    while hi - lo > opts.index_tolerance && rounds < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // f64 resolution exhausted
        }
        if probe(mid, &mut warm)? {
            hi = mid;
        } else {
            lo = mid;
        }
        rounds += 1;
    }
    Ok(0.5 * (lo + hi))
}

// The revisit-time rate assembled from the climb tables; identical
// arithmetic to the per-level rate of the analytic index path.
fn closed_form_rate(spec: &MachineSpec, aux: &AuxiliaryTables, x: usize) -> f64 {
    let beta = spec.beta;
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
}

// Phi(y) = min(C(y) + g, K(y) + b[stay Phi(y) + adv Phi(y+1) + reset (B + Phi(0))]).
fn stopping_backup(spec: &MachineSpec, g: f64, v: &[f64], out: &mut [f64]) -> f64 {
    let beta = spec.beta;
    let mut delta = 0.0f64;
    for y in 0..spec.n_states {
        let row = spec.op_row(y);
        let climb = if row.advance > 0.0 { row.advance * v[y + 1] } else { 0.0 };
        let cont = spec.op_cost[y] + beta * (row.stay * v[y] + climb + row.reset * (spec.fail_cost + v[0]));
        let best = (spec.maint_cost[y] + g).min(cont);
        delta = delta.max((best - v[y]).abs());
        out[y] = best;
    }
    delta
}

// Crossing point of the forced-continue value at x with the retirement line
// C(x) + g, over the stopping problem that may retire anywhere. For g above
// the crossing, continuing at x is (weakly) optimal.
fn stopping_rate(spec: &MachineSpec, x: usize, opts: &OracleOptions) -> Result<f64, MdpError> {
    let n = spec.n_states;
    let beta = spec.beta;
    let max_k = max_abs(&spec.op_cost);
    let max_c = max_abs(&spec.maint_cost);
    let scale = (max_c + (max_k + spec.fail_cost) / (1.0 - beta)).max(1.0);
    let mut warm = vec![0.0; n];
    let mut next = vec![0.0; n];
    let probe = |g: f64, warm: &mut Vec<f64>, next: &mut Vec<f64>| -> Result<bool, MdpError> {
        let tol = opts.vi_tolerance * scale.max(g.abs());
        let mut sweeps = 0;
        loop {
            let delta = stopping_backup(spec, g, warm, next);
            std::mem::swap(warm, next);
            sweeps += 1;
            if converged(beta, delta, tol, max_abs(warm)) {
                break;
            }
            if sweeps >= MAX_CHARGE_SWEEPS {
                return Err(MdpError::NoConvergence { sweeps, residual: delta });
            }
        }
        let row = spec.op_row(x);
        let climb = if row.advance > 0.0 { row.advance * warm[x + 1] } else { 0.0 };
        let cont = spec.op_cost[x] + beta * (row.stay * warm[x] + climb + row.reset * (spec.fail_cost + warm[0]));
        Ok(cont <= spec.maint_cost[x] + g)
    };
    let mut lo = -max_c - 1.0;
    let mut hi = scale / (1.0 - beta) + 1.0;
    let mut width = (hi - lo).max(1.0);
    let mut doublings = 0;
    while !probe(hi, &mut warm, &mut next)? {
        hi += width;
        width *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(MdpError::BracketFailure { doublings, lo, hi });
        }
    }
    width = (hi - lo).max(1.0);
    doublings = 0;
    while probe(lo, &mut warm, &mut next)? {
        lo -= width;
        width *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(MdpError::BracketFailure { doublings, lo, hi });
        }
    }
    let tol = opts.index_tolerance.max(1e-12 * scale);
    let mut rounds = 0;
    while hi - lo > tol && rounds < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if probe(mid, &mut warm, &mut next)? {
            hi = mid;
        } else {
            lo = mid;
        }
        rounds += 1;
    }
    Ok(0.5 * (lo + hi))
}

/// Optimal stopping rate for operating from `x` before intervening, computed
/// two independent ways: from the climb tables at the revisit time, and as
/// the indifference charge of the retire-or-continue problem over all
/// stopping times. The two must agree to 1e-6 relative — a disagreement
/// means the increasing-rate assumption fails for this spec — and the
/// closed-form value is returned.
pub fn gittins_oracle(spec: &MachineSpec, x: usize) -> Result<f64, MdpError> {
    gittins_oracle_with(spec, x, &OracleOptions::default())
}

pub fn gittins_oracle_with(spec: &MachineSpec, x: usize, opts: &OracleOptions) -> Result<f64, MdpError> {
    let aux = build_auxiliary(spec)?;
    let closed_form = closed_form_rate(spec, &aux, x);
    let stopping = stopping_rate(spec, x, opts)?;
    if (closed_form - stopping).abs() > 1e-6 * closed_form.abs().max(1.0) {
        return Err(MdpError::ModelInconsistency { state: x, closed_form, stopping });
    }
    Ok(closed_form)
}

/// Knobs for the joint solver.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative stopping tolerance (0.0001 = 0.01%).
    pub epsilon: f64,
    pub max_sweeps: usize,
    /// Refuse problems needing more than this many expected-value entries.
    pub max_entries: u128,
}

impl Default for SolveOptions {
    fn default() -> SolveOptions {
        SolveOptions { epsilon: 1e-4, max_sweeps: 1_000_000, max_entries: 100_000_000 }
    }
}

/// Solved joint fleet model.
#[derive(Debug, Clone, Serialize)]
pub struct JointMdp {
    pub n_joint_states: usize,
    /// Per-machine state-space sizes; machine 0 varies fastest in the joint index.
    pub dims: Vec<usize>,
    /// Admissible action bitmasks (bit m = intervene machine m), ordered by
    /// intervention count, then lexicographically on the action vector.
    pub actions: Vec<u64>,
    pub value: Vec<f64>,
    /// Greedy argmin per joint state, as an index into `actions`.
    pub policy: Vec<u32>,
    pub iterations: usize,
    /// Sup-norm residual per sweep.
    pub residuals: Vec<f64>,
    pub value_at_origin: f64,
}

/// Exact value of one fixed decision rule on the joint model.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyEvaluation {
    pub value: Vec<f64>,
    pub value_at_origin: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

struct JointTables {
    beta: f64,
    dims: Vec<usize>,
    /// [machine][level] -> (joint-index contribution, probability).
    op_out: Vec<Vec<Vec<(usize, f64)>>>,
    int_out: Vec<Vec<Vec<(usize, f64)>>>,
    /// Stage costs: operation folds the discounted failure charge in.
    op_cost: Vec<Vec<f64>>,
    int_cost: Vec<Vec<f64>>,
}

fn build_joint_tables(fleet: &FleetSpec) -> Result<JointTables, MdpError> {
    let machines = &fleet.machines;
    if machines.is_empty() {
        return Err(MdpError::EmptyFleet);
    }
    if machines.len() > 64 {
        return Err(MdpError::TooManyMachines);
    }
    let beta = machines[0].beta;
    if machines.iter().any(|m| m.beta != beta) {
        return Err(MdpError::MixedDiscount);
    }
    let dims: Vec<usize> = machines.iter().map(|m| m.n_states).collect();
    let mut strides = vec![1usize; machines.len()];
    for m in 1..machines.len() {
        strides[m] = strides[m - 1] * dims[m - 1];
    }
    let mut op_out = Vec::with_capacity(machines.len());
    let mut int_out = Vec::with_capacity(machines.len());
    let mut op_cost = Vec::with_capacity(machines.len());
    let mut int_cost = Vec::with_capacity(machines.len());
    for (m, spec) in machines.iter().enumerate() {
        let stride = strides[m];
        let mut op_rows = Vec::with_capacity(spec.n_states);
        let mut int_rows = Vec::with_capacity(spec.n_states);
        let mut op_costs = Vec::with_capacity(spec.n_states);
        let mut int_costs = Vec::with_capacity(spec.n_states);
        for x in 0..spec.n_states {
            let row = spec.op_row(x);
            let mut outs = Vec::new();
            if row.stay > 0.0 {
                outs.push((x * stride, row.stay));
            }
            if row.advance > 0.0 {
                outs.push(((x + 1) * stride, row.advance));
            }
            if row.reset > 0.0 {
                outs.push((0, row.reset));
            }
            op_rows.push(outs);
            op_costs.push(spec.op_cost[x] + beta * row.reset * spec.fail_cost);
            if x == 0 {
                int_rows.push(Vec::new()); // inadmissible; never dereferenced
            } else {
                int_rows.push(
                    spec.kernel_row(x)
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p > 0.0)
                        .map(|(y, p)| (y * stride, *p))
                        .collect(),
                );
            }
            int_costs.push(spec.maint_cost[x]);
        }
        op_out.push(op_rows);
        int_out.push(int_rows);
        op_cost.push(op_costs);
        int_cost.push(int_costs);
    }
    Ok(JointTables { beta, dims, op_out, int_out, op_cost, int_cost })
}

fn joint_size(dims: &[usize]) -> u128 {
    dims.iter().fold(1u128, |a, &d| a.saturating_mul(d as u128))
}

fn count_actions(n_machines: usize, n_repairmen: usize) -> u128 {
    let mut total = 0u128;
    let mut choose = 1u128;
    for k in 0..=n_repairmen.min(n_machines) {
        if k > 0 {
            choose = choose.saturating_mul((n_machines - k + 1) as u128) / k as u128;
        }
        total = total.saturating_add(choose);
    }
    total
}

fn admissible_actions(n_machines: usize, n_repairmen: usize) -> Vec<u64> {
    fn push(mask: u64, from: usize, remaining: usize, n: usize, out: &mut Vec<u64>) {
        if remaining == 0 {
            out.push(mask);
            return;
        }
        for m in from..n {
            push(mask | 1 << m, m + 1, remaining - 1, n, out);
        }
    }
    let mut actions = Vec::new();
    for k in 0..=n_repairmen.min(n_machines) {
        push(0, 0, k, n_machines, &mut actions);
    }
    // Fewest interventions first; within a count, lexicographically smallest
    // action vector (machine 0 is the leftmost coordinate).
    actions.sort_unstable_by_key(|&m| (m.count_ones(), m.reverse_bits()));
    actions
}

fn decode(dims: &[usize], mut s: usize, out: &mut [usize]) {
    for (m, &d) in dims.iter().enumerate() {
        out[m] = s % d;
        s /= d;
    }
}

fn expect(lists: &[&[(usize, f64)]], depth: usize, idx: usize, prob: f64, v: &[f64]) -> f64 {
    if depth == lists.len() {
        return prob * v[idx];
    }
    let mut acc = 0.0;
    for &(contribution, p) in lists[depth] {
        acc += expect(lists, depth + 1, idx + contribution, prob * p, v);
    }
    acc
}

fn action_value(t: &JointTables, mask: u64, digits: &[usize], v: &[f64]) -> f64 {
    let mut lists: [&[(usize, f64)]; 64] = [&[]; 64];
    let mut cost = 0.0;
    for (m, &x) in digits.iter().enumerate() {
        if mask >> m & 1 == 1 {
            cost += t.int_cost[m][x];
            lists[m] = &t.int_out[m][x];
        } else {
            cost += t.op_cost[m][x];
            lists[m] = &t.op_out[m][x];
        }
    }
    cost + t.beta * expect(&lists[..digits.len()], 0, 0, 1.0, v)
}

fn bellman_best(t: &JointTables, actions: &[u64], v: &[f64], s: usize) -> (f64, u32) {
    let m_count = t.dims.len();
    let mut digits = [0usize; 64];
    decode(&t.dims, s, &mut digits[..m_count]);
    let mut zero_mask = 0u64;
    for (m, &x) in digits[..m_count].iter().enumerate() {
        if x == 0 {
            zero_mask |= 1 << m;
        }
    }
    let mut best = f64::INFINITY;
    let mut best_action = 0u32;
    for (ai, &mask) in actions.iter().enumerate() {
        if mask & zero_mask != 0 {
            continue; // would intervene a machine that is as good as new
        }
        let val = action_value(t, mask, &digits[..m_count], v);
        if val < best {
            best = val;
            best_action = ai as u32;
        }
    }
    (best, best_action)
}

/// Exact solution of the fleet problem by value iteration.
pub fn solve_joint(fleet: &FleetSpec, epsilon: f64) -> Result<JointMdp, MdpError> {
    solve_joint_with(fleet, &SolveOptions { epsilon, ..SolveOptions::default() })
}

pub fn solve_joint_with(fleet: &FleetSpec, opts: &SolveOptions) -> Result<JointMdp, MdpError> {
    let tables = build_joint_tables(fleet)?;
    let size = joint_size(&tables.dims);
    let n_actions = count_actions(fleet.machines.len(), fleet.n_repairmen);
    let required = size.saturating_mul(n_actions);
    if required > opts.max_entries || size > usize::MAX as u128 {
        return Err(MdpError::BudgetExceeded { required, budget: opts.max_entries });
    }
    let n_joint = size as usize;
    let actions = admissible_actions(fleet.machines.len(), fleet.n_repairmen);
    let beta = tables.beta;
    let mut v = vec![0.0; n_joint];
    let mut next: Vec<f64> = Vec::with_capacity(n_joint);
    let mut residuals = Vec::new();
    let mut done = false;
    while residuals.len() < opts.max_sweeps {
        (0..n_joint)
            .into_par_iter()
            .map(|s| bellman_best(&tables, &actions, &v, s).0)
            .collect_into_vec(&mut next);
        let delta = next.par_iter().zip(v.par_iter()).map(|(a, b)| (a - b).abs()).reduce(|| 0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        residuals.push(delta);
        let norm = v.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max);
        if converged(beta, delta, opts.epsilon * norm, norm) {
            done = true;
            break;
        }
    }
    if !done {
        return Err(MdpError::NoConvergence {
            sweeps: residuals.len(),
            residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        });
    }
    let policy: Vec<u32> = (0..n_joint).into_par_iter().map(|s| bellman_best(&tables, &actions, &v, s).1).collect();
    let value_at_origin = v[0];
    Ok(JointMdp {
        n_joint_states: n_joint,
        dims: tables.dims,
        actions,
        value: v,
        policy,
        iterations: residuals.len(),
        residuals,
        value_at_origin,
    })
}

fn evaluate_masks(
    tables: &JointTables,
    masks: &[u64],
    epsilon: f64,
    max_sweeps: usize,
) -> Result<PolicyEvaluation, MdpError> {
    let n_joint = masks.len();
    let beta = tables.beta;
    let m_count = tables.dims.len();
    let mut v = vec![0.0; n_joint];
    let mut next: Vec<f64> = Vec::with_capacity(n_joint);
    let mut residuals = Vec::new();
    let mut done = false;
    while residuals.len() < max_sweeps {
        (0..n_joint)
            .into_par_iter()
            .map(|s| {
                let mut digits = [0usize; 64];
                decode(&tables.dims, s, &mut digits[..m_count]);
                action_value(tables, masks[s], &digits[..m_count], &v)
            })
            .collect_into_vec(&mut next);
        let delta = next.par_iter().zip(v.par_iter()).map(|(a, b)| (a - b).abs()).reduce(|| 0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        residuals.push(delta);
        let norm = v.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max);
        if converged(beta, delta, epsilon * norm, norm) {
            done = true;
            break;
        }
    }
    if !done {
        return Err(MdpError::NoConvergence {
            sweeps: residuals.len(),
            residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        });
    }
    let value_at_origin = v[0];
    Ok(PolicyEvaluation { value: v, value_at_origin, iterations: residuals.len(), residuals })
}

/// Exact discounted cost of following `policy` (deterministic tie-breaks),
/// by fixed-point iteration of its Bellman operator.
pub fn evaluate_policy(fleet: &FleetSpec, policy: &Policy, epsilon: f64) -> Result<PolicyEvaluation, MdpError> {
    evaluate_policy_with(fleet, policy, &SolveOptions { epsilon, ..SolveOptions::default() })
}

pub fn evaluate_policy_with(
    fleet: &FleetSpec,
    policy: &Policy,
    opts: &SolveOptions,
) -> Result<PolicyEvaluation, MdpError> {
    let tables = build_joint_tables(fleet)?;
    let size = joint_size(&tables.dims);
    if size > opts.max_entries || size > usize::MAX as u128 {
        return Err(MdpError::BudgetExceeded { required: size, budget: opts.max_entries });
    }
    let n_joint = size as usize;
    let m_count = tables.dims.len();
    let masks: Vec<u64> = (0..n_joint)
        .into_par_iter()
        .map(|s| {
            let mut digits = vec![0usize; m_count];
            decode(&tables.dims, s, &mut digits);
            let chosen = policy.decide_deterministic(&digits, fleet.n_repairmen);
            chosen.into_iter().fold(0u64, |mask, m| mask | 1 << m)
        })
        .collect();
    evaluate_masks(&tables, &masks, opts.epsilon, opts.max_sweeps)
}
