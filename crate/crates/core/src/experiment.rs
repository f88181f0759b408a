//! Scenario sampling and study orchestration.
//!
//! Two study families share one sampler. Small-scale studies draw little
//! fleets, solve the joint problem exactly, and measure the index policy's
//! percentage suboptimality; large-scale studies draw big fleets and race
//! the index rule against naive, threshold, and (optionally) perfect-kernel
//! index scheduling under common-random-number simulation. The scenario
//! axes are the maintenance-cost case, the failure-cost band, and the
//! operating-cost shape; every other parameter varies per machine inside an
//! instance, drawn from the canonical distribution table shipped with the
//! crate. Machines that fail the indexability check are redrawn and
//! counted, never silently kept.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

use crate::index::w_index;
use crate::mdp::{evaluate_policy, solve_joint, MdpError};
use crate::model::{build_machine, FleetSpec, MachineParams, MachineSpec, Mode};
use crate::policy::{enumerate_thresholds, Policy, PolicyError};
use crate::sim::simulate_batch;
use crate::stream::{self, tag};

/// Uniform draw bounds, stored `[lo, hi]`.
pub type Band = [f64; 2];

/// Per-study sampling distributions; see `data/distributions.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDistributions {
    pub deterioration_rate: Band,
    pub failure_coeff: Band,
    pub failure_scale: f64,
    pub intervention_decay: Band,
    pub maint_intercept_cases: Vec<Band>,
    pub maint_slope: Band,
    pub op_intercept_bands: Vec<Band>,
    pub op_slope_bands: Vec<Band>,
    pub op_quad: Band,
    pub failure_multiplier_bands: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub small_scale: StudyDistributions,
    pub large_scale: StudyDistributions,
}

static BUILTIN: OnceLock<DistributionTable> = OnceLock::new();

impl DistributionTable {
    /// The canonical table compiled into the crate.
    pub fn builtin() -> &'static DistributionTable {
        BUILTIN.get_or_init(|| {
            serde_json::from_str(include_str!("../data/distributions.json"))
                .expect("embedded distribution table parses")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Study {
    /// Exact joint optimum vs the index policy on small fleets.
    Suboptimality,
    /// Index vs naive vs thresholds on simulated large fleets.
    LargeSystem,
    /// LargeSystem plus the perfect-kernel index rule.
    MyopicComparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpCostShape {
    Linear,
    Quadratic,
}

/// One study cell: which case bands to draw from and how hard to run it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub study: Study,
    pub op_shape: OpCostShape,
    /// 1-based maintenance-cost case within the study's table.
    pub maint_case: usize,
    /// 1-based failure-multiplier band within the study's table.
    pub failure_band: usize,
    pub mode: Mode,
    pub sampler_seed: u64,
    pub n_instances: usize,
    pub n_machines: usize,
    pub n_repairmen: usize,
    pub n_states: usize,
    pub beta: f64,
    /// Simulation length per replicate (simulation studies only).
    pub horizon: usize,
    /// Replicates per instance (simulation studies only).
    pub n_replicates: usize,
    /// Evenly spaced threshold policies raced against the index rule.
    pub threshold_count: usize,
    /// Relative stopping tolerance for the exact solvers.
    pub epsilon: f64,
}

impl ScenarioConfig {
    /// Study defaults; the caller typically adjusts the case axes and seed.
    pub fn defaults(study: Study) -> ScenarioConfig {
        let (n_machines, n_repairmen, n_states, n_instances) = match study {
            Study::Suboptimality => (3, 1, 8, 50),
            Study::LargeSystem => (25, 2, 25, 25),
            Study::MyopicComparison => (50, 3, 25, 25),
        };
        ScenarioConfig {
            study,
            op_shape: OpCostShape::Linear,
            maint_case: 1,
            failure_band: 1,
            mode: Mode::WithFailures,
            sampler_seed: 0,
            n_instances,
            n_machines,
            n_repairmen,
            n_states,
            beta: 0.95,
            horizon: 520,
            n_replicates: 25,
            threshold_count: 8,
            epsilon: 1e-7,
        }
    }

    fn distributions(&self) -> &'static StudyDistributions {
        match self.study {
            Study::Suboptimality => &DistributionTable::builtin().small_scale,
            Study::LargeSystem | Study::MyopicComparison => &DistributionTable::builtin().large_scale,
        }
    }

    /// Bounds violations; empty means usable.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let d = self.distributions();
        if self.maint_case == 0 || self.maint_case > d.maint_intercept_cases.len() {
            v.push(format!("maint_case {} outside 1..={}", self.maint_case, d.maint_intercept_cases.len()));
        }
        if self.failure_band == 0 || self.failure_band > d.failure_multiplier_bands.len() {
            v.push(format!("failure_band {} outside 1..={}", self.failure_band, d.failure_multiplier_bands.len()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            v.push(format!("beta {} outside (0, 1)", self.beta));
        }
        if self.n_machines == 0 || self.n_states < 3 || self.n_instances == 0 {
            v.push("fleet shape must be non-trivial (machines >= 1, states >= 3, instances >= 1)".into());
        }
        if self.mode == Mode::PureDeterioration && self.study != Study::Suboptimality {
            v.push("pure-deterioration mode is only wired into the suboptimality study".into());
        }
        v
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("instance {instance}, machine {machine}: {attempts} consecutive draws were not indexable (last H head: {h_head:?})")]
    NonIndexableExhausted { instance: usize, machine: usize, attempts: u32, h_head: Vec<f64> },
    #[error("instance {instance}: {source}")]
    Solver { instance: usize, source: MdpError },
    #[error("instance {instance}: {source}")]
    Policy { instance: usize, source: PolicyError },
    #[error(transparent)]
    Index(#[from] crate::index::IndexError),
    #[error("machine build failed: {0}")]
    Build(String),
}

/// A sampled fleet plus how many draws the indexability screen rejected.
#[derive(Debug, Clone)]
pub struct SampledInstance {
    pub fleet: FleetSpec,
    pub n_discarded_nonindexable: u64,
}

fn draw(rng: &mut impl rand::Rng, band: Band) -> f64 {
    band[0] + (band[1] - band[0]) * rng.random::<f64>()
}

fn draw_machine(
    config: &ScenarioConfig,
    d: &StudyDistributions,
    rng: &mut impl rand::Rng,
) -> Result<MachineSpec, ExperimentError> {
    let pure = config.mode == Mode::PureDeterioration;
    let maint_intercept = draw(rng, d.maint_intercept_cases[config.maint_case - 1]);
    let maint_slope = draw(rng, d.maint_slope);
    let intercept_band = (rng.random::<f64>() < 0.5) as usize;
    let op_intercept = draw(rng, d.op_intercept_bands[intercept_band]);
    let slope_band = (rng.random::<f64>() < 0.5) as usize;
    let op_slope = draw(rng, d.op_slope_bands[slope_band]);
    let op_quad = match config.op_shape {
        OpCostShape::Linear => 0.0,
        OpCostShape::Quadratic => draw(rng, d.op_quad),
    };
    let multiplier = draw(rng, d.failure_multiplier_bands[config.failure_band - 1]);
    let mean_maint = maint_intercept + maint_slope * (config.n_states as f64 - 1.0) / 2.0;
    let params = MachineParams {
        beta: config.beta,
        n_states: config.n_states,
        deterioration_rate: draw(rng, d.deterioration_rate),
        failure_coeff: if pure { 0.0 } else { draw(rng, d.failure_coeff) },
        failure_scale: d.failure_scale,
        intervention_decay: draw(rng, d.intervention_decay),
        maint_intercept,
        maint_slope,
        op_intercept,
        op_slope,
        op_quad,
        fail_cost: if pure { 0.0 } else { multiplier * mean_maint },
        mode: config.mode,
    };
    build_machine(&params).map_err(|e| ExperimentError::Build(e.to_string()))
}

/// Draws one fleet for `(config, instance_id)`, redrawing any machine whose
/// index table comes back not indexable. Fully deterministic: the draw
/// stream is `(sampler_seed, SAMPLER, instance_id)` and rejected draws
/// advance it just like accepted ones.
pub fn sample_scenario(config: &ScenarioConfig, instance_id: usize) -> Result<SampledInstance, ExperimentError> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(ExperimentError::InvalidConfig(problems.join("; ")));
    }
    let d = config.distributions();
    let mut rng = stream::stream(config.sampler_seed, &[tag::SAMPLER, instance_id as u64]);
    let mut machines = Vec::with_capacity(config.n_machines);
    let mut discarded = 0u64;
    for machine in 0..config.n_machines {
        let mut attempts = 0u32;
        loop {
            let spec = draw_machine(config, d, &mut rng)?;
            let table = w_index(&spec)?;
            if table.indexable {
                machines.push(spec);
                break;
            }
            attempts += 1;
            discarded += 1;
            if attempts >= 100 {
                let h_head = table.h.iter().take(4).copied().collect();
                return Err(ExperimentError::NonIndexableExhausted { instance: instance_id, machine, attempts, h_head });
            }
        }
    }
    let fleet = FleetSpec { machines, n_repairmen: config.n_repairmen, allow_idle: true };
    Ok(SampledInstance { fleet, n_discarded_nonindexable: discarded })
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuboptimalityStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
    /// Instances where the measured gap was a hair negative and clamped to 0.
    pub n_clamped: u64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn five_numbers(values: &mut [f64], n_clamped: u64) -> SuboptimalityStats {
    values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    SuboptimalityStats {
        min: values[0],
        q1: quantile(values, 0.25),
        median: quantile(values, 0.5),
        q3: quantile(values, 0.75),
        max: values[values.len() - 1],
        n: values.len(),
        n_clamped,
    }
}

/// Per-policy batch means within one study cell, averaged over instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub policy: String,
    pub mean_cost: f64,
    pub mean_interventions: f64,
    pub mean_failures: f64,
}

/// Cost advantages of the index rule, each as (other - index) / other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRatios {
    pub index_vs_naive: f64,
    pub index_vs_best_threshold: f64,
    pub index_vs_average_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index_vs_myopic: Option<f64>,
    pub best_threshold_cost: f64,
    pub average_threshold_cost: f64,
}

/// Everything one study cell produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suboptimality_stats: Option<SuboptimalityStats>,
    pub policy_comparison: Vec<PolicyRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<PerformanceRatios>,
    pub n_discarded_nonindexable: u64,
    /// Instance-level failures, recorded rather than fatal.
    pub instance_failures: Vec<String>,
}

/// Exact suboptimality of the index policy: per instance, solve the joint
/// fleet problem and evaluate the index rule, both from everything-new, and
/// record 100 (V_index - V*) / V*.
pub fn run_suboptimality(config: &ScenarioConfig) -> Result<RunReport, ExperimentError> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(ExperimentError::InvalidConfig(problems.join("; ")));
    }
    let outcomes: Vec<Result<(f64, u64), String>> = (0..config.n_instances)
        .into_par_iter()
        .map(|instance| {
            let sampled = sample_scenario(config, instance).map_err(|e| e.to_string())?;
            let policy = Policy::index(&sampled.fleet, stream::derive(config.sampler_seed, &[tag::POLICY, instance as u64]))
                .map_err(|e| e.to_string())?;
            let joint = solve_joint(&sampled.fleet, config.epsilon).map_err(|e| format!("instance {instance}: {e}"))?;
            let eval = evaluate_policy(&sampled.fleet, &policy, config.epsilon)
                .map_err(|e| format!("instance {instance}: {e}"))?;
            let gap = 100.0 * (eval.value_at_origin - joint.value_at_origin) / joint.value_at_origin;
            Ok((gap, sampled.n_discarded_nonindexable))
        })
        .collect();

    let mut gaps = Vec::with_capacity(config.n_instances);
    let mut n_clamped = 0u64;
    let mut discarded = 0u64;
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((gap, d)) => {
                if gap < 0.0 {
                    n_clamped += 1;
                }
                gaps.push(gap.max(0.0));
                discarded += d;
            }
            Err(message) => failures.push(message),
        }
    }
    if gaps.is_empty() {
        return Err(ExperimentError::InvalidConfig(format!(
            "every instance failed; first error: {}",
            failures.first().cloned().unwrap_or_default()
        )));
    }
    Ok(RunReport {
        config: *config,
        suboptimality_stats: Some(five_numbers(&mut gaps, n_clamped)),
        policy_comparison: Vec::new(),
        ratios: None,
        n_discarded_nonindexable: discarded,
        instance_failures: failures,
    })
}

/// Simulation race on big fleets: index vs naive vs evenly spaced
/// thresholds, plus the perfect-kernel index rule for the myopic study.
/// Batch means are averaged across instances; the best threshold is the one
/// with the smallest cross-instance mean cost.
pub fn run_large_system(config: &ScenarioConfig) -> Result<RunReport, ExperimentError> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(ExperimentError::InvalidConfig(problems.join("; ")));
    }
    let with_myopic = config.study == Study::MyopicComparison;
    let outcomes: Vec<Result<(Vec<PolicyRow>, u64), String>> = (0..config.n_instances)
        .into_par_iter()
        .map(|instance| {
            let sampled = sample_scenario(config, instance).map_err(|e| e.to_string())?;
            let seed_of = |slot: u64| stream::derive(config.sampler_seed, &[tag::POLICY, instance as u64, slot]);
            let mut policies = vec![
                Policy::index(&sampled.fleet, seed_of(0)).map_err(|e| format!("instance {instance}: {e}"))?,
                Policy::naive(seed_of(1)),
            ];
            let thresholds = enumerate_thresholds(&sampled.fleet, config.threshold_count)
                .map_err(|e| format!("instance {instance}: {e}"))?;
            policies.extend(thresholds);
            if with_myopic {
                policies.push(Policy::myopic(&sampled.fleet, seed_of(2)).map_err(|e| format!("instance {instance}: {e}"))?);
            }
            let sim_seed = stream::derive(config.sampler_seed, &[tag::INSTANCE, instance as u64]);
            let batch = simulate_batch(&sampled.fleet, &policies, config.horizon, config.n_replicates, sim_seed);
            let rows = batch
                .aggregates
                .into_iter()
                .map(|a| PolicyRow {
                    policy: a.policy,
                    mean_cost: a.mean_cost,
                    mean_interventions: a.mean_interventions,
                    mean_failures: a.mean_failures,
                })
                .collect();
            Ok((rows, sampled.n_discarded_nonindexable))
        })
        .collect();

    let mut per_policy: Vec<PolicyRow> = Vec::new();
    let mut n_ok = 0usize;
    let mut discarded = 0u64;
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((rows, d)) => {
                if per_policy.is_empty() {
                    per_policy = rows;
                } else {
                    for (acc, row) in per_policy.iter_mut().zip(rows) {
                        acc.mean_cost += row.mean_cost;
                        acc.mean_interventions += row.mean_interventions;
                        acc.mean_failures += row.mean_failures;
                    }
                }
                n_ok += 1;
                discarded += d;
            }
            Err(message) => failures.push(message),
        }
    }
    if n_ok == 0 {
        return Err(ExperimentError::InvalidConfig(format!(
            "every instance failed; first error: {}",
            failures.first().cloned().unwrap_or_default()
        )));
    }
    let scale = 1.0 / n_ok as f64;
    for row in &mut per_policy {
        row.mean_cost *= scale;
        row.mean_interventions *= scale;
        row.mean_failures *= scale;
    }

    let index_cost = per_policy[0].mean_cost;
    let naive_cost = per_policy[1].mean_cost;
    let threshold_costs: Vec<f64> =
        per_policy.iter().filter(|r| r.policy.starts_with("threshold")).map(|r| r.mean_cost).collect();
    let best = threshold_costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let average = threshold_costs.iter().sum::<f64>() / threshold_costs.len() as f64;
    let myopic_cost = per_policy.iter().find(|r| r.policy == "myopic").map(|r| r.mean_cost);
    let ratios = PerformanceRatios {
        index_vs_naive: (naive_cost - index_cost) / naive_cost,
        index_vs_best_threshold: (best - index_cost) / best,
        index_vs_average_threshold: (average - index_cost) / average,
        index_vs_myopic: myopic_cost.map(|m| (m - index_cost) / m),
        best_threshold_cost: best,
        average_threshold_cost: average,
    };
    Ok(RunReport {
        config: *config,
        suboptimality_stats: None,
        policy_comparison: per_policy,
        ratios: Some(ratios),
        n_discarded_nonindexable: discarded,
        instance_failures: failures,
    })
}

/// Dispatch by study kind.
pub fn run_study(config: &ScenarioConfig) -> Result<RunReport, ExperimentError> {
    match config.study {
        Study::Suboptimality => run_suboptimality(config),
        Study::LargeSystem | Study::MyopicComparison => run_large_system(config),
    }
}
