//! Fleet scheduling rules: which machines get the repairmen each period.
//!
//! All rules share the same frame. Machines at level 0 are never touched.
//! Candidates are ranked by a rule-specific key, the top `n_repairmen` are
//! served, and exact key ties are broken uniformly at random from the
//! policy's private stream (or by machine id in the deterministic variant
//! used for exact evaluation).

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{w_index, w_index_perfect};
use crate::model::FleetSpec;
use crate::stream::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Serve the largest fair-charge indices; an idle-capable variant skips
    /// machines whose index is not positive.
    Index,
    /// Serve the most worn machines, costs be damned.
    Naive,
    /// Serve machines at or past a per-machine trigger level, most worn first.
    Threshold,
    /// Index rule computed as if interventions always restored to new.
    MyopicPerfect,
}

/// Serialized policy description. Index tables are recomputed from the
/// fleet on construction, never embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub kind: PolicyKind,
    pub name: String,
    pub seed: u64,
    /// W(x) per machine; only for index-style kinds.
    tables: Vec<Vec<f64>>,
    /// Trigger levels; only for `Threshold`.
    levels: Vec<usize>,
    allow_idle: bool,
    rng: ChaCha12Rng,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("machine {machine} is not indexable; the index policy has no table for it")]
    NonIndexable { machine: usize },
    #[error("threshold policy needs one trigger level per machine")]
    MissingLevels,
    #[error("trigger level {level} for machine {machine} is not an interior level")]
    LevelOutOfRange { machine: usize, level: usize },
    #[error("{count} thresholds do not fit machine {machine} with {interior} interior levels")]
    TooManyThresholds { machine: usize, count: usize, interior: usize },
    #[error(transparent)]
    Index(#[from] crate::index::IndexError),
}

impl Policy {
    fn new(kind: PolicyKind, name: String, seed: u64, tables: Vec<Vec<f64>>, levels: Vec<usize>, allow_idle: bool) -> Policy {
        Policy { kind, name, seed, tables, levels, allow_idle, rng: stream::stream(seed, &[tag::POLICY]) }
    }

    /// Index rule from precomputed per-machine index columns.
    pub fn index_from_tables(tables: Vec<Vec<f64>>, allow_idle: bool, seed: u64) -> Policy {
        Policy::new(PolicyKind::Index, "index".into(), seed, tables, Vec::new(), allow_idle)
    }

    /// Index rule; tables come from each machine's own variant.
    pub fn index(fleet: &FleetSpec, seed: u64) -> Result<Policy, PolicyError> {
        let mut tables = Vec::with_capacity(fleet.machines.len());
        for (m, spec) in fleet.machines.iter().enumerate() {
            let table = w_index(spec)?;
            if !table.indexable {
                return Err(PolicyError::NonIndexable { machine: m });
            }
            tables.push(table.w);
        }
        Ok(Policy::index_from_tables(tables, fleet.allow_idle, seed))
    }

    /// Index rule under the pretend-perfect intervention kernel.
    pub fn myopic(fleet: &FleetSpec, seed: u64) -> Result<Policy, PolicyError> {
        let mut tables = Vec::with_capacity(fleet.machines.len());
        for (m, spec) in fleet.machines.iter().enumerate() {
            let table = w_index_perfect(spec)?;
            if !table.indexable {
                return Err(PolicyError::NonIndexable { machine: m });
            }
            tables.push(table.w);
        }
        Ok(Policy::new(PolicyKind::MyopicPerfect, "myopic".into(), seed, tables, Vec::new(), fleet.allow_idle))
    }

    pub fn naive(seed: u64) -> Policy {
        Policy::new(PolicyKind::Naive, "naive".into(), seed, Vec::new(), Vec::new(), true)
    }

    pub fn threshold(levels: Vec<usize>, seed: u64) -> Policy {
        Policy::new(PolicyKind::Threshold, "threshold".into(), seed, Vec::new(), levels, true)
    }

    pub fn from_spec(spec: &PolicySpec, fleet: &FleetSpec) -> Result<Policy, PolicyError> {
        match spec.kind {
            PolicyKind::Index => Policy::index(fleet, spec.seed),
            PolicyKind::MyopicPerfect => Policy::myopic(fleet, spec.seed),
            PolicyKind::Naive => Ok(Policy::naive(spec.seed)),
            PolicyKind::Threshold => {
                let levels = spec.levels.clone().ok_or(PolicyError::MissingLevels)?;
                if levels.len() != fleet.machines.len() {
                    return Err(PolicyError::MissingLevels);
                }
                for (machine, (&level, m)) in levels.iter().zip(&fleet.machines).enumerate() {
                    if level == 0 || level + 1 >= m.n_states {
                        return Err(PolicyError::LevelOutOfRange { machine, level });
                    }
                }
                Ok(Policy::threshold(levels, spec.seed))
            }
        }
    }

    /// Fresh clone whose tie-break stream depends only on the policy's own
    /// seed and the replicate, so identical descriptors behave identically
    /// wherever they appear in a batch.
    pub fn for_replicate(&self, replicate_seed: u64) -> Policy {
        let mut p = self.clone();
        p.rng = stream::stream(self.seed, &[tag::POLICY, replicate_seed]);
        p
    }

    fn candidate_key(&self, machine: usize, x: usize) -> Option<f64> {
        if x == 0 {
            return None; // as good as new; no rule ever touches it
        }
        match self.kind {
            PolicyKind::Index | PolicyKind::MyopicPerfect => {
                let w = self.tables[machine][x];
                if self.allow_idle && w <= 0.0 {
                    None
                } else {
                    Some(w)
                }
            }
            PolicyKind::Naive => Some(x as f64),
            PolicyKind::Threshold => (x >= self.levels[machine]).then_some(x as f64),
        }
    }

    fn select(&self, states: &[usize], n_repairmen: usize, mut tiebreak: impl FnMut(usize) -> u64) -> Vec<usize> {
        let mut candidates: Vec<(f64, u64, usize)> = states
            .iter()
            .enumerate()
            .filter_map(|(m, &x)| self.candidate_key(m, x).map(|key| (key, tiebreak(m), m)))
            .collect();
        candidates.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        candidates.truncate(n_repairmen);
        let mut chosen: Vec<usize> = candidates.into_iter().map(|(_, _, m)| m).collect();
        chosen.sort_unstable();
        chosen
    }

    /// Machines to intervene this period, ascending ids, at most `n_repairmen`.
    pub fn decide(&mut self, states: &[usize], n_repairmen: usize) -> Vec<usize> {
        let rng = &mut self.rng;
        let mut draws: Vec<u64> = Vec::new();
        // One draw per machine in id order, regardless of candidacy, so the
        // stream position depends only on (states.len(), call count).
        for _ in 0..states.len() {
            draws.push(rng.random());
        }
        self.select(states, n_repairmen, |m| draws[m])
    }

    /// Tie-break by machine id instead of the stream; this is the stationary
    /// variant exact evaluation needs.
    pub fn decide_deterministic(&self, states: &[usize], n_repairmen: usize) -> Vec<usize> {
        self.select(states, n_repairmen, |m| m as u64)
    }
}

/// Evenly spaced threshold policies: trigger k/(count+1) of the way through
/// each machine's levels, rounded, clamped to the interior.
pub fn enumerate_thresholds(fleet: &FleetSpec, count: usize) -> Result<Vec<Policy>, PolicyError> {
    for (machine, m) in fleet.machines.iter().enumerate() {
        let interior = m.n_states.saturating_sub(2);
        if interior == 0 || count > interior {
            return Err(PolicyError::TooManyThresholds { machine, count, interior });
        }
    }
    Ok((1..=count)
        .map(|k| {
            let levels: Vec<usize> = fleet
                .machines
                .iter()
                .map(|m| {
                    let n = m.n_states as f64;
                    let raw = (n * k as f64 / (count as f64 + 1.0)).round() as usize;
                    raw.clamp(1, m.n_states - 2)
                })
                .collect();
            let mut p = Policy::threshold(levels, k as u64);
            p.name = format!("threshold_{k}");
            p
        })
        .collect())
}
