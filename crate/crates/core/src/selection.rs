//! Workload placement: per-task time-to-completion estimates feeding
//! affinity-based resource selection, and the random baseline.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::matchmaking::{select_index, viable_set, AffinityInput, AffinityRegistry, TQ_KEY, TX_KEY};
use crate::model::{cost, ResourceSpec, TaskSpec, WorkloadSpec};
use crate::prediction::{predict_tx, ClockTable, ProfileStore};
use crate::queuewait::{QueueStore, QueueWaitQuery};
use crate::rng;

/// Predicted queue wait plus execution time of one task on one resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TtcEstimate {
    pub task_id: String,
    pub resource_id: String,
    pub tq_s: f64,
    pub tx_s: f64,
    pub ttc_s: f64,
    /// Walltime used for the queue-wait lookup.
    pub walltime_req_s: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub tq_prior_used: bool,
}

impl TtcEstimate {
    pub fn affinity_input(&self) -> AffinityInput {
        AffinityInput {
            resource_id: self.resource_id.clone(),
            values: [(TQ_KEY.to_string(), self.tq_s), (TX_KEY.to_string(), self.tx_s)].into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Model,
    Random,
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub resource_id: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub cores: u32,
    /// Estimate for the chosen resource (model plans only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<TtcEstimate>,
    /// Estimates for every viable resource, in pool order (model plans only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<TtcEstimate>,
}

/// What a single pilot on a resource would have to request to host every
/// task assigned there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceRequest {
    pub tasks: usize,
    pub cores: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_walltime_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPlan {
    pub workload_id: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    pub assignments: BTreeMap<String, Assignment>,
    pub resource_requests: BTreeMap<String, ResourceRequest>,
}

impl SelectionPlan {
    /// Tasks grouped per assigned resource, both in sorted order.
    pub fn tasks_by_resource(&self) -> BTreeMap<&str, Vec<(&str, &Assignment)>> {
        let mut out: BTreeMap<&str, Vec<(&str, &Assignment)>> = BTreeMap::new();
        for (task, a) in &self.assignments {
            out.entry(a.resource_id.as_str()).or_default().push((task.as_str(), a));
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.strategy == Strategy::Random && self.rng_seed.is_none() {
            return Err(Error::invalid("plan", "random plan without rng_seed"));
        }
        if self.strategy == Strategy::Model && self.rng_seed.is_some() {
            return Err(Error::invalid("plan", "model plan must not carry rng_seed"));
        }
        if let Some(a) = self.assignments.values().find(|a| a.cores == 0) {
            return Err(Error::invalid("plan", format!("assignment to `{}` has 0 cores", a.resource_id)));
        }
        Ok(())
    }

    pub fn from_json_slice(data: &[u8]) -> Result<Self> {
        let plan: SelectionPlan = crate::io::from_json("plan", data)?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Read-only stores the model planner draws on.
#[derive(Debug, Clone, Copy)]
pub struct PlanInputs<'a> {
    pub profiles: &'a ProfileStore,
    pub clocks: &'a ClockTable,
    pub history: &'a QueueStore,
    /// Query time for the queue-wait lookback, UTC epoch seconds.
    pub now: i64,
}

/// Predicted execution time at base and at the configured frequency.
fn predict_task_tx(task: &TaskSpec, res: &ResourceSpec, inputs: &PlanInputs, cfg: &Config) -> Result<(f64, f64)> {
    match task.profile() {
        Some(p) => {
            let est = inputs
                .profiles
                .sequential_cycles(&p.task_id, p.workload_param, cfg.profile_aggregation)?;
            let clock = inputs.clocks.get(res.resource_id()).ok_or_else(|| {
                Error::MissingInput(format!(
                    "no clock spec for resource `{}` (needed by task `{}`)",
                    res.resource_id(),
                    task.task_id()
                ))
            })?;
            let tx = predict_tx(est.cycles, clock, cfg.inflation(res.resource_id()))?;
            Ok((tx.tx_base_s, tx.tx(cfg.frequency_choice)))
        }
        None => {
            // Unprofiled tasks: capability rates are taken as already being
            // the base rates, so both figures coincide.
            let k = cost(task, res)? * cfg.inflation(res.resource_id());
            Ok((k, k))
        }
    }
}

/// TTC estimate of one task on one resource it can execute on.
pub fn estimate_ttc(task: &TaskSpec, res: &ResourceSpec, inputs: &PlanInputs, cfg: &Config) -> Result<TtcEstimate> {
    let (tx_base, tx_s) = predict_task_tx(task, res, inputs, cfg)?;
    let walltime_req_s = tx_base * cfg.walltime_safety_factor;
    let query = QueueWaitQuery {
        machine: res.machine().to_string(),
        queue: res.queue().to_string(),
        walltime_req_s,
        cores_req: task.cores(),
        now: inputs.now,
        window_s: cfg.window_s,
    };
    let (tq_s, tq_prior_used) = match inputs.history.estimate_tq(&query, &cfg.buckets) {
        Ok(e) => (e.mean_wait_s, false),
        Err(Error::NoQueueHistory { machine, queue }) => match cfg.tq_priors_s.get(res.resource_id()) {
            Some(prior) => (*prior, true),
            None => {
                return Err(Error::MissingInput(format!(
                    "no queue history for machine `{machine}` queue `{queue}` in window and no tq prior for resource `{}`",
                    res.resource_id()
                )))
            }
        },
        Err(e) => return Err(e),
    };
    Ok(TtcEstimate {
        task_id: task.task_id().to_string(),
        resource_id: res.resource_id().to_string(),
        tq_s,
        tx_s,
        ttc_s: tq_s + tx_s,
        walltime_req_s,
        tq_prior_used,
    })
}

fn check_pool(pool: &[ResourceSpec]) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::invalid("pool", "pool is empty"));
    }
    let mut ids = std::collections::BTreeSet::new();
    for r in pool {
        if !ids.insert(r.resource_id()) {
            return Err(Error::invalid("pool", format!("duplicate resource `{}`", r.resource_id())));
        }
    }
    Ok(())
}

fn viable_resources<'p>(task: &TaskSpec, pool: &'p [ResourceSpec]) -> Result<Vec<&'p ResourceSpec>> {
    let vs = viable_set(task, pool);
    if vs.is_empty() {
        return Err(Error::EmptyViableSet(task.task_id().to_string()));
    }
    Ok(pool
        .iter()
        .filter(|r| vs.resource_ids.iter().any(|id| id == r.resource_id()))
        .collect())
}

fn build_requests(assignments: &BTreeMap<String, Assignment>) -> BTreeMap<String, ResourceRequest> {
    let mut out: BTreeMap<String, ResourceRequest> = BTreeMap::new();
    for a in assignments.values() {
        let req = out.entry(a.resource_id.clone()).or_insert(ResourceRequest {
            tasks: 0,
            cores: 0,
            max_walltime_s: None,
        });
        req.tasks += 1;
        req.cores += u64::from(a.cores);
        if let Some(e) = &a.estimate {
            req.max_walltime_s = Some(req.max_walltime_s.map_or(e.walltime_req_s, |w| w.max(e.walltime_req_s)));
        }
    }
    out
}

/// Assigns every task to the viable resource with the highest affinity
/// (by default the smallest predicted time-to-completion). Ties go to the
/// earlier resource in pool order.
pub fn plan_model(
    workload: &WorkloadSpec,
    pool: &[ResourceSpec],
    inputs: &PlanInputs,
    cfg: &Config,
    registry: &AffinityRegistry,
) -> Result<SelectionPlan> {
    cfg.validate()?;
    check_pool(pool)?;
    let affinity = registry.get(&cfg.affinity)?;
    let planned: Vec<(String, Assignment)> = workload
        .tasks()
        .par_iter()
        .map(|task| {
            let viable = viable_resources(task, pool)?;
            let candidates = viable
                .iter()
                .map(|res| estimate_ttc(task, res, inputs, cfg))
                .collect::<Result<Vec<_>>>()?;
            let inputs: Vec<AffinityInput> = candidates.iter().map(TtcEstimate::affinity_input).collect();
            let best = select_index(&inputs, |i| affinity.eval(i)).map_err(|e| match e {
                Error::EmptyViableSet(_) => Error::EmptyViableSet(task.task_id().to_string()),
                other => other,
            })?;
            let chosen = candidates[best].clone();
            Ok((
                task.task_id().to_string(),
                Assignment {
                    resource_id: chosen.resource_id.clone(),
                    cores: task.cores(),
                    estimate: Some(chosen),
                    candidates,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let assignments: BTreeMap<String, Assignment> = planned.into_iter().collect();
    Ok(SelectionPlan {
        workload_id: workload.workload_id().to_string(),
        strategy: Strategy::Model,
        rng_seed: None,
        resource_requests: build_requests(&assignments),
        assignments,
    })
}

/// Assigns every task uniformly at random over its viable set. The draw for a
/// task depends only on `seed` and the task identifier.
pub fn plan_random(workload: &WorkloadSpec, pool: &[ResourceSpec], seed: u64) -> Result<SelectionPlan> {
    check_pool(pool)?;
    let mut assignments = BTreeMap::new();
    for task in workload.tasks() {
        let viable = viable_resources(task, pool)?;
        let mut r = rng::stream(seed, &[b"plan-random", task.task_id().as_bytes()]);
        let pick = r.random_range(0..viable.len());
        assignments.insert(
            task.task_id().to_string(),
            Assignment {
                resource_id: viable[pick].resource_id().to_string(),
                cores: task.cores(),
                estimate: None,
                candidates: Vec::new(),
            },
        );
    }
    Ok(SelectionPlan {
        workload_id: workload.workload_id().to_string(),
        strategy: Strategy::Random,
        rng_seed: Some(seed),
        resource_requests: build_requests(&assignments),
        assignments,
    })
}
