//! Monte-Carlo execution of a selection plan.
//!
//! Each trial submits one pilot per used resource at time zero (or one per
//! task for resources configured that way), samples when each pilot becomes
//! active, runs the assigned tasks for sampled durations and measures the
//! workload time-to-completion. Execution time counts every instant at which
//! at least one task runs; everything else before the last task ends is queue
//! time.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::selection::{SelectionPlan, Strategy};
use crate::stats;

/// Attempts at drawing a non-negative normal sample before clamping to zero.
const TRUNCATION_ATTEMPTS: usize = 64;

/// A non-negative duration distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Constant { value: f64 },
    /// Normal truncated at zero (negative draws are redrawn).
    Normal { mean: f64, stddev: f64 },
    /// Uniform over the listed samples.
    Empirical { samples: Vec<f64> },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Distribution::Constant { value } => value.is_finite() && *value >= 0.0,
            Distribution::Normal { mean, stddev } => mean.is_finite() && stddev.is_finite() && *stddev >= 0.0,
            Distribution::Empirical { samples } => {
                !samples.is_empty() && samples.iter().all(|s| s.is_finite() && *s >= 0.0)
            }
        };
        if !ok {
            return Err(Error::invalid("distribution", format!("{self:?}")));
        }
        Ok(())
    }

    /// The value every sample takes, when the distribution is degenerate.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Distribution::Constant { value } => Some(*value),
            Distribution::Normal { mean, stddev } if *stddev == 0.0 => Some(mean.max(0.0)),
            Distribution::Empirical { samples } if samples.iter().all(|s| *s == samples[0]) => Some(samples[0]),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if let Some(v) = self.constant_value() {
            return v;
        }
        match self {
            Distribution::Normal { mean, stddev } => {
                let normal = Normal::new(*mean, *stddev).expect("validated stddev");
                (0..TRUNCATION_ATTEMPTS)
                    .map(|_| normal.sample(rng))
                    .find(|v| *v >= 0.0)
                    .unwrap_or(0.0)
            }
            Distribution::Empirical { samples } => samples[rng.random_range(0..samples.len())],
            Distribution::Constant { value } => *value,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Constant { value } => *value,
            Distribution::Normal { mean, .. } => *mean,
            Distribution::Empirical { samples } => stats::mean(samples),
        }
    }
}

/// Pilot granularity on a resource.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotMode {
    /// One pilot hosts every task; all tasks share one queue wait.
    #[default]
    Single,
    /// One single-task pilot per task, each with its own queue wait.
    PerTask,
}

fn one() -> u32 {
    1
}

/// How a resource behaves when a workload actually runs on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceBehavior {
    pub resource_id: String,
    pub tq_dist: Distribution,
    pub tx_dist: Distribution,
    #[serde(default = "one")]
    pub cores_per_node: u32,
    /// Cores a single pilot may use at once; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_cores: Option<u64>,
    #[serde(default)]
    pub pilot: PilotMode,
}

impl ResourceBehavior {
    pub fn validate(&self) -> Result<()> {
        self.tq_dist.validate()?;
        self.tx_dist.validate()?;
        if self.cores_per_node == 0 {
            return Err(Error::invalid("behavior", format!("`{}` cores_per_node must be >= 1", self.resource_id)));
        }
        if self.capacity_cores == Some(0) {
            return Err(Error::invalid("behavior", format!("`{}` capacity_cores must be >= 1", self.resource_id)));
        }
        Ok(())
    }
}

/// Behaviors keyed by resource identifier.
pub type Behaviors = BTreeMap<String, ResourceBehavior>;

pub fn behaviors_from_list(list: Vec<ResourceBehavior>) -> Result<Behaviors> {
    let mut out = Behaviors::new();
    for b in list {
        b.validate()?;
        let id = b.resource_id.clone();
        if out.insert(id.clone(), b).is_some() {
            return Err(Error::invalid("behavior", format!("duplicate resource `{id}`")));
        }
    }
    Ok(out)
}

/// Workload-level times of one trial, in seconds from submission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialMetrics {
    pub ttc_wkd_s: f64,
    pub tq_wkd_s: f64,
    pub tx_wkd_s: f64,
}

/// Workload metrics from task executions given as `(start, duration)`.
///
/// The busy length of a merged segment is taken as the largest
/// `(start − segment start) + duration`, so a task starting the segment
/// contributes its duration without the rounding of `(start + d) − start`.
pub fn timeline_metrics(intervals: &mut [(f64, f64)]) -> TrialMetrics {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut busy = 0.0;
    let mut end = 0.0_f64;
    // (segment start, segment end, segment length)
    let mut current: Option<(f64, f64, f64)> = None;
    for &(s, d) in intervals.iter() {
        let e = s + d;
        end = end.max(e);
        current = match current {
            Some((cs, ce, len)) if s <= ce => Some((cs, ce.max(e), len.max((s - cs) + d))),
            Some((_, _, len)) => {
                busy += len;
                Some((s, e, d))
            }
            None => Some((s, e, d)),
        };
    }
    if let Some((_, _, len)) = current {
        busy += len;
    }
    TrialMetrics {
        ttc_wkd_s: end,
        tq_wkd_s: end - busy,
        tx_wkd_s: busy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub mean: f64,
    #[serde(default)]
    pub stddev: Option<f64>,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        Summary {
            mean: stats::mean(values),
            stddev: stats::sample_stddev(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationResult {
    pub workload_id: String,
    pub strategy: Strategy,
    pub n_tasks: usize,
    pub trials: usize,
    pub seed: u64,
    pub ttc_wkd: Summary,
    pub tq_wkd: Summary,
    pub tx_wkd: Summary,
    pub per_trial: Vec<TrialMetrics>,
}

impl SimulationResult {
    /// Per-trial metrics as CSV with a header row.
    pub fn per_trial_csv(&self) -> String {
        let mut out = String::from("trial,ttc_wkd_s,tq_wkd_s,tx_wkd_s\n");
        for (i, t) in self.per_trial.iter().enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", t.ttc_wkd_s, t.tq_wkd_s, t.tx_wkd_s));
        }
        out
    }
}

struct Placement<'a> {
    behavior: &'a ResourceBehavior,
    tasks: Vec<(&'a str, u32)>,
}

fn sample(dist: &Distribution, seed: u64, trial: u64, resource: &str, task: &str, what: &[u8]) -> f64 {
    match dist.constant_value() {
        Some(v) => v,
        None => {
            let mut r = rng::stream(
                seed,
                &[&trial.to_le_bytes(), resource.as_bytes(), task.as_bytes(), what],
            );
            dist.sample(&mut r)
        }
    }
}

fn run_trial(placements: &[Placement], seed: u64, trial: u64) -> TrialMetrics {
    let mut intervals = Vec::new();
    for p in placements {
        let b = p.behavior;
        let rid = b.resource_id.as_str();
        match b.pilot {
            PilotMode::PerTask => {
                for &(task, _) in &p.tasks {
                    let start = sample(&b.tq_dist, seed, trial, rid, task, b"tq");
                    let dur = sample(&b.tx_dist, seed, trial, rid, task, b"tx");
                    intervals.push((start, dur));
                }
            }
            PilotMode::Single => {
                let active = sample(&b.tq_dist, seed, trial, rid, "", b"tq");
                // Free time of every core the pilot holds; tasks take the
                // earliest-free cores in task order.
                let mut cores: Option<Vec<f64>> = b.capacity_cores.map(|c| vec![active; c as usize]);
                for &(task, need) in &p.tasks {
                    let dur = sample(&b.tx_dist, seed, trial, rid, task, b"tx");
                    let start = match cores.as_mut() {
                        None => active,
                        Some(free) => {
                            free.sort_by(f64::total_cmp);
                            let k = need as usize;
                            let start = free[k - 1];
                            for slot in free.iter_mut().take(k) {
                                *slot = start + dur;
                            }
                            start
                        }
                    };
                    intervals.push((start, dur));
                }
            }
        }
    }
    timeline_metrics(&mut intervals)
}

/// Runs `trials` independent executions of `plan`.
///
/// Every random draw is keyed by (seed, trial, resource, task), so results do
/// not depend on iteration order or on how trials are spread over threads.
pub fn simulate(plan: &SelectionPlan, behaviors: &Behaviors, trials: usize, seed: u64) -> Result<SimulationResult> {
    if trials == 0 {
        return Err(Error::invalid("simulation", "trials must be >= 1"));
    }
    if plan.assignments.is_empty() {
        return Err(Error::invalid("simulation", "plan has no tasks"));
    }
    let mut placements = Vec::new();
    for (rid, tasks) in plan.tasks_by_resource() {
        let behavior = behaviors
            .get(rid)
            .ok_or_else(|| Error::MissingInput(format!("no behavior for resource `{rid}`")))?;
        behavior.validate()?;
        let tasks: Vec<(&str, u32)> = tasks.into_iter().map(|(t, a)| (t, a.cores)).collect();
        if let (Some(cap), Some(&(t, need))) = (
            behavior.capacity_cores,
            tasks.iter().find(|(_, need)| u64::from(*need) > behavior.capacity_cores.unwrap_or(u64::MAX)),
        ) {
            return Err(Error::invalid(
                "simulation",
                format!("task `{t}` needs {need} cores but `{rid}` caps pilots at {cap}"),
            ));
        }
        placements.push(Placement { behavior, tasks });
    }

    let per_trial: Vec<TrialMetrics> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(&placements, seed, t))
        .collect();

    let pick = |f: fn(&TrialMetrics) -> f64| per_trial.iter().map(f).collect::<Vec<f64>>();
    Ok(SimulationResult {
        workload_id: plan.workload_id.clone(),
        strategy: plan.strategy,
        n_tasks: plan.assignments.len(),
        trials,
        seed,
        ttc_wkd: Summary::of(&pick(|m| m.ttc_wkd_s)),
        tq_wkd: Summary::of(&pick(|m| m.tq_wkd_s)),
        tx_wkd: Summary::of(&pick(|m| m.tx_wkd_s)),
        per_trial,
    })
}

/// Model-versus-random comparison of workload times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub workload_id: String,
    pub n_tasks: usize,
    pub model: BTreeMap<&'static str, Summary>,
    pub random: BTreeMap<&'static str, Summary>,
    /// `(random − model) / random · 100` on mean TTC; negative when the model
    /// plan is slower.
    pub ttc_reduction_pct: f64,
    /// `random − model` of each mean, seconds.
    pub ttc_delta_s: f64,
    pub tq_delta_s: f64,
    pub tx_delta_s: f64,
}

fn metric_map(r: &SimulationResult) -> BTreeMap<&'static str, Summary> {
    [("ttc_wkd", r.ttc_wkd), ("tq_wkd", r.tq_wkd), ("tx_wkd", r.tx_wkd)].into()
}

pub fn compare(model: &SimulationResult, random: &SimulationResult) -> Result<Comparison> {
    if model.workload_id != random.workload_id || model.n_tasks != random.n_tasks {
        return Err(Error::Mismatch(format!(
            "workload `{}` ({} tasks) vs `{}` ({} tasks)",
            model.workload_id, model.n_tasks, random.workload_id, random.n_tasks
        )));
    }
    if random.ttc_wkd.mean.is_nan() || random.ttc_wkd.mean <= 0.0 {
        return Err(Error::Mismatch("random mean TTC is not positive".into()));
    }
    Ok(Comparison {
        workload_id: model.workload_id.clone(),
        n_tasks: model.n_tasks,
        model: metric_map(model),
        random: metric_map(random),
        ttc_reduction_pct: (random.ttc_wkd.mean - model.ttc_wkd.mean) / random.ttc_wkd.mean * 100.0,
        ttc_delta_s: random.ttc_wkd.mean - model.ttc_wkd.mean,
        tq_delta_s: random.tq_wkd.mean - model.tq_wkd.mean,
        tx_delta_s: random.tx_wkd.mean - model.tx_wkd.mean,
    })
}

/// Plan file reference: a path (resolved by the caller) or an inline plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanSource {
    Path(String),
    Inline(Box<SelectionPlan>),
}

/// Everything one `simulate` run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub plan: PlanSource,
    pub behaviors: Vec<ResourceBehavior>,
    pub trials: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn from_json_slice(data: &[u8]) -> Result<Self> {
        let s: Scenario = crate::io::from_json("scenario", data)?;
        if s.trials == 0 {
            return Err(Error::invalid("scenario", "trials must be >= 1"));
        }
        behaviors_from_list(s.behaviors.clone())?;
        let used: BTreeSet<&str> = s.behaviors.iter().map(|b| b.resource_id.as_str()).collect();
        if used.is_empty() {
            return Err(Error::invalid("scenario", "no behaviors"));
        }
        Ok(s)
    }
}
