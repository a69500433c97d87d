//! A calibrated four-resource scenario shipped with the crate.
//!
//! The pool mirrors three HPC machines and one HTC pool (Bridges, Comet,
//! SuperMIC, OSG) with their published clock specifications. Baseline
//! profiles, queue history and run-time behaviors are synthetic: they are
//! calibrated so that SuperMIC has both the shortest queue waits and the
//! fastest execution, and that OSG runs single-core pilots with staggered
//! starts. They are illustrative, not measurements.

use crate::config::Config;
use crate::error::Result;
use crate::matchmaking::AffinityRegistry;
use crate::model::{ConsumableSpec, ProfileRef, Requirement, ResourceSpec, TaskSpec, WorkloadSpec};
use crate::prediction::{ClockTable, ProfileAggregation, ProfileStore};
use crate::queuewait::{parse_timestamp, QueueStore};
use crate::selection::{plan_model, plan_random, PlanInputs, SelectionPlan};
use crate::sim::{behaviors_from_list, Behaviors, ResourceBehavior};
use crate::io;

pub const POOL_JSON: &str = include_str!("../data/desk/pool.json");
pub const CLOCKS_JSON: &str = include_str!("../data/desk/clocks.json");
pub const CONFIG_JSON: &str = include_str!("../data/desk/config.json");
pub const BEHAVIORS_JSON: &str = include_str!("../data/desk/behaviors.json");
pub const PROFILES_CSV: &str = include_str!("../data/desk/profiles.csv");
pub const HISTORY_CSV: &str = include_str!("../data/desk/history.csv");
pub const TARGETS_CSV: &str = include_str!("../data/desk/targets.csv");

/// Query time of the bundled history.
pub const NOW_ISO: &str = "2024-06-01T00:00:00Z";
/// Profiled task every workload task refers to.
pub const PROFILE_TASK: &str = "gromacs-md";
pub const PROFILE_STEPS: i64 = 100_000;

#[derive(Debug, Clone)]
pub struct DeskScenario {
    pub pool: Vec<ResourceSpec>,
    pub clocks: ClockTable,
    pub config: Config,
    pub profiles: ProfileStore,
    pub history: QueueStore,
    pub behaviors: Behaviors,
    pub now: i64,
}

impl DeskScenario {
    /// Decodes the bundled files through the regular parsers.
    pub fn load() -> Result<Self> {
        let behaviors: Vec<ResourceBehavior> = io::from_json("behaviors", BEHAVIORS_JSON.as_bytes())?;
        Ok(DeskScenario {
            pool: io::parse_pool(POOL_JSON.as_bytes())?,
            clocks: io::parse_clocks(CLOCKS_JSON.as_bytes())?,
            config: io::parse_config(CONFIG_JSON.as_bytes())?,
            profiles: io::parse_profiles(PROFILES_CSV.as_bytes(), "profiles.csv")?.0,
            history: io::parse_history(HISTORY_CSV.as_bytes(), "history.csv")?.0,
            behaviors: behaviors_from_list(behaviors)?,
            now: parse_timestamp(NOW_ISO)?,
        })
    }

    /// `n` identical single-core tasks, each needing the profiled task's
    /// sequential x86 cycles.
    pub fn workload(&self, n: usize) -> Result<WorkloadSpec> {
        let cycles = self
            .profiles
            .sequential_cycles(PROFILE_TASK, PROFILE_STEPS, ProfileAggregation::Mean)?
            .cycles;
        let consumable = ConsumableSpec::plain("x86cyc")?.with_condition("isa", ["x86"])?;
        let tasks = (0..n)
            .map(|i| {
                let req = Requirement::new(consumable.clone(), cycles)?;
                Ok(TaskSpec::aggregated(format!("task-{i:04}"), vec![req])?.with_profile(ProfileRef {
                    task_id: PROFILE_TASK.to_string(),
                    workload_param: PROFILE_STEPS,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        WorkloadSpec::new(format!("md-{n}"), tasks)
    }

    pub fn inputs(&self) -> PlanInputs<'_> {
        PlanInputs {
            profiles: &self.profiles,
            clocks: &self.clocks,
            history: &self.history,
            now: self.now,
        }
    }

    pub fn model_plan(&self, workload: &WorkloadSpec) -> Result<SelectionPlan> {
        plan_model(workload, &self.pool, &self.inputs(), &self.config, &AffinityRegistry::default())
    }

    pub fn random_plan(&self, workload: &WorkloadSpec, seed: u64) -> Result<SelectionPlan> {
        plan_random(workload, &self.pool, seed)
    }
}
