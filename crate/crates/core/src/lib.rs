//! Resource selection for bag-of-tasks workloads on heterogeneous computing
//! resources.
//!
//! Tasks and resources are described as consumable requirements and
//! capabilities ([`model`]). Matchmaking decides where a task can run and
//! picks the resource with the best affinity ([`matchmaking`]). Execution
//! times come from baseline hardware-counter profiles ([`prediction`]) and
//! queue waits from job history ([`queuewait`]); [`selection`] combines them
//! into a per-task placement, and [`sim`] measures what that placement buys
//! over a random one.

pub mod config;
pub mod error;
pub mod io;
pub mod matchmaking;
pub mod model;
pub mod prediction;
pub mod queuewait;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod selection;
pub mod sim;
pub mod stats;

pub use config::Config;
pub use error::{Error, Result};
pub use matchmaking::{res_select, satisfy_req, satisfy_task, viable_set, Affinity, AffinityRegistry, ViableSet};
pub use model::{
    aggregate, cost, Capability, ConditionSet, ConsumableSpec, Instruction, Requirement, ResourceSpec, ScalarValue,
    TaskSpec, WorkloadSpec,
};
pub use selection::{plan_model, plan_random, PlanInputs, SelectionPlan, Strategy, TtcEstimate};
pub use sim::{compare, simulate, SimulationResult};
