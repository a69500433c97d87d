//! Decoders for every on-disk format, and the canonical JSON encoder.
//!
//! All decoders take raw bytes (or a reader for CSV) and never panic on
//! malformed input.

use std::collections::BTreeSet;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::model::{ResourceSpec, TaskSpec, WorkloadSpec};
use crate::prediction::{ClockTable, IngestReport, ProfileStore};
use crate::queuewait::QueueStore;
use crate::selection::SelectionPlan;
use crate::sim::Scenario;

pub(crate) fn from_json<T: DeserializeOwned>(source: &str, data: &[u8]) -> Result<T> {
    serde_json::from_slice(data).map_err(|e| {
        let line = (e.line() > 0).then_some(e.line() as u64);
        Error::parse(source, line, e)
    })
}

pub fn parse_task(data: &[u8]) -> Result<TaskSpec> {
    from_json("task", data)
}

pub fn parse_workload(data: &[u8]) -> Result<WorkloadSpec> {
    from_json("workload", data)
}

/// Either a single task or a whole workload, told apart by the `tasks` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskOrWorkload {
    Workload(WorkloadSpec),
    Task(TaskSpec),
}

pub fn parse_task_or_workload(data: &[u8]) -> Result<TaskOrWorkload> {
    let value: serde_json::Value = from_json("task", data)?;
    if value.get("tasks").is_some() {
        serde_json::from_value(value)
            .map(TaskOrWorkload::Workload)
            .map_err(|e| Error::parse("workload", None, e))
    } else {
        serde_json::from_value(value)
            .map(TaskOrWorkload::Task)
            .map_err(|e| Error::parse("task", None, e))
    }
}

/// A pool file: a non-empty JSON array of resources with unique identifiers.
pub fn parse_pool(data: &[u8]) -> Result<Vec<ResourceSpec>> {
    let pool: Vec<ResourceSpec> = from_json("pool", data)?;
    if pool.is_empty() {
        return Err(Error::invalid("pool", "pool is empty"));
    }
    let mut ids = BTreeSet::new();
    for r in &pool {
        if !ids.insert(r.resource_id()) {
            return Err(Error::invalid("pool", format!("duplicate resource `{}`", r.resource_id())));
        }
    }
    Ok(pool)
}

pub fn parse_clocks(data: &[u8]) -> Result<ClockTable> {
    ClockTable::from_json_slice(data)
}

pub fn parse_config(data: &[u8]) -> Result<Config> {
    Config::from_json_slice(data)
}

pub fn parse_plan(data: &[u8]) -> Result<SelectionPlan> {
    SelectionPlan::from_json_slice(data)
}

pub fn parse_scenario(data: &[u8]) -> Result<Scenario> {
    Scenario::from_json_slice(data)
}

pub fn parse_profiles(data: &[u8], source: &str) -> Result<(ProfileStore, IngestReport)> {
    let mut store = ProfileStore::new();
    let report = store.ingest_csv(data, source)?;
    Ok((store, report))
}

pub fn parse_history(data: &[u8], source: &str) -> Result<(QueueStore, IngestReport)> {
    let mut store = QueueStore::new();
    let report = store.ingest_csv(data, source)?;
    Ok((store, report))
}

/// Pretty-printed JSON with a trailing newline. Maps are `BTreeMap`s
/// throughout, so key order is fixed.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::invalid("output", e.to_string()))?;
    s.push('\n');
    Ok(s)
}
