//! Consumables, requirements and capabilities, plus task aggregation and the
//! execution-cost function built on them.
//!
//! A task asks for fixed amounts of typed consumables; a resource offers
//! consumables at fixed rates. Aggregation collapses a task's instruction
//! sequence into one total per distinct consumable, and the cost of a task on
//! a resource is the sum of `amount / rate` over matched pairs.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matchmaking::satisfy_req;

/// A scalar appearing in a form condition.
///
/// Integers and decimals compare numerically with each other; strings compare
/// byte-exact and never equal a number.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl ScalarValue {
    fn rank(&self) -> u8 {
        match self {
            ScalarValue::Int(_) | ScalarValue::Float(_) => 0,
            ScalarValue::Str(_) => 1,
        }
    }
}

// 2^63 as f64; every finite float below it in magnitude truncates into i64.
const I64_SPAN: f64 = 9_223_372_036_854_775_808.0;

fn int_float_cmp(i: i64, f: f64) -> Ordering {
    if f.is_nan() {
        return Ordering::Less;
    }
    if f >= I64_SPAN {
        return Ordering::Less;
    }
    if f < -I64_SPAN {
        return Ordering::Greater;
    }
    let t = f.trunc();
    match i.cmp(&(t as i64)) {
        Ordering::Equal if f > t => Ordering::Less,
        Ordering::Equal if f < t => Ordering::Greater,
        other => other,
    }
}

impl Ord for ScalarValue {
    fn cmp(&self, other: &Self) -> Ordering {
        use ScalarValue::*;
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => a.partial_cmp(b).unwrap_or_else(|| a.total_cmp(b)),
            (Int(a), Float(b)) => int_float_cmp(*a, *b),
            (Float(a), Int(b)) => int_float_cmp(*b, *a).reverse(),
            (Str(a), Str(b)) => a.as_bytes().cmp(b.as_bytes()),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for ScalarValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for ScalarValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ScalarValue {}

impl fmt::Display for ScalarValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarValue::Int(v) => write!(f, "{v}"),
            ScalarValue::Float(v) => write!(f, "{v:?}"),
            ScalarValue::Str(v) => write!(f, "{v:?}"),
        }
    }
}

impl From<&str> for ScalarValue {
    fn from(s: &str) -> Self {
        ScalarValue::Str(s.to_string())
    }
}

impl From<i64> for ScalarValue {
    fn from(v: i64) -> Self {
        ScalarValue::Int(v)
    }
}

impl From<f64> for ScalarValue {
    fn from(v: f64) -> Self {
        ScalarValue::Float(v)
    }
}

/// Non-empty set of acceptable values for one form attribute, kept sorted and
/// free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScalarValue>", into = "Vec<ScalarValue>")]
pub struct ConditionSet(Vec<ScalarValue>);

impl ConditionSet {
    pub fn new(values: impl IntoIterator<Item = ScalarValue>) -> Result<Self> {
        let mut values: Vec<ScalarValue> = values.into_iter().collect();
        if values.is_empty() {
            return Err(Error::invalid("condition", "condition set is empty"));
        }
        if values
            .iter()
            .any(|v| matches!(v, ScalarValue::Float(f) if !f.is_finite()))
        {
            return Err(Error::invalid("condition", "non-finite number in condition set"));
        }
        values.sort();
        values.dedup();
        Ok(ConditionSet(values))
    }

    pub fn values(&self) -> &[ScalarValue] {
        &self.0
    }

    /// True when the two sets share at least one value.
    pub fn intersects(&self, other: &ConditionSet) -> bool {
        // Both sides are sorted, so a merge walk suffices.
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => return true,
            }
        }
        false
    }
}

impl TryFrom<Vec<ScalarValue>> for ConditionSet {
    type Error = Error;

    fn try_from(values: Vec<ScalarValue>) -> Result<Self> {
        ConditionSet::new(values)
    }
}

impl From<ConditionSet> for Vec<ScalarValue> {
    fn from(set: ConditionSet) -> Self {
        set.0
    }
}

/// A typed unit of work together with the conditions under which it may be
/// consumed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumableSpec {
    #[serde(rename = "type")]
    ctype: String,
    #[serde(default)]
    form: BTreeMap<String, ConditionSet>,
}

impl ConsumableSpec {
    pub fn new(ctype: impl Into<String>, form: BTreeMap<String, ConditionSet>) -> Result<Self> {
        let ctype = ctype.into();
        if ctype.is_empty() {
            return Err(Error::invalid("consumable", "type is empty"));
        }
        Ok(ConsumableSpec { ctype, form })
    }

    /// Consumable without form conditions.
    pub fn plain(ctype: impl Into<String>) -> Result<Self> {
        Self::new(ctype, BTreeMap::new())
    }

    /// Builder-style helper adding one attribute condition.
    pub fn with_condition<V: Into<ScalarValue>>(
        mut self,
        attr: impl Into<String>,
        values: impl IntoIterator<Item = V>,
    ) -> Result<Self> {
        let set = ConditionSet::new(values.into_iter().map(Into::into))?;
        self.form.insert(attr.into(), set);
        Ok(self)
    }

    pub fn ctype(&self) -> &str {
        &self.ctype
    }

    pub fn form(&self) -> &BTreeMap<String, ConditionSet> {
        &self.form
    }

    fn validate(&self) -> Result<()> {
        if self.ctype.is_empty() {
            return Err(Error::invalid("consumable", "type is empty"));
        }
        Ok(())
    }
}

impl fmt::Display for ConsumableSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ctype)?;
        if !self.form.is_empty() {
            f.write_str("{")?;
            for (n, (attr, cond)) in self.form.iter().enumerate() {
                if n > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{attr}: [")?;
                for (k, v) in cond.values().iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")?;
            }
            f.write_str("}")?;
        }
        Ok(())
    }
}

fn check_positive(what: &'static str, field: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::invalid(what, format!("{field} must be finite and > 0, got {value}")));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequirement {
    #[serde(rename = "type")]
    ctype: String,
    #[serde(default)]
    form: BTreeMap<String, ConditionSet>,
    amount: f64,
}

/// A fixed, strictly positive amount of one consumable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRequirement")]
pub struct Requirement {
    #[serde(flatten)]
    consumable: ConsumableSpec,
    amount: f64,
}

impl Requirement {
    pub fn new(consumable: ConsumableSpec, amount: f64) -> Result<Self> {
        consumable.validate()?;
        check_positive("requirement", "amount", amount)?;
        Ok(Requirement { consumable, amount })
    }

    pub fn consumable(&self) -> &ConsumableSpec {
        &self.consumable
    }

    pub fn amount(&self) -> f64 {
        self.amount
    }
}

impl TryFrom<RawRequirement> for Requirement {
    type Error = Error;

    fn try_from(raw: RawRequirement) -> Result<Self> {
        Requirement::new(
            ConsumableSpec {
                ctype: raw.ctype,
                form: raw.form,
            },
            raw.amount,
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCapability {
    #[serde(rename = "type")]
    ctype: String,
    #[serde(default)]
    form: BTreeMap<String, ConditionSet>,
    rate: f64,
}

/// A consumable offered at a fixed, strictly positive rate (units per unit
/// cost, e.g. cycles per second).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCapability")]
pub struct Capability {
    #[serde(flatten)]
    consumable: ConsumableSpec,
    rate: f64,
}

impl Capability {
    pub fn new(consumable: ConsumableSpec, rate: f64) -> Result<Self> {
        consumable.validate()?;
        check_positive("capability", "rate", rate)?;
        Ok(Capability { consumable, rate })
    }

    pub fn consumable(&self) -> &ConsumableSpec {
        &self.consumable
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Same consumable at a different rate.
    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        Capability::new(self.consumable.clone(), rate)
    }
}

impl TryFrom<RawCapability> for Capability {
    type Error = Error;

    fn try_from(raw: RawCapability) -> Result<Self> {
        Capability::new(
            ConsumableSpec {
                ctype: raw.ctype,
                form: raw.form,
            },
            raw.rate,
        )
    }
}

/// Sums requirements per distinct consumable, in first-seen order of
/// accumulation, and returns them canonically ordered.
fn merge_by_sum<'a>(reqs: impl IntoIterator<Item = &'a Requirement>) -> Vec<Requirement> {
    let mut totals: BTreeMap<&ConsumableSpec, f64> = BTreeMap::new();
    for req in reqs {
        *totals.entry(&req.consumable).or_insert(0.0) += req.amount;
    }
    totals
        .into_iter()
        .map(|(c, amount)| Requirement {
            consumable: c.clone(),
            amount,
        })
        .collect()
}

/// One instruction: a non-empty set of requirements, at most one per
/// consumable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Requirement>", into = "Vec<Requirement>")]
pub struct Instruction(Vec<Requirement>);

impl Instruction {
    /// Duplicate consumables within the instruction are merged by summing.
    pub fn new(requirements: Vec<Requirement>) -> Result<Self> {
        if requirements.is_empty() {
            return Err(Error::invalid("instruction", "instruction has no requirements"));
        }
        Ok(Instruction(merge_by_sum(&requirements)))
    }

    pub fn requirements(&self) -> &[Requirement] {
        &self.0
    }
}

impl TryFrom<Vec<Requirement>> for Instruction {
    type Error = Error;

    fn try_from(reqs: Vec<Requirement>) -> Result<Self> {
        Instruction::new(reqs)
    }
}

impl From<Instruction> for Vec<Requirement> {
    fn from(ins: Instruction) -> Self {
        ins.0
    }
}

/// Either the ordered instruction sequence or the per-consumable totals.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskBody {
    Sequenced(Vec<Instruction>),
    Aggregated(Vec<Requirement>),
}

/// Reference into the baseline profile store used to predict execution time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRef {
    pub task_id: String,
    pub workload_param: i64,
}

fn default_cores() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instructions: Option<Vec<Instruction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    requirements: Option<Vec<Requirement>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profile: Option<ProfileRef>,
    #[serde(default = "default_cores", skip_serializing_if = "is_one")]
    cores: u32,
}

/// A task: an identifier, its body, and the request context used when
/// estimating queue waits and execution times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTask", into = "RawTask")]
pub struct TaskSpec {
    task_id: String,
    body: TaskBody,
    profile: Option<ProfileRef>,
    cores: u32,
}

impl TaskSpec {
    pub fn sequenced(task_id: impl Into<String>, instructions: Vec<Instruction>) -> Result<Self> {
        let task_id = task_id.into();
        if instructions.is_empty() {
            return Err(Error::EmptyTask(task_id));
        }
        Self::build(task_id, TaskBody::Sequenced(instructions))
    }

    /// Builds an aggregated task; duplicate consumables are merged by summing.
    pub fn aggregated(task_id: impl Into<String>, requirements: Vec<Requirement>) -> Result<Self> {
        let task_id = task_id.into();
        if requirements.is_empty() {
            return Err(Error::EmptyTask(task_id));
        }
        let merged = merge_by_sum(&requirements);
        Self::build(task_id, TaskBody::Aggregated(merged))
    }

    fn build(task_id: String, body: TaskBody) -> Result<Self> {
        if task_id.is_empty() {
            return Err(Error::invalid("task", "task_id is empty"));
        }
        Ok(TaskSpec {
            task_id,
            body,
            profile: None,
            cores: 1,
        })
    }

    pub fn with_profile(mut self, profile: ProfileRef) -> Self {
        self.profile = Some(profile);
        self
    }

    pub fn with_cores(mut self, cores: u32) -> Result<Self> {
        if cores == 0 {
            return Err(Error::invalid("task", "cores must be >= 1"));
        }
        self.cores = cores;
        Ok(self)
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn body(&self) -> &TaskBody {
        &self.body
    }

    pub fn profile(&self) -> Option<&ProfileRef> {
        self.profile.as_ref()
    }

    pub fn cores(&self) -> u32 {
        self.cores
    }

    pub fn is_aggregated(&self) -> bool {
        matches!(self.body, TaskBody::Aggregated(_))
    }

    /// Requirements of the aggregated form, computing it when needed.
    pub fn requirements(&self) -> Vec<Requirement> {
        match &self.body {
            TaskBody::Aggregated(reqs) => reqs.clone(),
            TaskBody::Sequenced(seq) => merge_by_sum(seq.iter().flat_map(|ins| ins.0.iter())),
        }
    }
}

impl TryFrom<RawTask> for TaskSpec {
    type Error = Error;

    fn try_from(raw: RawTask) -> Result<Self> {
        let task = match (raw.instructions, raw.requirements) {
            (Some(seq), None) => TaskSpec::sequenced(raw.task_id, seq)?,
            (None, Some(reqs)) => TaskSpec::aggregated(raw.task_id, reqs)?,
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "task",
                    "exactly one of `instructions` or `requirements` is allowed",
                ))
            }
            (None, None) => {
                return Err(Error::invalid(
                    "task",
                    "one of `instructions` or `requirements` is required",
                ))
            }
        };
        let task = match raw.profile {
            Some(p) => task.with_profile(p),
            None => task,
        };
        task.with_cores(raw.cores)
    }
}

impl From<TaskSpec> for RawTask {
    fn from(task: TaskSpec) -> Self {
        let (instructions, requirements) = match task.body {
            TaskBody::Sequenced(seq) => (Some(seq), None),
            TaskBody::Aggregated(reqs) => (None, Some(reqs)),
        };
        RawTask {
            task_id: task.task_id,
            instructions,
            requirements,
            profile: task.profile,
            cores: task.cores,
        }
    }
}

/// Collapses an instruction sequence into one requirement per distinct
/// consumable whose amount is the sum over every instruction.
///
/// Already-aggregated tasks are returned unchanged.
pub fn aggregate(task: &TaskSpec) -> Result<TaskSpec> {
    match &task.body {
        TaskBody::Aggregated(_) => Ok(task.clone()),
        TaskBody::Sequenced(seq) if seq.is_empty() => Err(Error::EmptyTask(task.task_id.clone())),
        TaskBody::Sequenced(_) => Ok(TaskSpec {
            task_id: task.task_id.clone(),
            body: TaskBody::Aggregated(task.requirements()),
            profile: task.profile.clone(),
            cores: task.cores,
        }),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    workload_id: String,
    tasks: Vec<TaskSpec>,
}

/// A set of concurrently runnable tasks with unique identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWorkload", into = "RawWorkload")]
pub struct WorkloadSpec {
    workload_id: String,
    tasks: Vec<TaskSpec>,
}

impl WorkloadSpec {
    pub fn new(workload_id: impl Into<String>, tasks: Vec<TaskSpec>) -> Result<Self> {
        let workload_id = workload_id.into();
        let mut seen = std::collections::BTreeSet::new();
        for t in &tasks {
            if !seen.insert(t.task_id()) {
                return Err(Error::invalid(
                    "workload",
                    format!("duplicate task_id `{}`", t.task_id()),
                ));
            }
        }
        Ok(WorkloadSpec { workload_id, tasks })
    }

    pub fn workload_id(&self) -> &str {
        &self.workload_id
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }
}

impl TryFrom<RawWorkload> for WorkloadSpec {
    type Error = Error;

    fn try_from(raw: RawWorkload) -> Result<Self> {
        WorkloadSpec::new(raw.workload_id, raw.tasks)
    }
}

impl From<WorkloadSpec> for RawWorkload {
    fn from(w: WorkloadSpec) -> Self {
        RawWorkload {
            workload_id: w.workload_id,
            tasks: w.tasks,
        }
    }
}

fn default_queue() -> String {
    "default".to_string()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResource {
    resource_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    machine: Option<String>,
    #[serde(default = "default_queue")]
    queue: String,
    capabilities: Vec<Capability>,
}

/// A computing resource: its capabilities and the batch queue it is reached
/// through. `machine` defaults to the resource identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawResource", into = "RawResource")]
pub struct ResourceSpec {
    resource_id: String,
    machine: Option<String>,
    queue: String,
    capabilities: Vec<Capability>,
}

impl ResourceSpec {
    pub fn new(resource_id: impl Into<String>, capabilities: Vec<Capability>) -> Result<Self> {
        let resource_id = resource_id.into();
        if resource_id.is_empty() {
            return Err(Error::invalid("resource", "resource_id is empty"));
        }
        if capabilities.is_empty() {
            return Err(Error::invalid(
                "resource",
                format!("resource `{resource_id}` has no capabilities"),
            ));
        }
        Ok(ResourceSpec {
            resource_id,
            machine: None,
            queue: default_queue(),
            capabilities,
        })
    }

    pub fn with_queue(mut self, machine: impl Into<String>, queue: impl Into<String>) -> Self {
        self.machine = Some(machine.into());
        self.queue = queue.into();
        self
    }

    pub fn resource_id(&self) -> &str {
        &self.resource_id
    }

    pub fn machine(&self) -> &str {
        self.machine.as_deref().unwrap_or(&self.resource_id)
    }

    pub fn queue(&self) -> &str {
        &self.queue
    }

    pub fn capabilities(&self) -> &[Capability] {
        &self.capabilities
    }
}

impl TryFrom<RawResource> for ResourceSpec {
    type Error = Error;

    fn try_from(raw: RawResource) -> Result<Self> {
        let mut res = ResourceSpec::new(raw.resource_id, raw.capabilities)?;
        res.machine = raw.machine;
        res.queue = raw.queue;
        Ok(res)
    }
}

impl From<ResourceSpec> for RawResource {
    fn from(r: ResourceSpec) -> Self {
        RawResource {
            resource_id: r.resource_id,
            machine: r.machine,
            queue: r.queue,
            capabilities: r.capabilities,
        }
    }
}

/// Which capability paid for one requirement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Charge {
    pub requirement: usize,
    pub capability: usize,
    pub cost: f64,
}

/// Total cost plus the requirement-to-capability matches behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub charges: Vec<Charge>,
}

/// Cost of running `task` on `resource`, with the charged capability for every
/// requirement.
///
/// Matching uses the full requirement-satisfaction predicate. When several
/// capabilities satisfy one requirement, the highest-rate one is charged
/// (earliest on ties).
pub fn cost_breakdown(task: &TaskSpec, resource: &ResourceSpec) -> Result<CostBreakdown> {
    let reqs = task.requirements();
    if reqs.is_empty() {
        return Err(Error::EmptyTask(task.task_id.clone()));
    }
    let mut total = 0.0;
    let mut charges = Vec::with_capacity(reqs.len());
    for (i, req) in reqs.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, cap) in resource.capabilities.iter().enumerate() {
            if satisfy_req(req, cap) && best.is_none_or(|(_, rate)| cap.rate > rate) {
                best = Some((j, cap.rate));
            }
        }
        let Some((j, rate)) = best else {
            return Err(Error::Unsatisfiable {
                task_id: task.task_id.clone(),
                resource_id: resource.resource_id.clone(),
                requirement: format!("{} x {}", req.amount, req.consumable),
            });
        };
        let c = req.amount / rate;
        total += c;
        charges.push(Charge {
            requirement: i,
            capability: j,
            cost: c,
        });
    }
    Ok(CostBreakdown { total, charges })
}

/// Cost of running `task` on `resource` (seconds when rates are per second).
pub fn cost(task: &TaskSpec, resource: &ResourceSpec) -> Result<f64> {
    cost_breakdown(task, resource).map(|b| b.total)
}
