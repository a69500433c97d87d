//! Requirement/capability matching, viable-set construction and
//! affinity-maximizing selection.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Capability, Requirement, ResourceSpec, TaskSpec};

/// Whether `cap` can be used to satisfy `req`.
///
/// The consumable types must be equal, every attribute of the requirement's
/// form must be present in the capability's form, and each such attribute's
/// condition sets must share at least one value.
pub fn satisfy_req(req: &Requirement, cap: &Capability) -> bool {
    let (rc, cc) = (req.consumable(), cap.consumable());
    if rc.ctype() != cc.ctype() {
        return false;
    }
    rc.form().iter().all(|(attr, cond)| {
        cc.form()
            .get(attr)
            .is_some_and(|cap_cond| cap_cond.intersects(cond))
    })
}

/// Whether every requirement of `task` is satisfied by at least one
/// capability of `resource`. Sequenced tasks are aggregated first.
pub fn satisfy_task(task: &TaskSpec, resource: &ResourceSpec) -> bool {
    task.requirements()
        .iter()
        .all(|req| resource.capabilities().iter().any(|cap| satisfy_req(req, cap)))
}

/// Resources of a pool on which one task can execute, in pool order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViableSet {
    pub task_id: String,
    #[serde(rename = "viable")]
    pub resource_ids: Vec<String>,
}

impl ViableSet {
    pub fn is_empty(&self) -> bool {
        self.resource_ids.is_empty()
    }
}

pub fn viable_set(task: &TaskSpec, pool: &[ResourceSpec]) -> ViableSet {
    // Aggregate once instead of per resource.
    let reqs = task.requirements();
    let resource_ids = pool
        .iter()
        .filter(|res| {
            reqs.iter()
                .all(|req| res.capabilities().iter().any(|cap| satisfy_req(req, cap)))
        })
        .map(|res| res.resource_id().to_string())
        .collect();
    ViableSet {
        task_id: task.task_id().to_string(),
        resource_ids,
    }
}

/// Index of the first maximum affinity. `-inf` entries are only chosen when
/// every entry is `-inf`, in which case the first one wins.
pub fn select_index<P>(inputs: &[P], affinity: impl Fn(&P) -> f64) -> Result<usize> {
    if inputs.is_empty() {
        return Err(Error::EmptyViableSet(String::new()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, input) in inputs.iter().enumerate() {
        let value = affinity(input);
        if value.is_nan() {
            return Err(Error::NanAffinity(i));
        }
        // Strict comparison: earlier candidates keep ties.
        if best.is_none_or(|(_, b)| b < value) && value > f64::NEG_INFINITY {
            best = Some((i, value));
        }
    }
    Ok(best.map_or(0, |(i, _)| i))
}

/// Picks the viable resource whose input tuple has the highest affinity.
pub fn res_select<'a, S, P>(
    vrs_ids: &'a [S],
    inputs: &[P],
    affinity: impl Fn(&P) -> f64,
) -> Result<&'a str>
where
    S: AsRef<str>,
{
    if vrs_ids.is_empty() {
        return Err(Error::EmptyViableSet(String::new()));
    }
    if vrs_ids.len() != inputs.len() {
        return Err(Error::invalid(
            "affinity inputs",
            format!("{} inputs for {} viable resources", inputs.len(), vrs_ids.len()),
        ));
    }
    let i = select_index(inputs, affinity)?;
    Ok(vrs_ids[i].as_ref())
}

/// The single input tuple scored for one (task, resource) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityInput {
    pub resource_id: String,
    pub values: BTreeMap<String, f64>,
}

impl AffinityInput {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

/// Key under which the predicted queue wait is passed to affinity functions.
pub const TQ_KEY: &str = "tq_s";
/// Key under which the predicted execution time is passed.
pub const TX_KEY: &str = "tx_s";

type AffinityFn = dyn Fn(&AffinityInput) -> f64 + Send + Sync;

/// A named affinity function. Higher values are better.
///
/// User-registered functions must be pure: the planner may call them in any
/// order and from several threads.
#[derive(Clone)]
pub struct Affinity {
    name: String,
    func: Arc<AffinityFn>,
}

impl Affinity {
    pub fn custom(
        name: impl Into<String>,
        func: impl Fn(&AffinityInput) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Affinity {
            name: name.into(),
            func: Arc::new(func),
        }
    }

    /// `-(tq + tx)`; missing values count as +inf time.
    pub fn neg_ttc() -> Self {
        Self::custom("neg_ttc", |input| {
            match (input.get(TQ_KEY), input.get(TX_KEY)) {
                (Some(tq), Some(tx)) => -(tq + tx),
                _ => f64::NEG_INFINITY,
            }
        })
    }

    /// `-tx`, ignoring queue wait.
    pub fn neg_tx() -> Self {
        Self::custom("neg_tx", |input| {
            input.get(TX_KEY).map_or(f64::NEG_INFINITY, |tx| -tx)
        })
    }

    /// `-tq`, ignoring execution time.
    pub fn neg_tq() -> Self {
        Self::custom("neg_tq", |input| {
            input.get(TQ_KEY).map_or(f64::NEG_INFINITY, |tq| -tq)
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, input: &AffinityInput) -> f64 {
        (self.func)(input)
    }
}

impl fmt::Debug for Affinity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Affinity").field("name", &self.name).finish()
    }
}

/// Built-in affinities by name, plus anything the caller registers.
#[derive(Debug, Clone)]
pub struct AffinityRegistry {
    entries: BTreeMap<String, Affinity>,
}

impl Default for AffinityRegistry {
    fn default() -> Self {
        let mut reg = AffinityRegistry {
            entries: BTreeMap::new(),
        };
        reg.register(Affinity::neg_ttc());
        reg.register(Affinity::neg_tx());
        reg.register(Affinity::neg_tq());
        reg
    }
}

impl AffinityRegistry {
    /// Adds or replaces an affinity under its own name.
    pub fn register(&mut self, affinity: Affinity) {
        self.entries.insert(affinity.name.clone(), affinity);
    }

    pub fn get(&self, name: &str) -> Result<&Affinity> {
        self.entries.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.entries.keys().map(String::as_str).collect();
            Error::invalid(
                "affinity",
                format!("unknown affinity `{name}` (known: {})", known.join(", ")),
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConsumableSpec;

    fn req_with(ctype: &str, attr: &str, vals: &[&str]) -> Requirement {
        let c = ConsumableSpec::plain(ctype)
            .unwrap()
            .with_condition(attr, vals.iter().copied())
            .unwrap();
        Requirement::new(c, 1.0).unwrap()
    }

    fn cap_with(ctype: &str, form: &[(&str, &[&str])]) -> Capability {
        let mut c = ConsumableSpec::plain(ctype).unwrap();
        for (attr, vals) in form {
            c = c.with_condition(*attr, vals.iter().copied()).unwrap();
        }
        Capability::new(c, 1.0).unwrap()
    }

    #[test]
    fn superset_capability_form_satisfies() {
        let req = req_with("x86cyc", "isa", &["x86"]);
        let cap = cap_with("x86cyc", &[("isa", &["x86"]), ("vendor", &["intel", "amd"])]);
        assert!(satisfy_req(&req, &cap));
    }

    #[test]
    fn type_mismatch_fails() {
        let req = Requirement::new(ConsumableSpec::plain("cycles").unwrap(), 1.0).unwrap();
        let cap = Capability::new(ConsumableSpec::plain("bytes").unwrap(), 1.0).unwrap();
        assert!(!satisfy_req(&req, &cap));
    }

    #[test]
    fn empty_intersection_fails() {
        let req = req_with("cyc", "simd", &["sse4.1", "avx"]);
        let cap = cap_with("cyc", &[("simd", &["avx2"])]);
        assert!(!satisfy_req(&req, &cap));
    }

    #[test]
    fn missing_attribute_fails() {
        let req = req_with("cyc", "simd", &["avx"]);
        let cap = cap_with("cyc", &[("isa", &["x86"])]);
        assert!(!satisfy_req(&req, &cap));
    }

    #[test]
    fn res_select_examples() {
        let ids = ["a", "b", "c"];
        assert_eq!(res_select(&ids, &[-10.0, -5.0, -20.0], |v| *v).unwrap(), "b");
        assert_eq!(res_select(&ids, &[3.0, 3.0, 1.0], |v| *v).unwrap(), "a");
        assert_eq!(res_select(&["only"], &[0.0], |v| *v).unwrap(), "only");
    }

    #[test]
    fn res_select_infinities() {
        let ids = ["a", "b", "c"];
        let ninf = f64::NEG_INFINITY;
        assert_eq!(res_select(&ids, &[ninf, -1e300, ninf], |v| *v).unwrap(), "b");
        assert_eq!(res_select(&ids, &[ninf, ninf, ninf], |v| *v).unwrap(), "a");
        assert!(matches!(
            res_select(&ids, &[0.0, f64::NAN, 1.0], |v| *v),
            Err(Error::NanAffinity(1))
        ));
    }

    #[test]
    fn res_select_errors() {
        let empty: [&str; 0] = [];
        let no_inputs: [f64; 0] = [];
        assert!(matches!(
            res_select(&empty, &no_inputs, |v| *v),
            Err(Error::EmptyViableSet(_))
        ));
        assert!(res_select(&["a"], &[1.0, 2.0], |v| *v).is_err());
    }

    #[test]
    fn registry_lookup() {
        let reg = AffinityRegistry::default();
        let input = AffinityInput {
            resource_id: "r".into(),
            values: [(TQ_KEY.to_string(), 10.0), (TX_KEY.to_string(), 5.0)].into(),
        };
        assert_eq!(reg.get("neg_ttc").unwrap().eval(&input), -15.0);
        assert_eq!(reg.get("neg_tx").unwrap().eval(&input), -5.0);
        assert!(reg.get("nope").is_err());
    }
}
