//! Random instance generators and brute-force oracles shared by the
//! integration tests. Oracles deliberately avoid the library's own helpers.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resel_core::model::{Capability, ConditionSet, ConsumableSpec, Instruction, Requirement, ResourceSpec, ScalarValue, TaskSpec};
use resel_core::model::WorkloadSpec;
use resel_core::queuewait::{QueueStore, QueueWaitQuery, QueueWaitRecord, SimilarityBuckets};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const TYPES: [&str; 3] = ["x86cyc", "gpucyc", "membw"];
const ATTRS: [&str; 3] = ["isa", "vendor", "site"];

fn scalar(r: &mut impl Rng) -> ScalarValue {
    match r.random_range(0..5) {
        0 => ScalarValue::Int(r.random_range(0..3)),
        1 => ScalarValue::Float(r.random_range(0..3) as f64 + 0.5),
        2 => ScalarValue::Float(r.random_range(0..3) as f64),
        _ => ScalarValue::Str(["a", "b", "c"].choose(r).unwrap().to_string()),
    }
}

/// A consumable from a deliberately small universe so that matches, partial
/// matches and misses are all common.
pub fn consumable(r: &mut impl Rng) -> ConsumableSpec {
    let mut form = BTreeMap::new();
    for attr in ATTRS {
        if r.random_bool(0.4) {
            let n = r.random_range(1..=3);
            let values: Vec<ScalarValue> = (0..n).map(|_| scalar(r)).collect();
            form.insert(attr.to_string(), ConditionSet::new(values).unwrap());
        }
    }
    ConsumableSpec::new(*TYPES.choose(r).unwrap(), form).unwrap()
}

/// Amounts and rates that are small multiples of powers of two keep sums
/// exact in most draws; the oracles still compare with a tolerance.
pub fn amount(r: &mut impl Rng) -> f64 {
    r.random_range(1..1_000_000) as f64 * 0.25
}

/// A sequenced task with up to `max_instr` instructions drawn from a palette
/// of up to `max_consumables` distinct consumables.
pub fn sequenced_task(r: &mut impl Rng, id: &str, max_instr: usize, max_consumables: usize) -> TaskSpec {
    let palette: Vec<ConsumableSpec> = (0..r.random_range(1..=max_consumables)).map(|_| consumable(r)).collect();
    let n = r.random_range(1..=max_instr);
    let instructions = (0..n)
        .map(|_| {
            let k = r.random_range(1..=palette.len().min(4));
            let reqs = (0..k)
                .map(|_| Requirement::new(palette.choose(r).unwrap().clone(), amount(r)).unwrap())
                .collect();
            Instruction::new(reqs).unwrap()
        })
        .collect();
    TaskSpec::sequenced(id, instructions).unwrap()
}

pub fn resource(r: &mut impl Rng, id: &str, max_caps: usize) -> ResourceSpec {
    let caps = (0..r.random_range(1..=max_caps))
        .map(|_| Capability::new(consumable(r), r.random_range(1..64) as f64 * 0.5).unwrap())
        .collect();
    ResourceSpec::new(id, caps).unwrap()
}

/// Eq. of consumables by plain structure: same type, same attribute names,
/// same value sets.
fn same_consumable(a: &ConsumableSpec, b: &ConsumableSpec) -> bool {
    a.ctype() == b.ctype()
        && a.form().len() == b.form().len()
        && a.form().iter().all(|(k, v)| b.form().get(k).is_some_and(|w| v.values() == w.values()))
}

/// Double loop over instructions and their requirements, accumulating into an
/// unsorted list by linear search.
pub fn aggregate_oracle(task: &TaskSpec) -> Vec<(ConsumableSpec, f64)> {
    let resel_core::model::TaskBody::Sequenced(seq) = task.body() else {
        return task.requirements().into_iter().map(|q| (q.consumable().clone(), q.amount())).collect();
    };
    let mut acc: Vec<(ConsumableSpec, f64)> = Vec::new();
    for instr in seq {
        for req in instr.requirements() {
            match acc.iter_mut().find(|(c, _)| same_consumable(c, req.consumable())) {
                Some((_, a)) => *a += req.amount(),
                None => acc.push((req.consumable().clone(), req.amount())),
            }
        }
    }
    acc
}

fn values_equal(a: &ScalarValue, b: &ScalarValue) -> bool {
    let num = |v: &ScalarValue| match v {
        ScalarValue::Int(i) => Some(*i as f64),
        ScalarValue::Float(f) => Some(*f),
        ScalarValue::Str(_) => None,
    };
    match (a, b) {
        (ScalarValue::Str(x), ScalarValue::Str(y)) => x == y,
        _ => matches!((num(a), num(b)), (Some(x), Some(y)) if x == y),
    }
}

/// Requirement satisfaction written as nested loops over raw values.
pub fn satisfy_req_oracle(req: &ConsumableSpec, cap: &ConsumableSpec) -> bool {
    if req.ctype() != cap.ctype() {
        return false;
    }
    for (attr, want) in req.form() {
        let Some(have) = cap.form().get(attr) else { return false };
        let mut hit = false;
        for a in want.values() {
            for b in have.values() {
                if values_equal(a, b) {
                    hit = true;
                }
            }
        }
        if !hit {
            return false;
        }
    }
    true
}

pub fn satisfy_task_oracle(reqs: &[(ConsumableSpec, f64)], res: &ResourceSpec) -> bool {
    reqs.iter()
        .all(|(c, _)| res.capabilities().iter().any(|cap| satisfy_req_oracle(c, cap.consumable())))
}

/// Cost: for each aggregated requirement, amount over the best matching rate.
pub fn cost_oracle(reqs: &[(ConsumableSpec, f64)], res: &ResourceSpec) -> Option<f64> {
    let mut total = 0.0;
    for (c, amount) in reqs {
        let mut best = 0.0f64;
        for cap in res.capabilities() {
            if satisfy_req_oracle(c, cap.consumable()) && cap.rate() > best {
                best = cap.rate();
            }
        }
        if best == 0.0 {
            return None;
        }
        total += amount / best;
    }
    Some(total)
}

/// First index holding the maximum, by exhaustive comparison against every
/// other entry.
pub fn first_argmax_oracle(values: &[f64]) -> usize {
    if values.iter().all(|v| *v == f64::NEG_INFINITY) {
        return 0;
    }
    (0..values.len())
        .find(|&i| values.iter().all(|v| *v <= values[i]) && values[i] > f64::NEG_INFINITY)
        .unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

pub const MACHINES: [(&str, &str); 3] = [("comet", "compute"), ("bridges", "RM"), ("comet", "debug")];

/// A queue record with integer waits, so means are exact regardless of
/// summation order.
pub fn queue_record(r: &mut impl Rng, now: i64) -> QueueWaitRecord {
    let (machine, queue) = *MACHINES.choose(r).unwrap();
    let walltimes = [600.0, 900.0, 1800.0, 3600.0, 7200.0, 14400.0, 90000.0];
    QueueWaitRecord {
        machine: machine.into(),
        queue: queue.into(),
        submit_time: now - r.random_range(-3600..10 * 86400),
        wait_s: r.random_range(0..20_000) as f64,
        walltime_req_s: *walltimes.choose(r).unwrap(),
        cores_req: [1u32, 2, 16, 24, 64, 128].choose(r).copied().unwrap(),
    }
}

fn bucket_oracle(edges: &[f64], v: f64) -> usize {
    let mut k = 0;
    for e in edges {
        if *e <= v {
            k += 1;
        }
    }
    k
}

/// Filter-then-mean, straight from the definition. Returns
/// `(mean, n, fallback_used)`.
pub fn queue_oracle(
    records: &[QueueWaitRecord],
    q: &QueueWaitQuery,
    b: &SimilarityBuckets,
) -> Option<(f64, usize, bool)> {
    let in_scope = |x: &&QueueWaitRecord| {
        x.machine == q.machine
            && x.queue == q.queue
            && x.submit_time >= q.now - q.window_s
            && x.submit_time <= q.now
    };
    let similar = |x: &&QueueWaitRecord| {
        bucket_oracle(&b.walltime_bucket_edges_s, x.walltime_req_s)
            == bucket_oracle(&b.walltime_bucket_edges_s, q.walltime_req_s)
            && bucket_oracle(&b.cores_bucket_edges, x.cores_req as f64)
                == bucket_oracle(&b.cores_bucket_edges, q.cores_req as f64)
    };
    let strict: Vec<f64> = records.iter().filter(in_scope).filter(similar).map(|x| x.wait_s).collect();
    let (waits, fallback) = if strict.is_empty() {
        (records.iter().filter(in_scope).map(|x| x.wait_s).collect::<Vec<_>>(), true)
    } else {
        (strict, false)
    };
    if waits.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for w in &waits {
        sum += w;
    }
    Some((sum / waits.len() as f64, waits.len(), fallback))
}

/// A pool of 1–4 random resources, `n_tasks` tasks each viable somewhere,
/// and queue history for every machine/queue.
pub fn random_instance(r: &mut impl Rng, n_tasks: usize) -> (WorkloadSpec, Vec<ResourceSpec>, QueueStore) {
    let now = 1_717_200_000;
    let n_res = r.random_range(1..=4);
    let pool: Vec<ResourceSpec> = (0..n_res)
        .map(|i| {
            let (m, q) = MACHINES[i % MACHINES.len()];
            resource(r, &format!("r{i}"), 6).with_queue(m, q)
        })
        .collect();
    // Every task is viable on at least one resource: its requirements are
    // drawn from that resource's capabilities.
    let tasks = (0..n_tasks)
        .map(|i| {
            let home = &pool[r.random_range(0..pool.len())];
            let caps = home.capabilities();
            let k = r.random_range(1..=caps.len().min(3));
            let reqs = (0..k)
                .map(|_| {
                    let c = &caps[r.random_range(0..caps.len())];
                    Requirement::new(c.consumable().clone(), amount(r)).unwrap()
                })
                .collect();
            TaskSpec::aggregated(format!("t{i:04}"), reqs).unwrap()
        })
        .collect();
    let mut history = QueueStore::new();
    for _ in 0..400 {
        history.insert(queue_record(r, now)).unwrap();
    }
    (WorkloadSpec::new("w", tasks).unwrap(), pool, history)
}
