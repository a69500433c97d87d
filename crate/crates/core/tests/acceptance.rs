//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the PASS/FAIL lines are always
//! printed: `cargo test -p resel-core --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use resel_core::config::Config;
use resel_core::matchmaking::{res_select, satisfy_req, satisfy_task, select_index, viable_set, AffinityRegistry};
use resel_core::model::{aggregate, cost, Capability, ResourceSpec, TaskBody, WorkloadSpec};
use resel_core::prediction::{diagnose, predict_tx, tx_error, xsede_osg_clocks, BaselineProfile, ClockTable, ProfileStore};
use resel_core::queuewait::{QueueStore, QueueWaitQuery, QueueWaitRecord, SimilarityBuckets, DEFAULT_WINDOW_S};
use resel_core::scenario::DeskScenario;
use resel_core::selection::{estimate_ttc, plan_model, Assignment, PlanInputs, ResourceRequest, SelectionPlan, Strategy};
use resel_core::sim::{behaviors_from_list, compare, simulate, Distribution, PilotMode, ResourceBehavior, SimulationResult};
use resel_core::{io, Error};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Option<Duration>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn criterion_1() -> Check {
    let mut r = rng(1);
    let (mut satisfiable, mut agg_checked) = (0, 0);
    for i in 0..1000 {
        let task = sequenced_task(&mut r, &format!("t{i}"), 10, 10);
        let mut res = resource(&mut r, "r", 10);
        // Half the instances get a covering resource so costs are exercised,
        // not just the unsatisfiable path.
        if i % 2 == 0 {
            let mut caps = res.capabilities().to_vec();
            for q in task.requirements() {
                if caps.len() < 10 {
                    caps.push(Capability::new(q.consumable().clone(), r.random_range(1..64) as f64 * 0.5).unwrap());
                }
            }
            caps.shuffle(&mut r);
            res = ResourceSpec::new("r", caps).unwrap();
        }

        let oracle = aggregate_oracle(&task);
        let agg = aggregate(&task).map_err(|e| e.to_string())?;
        let TaskBody::Aggregated(reqs) = agg.body() else {
            return Err("aggregate() did not return an aggregated task".into());
        };
        ensure!(reqs.len() == oracle.len(), "instance {i}: {} consumables vs oracle {}", reqs.len(), oracle.len());
        for (c, amount) in &oracle {
            let got = reqs.iter().find(|q| q.consumable() == c);
            ensure!(
                got.is_some_and(|q| rel_close(q.amount(), *amount, 1e-12)),
                "instance {i}: amount of {c} is {:?}, oracle {amount}",
                got.map(|q| q.amount())
            );
        }
        agg_checked += 1;

        match (cost(&task, &res), cost_oracle(&oracle, &res)) {
            (Ok(k), Some(o)) => {
                ensure!(rel_close(k, o, 1e-12), "instance {i}: cost {k} vs oracle {o}");
                satisfiable += 1;
            }
            (Err(Error::Unsatisfiable { .. }), None) => {}
            (got, want) => return Err(format!("instance {i}: cost {got:?} vs oracle {want:?}")),
        }
    }
    Ok(format!("{agg_checked} aggregations, {satisfiable} finite costs"))
}

fn criterion_2() -> Check {
    let mut r = rng(2);
    let mut matched = 0;
    for i in 0..1000 {
        let task = sequenced_task(&mut r, "t", 6, 6);
        let res = resource(&mut r, "r", 8);
        for q in task.requirements() {
            for cap in res.capabilities() {
                let want = satisfy_req_oracle(q.consumable(), cap.consumable());
                ensure!(satisfy_req(&q, cap) == want, "instance {i}: satisfy_req disagrees on {} vs {}", q.consumable(), cap.consumable());
            }
        }
        let want = satisfy_task_oracle(&aggregate_oracle(&task), &res);
        ensure!(satisfy_task(&task, &res) == want, "instance {i}: satisfy_task disagrees");
        matched += usize::from(want);
    }

    // Exhaustive affinity vectors: every weak ordering (with -inf as an extra
    // level) up to 6 candidates, and every max-position pattern up to 8.
    let mut vectors = 0usize;
    for n in 1..=8usize {
        let levels: Vec<f64> = if n <= 6 {
            std::iter::once(f64::NEG_INFINITY).chain((0..n).map(|v| v as f64)).collect()
        } else {
            vec![f64::NEG_INFINITY, 0.0, 1.0, 2.0]
        };
        let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        let total = levels.len().pow(n as u32);
        let mut values = vec![0.0; n];
        for code in 0..total {
            let mut c = code;
            for v in values.iter_mut() {
                *v = levels[c % levels.len()];
                c /= levels.len();
            }
            let want = first_argmax_oracle(&values);
            let got = select_index(&values, |v| *v).map_err(|e| e.to_string())?;
            ensure!(got == want, "res_select picked {got} for {values:?}, expected {want}");
            let id = res_select(&ids, &values, |v| *v).map_err(|e| e.to_string())?;
            ensure!(id == ids[want], "res_select returned `{id}` for {values:?}");
            vectors += 1;
        }
    }
    ensure!(
        matches!(res_select::<String, f64>(&[], &[], |v| *v), Err(Error::EmptyViableSet(_))),
        "empty viable set must be an error"
    );
    Ok(format!("{matched}/1000 satisfiable, {vectors} affinity vectors"))
}

fn criterion_3() -> Check {
    let mut r = rng(3);
    for i in 0..1000 {
        // Dyadic rates and integer cycles keep every product exact, which is
        // what the identity is about.
        let act_cycles = r.random_range(1u64..1 << 40) as f64;
        let rate_act = r.random_range(1u32..512) as f64 / 64.0;
        let instructions = act_cycles * rate_act;
        let base_rate = f64::from(1u32 << r.random_range(0..3));
        let baseline = BaselineProfile {
            task_id: "t".into(),
            workload_param: 1,
            instructions,
            cycles: instructions / base_rate,
            instr_rate: base_rate,
            avg_clock_hz: 2.6e9,
            measured_tx_s: instructions / base_rate / 2.6e9,
        };
        let d = diagnose(baseline.sequential_cycles(), act_cycles, rate_act).map_err(|e| e.to_string())?;
        ensure!(d.epsilon_pct == 0.0, "instance {i}: epsilon {} != 0", d.epsilon_pct);
    }
    let published = [("bridges", 2.30, 3.30), ("comet", 2.50, 3.30), ("supermic", 2.80, 3.60), ("osg", 2.50, 3.09)];
    let clocks = xsede_osg_clocks();
    ensure!(clocks.len() == 4, "expected four clock specs");
    for ((id, base, max), c) in published.iter().zip(&clocks) {
        ensure!(c.resource_id == *id, "clock order: {} vs {id}", c.resource_id);
        ensure!(rel_close(c.base_hz, base * 1e9, 1e-12) && rel_close(c.max_hz, max * 1e9, 1e-12), "{id} clocks differ from published");
        for cycles in [1.0, 1.25e12, 7.3e15] {
            let p = predict_tx(cycles, c, 1.0).map_err(|e| e.to_string())?;
            let (got, want) = (p.tx_base_s / p.tx_max_s, max / base);
            ensure!(rel_close(got, want, 1e-12), "{id}: tx_base/tx_max {got} vs {want}");
        }
    }
    Ok("1000 chained cases with epsilon = 0; 4 clock ratios".into())
}

fn criterion_4() -> Check {
    let clocks = ClockTable::new(xsede_osg_clocks()).map_err(|e| e.to_string())?;
    let tx = |id: &str, k: f64| predict_tx(1.25e12, clocks.get(id).unwrap(), k).map(|p| p.tx_base_s);
    let (s, c, b) = (tx("supermic", 1.0), tx("comet", 1.0), tx("bridges", 1.0));
    let (s, c, b) = (s.map_err(|e| e.to_string())?, c.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
    ensure!(s < c && c < b, "expected supermic < comet < bridges, got {s} / {c} / {b}");
    let osg_plain = tx("osg", 1.0).map_err(|e| e.to_string())?;
    let osg = tx("osg", 1.22).map_err(|e| e.to_string())?;
    ensure!(osg_plain == c, "uninflated osg ({osg_plain}) should tie comet ({c}) at equal base clock");
    ensure!(osg > c, "inflated osg {osg} does not exceed comet {c}");
    Ok(format!("tx_base s/c/b = {s:.1}/{c:.1}/{b:.1} s, osg×1.22 = {osg:.1} s"))
}

fn criterion_5() -> Check {
    // Hand-computed signed errors spanning the published bands.
    let cases = [
        (2570.0, 1000.0, 157.0),
        (2710.0, 1000.0, 171.0),
        (1840.0, 1000.0, 84.0),
        (2110.0, 1000.0, 111.0),
        (1070.0, 1000.0, 7.0),
        (1180.0, 1000.0, 18.0),
        (960.0, 1000.0, -4.0),
        (860.0, 1000.0, -14.0),
        (409.5, 150.0, 173.0),
        (333.0, 180.0, 85.0),
        (100.0, 100.0, 0.0),
    ];
    for (pred, act, want) in cases {
        let got = tx_error(pred, act).map_err(|e| e.to_string())?;
        ensure!((got - want).abs() <= 1e-9, "tx_error({pred}, {act}) = {got}, expected {want}");
    }
    // Same instruction count on target and baseline: all overprediction is
    // instruction-level parallelism.
    for (cycles, rate) in [(4.0e11, 2.5), (1.0e12, 2.75), (8.0e9, 1.5)] {
        let instructions = cycles * rate;
        let d = diagnose(instructions, cycles, rate).map_err(|e| e.to_string())?;
        ensure!(d.epsilon_pct == 0.0, "epsilon {} != 0 at rate {rate}", d.epsilon_pct);
        let want = (rate - 1.0) * 100.0;
        ensure!((d.cycle_overprediction_pct - want).abs() <= 1e-9, "overprediction {} vs {want}", d.cycle_overprediction_pct);
    }
    Ok(format!("{} signed errors, 3 attributions", cases.len()))
}

fn criterion_6() -> Check {
    let now = 1_717_200_000;
    let buckets = SimilarityBuckets::default();
    let mut r = rng(6);
    let mut fallbacks = 0;
    for store_no in 0..10 {
        let records: Vec<QueueWaitRecord> = (0..1000).map(|_| queue_record(&mut r, now)).collect();
        let mut store = QueueStore::new();
        for rec in &records {
            store.insert(rec.clone()).map_err(|e| e.to_string())?;
        }
        for qi in 0..100 {
            let (machine, queue) = MACHINES[qi % MACHINES.len()];
            let q = QueueWaitQuery {
                machine: machine.into(),
                queue: queue.into(),
                walltime_req_s: [600.0, 900.0, 3599.0, 3600.0, 20000.0, 200000.0][r.random_range(0..6)],
                cores_req: [1, 2, 3, 16, 31, 32, 64, 5000][r.random_range(0..8)],
                now: now - r.random_range(0..86400),
                window_s: [3600, 86400, DEFAULT_WINDOW_S][r.random_range(0..3)],
            };
            let got = store.estimate_tq(&q, &buckets);
            match (got, queue_oracle(&records, &q, &buckets)) {
                (Ok(e), Some((mean, n, fb))) => {
                    ensure!(
                        e.mean_wait_s == mean && e.n_samples == n && e.fallback_used == fb,
                        "store {store_no} query {qi}: ({}, {}, {}) vs oracle ({mean}, {n}, {fb})",
                        e.mean_wait_s,
                        e.n_samples,
                        e.fallback_used
                    );
                    fallbacks += usize::from(fb);
                }
                (Err(Error::NoQueueHistory { .. }), None) => {}
                (got, want) => return Err(format!("store {store_no} query {qi}: {got:?} vs oracle {want:?}")),
            }
        }
    }

    // Boundaries.
    let rec = |age: i64, wait: f64, walltime: f64, cores: u32| QueueWaitRecord {
        machine: "m".into(),
        queue: "q".into(),
        submit_time: now - age,
        wait_s: wait,
        walltime_req_s: walltime,
        cores_req: cores,
    };
    let query = |walltime: f64, cores: u32| QueueWaitQuery {
        machine: "m".into(),
        queue: "q".into(),
        walltime_req_s: walltime,
        cores_req: cores,
        now,
        window_s: DEFAULT_WINDOW_S,
    };
    let mut store = QueueStore::new();
    for x in [
        rec(DEFAULT_WINDOW_S, 100.0, 3600.0, 16),     // exactly now − 7 d: inside
        rec(DEFAULT_WINDOW_S + 1, 1e6, 3600.0, 16),   // one second older: outside
        rec(0, 200.0, 14399.0, 31),                   // same buckets as 3600 s / 16 cores
        rec(10, 5000.0, 3599.0, 16),                  // previous walltime bucket
        rec(10, 7000.0, 3600.0, 15),                  // previous cores bucket
        rec(-1, 1e6, 3600.0, 16),                     // submitted after now: outside
    ] {
        store.insert(x).map_err(|e| e.to_string())?;
    }
    let e = store.estimate_tq(&query(3600.0, 16), &buckets).map_err(|e| e.to_string())?;
    ensure!(e.n_samples == 2 && e.mean_wait_s == 150.0 && !e.fallback_used, "edge query: {e:?}");
    let e = store.estimate_tq(&query(3599.0, 16), &buckets).map_err(|e| e.to_string())?;
    ensure!(e.n_samples == 1 && e.mean_wait_s == 5000.0, "below walltime edge: {e:?}");
    let e = store.estimate_tq(&query(900.0, 4096), &buckets).map_err(|e| e.to_string())?;
    ensure!(e.fallback_used && e.n_samples == 4 && e.mean_wait_s == 3075.0, "fallback: {e:?}");
    let mut narrow = query(3600.0, 16);
    narrow.queue = "other".into();
    ensure!(
        matches!(store.estimate_tq(&narrow, &buckets), Err(Error::NoQueueHistory { .. })),
        "unknown queue must be NoQueueHistory"
    );
    Ok(format!("1000 queries over 10 stores ({fallbacks} via fallback), boundaries ok"))
}

fn check_optimal(plan: &SelectionPlan, workload: &WorkloadSpec, pool: &[ResourceSpec], inputs: &PlanInputs, cfg: &Config) -> Check {
    for task in workload.tasks() {
        let a = &plan.assignments[task.task_id()];
        let chosen = estimate_ttc(task, pool.iter().find(|p| p.resource_id() == a.resource_id).unwrap(), inputs, cfg)
            .map_err(|e| e.to_string())?;
        for res in pool {
            if !satisfy_task_oracle(&aggregate_oracle(task), res) {
                continue;
            }
            let other = estimate_ttc(task, res, inputs, cfg).map_err(|e| e.to_string())?;
            ensure!(
                other.ttc_s >= chosen.ttc_s,
                "task {}: {} has ttc {} < assigned {} ({})",
                task.task_id(),
                res.resource_id(),
                other.ttc_s,
                a.resource_id,
                chosen.ttc_s
            );
        }
    }
    Ok(String::new())
}

fn criterion_7() -> Check {
    let mut r = rng(7);
    let cfg = Config::default();
    let registry = AffinityRegistry::default();
    let profiles = ProfileStore::new();
    let clocks = ClockTable::new(xsede_osg_clocks()).map_err(|e| e.to_string())?;
    let mut planned = 0;
    for size in [1, 7, 64, 256, 1024] {
        let (workload, pool, history) = random_instance(&mut r, size);
        let inputs = PlanInputs { profiles: &profiles, clocks: &clocks, history: &history, now: 1_717_200_000 };
        let plan = plan_model(&workload, &pool, &inputs, &cfg, &registry).map_err(|e| e.to_string())?;
        check_optimal(&plan, &workload, &pool, &inputs, &cfg)?;
        planned += plan.assignments.len();
        for task in workload.tasks() {
            let viable = viable_set(task, &pool);
            ensure!(viable.resource_ids.contains(&plan.assignments[task.task_id()].resource_id), "assigned to non-viable");
        }
    }
    let desk = DeskScenario::load().map_err(|e| e.to_string())?;
    let w = desk.workload(1024).map_err(|e| e.to_string())?;
    let plan = desk.model_plan(&w).map_err(|e| e.to_string())?;
    check_optimal(&plan, &w, &desk.pool, &desk.inputs(), &desk.config)?;
    planned += plan.assignments.len();
    Ok(format!("{planned} tasks re-scanned"))
}

fn criterion_8() -> Check {
    let constant = |v: f64| Distribution::Constant { value: v };
    let behaviors = behaviors_from_list(vec![
        ResourceBehavior {
            resource_id: "a".into(),
            tq_dist: constant(100.0),
            tx_dist: constant(50.0),
            cores_per_node: 1,
            capacity_cores: None,
            pilot: PilotMode::Single,
        },
        ResourceBehavior {
            resource_id: "b".into(),
            tq_dist: constant(400.0),
            tx_dist: constant(50.0),
            cores_per_node: 1,
            capacity_cores: None,
            pilot: PilotMode::Single,
        },
    ])
    .map_err(|e| e.to_string())?;
    let assign = |rid: &str| Assignment { resource_id: rid.into(), cores: 1, estimate: None, candidates: vec![] };
    let plan = SelectionPlan {
        workload_id: "two".into(),
        strategy: Strategy::Model,
        rng_seed: None,
        assignments: BTreeMap::from([("t1".into(), assign("a")), ("t2".into(), assign("b"))]),
        resource_requests: BTreeMap::from([
            ("a".into(), ResourceRequest { tasks: 1, cores: 1, max_walltime_s: None }),
            ("b".into(), ResourceRequest { tasks: 1, cores: 1, max_walltime_s: None }),
        ]),
    };
    let res = simulate(&plan, &behaviors, 100, 42).map_err(|e| e.to_string())?;
    for (i, t) in res.per_trial.iter().enumerate() {
        ensure!(
            t.ttc_wkd_s == 450.0 && t.tq_wkd_s == 350.0 && t.tx_wkd_s == 100.0,
            "trial {i}: {t:?}"
        );
    }
    Ok("ttc 450 / tq 350 / tx 100 in all 100 trials".into())
}

const SIZES: [usize; 5] = [64, 128, 256, 512, 1024];
const TRIALS: usize = 1000;
const SIM_SEED: u64 = 20240601;
const PLAN_SEED: u64 = 7;

fn desk_runs() -> Result<Vec<(SimulationResult, SimulationResult)>, String> {
    let desk = DeskScenario::load().map_err(|e| e.to_string())?;
    SIZES
        .iter()
        .map(|&n| {
            let w = desk.workload(n)?;
            let model = simulate(&desk.model_plan(&w)?, &desk.behaviors, TRIALS, SIM_SEED)?;
            let random = simulate(&desk.random_plan(&w, PLAN_SEED)?, &desk.behaviors, TRIALS, SIM_SEED)?;
            Ok((model, random))
        })
        .collect::<resel_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())
}

fn criterion_9() -> Check {
    let mut parts = Vec::new();
    for (model, random) in desk_runs()? {
        let c = compare(&model, &random).map_err(|e| e.to_string())?;
        ensure!(
            model.ttc_wkd.mean < random.ttc_wkd.mean,
            "{} tasks: model {} not below random {}",
            c.n_tasks,
            model.ttc_wkd.mean,
            random.ttc_wkd.mean
        );
        ensure!(
            (50.0..=90.0).contains(&c.ttc_reduction_pct),
            "{} tasks: reduction {:.1}% outside [50, 90]",
            c.n_tasks,
            c.ttc_reduction_pct
        );
        parts.push(format!("{}:{:.1}%", c.n_tasks, c.ttc_reduction_pct));
    }
    Ok(format!("reductions {}", parts.join(" ")))
}

fn criterion_10() -> Check {
    let encode = |runs: Vec<(SimulationResult, SimulationResult)>| -> Result<Vec<String>, String> {
        runs.iter()
            .flat_map(|(m, r)| [m, r])
            .map(|s| io::to_canonical_json(s).map_err(|e| e.to_string()))
            .collect()
    };
    let first = encode(desk_runs()?)?;
    let second = encode(desk_runs()?)?;
    ensure!(first.len() == second.len(), "different number of results");
    for (i, (a, b)) in first.iter().zip(&second).enumerate() {
        ensure!(a == b, "result {i} differs between runs");
    }
    let bytes: usize = first.iter().map(String::len).sum();
    Ok(format!("{} results, {bytes} bytes identical", first.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 aggregate/cost oracle equivalence", criterion_1, Some(Duration::from_secs(5))),
        ("2 matchmaking and res_select conformance", criterion_2, Some(Duration::from_secs(5))),
        ("3 prediction identities", criterion_3, None),
        ("4 prediction ordering", criterion_4, None),
        ("5 signed errors and attribution", criterion_5, None),
        ("6 queue-wait estimator", criterion_6, Some(Duration::from_secs(2))),
        ("7 selection optimality", criterion_7, Some(Duration::from_secs(5))),
        ("8 simulator closed form", criterion_8, None),
        ("9 desk-scale model vs random", criterion_9, Some(Duration::from_secs(60))),
        ("10 determinism", criterion_10, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let took = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if took > l => Err(format!("took {:.2}s, limit {}s", took.as_secs_f64(), l.as_secs())),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({:.2}s): {detail}", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name} ({:.2}s): {why}", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
