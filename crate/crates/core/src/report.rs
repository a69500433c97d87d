//! CSV summary tables (group means with sample standard deviations) for
//! plotting outside the tool.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Deserialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::prediction::{
    check_header, csv_error, csv_message, diagnose, predict_tx, tx_error, BaselineProfile, ClockTable,
    IngestReport, ProfileStore,
};
use crate::sim::{Comparison, SimulationResult};
use crate::stats;

/// One profiled run on a target resource.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRun {
    pub resource_id: String,
    pub profile: BaselineProfile,
}

pub const TARGET_COLUMNS: [&str; 8] = [
    "resource_id",
    "task_id",
    "workload_param",
    "instructions",
    "cycles",
    "instr_rate",
    "avg_clock_ghz",
    "tx_s",
];

#[derive(Deserialize)]
struct TargetRow {
    resource_id: String,
    task_id: String,
    workload_param: i64,
    instructions: f64,
    cycles: f64,
    instr_rate: f64,
    avg_clock_ghz: f64,
    tx_s: f64,
}

/// Reads target-run CSV (the profile columns prefixed by `resource_id`).
/// Undecodable rows are errors; rows failing profile validation are skipped
/// with a warning.
pub fn read_target_runs<R: Read>(reader: R, source: &str) -> Result<(Vec<TargetRun>, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    check_header(source, &headers, &TARGET_COLUMNS)?;
    let mut runs = Vec::new();
    let mut report = IngestReport::default();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: TargetRow = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(source, Some(line), csv_message(e)))?;
        let run = TargetRun {
            resource_id: row.resource_id,
            profile: BaselineProfile {
                task_id: row.task_id,
                workload_param: row.workload_param,
                instructions: row.instructions,
                cycles: row.cycles,
                instr_rate: row.instr_rate,
                avg_clock_hz: row.avg_clock_ghz * 1e9,
                measured_tx_s: row.tx_s,
            },
        };
        match run.profile.validate() {
            Ok(()) => {
                report.accepted += 1;
                runs.push(run);
            }
            Err(e) => report.warnings.push(format!("{source} line {line}: rejected: {e}")),
        }
    }
    Ok((runs, report))
}

struct Table {
    out: String,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut out = header.join(",");
        out.push('\n');
        Table { out }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn mean_sd(values: &[f64]) -> [String; 2] {
    [num(stats::mean(values)), opt(stats::sample_stddev(values))]
}

fn text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Baseline profile statistics per (task, workload parameter).
pub fn profile_table(store: &ProfileStore) -> String {
    let mut t = Table::new(&[
        "task_id",
        "workload_param",
        "runs",
        "instructions_mean",
        "instructions_sd",
        "cycles_mean",
        "cycles_sd",
        "instr_rate_mean",
        "instr_rate_sd",
        "avg_clock_ghz_mean",
        "avg_clock_ghz_sd",
        "tx_mean_s",
        "tx_sd_s",
        "seq_cycles_mean",
        "seq_cycles_sd",
    ]);
    for (task, param, runs) in store.groups() {
        let col = |f: fn(&BaselineProfile) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        let mut cells = vec![text(task), param.to_string(), runs.len().to_string()];
        cells.extend(mean_sd(&col(|p| p.instructions)));
        cells.extend(mean_sd(&col(|p| p.cycles)));
        cells.extend(mean_sd(&col(|p| p.instr_rate)));
        cells.extend(mean_sd(&col(|p| p.avg_clock_hz / 1e9)));
        cells.extend(mean_sd(&col(|p| p.measured_tx_s)));
        cells.extend(mean_sd(&col(BaselineProfile::sequential_cycles)));
        t.row(cells);
    }
    t.out
}

/// Predicted versus measured cycles and execution times per (resource, task,
/// workload parameter), with the instruction-rate attribution of the cycle
/// error.
pub fn prediction_table(
    baseline: &ProfileStore,
    runs: &[TargetRun],
    clocks: &ClockTable,
    config: &Config,
) -> Result<String> {
    let mut groups: BTreeMap<(&str, &str, i64), Vec<&BaselineProfile>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((&r.resource_id, &r.profile.task_id, r.profile.workload_param))
            .or_default()
            .push(&r.profile);
    }
    let mut t = Table::new(&[
        "resource_id",
        "task_id",
        "workload_param",
        "runs",
        "inflation_factor",
        "pred_cycles",
        "act_cycles_mean",
        "act_cycles_sd",
        "cycle_error_pct_mean",
        "cycle_error_pct_sd",
        "instr_rate_act_mean",
        "instr_rate_act_sd",
        "p2a_cy_mean",
        "p2a_cy_sd",
        "epsilon_pct_mean",
        "epsilon_pct_sd",
        "tx_act_mean_s",
        "tx_act_sd_s",
        "tx_base_s",
        "tx_max_s",
        "tx_error_base_pct_mean",
        "tx_error_base_pct_sd",
        "tx_error_max_pct_mean",
        "tx_error_max_pct_sd",
    ]);
    for ((rid, task, param), group) in groups {
        let est = baseline.sequential_cycles(task, param, config.profile_aggregation)?;
        let clock = clocks
            .get(rid)
            .ok_or_else(|| Error::MissingInput(format!("no clock spec for resource `{rid}`")))?;
        let k = config.inflation(rid);
        let pred = predict_tx(est.cycles, clock, k)?;
        let inflated = est.cycles * k;
        let diags = group
            .iter()
            .map(|p| diagnose(inflated, p.cycles, p.instr_rate))
            .collect::<Result<Vec<_>>>()?;
        let col = |f: &dyn Fn(usize) -> Result<f64>| (0..group.len()).map(f).collect::<Result<Vec<f64>>>();
        let mut cells = vec![text(rid), text(task), param.to_string(), group.len().to_string(), num(k), num(inflated)];
        cells.extend(mean_sd(&col(&|i| Ok(group[i].cycles))?));
        cells.extend(mean_sd(&col(&|i| Ok(diags[i].cycle_overprediction_pct))?));
        cells.extend(mean_sd(&col(&|i| Ok(group[i].instr_rate))?));
        cells.extend(mean_sd(&col(&|i| Ok(diags[i].p2a_cy))?));
        cells.extend(mean_sd(&col(&|i| Ok(diags[i].epsilon_pct))?));
        cells.extend(mean_sd(&col(&|i| Ok(group[i].measured_tx_s))?));
        cells.push(num(pred.tx_base_s));
        cells.push(num(pred.tx_max_s));
        cells.extend(mean_sd(&col(&|i| tx_error(pred.tx_base_s, group[i].measured_tx_s))?));
        cells.extend(mean_sd(&col(&|i| tx_error(pred.tx_max_s, group[i].measured_tx_s))?));
        t.row(cells);
    }
    Ok(t.out)
}

/// Workload time-to-completion and its parts per simulated strategy.
pub fn simulation_table(results: &[SimulationResult]) -> String {
    let mut t = Table::new(&[
        "workload_id",
        "strategy",
        "n_tasks",
        "trials",
        "ttc_wkd_mean_s",
        "ttc_wkd_sd_s",
        "tq_wkd_mean_s",
        "tq_wkd_sd_s",
        "tx_wkd_mean_s",
        "tx_wkd_sd_s",
    ]);
    for r in results {
        let strategy = serde_json::to_value(r.strategy)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        t.row(vec![
            text(&r.workload_id),
            strategy,
            r.n_tasks.to_string(),
            r.trials.to_string(),
            num(r.ttc_wkd.mean),
            opt(r.ttc_wkd.stddev),
            num(r.tq_wkd.mean),
            opt(r.tq_wkd.stddev),
            num(r.tx_wkd.mean),
            opt(r.tx_wkd.stddev),
        ]);
    }
    t.out
}

pub fn comparison_table(comparisons: &[Comparison]) -> String {
    let mut t = Table::new(&[
        "workload_id",
        "n_tasks",
        "model_ttc_mean_s",
        "random_ttc_mean_s",
        "ttc_reduction_pct",
        "ttc_delta_s",
        "tq_delta_s",
        "tx_delta_s",
    ]);
    for c in comparisons {
        t.row(vec![
            text(&c.workload_id),
            c.n_tasks.to_string(),
            num(c.model["ttc_wkd"].mean),
            num(c.random["ttc_wkd"].mean),
            num(c.ttc_reduction_pct),
            num(c.ttc_delta_s),
            num(c.tq_delta_s),
            num(c.tx_delta_s),
        ]);
    }
    t.out
}
