//! Execution-time prediction from baseline hardware-counter profiles.
//!
//! A baseline profile records instructions, cycles and instruction rate of one
//! run. The sequential cycle count (one instruction retired per cycle) is
//! `cycles * instr_rate`; dividing it by a target clock frequency gives the
//! predicted execution time on that target.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

const GHZ: f64 = 1e9;

/// Largest tolerated relative gap between `instructions` and
/// `cycles * instr_rate` in one profile.
pub const PROFILE_CONSISTENCY_TOLERANCE: f64 = 0.05;

/// One profiled run on the baseline machine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineProfile {
    pub task_id: String,
    pub workload_param: i64,
    pub instructions: f64,
    pub cycles: f64,
    pub instr_rate: f64,
    pub avg_clock_hz: f64,
    pub measured_tx_s: f64,
}

impl BaselineProfile {
    /// Checks positivity and that instructions ≈ cycles × instr_rate.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("instructions", self.instructions),
            ("cycles", self.cycles),
            ("instr_rate", self.instr_rate),
            ("avg_clock", self.avg_clock_hz),
            ("tx_s", self.measured_tx_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("profile", format!("{name} must be > 0, got {v}")));
            }
        }
        let gap = (self.instructions - self.cycles * self.instr_rate).abs() / self.instructions;
        if gap > PROFILE_CONSISTENCY_TOLERANCE {
            return Err(Error::invalid(
                "profile",
                format!(
                    "instructions {} vs cycles*instr_rate {} differ by {:.2}% (> {}%)",
                    self.instructions,
                    self.cycles * self.instr_rate,
                    gap * 100.0,
                    PROFILE_CONSISTENCY_TOLERANCE * 100.0
                ),
            ));
        }
        Ok(())
    }

    /// Cycles needed if every instruction occupied its own cycle.
    pub fn sequential_cycles(&self) -> f64 {
        self.cycles * self.instr_rate
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRow {
    task_id: String,
    workload_param: i64,
    instructions: f64,
    cycles: f64,
    instr_rate: f64,
    avg_clock_ghz: f64,
    tx_s: f64,
}

impl From<ProfileRow> for BaselineProfile {
    fn from(row: ProfileRow) -> Self {
        BaselineProfile {
            task_id: row.task_id,
            workload_param: row.workload_param,
            instructions: row.instructions,
            cycles: row.cycles,
            instr_rate: row.instr_rate,
            avg_clock_hz: row.avg_clock_ghz * GHZ,
            measured_tx_s: row.tx_s,
        }
    }
}

/// Column order of the profile CSV.
pub const PROFILE_COLUMNS: [&str; 7] = [
    "task_id",
    "workload_param",
    "instructions",
    "cycles",
    "instr_rate",
    "avg_clock_ghz",
    "tx_s",
];

/// Outcome of reading a CSV stream: accepted rows plus per-line warnings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub warnings: Vec<String>,
}

pub(crate) fn check_header(
    source: &str,
    headers: &csv::StringRecord,
    expected: &[&str],
) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::parse(
            source,
            Some(1),
            format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

/// How repeat profiles of the same run configuration are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileAggregation {
    #[default]
    Mean,
    Median,
}

/// Predicted sequential cycles with the spread of the repeat profiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleEstimate {
    pub cycles: f64,
    pub stddev: Option<f64>,
    pub samples: usize,
}

/// Baseline profiles keyed by `(task_id, workload_param)`. Built once, then
/// read-only.
#[derive(Debug, Clone, Default)]
pub struct ProfileStore {
    profiles: BTreeMap<(String, i64), Vec<BaselineProfile>>,
}

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a validated profile.
    pub fn insert(&mut self, profile: BaselineProfile) -> Result<()> {
        profile.validate()?;
        self.profiles
            .entry((profile.task_id.clone(), profile.workload_param))
            .or_default()
            .push(profile);
        Ok(())
    }

    /// Reads profile CSV rows.
    ///
    /// Rows that cannot be decoded fail the whole read with their line number.
    /// Rows that decode but fail validation are skipped with a warning.
    pub fn ingest_csv<R: Read>(&mut self, reader: R, source: &str) -> Result<IngestReport> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
        check_header(source, &headers, &PROFILE_COLUMNS)?;
        let mut report = IngestReport::default();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(source, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let row: ProfileRow = record
                .deserialize(Some(&headers))
                .map_err(|e| Error::parse(source, Some(line), csv_message(e)))?;
            let profile = BaselineProfile::from(row);
            match self.insert(profile) {
                Ok(()) => report.accepted += 1,
                Err(e) => report.warnings.push(format!("{source} line {line}: rejected: {e}")),
            }
        }
        Ok(report)
    }

    pub fn len(&self) -> usize {
        self.profiles.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn get(&self, task_id: &str, workload_param: i64) -> &[BaselineProfile] {
        self.profiles
            .get(&(task_id.to_string(), workload_param))
            .map_or(&[], Vec::as_slice)
    }

    /// Every `(task_id, workload_param)` group, in sorted order.
    pub fn groups(&self) -> impl Iterator<Item = (&str, i64, &[BaselineProfile])> {
        self.profiles
            .iter()
            .map(|((t, w), v)| (t.as_str(), *w, v.as_slice()))
    }

    /// Predicted sequential cycles for one run configuration, combining
    /// repeat profiles.
    pub fn sequential_cycles(
        &self,
        task_id: &str,
        workload_param: i64,
        aggregation: ProfileAggregation,
    ) -> Result<CycleEstimate> {
        let runs = self.get(task_id, workload_param);
        if runs.is_empty() {
            return Err(Error::UnknownTask {
                task_id: task_id.to_string(),
                workload_param,
            });
        }
        let values: Vec<f64> = runs.iter().map(BaselineProfile::sequential_cycles).collect();
        let cycles = match aggregation {
            ProfileAggregation::Mean => stats::mean(&values),
            ProfileAggregation::Median => stats::median(&values),
        };
        Ok(CycleEstimate {
            cycles,
            stddev: stats::sample_stddev(&values),
            samples: values.len(),
        })
    }
}

pub(crate) fn csv_message(e: csv::Error) -> String {
    match e.into_kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        other => format!("{other:?}"),
    }
}

pub(crate) fn csv_error(source: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::Deserialize { err, .. } => Error::parse(source, line, err),
        other => Error::parse(source, line, format!("{other:?}")),
    }
}

/// Base, maximum and optionally measured-average clock of a resource, in Hz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockSpec {
    pub resource_id: String,
    pub base_hz: f64,
    pub max_hz: f64,
    pub avg_hz: Option<f64>,
    pub avg_stddev_hz: Option<f64>,
}

impl ClockSpec {
    pub fn new(resource_id: impl Into<String>, base_hz: f64, max_hz: f64) -> Result<Self> {
        let spec = ClockSpec {
            resource_id: resource_id.into(),
            base_hz,
            max_hz,
            avg_hz: None,
            avg_stddev_hz: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_ghz(resource_id: impl Into<String>, base_ghz: f64, max_ghz: f64) -> Result<Self> {
        Self::new(resource_id, base_ghz * GHZ, max_ghz * GHZ)
    }

    pub fn with_avg(mut self, avg_hz: f64, stddev_hz: Option<f64>) -> Result<Self> {
        self.avg_hz = Some(avg_hz);
        self.avg_stddev_hz = stddev_hz;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.base_hz.is_finite()
            && self.max_hz.is_finite()
            && self.base_hz > 0.0
            && self.base_hz <= self.max_hz;
        if !ok {
            return Err(Error::invalid(
                "clock",
                format!(
                    "`{}` needs 0 < base <= max, got base {} Hz max {} Hz",
                    self.resource_id, self.base_hz, self.max_hz
                ),
            ));
        }
        if let Some(avg) = self.avg_hz {
            if !(avg.is_finite() && avg > 0.0) {
                return Err(Error::invalid("clock", format!("`{}` avg must be > 0", self.resource_id)));
            }
        }
        if let Some(sd) = self.avg_stddev_hz {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(Error::invalid(
                    "clock",
                    format!("`{}` avg stddev must be >= 0", self.resource_id),
                ));
            }
        }
        Ok(())
    }

    /// Frequency used for prediction.
    pub fn frequency(&self, choice: FrequencyChoice) -> f64 {
        match choice {
            FrequencyChoice::Base => self.base_hz,
            FrequencyChoice::Max => self.max_hz,
        }
    }
}

/// Clock specifications (GHz) of Bridges, Comet, SuperMIC and the OSG pool,
/// with measured average clock and its sample standard deviation.
pub fn xsede_osg_clocks() -> Vec<ClockSpec> {
    let rows = [
        ("bridges", 2.30, 3.30, 2.732, 0.038),
        ("comet", 2.50, 3.30, 2.888, 0.001),
        ("supermic", 2.80, 3.60, 3.589, 0.002),
        ("osg", 2.50, 3.09, 2.930, 0.227),
    ];
    rows.iter()
        .map(|&(id, base, max, avg, sd)| {
            ClockSpec::from_ghz(id, base, max)
                .and_then(|c| c.with_avg(avg * GHZ, Some(sd * GHZ)))
                .expect("static clock table is valid")
        })
        .collect()
}

/// Which clock frequency drives predicted execution time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyChoice {
    #[default]
    Base,
    Max,
}

/// One processor model of a heterogeneous pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolInventoryEntry {
    pub cpu_model: String,
    pub node_count: u64,
    pub base_ghz: f64,
    pub max_ghz: f64,
}

/// Node-count weighted average of base and maximum clocks over a pool.
pub fn pool_clock_spec(
    resource_id: impl Into<String>,
    inventory: &[PoolInventoryEntry],
) -> Result<ClockSpec> {
    let resource_id = resource_id.into();
    if inventory.is_empty() {
        return Err(Error::invalid("inventory", format!("`{resource_id}` inventory is empty")));
    }
    let mut weight = 0.0;
    let mut base = 0.0;
    let mut max = 0.0;
    for e in inventory {
        if e.node_count == 0 || !(e.base_ghz > 0.0 && e.base_ghz <= e.max_ghz) {
            return Err(Error::invalid(
                "inventory",
                format!("entry `{}` needs node_count >= 1 and 0 < base <= max", e.cpu_model),
            ));
        }
        let w = e.node_count as f64;
        weight += w;
        base += w * e.base_ghz;
        max += w * e.max_ghz;
    }
    // Rounding can push a weighted mean past the extreme entry; clamp back.
    let (lo_b, hi_b) = min_max(inventory.iter().map(|e| e.base_ghz));
    let (lo_m, hi_m) = min_max(inventory.iter().map(|e| e.max_ghz));
    let base_ghz = (base / weight).clamp(lo_b, hi_b);
    let max_ghz = (max / weight).clamp(lo_m, hi_m).max(base_ghz);
    ClockSpec::from_ghz(resource_id, base_ghz, max_ghz)
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClockEntry {
    resource_id: String,
    #[serde(default)]
    base_ghz: Option<f64>,
    #[serde(default)]
    max_ghz: Option<f64>,
    #[serde(default)]
    avg_ghz: Option<f64>,
    #[serde(default)]
    avg_stddev_ghz: Option<f64>,
    #[serde(default)]
    inventory: Option<Vec<PoolInventoryEntry>>,
}

impl TryFrom<ClockEntry> for ClockSpec {
    type Error = Error;

    fn try_from(e: ClockEntry) -> Result<Self> {
        let spec = match (e.base_ghz, e.max_ghz, e.inventory) {
            (Some(base), Some(max), None) => ClockSpec::from_ghz(e.resource_id, base, max)?,
            (None, None, Some(inv)) => pool_clock_spec(e.resource_id, &inv)?,
            _ => {
                return Err(Error::invalid(
                    "clock",
                    format!(
                        "`{}` needs either base_ghz and max_ghz, or an inventory",
                        e.resource_id
                    ),
                ))
            }
        };
        match e.avg_ghz {
            Some(avg) => spec.with_avg(avg * GHZ, e.avg_stddev_ghz.map(|s| s * GHZ)),
            None if e.avg_stddev_ghz.is_some() => Err(Error::invalid(
                "clock",
                format!("`{}` has avg_stddev_ghz without avg_ghz", spec.resource_id),
            )),
            None => Ok(spec),
        }
    }
}

/// Clock specs by resource identifier.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClockTable(BTreeMap<String, ClockSpec>);

impl ClockTable {
    pub fn new(specs: impl IntoIterator<Item = ClockSpec>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in specs {
            let id = s.resource_id.clone();
            if map.insert(id.clone(), s).is_some() {
                return Err(Error::invalid("clock", format!("duplicate resource `{id}`")));
            }
        }
        Ok(ClockTable(map))
    }

    /// Decodes the clock file: a JSON array of direct specs
    /// (`base_ghz`/`max_ghz`) or pool inventories.
    pub fn from_json_slice(data: &[u8]) -> Result<Self> {
        let entries: Vec<ClockEntry> =
            serde_json::from_slice(data).map_err(|e| Error::parse("clocks", Some(e.line() as u64), e))?;
        let specs = entries
            .into_iter()
            .map(ClockSpec::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(specs)
    }

    pub fn get(&self, resource_id: &str) -> Option<&ClockSpec> {
        self.0.get(resource_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClockSpec> {
        self.0.values()
    }
}

/// Predicted execution times at base and maximum clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TxPrediction {
    pub pred_cycles: f64,
    pub inflation_factor: f64,
    pub tx_base_s: f64,
    pub tx_max_s: f64,
}

impl TxPrediction {
    pub fn tx(&self, choice: FrequencyChoice) -> f64 {
        match choice {
            FrequencyChoice::Base => self.tx_base_s,
            FrequencyChoice::Max => self.tx_max_s,
        }
    }
}

/// Execution time of `pred_cycles` (scaled by `inflation`) at the base and
/// maximum clock of `clock`.
pub fn predict_tx(pred_cycles: f64, clock: &ClockSpec, inflation: f64) -> Result<TxPrediction> {
    if !(pred_cycles.is_finite() && pred_cycles > 0.0) {
        return Err(Error::invalid("prediction", format!("pred_cycles must be > 0, got {pred_cycles}")));
    }
    if !(inflation.is_finite() && inflation > 0.0) {
        return Err(Error::invalid("prediction", format!("inflation must be > 0, got {inflation}")));
    }
    let cycles = pred_cycles * inflation;
    Ok(TxPrediction {
        pred_cycles,
        inflation_factor: inflation,
        tx_base_s: cycles / clock.base_hz,
        tx_max_s: cycles / clock.max_hz,
    })
}

/// Prediction of one task on one resource.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport {
    pub task_id: String,
    pub workload_param: i64,
    pub resource_id: String,
    pub pred_cycles: f64,
    pub pred_cycles_stddev: Option<f64>,
    pub samples: usize,
    pub inflation_factor: f64,
    pub tx_base_s: f64,
    pub tx_max_s: f64,
}

/// Predicts a profiled task on every resource of `clocks`.
pub fn predict_all(
    store: &ProfileStore,
    task_id: &str,
    workload_param: i64,
    clocks: &ClockTable,
    inflation: &BTreeMap<String, f64>,
    aggregation: ProfileAggregation,
) -> Result<Vec<PredictionReport>> {
    let est = store.sequential_cycles(task_id, workload_param, aggregation)?;
    clocks
        .iter()
        .map(|clock| {
            let k = inflation.get(&clock.resource_id).copied().unwrap_or(1.0);
            let tx = predict_tx(est.cycles, clock, k)?;
            Ok(PredictionReport {
                task_id: task_id.to_string(),
                workload_param,
                resource_id: clock.resource_id.clone(),
                pred_cycles: est.cycles,
                pred_cycles_stddev: est.stddev,
                samples: est.samples,
                inflation_factor: k,
                tx_base_s: tx.tx_base_s,
                tx_max_s: tx.tx_max_s,
            })
        })
        .collect()
}

/// How far predicted cycles are off, and how much of that the target's
/// instruction rate explains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub p2a_cy: f64,
    pub instr_rate_act: f64,
    pub epsilon_pct: f64,
    pub cycle_overprediction_pct: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_error_base_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_error_max_pct: Option<f64>,
}

impl DiagnosticReport {
    /// Attaches signed execution-time errors against a measured time.
    pub fn with_tx_errors(mut self, pred: &TxPrediction, actual_s: f64) -> Result<Self> {
        self.tx_error_base_pct = Some(tx_error(pred.tx_base_s, actual_s)?);
        self.tx_error_max_pct = Some(tx_error(pred.tx_max_s, actual_s)?);
        Ok(self)
    }
}

/// Compares predicted sequential cycles to cycles measured on a target.
///
/// `epsilon_pct` is zero exactly when the whole overprediction is accounted
/// for by the target's instructions per cycle.
pub fn diagnose(pred_cycles: f64, target_cycles: f64, target_instr_rate: f64) -> Result<DiagnosticReport> {
    for (name, v) in [
        ("pred_cycles", pred_cycles),
        ("target_cycles", target_cycles),
        ("target_instr_rate", target_instr_rate),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid("diagnosis", format!("{name} must be > 0, got {v}")));
        }
    }
    let p2a_cy = pred_cycles / target_cycles;
    Ok(DiagnosticReport {
        p2a_cy,
        instr_rate_act: target_instr_rate,
        epsilon_pct: (p2a_cy - target_instr_rate).abs() / p2a_cy * 100.0,
        cycle_overprediction_pct: (p2a_cy - 1.0) * 100.0,
        tx_error_base_pct: None,
        tx_error_max_pct: None,
    })
}

/// Signed percent error of a predicted time; positive means overprediction.
pub fn tx_error(predicted_s: f64, actual_s: f64) -> Result<f64> {
    if !(actual_s.is_finite() && actual_s > 0.0) || !predicted_s.is_finite() {
        return Err(Error::invalid(
            "tx error",
            format!("need finite prediction and actual > 0, got {predicted_s} / {actual_s}"),
        ));
    }
    Ok((predicted_s - actual_s) / actual_s * 100.0)
}
