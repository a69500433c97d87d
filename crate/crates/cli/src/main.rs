//! `resel`: the selection pipeline as subcommands.
//!
//! Results go to stdout (or `--out`), diagnostics to stderr. Exit status is 0
//! on success, 1 on invalid input or usage, 2 on I/O failure.

mod schema;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use resel_core::config::Config;
use resel_core::io::{self, TaskOrWorkload};
use resel_core::matchmaking::{viable_set, AffinityRegistry};
use resel_core::prediction::{diagnose, predict_all, predict_tx, IngestReport, ProfileStore};
use resel_core::queuewait::{format_timestamp, parse_timestamp, QueueStore, QueueWaitQuery};
use resel_core::report;
use resel_core::scenario::DeskScenario;
use resel_core::selection::{plan_model, plan_random, PlanInputs, SelectionPlan};
use resel_core::sim::{behaviors_from_list, compare, simulate, Comparison, PlanSource, SimulationResult};
use resel_core::{aggregate, Error};

#[derive(Parser)]
#[command(name = "resel", version, about = "Resource selection for bag-of-tasks workloads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collapse a task's instruction sequence into per-consumable totals.
    Aggregate {
        /// Task or workload JSON.
        #[arg(long, required_unless_present = "schema")]
        task: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// List the pool resources a task (or every task of a workload) can run on.
    Match {
        #[arg(long, required_unless_present = "schema")]
        task: Option<PathBuf>,
        #[arg(long, required_unless_present = "schema")]
        pool: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Predict execution times from baseline profiles and clock specs.
    Predict {
        #[arg(long, required_unless_present = "schema")]
        profiles: Option<PathBuf>,
        #[arg(long, required_unless_present = "schema")]
        clocks: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Only this profiled task (default: every task in the profiles).
        #[arg(long)]
        task_id: Option<String>,
        /// Only this workload parameter; needs --task-id.
        #[arg(long, requires = "task_id")]
        workload_param: Option<i64>,
        /// Profiles measured on the targets, to diagnose the predictions.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate queue wait from job history.
    QueueWait {
        #[arg(long, required_unless_present = "schema")]
        history: Option<PathBuf>,
        #[arg(long, required_unless_present = "schema")]
        machine: Option<String>,
        #[arg(long, required_unless_present = "schema")]
        queue: Option<String>,
        #[arg(long, required_unless_present = "schema")]
        walltime_s: Option<f64>,
        #[arg(long, default_value_t = 1)]
        cores: u32,
        /// Query time, RFC 3339 (default: latest submission in the history).
        #[arg(long)]
        now: Option<String>,
        /// Lookback in seconds (default: from --config, else 7 days).
        #[arg(long)]
        window_s: Option<i64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Assign every task of a workload to a resource.
    Select {
        #[arg(long, required_unless_present = "schema")]
        workload: Option<PathBuf>,
        #[arg(long, required_unless_present = "schema")]
        pool: Option<PathBuf>,
        #[arg(long, required_unless_present = "schema")]
        profiles: Option<PathBuf>,
        #[arg(long, required_unless_present = "schema")]
        clocks: Option<PathBuf>,
        #[arg(long, required_unless_present = "schema")]
        history: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Query time, RFC 3339 (default: latest submission in the history).
        #[arg(long)]
        now: Option<String>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Model)]
        strategy: StrategyArg,
        /// Seed of the random strategy.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Run a plan through the execution simulator.
    Simulate {
        #[arg(long, required_unless_present = "schema")]
        scenario: Option<PathBuf>,
        /// Also write per-trial metrics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Emit CSV tables (group means and sample standard deviations).
    Report {
        #[arg(long, value_enum, required_unless_present = "schema")]
        table: Option<Table>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        clocks: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// SimulationResult JSON files (simulation table).
        #[arg(long, num_args = 1..)]
        results: Vec<PathBuf>,
        /// Model-plan SimulationResult JSON (comparison table; repeatable,
        /// paired in order with --random).
        #[arg(long)]
        model: Vec<PathBuf>,
        #[arg(long)]
        random: Vec<PathBuf>,
        /// Workload sizes of the bundled scenario (desk table).
        #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256, 512, 1024])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(clap::Args)]
struct Common {
    /// Print the input/output JSON schema of this subcommand and exit.
    #[arg(long)]
    schema: bool,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Model,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    /// Baseline profile statistics.
    Profiles,
    /// Predicted versus measured cycles and times on targets.
    Prediction,
    /// Summary of SimulationResult files.
    Simulation,
    /// Model versus random pairs of SimulationResult files.
    Comparison,
    /// Model versus random on the bundled scenario, per workload size.
    Desk,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_io() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure {
        code: 2,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

fn warn(report: &IngestReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => Ok(io::parse_config(&read(p)?)?),
        None => Ok(Config::default()),
    }
}

fn load_profiles(path: &Path) -> Result<ProfileStore, Failure> {
    let (store, report) = io::parse_profiles(&read(path)?, &source_name(path))?;
    warn(&report);
    Ok(store)
}

fn load_history(path: &Path) -> Result<QueueStore, Failure> {
    let (store, report) = io::parse_history(&read(path)?, &source_name(path))?;
    warn(&report);
    Ok(store)
}

fn query_time(now: Option<&str>, history: &QueueStore) -> Result<i64, Failure> {
    match now {
        Some(s) => Ok(parse_timestamp(s)?),
        None => {
            let t = history
                .latest_submit_time()
                .ok_or_else(|| usage("history is empty; pass --now"))?;
            eprintln!("note: --now defaults to the latest history submission, {}", format_timestamp(t));
            Ok(t)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    let io_fail = |what: &str, e: std::io::Error| Failure {
        code: 2,
        message: format!("cannot write {what}: {e}"),
    };
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_fail(&p.display().to_string(), e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| io_fail("stdout", e))
        }
    }
}

fn emit_json<T: serde::Serialize + ?Sized>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    emit(out, &io::to_canonical_json(value)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Aggregate { task, common } => {
            if common.schema {
                return emit_json(None, &schema::aggregate());
            }
            let task = task.expect("required by clap");
            let out = match io::parse_task_or_workload(&read(&task)?)? {
                TaskOrWorkload::Task(t) => TaskOrWorkload::Task(aggregate(&t)?),
                TaskOrWorkload::Workload(w) => {
                    let tasks = w.tasks().iter().map(aggregate).collect::<Result<Vec<_>, _>>()?;
                    TaskOrWorkload::Workload(resel_core::WorkloadSpec::new(w.workload_id(), tasks)?)
                }
            };
            emit_json(common.out.as_deref(), &out)
        }

        Command::Match { task, pool, common } => {
            if common.schema {
                return emit_json(None, &schema::matching());
            }
            let pool = io::parse_pool(&read(&pool.expect("required by clap"))?)?;
            match io::parse_task_or_workload(&read(&task.expect("required by clap"))?)? {
                TaskOrWorkload::Task(t) => emit_json(common.out.as_deref(), &viable_set(&t, &pool)),
                TaskOrWorkload::Workload(w) => {
                    let sets: Vec<_> = w.tasks().iter().map(|t| viable_set(t, &pool)).collect();
                    emit_json(common.out.as_deref(), &sets)
                }
            }
        }

        Command::Predict { profiles, clocks, config, task_id, workload_param, targets, common } => {
            if common.schema {
                return emit_json(None, &schema::predict());
            }
            let store = load_profiles(&profiles.expect("required by clap"))?;
            let clocks = io::parse_clocks(&read(&clocks.expect("required by clap"))?)?;
            let cfg = load_config(config.as_deref())?;
            let groups: Vec<(String, i64)> = store
                .groups()
                .filter(|(t, p, _)| {
                    task_id.as_deref().is_none_or(|id| id == *t) && workload_param.is_none_or(|wp| wp == *p)
                })
                .map(|(t, p, _)| (t.to_string(), p))
                .collect();
            if groups.is_empty() {
                return Err(Error::UnknownTask {
                    task_id: task_id.unwrap_or_else(|| "<any>".into()),
                    workload_param: workload_param.unwrap_or_default(),
                }
                .into());
            }
            let mut predictions = Vec::new();
            for (t, p) in &groups {
                predictions.extend(predict_all(&store, t, *p, &clocks, &cfg.inflation_factors, cfg.profile_aggregation)?);
            }
            let mut diagnostics = Vec::new();
            if let Some(path) = targets {
                let (runs, rep) = report::read_target_runs(read(&path)?.as_slice(), &source_name(&path))?;
                warn(&rep);
                for run in runs.iter().filter(|r| groups.iter().any(|(t, p)| *t == r.profile.task_id && *p == r.profile.workload_param)) {
                    let est = store.sequential_cycles(&run.profile.task_id, run.profile.workload_param, cfg.profile_aggregation)?;
                    let clock = clocks
                        .get(&run.resource_id)
                        .ok_or_else(|| Error::MissingInput(format!("no clock spec for resource `{}`", run.resource_id)))?;
                    let k = cfg.inflation(&run.resource_id);
                    let tx = predict_tx(est.cycles, clock, k)?;
                    let d = diagnose(est.cycles * k, run.profile.cycles, run.profile.instr_rate)?
                        .with_tx_errors(&tx, run.profile.measured_tx_s)?;
                    diagnostics.push(json!({
                        "resource_id": run.resource_id,
                        "task_id": run.profile.task_id,
                        "workload_param": run.profile.workload_param,
                        "measured_tx_s": run.profile.measured_tx_s,
                        "diagnosis": d,
                    }));
                }
            }
            let mut out = json!({ "predictions": predictions });
            if !diagnostics.is_empty() {
                out["diagnostics"] = diagnostics.into();
            }
            emit_json(common.out.as_deref(), &out)
        }

        Command::QueueWait { history, machine, queue, walltime_s, cores, now, window_s, config, common } => {
            if common.schema {
                return emit_json(None, &schema::queue_wait());
            }
            let store = load_history(&history.expect("required by clap"))?;
            let cfg = load_config(config.as_deref())?;
            let query = QueueWaitQuery {
                machine: machine.expect("required by clap"),
                queue: queue.expect("required by clap"),
                walltime_req_s: walltime_s.expect("required by clap"),
                cores_req: cores,
                now: query_time(now.as_deref(), &store)?,
                window_s: window_s.unwrap_or(cfg.window_s),
            };
            let estimate = store.estimate_tq(&query, &cfg.buckets)?;
            if estimate.fallback_used {
                eprintln!("note: no similar jobs in the window; used every job of the queue");
            }
            emit_json(common.out.as_deref(), &estimate)
        }

        Command::Select { workload, pool, profiles, clocks, history, config, now, strategy, seed, common } => {
            if common.schema {
                return emit_json(None, &schema::select());
            }
            let workload = io::parse_workload(&read(&workload.expect("required by clap"))?)?;
            let pool = io::parse_pool(&read(&pool.expect("required by clap"))?)?;
            let plan = match strategy {
                StrategyArg::Random => plan_random(&workload, &pool, seed)?,
                StrategyArg::Model => {
                    let profiles = load_profiles(&profiles.expect("required by clap"))?;
                    let clocks = io::parse_clocks(&read(&clocks.expect("required by clap"))?)?;
                    let history = load_history(&history.expect("required by clap"))?;
                    let cfg = load_config(config.as_deref())?;
                    let inputs = PlanInputs {
                        profiles: &profiles,
                        clocks: &clocks,
                        history: &history,
                        now: query_time(now.as_deref(), &history)?,
                    };
                    plan_model(&workload, &pool, &inputs, &cfg, &AffinityRegistry::default())?
                }
            };
            emit_json(common.out.as_deref(), &plan)
        }

        Command::Simulate { scenario, csv, common } => {
            if common.schema {
                return emit_json(None, &schema::simulate());
            }
            let path = scenario.expect("required by clap");
            let sc = io::parse_scenario(&read(&path)?)?;
            let plan: SelectionPlan = match sc.plan {
                PlanSource::Inline(p) => *p,
                PlanSource::Path(rel) => {
                    // Relative plan paths are taken from the scenario's directory.
                    let p = path.parent().unwrap_or(Path::new(".")).join(rel);
                    io::parse_plan(&read(&p)?)?
                }
            };
            let behaviors = behaviors_from_list(sc.behaviors)?;
            let result = simulate(&plan, &behaviors, sc.trials, sc.seed)?;
            if let Some(csv) = csv {
                emit(Some(&csv), &result.per_trial_csv())?;
            }
            emit_json(common.out.as_deref(), &result)
        }

        Command::Report {
            table,
            profiles,
            targets,
            clocks,
            config,
            results,
            model,
            random,
            sizes,
            trials,
            seed,
            common,
        } => {
            if common.schema {
                return emit_json(None, &schema::report());
            }
            let need = |p: Option<PathBuf>, flag: &str| p.ok_or_else(|| usage(format!("this table needs --{flag}")));
            let text = match table.expect("required by clap") {
                Table::Profiles => report::profile_table(&load_profiles(&need(profiles, "profiles")?)?),
                Table::Prediction => {
                    let store = load_profiles(&need(profiles, "profiles")?)?;
                    let targets = need(targets, "targets")?;
                    let (runs, rep) = report::read_target_runs(read(&targets)?.as_slice(), &source_name(&targets))?;
                    warn(&rep);
                    let clocks = io::parse_clocks(&read(&need(clocks, "clocks")?)?)?;
                    report::prediction_table(&store, &runs, &clocks, &load_config(config.as_deref())?)?
                }
                Table::Simulation => {
                    if results.is_empty() {
                        return Err(usage("this table needs --results"));
                    }
                    report::simulation_table(&results.iter().map(|p| load_result(p)).collect::<Result<Vec<_>, _>>()?)
                }
                Table::Comparison => {
                    if model.is_empty() || model.len() != random.len() {
                        return Err(usage("this table needs matching numbers of --model and --random files"));
                    }
                    let pairs = model
                        .iter()
                        .zip(&random)
                        .map(|(m, r)| Ok(compare(&load_result(m)?, &load_result(r)?)?))
                        .collect::<Result<Vec<Comparison>, Failure>>()?;
                    report::comparison_table(&pairs)
                }
                Table::Desk => {
                    if trials == 0 || sizes.is_empty() || sizes.contains(&0) {
                        return Err(usage("--trials and every --sizes entry must be >= 1"));
                    }
                    let desk = DeskScenario::load()?;
                    let mut pairs = Vec::new();
                    for n in sizes {
                        let w = desk.workload(n)?;
                        let m = simulate(&desk.model_plan(&w)?, &desk.behaviors, trials, seed)?;
                        let r = simulate(&desk.random_plan(&w, seed)?, &desk.behaviors, trials, seed)?;
                        pairs.push(compare(&m, &r)?);
                    }
                    report::comparison_table(&pairs)
                }
            };
            emit(common.out.as_deref(), &text)
        }
    }
}

fn load_result(path: &Path) -> Result<SimulationResult, Failure> {
    serde_json::from_slice(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let message = if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                "error: missing subcommand".to_string()
            } else {
                // Clap's rendering minus the usage block, folded to one line.
                let text = e.render().to_string();
                let body: Vec<&str> = text
                    .lines()
                    .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                    .collect();
                one_line(&body.join(" "))
            };
            eprintln!("{message} (see --help)");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", one_line(&f.message));
            ExitCode::from(f.code)
        }
    }
}
