//! JSON Schemas (draft 2020-12) printed by `--schema`.
//!
//! CSV inputs are described by their header columns.

use serde_json::{json, Value};

use resel_core::prediction::PROFILE_COLUMNS;
use resel_core::queuewait::HISTORY_COLUMNS;
use resel_core::report::TARGET_COLUMNS;

const DIALECT: &str = "https://json-schema.org/draft/2020-12/schema";

fn doc(input: Value, output: Value) -> Value {
    json!({ "$schema": DIALECT, "input": input, "output": output })
}

fn csv(columns: &[&str], note: &str) -> Value {
    json!({ "format": "csv", "header": columns, "description": note })
}

fn consumable_props() -> Value {
    json!({
        "type": { "type": "string", "minLength": 1 },
        "form": {
            "type": "object",
            "description": "attribute -> non-empty list of allowed values",
            "additionalProperties": {
                "type": "array",
                "minItems": 1,
                "items": { "type": ["integer", "number", "string"] }
            }
        }
    })
}

fn with_number(key: &str) -> Value {
    let mut props = consumable_props();
    props[key] = json!({ "type": "number", "exclusiveMinimum": 0 });
    json!({
        "type": "object",
        "required": ["type", key],
        "properties": props,
        "additionalProperties": false
    })
}

fn requirement() -> Value {
    with_number("amount")
}

fn capability() -> Value {
    with_number("rate")
}

fn task() -> Value {
    json!({
        "type": "object",
        "required": ["task_id"],
        "oneOf": [{ "required": ["instructions"] }, { "required": ["requirements"] }],
        "properties": {
            "task_id": { "type": "string", "minLength": 1 },
            "instructions": {
                "type": "array", "minItems": 1,
                "items": { "type": "array", "minItems": 1, "items": requirement() }
            },
            "requirements": { "type": "array", "minItems": 1, "items": requirement() },
            "profile": {
                "type": "object",
                "required": ["task_id", "workload_param"],
                "properties": {
                    "task_id": { "type": "string" },
                    "workload_param": { "type": "integer" }
                },
                "additionalProperties": false
            },
            "cores": { "type": "integer", "minimum": 1, "default": 1 }
        },
        "additionalProperties": false
    })
}

fn workload() -> Value {
    json!({
        "type": "object",
        "required": ["workload_id", "tasks"],
        "properties": {
            "workload_id": { "type": "string" },
            "tasks": { "type": "array", "items": task(), "description": "task_id values are unique" }
        },
        "additionalProperties": false
    })
}

fn task_or_workload() -> Value {
    json!({ "oneOf": [task(), workload()] })
}

fn pool() -> Value {
    json!({
        "type": "array",
        "minItems": 1,
        "description": "resource_id values are unique",
        "items": {
            "type": "object",
            "required": ["resource_id", "capabilities"],
            "properties": {
                "resource_id": { "type": "string", "minLength": 1 },
                "machine": { "type": "string", "description": "queue-history machine (default: resource_id)" },
                "queue": { "type": "string", "default": "default" },
                "capabilities": { "type": "array", "minItems": 1, "items": capability() }
            },
            "additionalProperties": false
        }
    })
}

fn clocks() -> Value {
    json!({
        "type": "array",
        "items": {
            "type": "object",
            "required": ["resource_id"],
            "oneOf": [{ "required": ["base_ghz", "max_ghz"] }, { "required": ["inventory"] }],
            "properties": {
                "resource_id": { "type": "string" },
                "base_ghz": { "type": "number", "exclusiveMinimum": 0 },
                "max_ghz": { "type": "number", "exclusiveMinimum": 0 },
                "avg_ghz": { "type": "number", "exclusiveMinimum": 0 },
                "avg_stddev_ghz": { "type": "number", "minimum": 0 },
                "inventory": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["cpu_model", "node_count", "base_ghz", "max_ghz"],
                        "properties": {
                            "cpu_model": { "type": "string" },
                            "node_count": { "type": "integer", "minimum": 1 },
                            "base_ghz": { "type": "number", "exclusiveMinimum": 0 },
                            "max_ghz": { "type": "number", "exclusiveMinimum": 0 }
                        },
                        "additionalProperties": false
                    }
                }
            },
            "additionalProperties": false
        }
    })
}

fn config() -> Value {
    let edges = json!({ "type": "array", "items": { "type": "number" }, "description": "strictly ascending" });
    json!({
        "type": "object",
        "properties": {
            "inflation_factors": { "type": "object", "additionalProperties": { "type": "number", "exclusiveMinimum": 0 } },
            "walltime_safety_factor": { "type": "number", "exclusiveMinimum": 0, "default": 1.5 },
            "buckets": {
                "type": "object",
                "required": ["walltime_bucket_edges_s", "cores_bucket_edges"],
                "properties": { "walltime_bucket_edges_s": edges, "cores_bucket_edges": edges },
                "additionalProperties": false
            },
            "window_s": { "type": "integer", "minimum": 1, "default": 604800 },
            "affinity": { "enum": ["neg_ttc", "neg_tx", "neg_tq"], "default": "neg_ttc" },
            "frequency_choice": { "enum": ["base", "max"], "default": "base" },
            "profile_aggregation": { "enum": ["mean", "median"], "default": "mean" },
            "tq_priors_s": { "type": "object", "additionalProperties": { "type": "number", "minimum": 0 } }
        },
        "additionalProperties": false
    })
}

fn viable_set() -> Value {
    json!({
        "type": "object",
        "required": ["task_id", "viable"],
        "properties": {
            "task_id": { "type": "string" },
            "viable": { "type": "array", "items": { "type": "string" }, "description": "pool order" }
        }
    })
}

fn ttc_estimate() -> Value {
    json!({
        "type": "object",
        "required": ["task_id", "resource_id", "tq_s", "tx_s", "ttc_s", "walltime_req_s"],
        "properties": {
            "task_id": { "type": "string" },
            "resource_id": { "type": "string" },
            "tq_s": { "type": "number" },
            "tx_s": { "type": "number" },
            "ttc_s": { "type": "number" },
            "walltime_req_s": { "type": "number" },
            "tq_prior_used": { "type": "boolean" }
        }
    })
}

fn plan() -> Value {
    json!({
        "type": "object",
        "required": ["workload_id", "strategy", "assignments", "resource_requests"],
        "properties": {
            "workload_id": { "type": "string" },
            "strategy": { "enum": ["model", "random"] },
            "rng_seed": { "type": "integer", "minimum": 0, "description": "random plans only" },
            "assignments": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "required": ["resource_id"],
                    "properties": {
                        "resource_id": { "type": "string" },
                        "cores": { "type": "integer", "minimum": 1, "default": 1 },
                        "estimate": ttc_estimate(),
                        "candidates": { "type": "array", "items": ttc_estimate() }
                    }
                }
            },
            "resource_requests": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "required": ["tasks", "cores"],
                    "properties": {
                        "tasks": { "type": "integer" },
                        "cores": { "type": "integer" },
                        "max_walltime_s": { "type": "number" }
                    }
                }
            }
        }
    })
}

fn distribution() -> Value {
    json!({
        "oneOf": [
            { "type": "object", "required": ["kind", "value"], "properties": { "kind": { "const": "constant" }, "value": { "type": "number", "minimum": 0 } }, "additionalProperties": false },
            { "type": "object", "required": ["kind", "mean", "stddev"], "properties": { "kind": { "const": "normal" }, "mean": { "type": "number" }, "stddev": { "type": "number", "minimum": 0 } }, "additionalProperties": false, "description": "negative draws are redrawn" },
            { "type": "object", "required": ["kind", "samples"], "properties": { "kind": { "const": "empirical" }, "samples": { "type": "array", "minItems": 1, "items": { "type": "number", "minimum": 0 } } }, "additionalProperties": false }
        ]
    })
}

fn scenario() -> Value {
    json!({
        "type": "object",
        "required": ["plan", "behaviors", "trials", "seed"],
        "properties": {
            "plan": { "oneOf": [{ "type": "string", "description": "path, relative to the scenario file" }, plan()] },
            "behaviors": {
                "type": "array", "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["resource_id", "tq_dist", "tx_dist"],
                    "properties": {
                        "resource_id": { "type": "string" },
                        "tq_dist": distribution(),
                        "tx_dist": distribution(),
                        "cores_per_node": { "type": "integer", "minimum": 1, "default": 1 },
                        "capacity_cores": { "type": "integer", "minimum": 1 },
                        "pilot": { "enum": ["single", "per_task"], "default": "single" }
                    },
                    "additionalProperties": false
                }
            },
            "trials": { "type": "integer", "minimum": 1 },
            "seed": { "type": "integer", "minimum": 0 }
        },
        "additionalProperties": false
    })
}

fn summary() -> Value {
    json!({ "type": "object", "required": ["mean"], "properties": { "mean": { "type": "number" }, "stddev": { "type": ["number", "null"] } } })
}

fn simulation_result() -> Value {
    json!({
        "type": "object",
        "required": ["workload_id", "strategy", "n_tasks", "trials", "seed", "ttc_wkd", "tq_wkd", "tx_wkd", "per_trial"],
        "properties": {
            "workload_id": { "type": "string" },
            "strategy": { "enum": ["model", "random"] },
            "n_tasks": { "type": "integer" },
            "trials": { "type": "integer" },
            "seed": { "type": "integer" },
            "ttc_wkd": summary(),
            "tq_wkd": summary(),
            "tx_wkd": summary(),
            "per_trial": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": { "ttc_wkd_s": { "type": "number" }, "tq_wkd_s": { "type": "number" }, "tx_wkd_s": { "type": "number" } }
                }
            }
        }
    })
}

pub fn aggregate() -> Value {
    doc(
        json!({ "--task": task_or_workload() }),
        json!({ "description": "same shape as the input, every task in `requirements` form", "oneOf": [task(), workload()] }),
    )
}

pub fn matching() -> Value {
    doc(
        json!({ "--task": task_or_workload(), "--pool": pool() }),
        json!({ "oneOf": [viable_set(), { "type": "array", "items": viable_set() }] }),
    )
}

pub fn predict() -> Value {
    let prediction = json!({
        "type": "object",
        "properties": {
            "task_id": { "type": "string" }, "workload_param": { "type": "integer" }, "resource_id": { "type": "string" },
            "pred_cycles": { "type": "number" }, "pred_cycles_stddev": { "type": ["number", "null"] }, "samples": { "type": "integer" },
            "inflation_factor": { "type": "number" }, "tx_base_s": { "type": "number" }, "tx_max_s": { "type": "number" }
        }
    });
    let diagnosis = json!({
        "type": "object",
        "properties": {
            "p2a_cy": { "type": "number" }, "instr_rate_act": { "type": "number" }, "epsilon_pct": { "type": "number" },
            "cycle_overprediction_pct": { "type": "number" },
            "tx_error_base_pct": { "type": ["number", "null"] }, "tx_error_max_pct": { "type": ["number", "null"] }
        }
    });
    doc(
        json!({
            "--profiles": csv(&PROFILE_COLUMNS, "one row per profiled run; avg_clock_ghz in GHz"),
            "--clocks": clocks(),
            "--config": config(),
            "--targets": csv(&TARGET_COLUMNS, "runs measured on target resources")
        }),
        json!({
            "type": "object",
            "required": ["predictions"],
            "properties": {
                "predictions": { "type": "array", "items": prediction },
                "diagnostics": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "resource_id": { "type": "string" }, "task_id": { "type": "string" },
                            "workload_param": { "type": "integer" }, "measured_tx_s": { "type": "number" },
                            "diagnosis": diagnosis
                        }
                    }
                }
            }
        }),
    )
}

pub fn queue_wait() -> Value {
    doc(
        json!({
            "--history": csv(&HISTORY_COLUMNS, "submit_time_iso8601 is RFC 3339; naive times are UTC"),
            "--config": config()
        }),
        json!({
            "type": "object",
            "required": ["machine", "queue", "mean_wait_s", "n_samples", "fallback_used"],
            "properties": {
                "machine": { "type": "string" }, "queue": { "type": "string" },
                "mean_wait_s": { "type": "number" }, "sample_stddev_s": { "type": ["number", "null"] },
                "n_samples": { "type": "integer", "minimum": 1 }, "fallback_used": { "type": "boolean" }
            }
        }),
    )
}

pub fn select() -> Value {
    doc(
        json!({
            "--workload": workload(),
            "--pool": pool(),
            "--profiles": csv(&PROFILE_COLUMNS, "baseline profiles"),
            "--clocks": clocks(),
            "--history": csv(&HISTORY_COLUMNS, "queue history"),
            "--config": config()
        }),
        plan(),
    )
}

pub fn simulate() -> Value {
    doc(
        json!({ "--scenario": scenario() }),
        json!({
            "result": simulation_result(),
            "--csv": csv(&["trial", "ttc_wkd_s", "tq_wkd_s", "tx_wkd_s"], "per-trial metrics")
        }),
    )
}

pub fn report() -> Value {
    doc(
        json!({
            "--profiles": csv(&PROFILE_COLUMNS, "profiles and prediction tables"),
            "--targets": csv(&TARGET_COLUMNS, "prediction table"),
            "--clocks": clocks(),
            "--config": config(),
            "--results": simulation_result(),
            "--model": simulation_result(),
            "--random": simulation_result()
        }),
        json!({
            "format": "csv",
            "tables": {
                "profiles": "task_id, workload_param, runs, then mean/sd of instructions, cycles, instr_rate, avg_clock_ghz, tx, seq_cycles",
                "prediction": "resource_id, task_id, workload_param, runs, inflation_factor, pred_cycles, then mean/sd of measured and error columns",
                "simulation": "workload_id, strategy, n_tasks, trials, mean/sd of ttc_wkd, tq_wkd, tx_wkd",
                "comparison": "workload_id, n_tasks, model/random mean TTC, ttc_reduction_pct, deltas",
                "desk": "comparison table for the bundled scenario"
            }
        }),
    )
}
