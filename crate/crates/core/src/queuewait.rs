//! Queue-wait estimation from job history.
//!
//! A query averages the waits of jobs submitted to the same machine and queue
//! within a lookback window whose requested walltime and core count fall in
//! the same predefined ranges as the query. When no such job exists, the size
//! constraints are dropped and every job of that machine and queue in the
//! window is used instead.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::{check_header, csv_error, csv_message, IngestReport};
use crate::stats;

/// Seven days.
pub const DEFAULT_WINDOW_S: i64 = 7 * 24 * 3600;

/// One historical job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueWaitRecord {
    pub machine: String,
    pub queue: String,
    /// UTC seconds since the epoch.
    pub submit_time: i64,
    pub wait_s: f64,
    pub walltime_req_s: f64,
    pub cores_req: u32,
}

impl QueueWaitRecord {
    pub fn validate(&self) -> Result<()> {
        if self.machine.is_empty() || self.queue.is_empty() {
            return Err(Error::invalid("history record", "machine and queue must be non-empty"));
        }
        if !(self.wait_s.is_finite() && self.wait_s >= 0.0) {
            return Err(Error::invalid("history record", format!("wait_s must be >= 0, got {}", self.wait_s)));
        }
        if !(self.walltime_req_s.is_finite() && self.walltime_req_s > 0.0) {
            return Err(Error::invalid(
                "history record",
                format!("walltime_req_s must be > 0, got {}", self.walltime_req_s),
            ));
        }
        if self.cores_req == 0 {
            return Err(Error::invalid("history record", "cores_req must be >= 1"));
        }
        Ok(())
    }
}

/// Parses an ISO-8601 UTC timestamp (an offset is honored if present; a bare
/// date-time is taken as UTC) into epoch seconds.
pub fn parse_timestamp(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .map(|dt| dt.and_utc().timestamp())
        .map_err(|e| Error::invalid("timestamp", format!("`{s}`: {e}")))
}

pub fn format_timestamp(epoch_s: i64) -> String {
    DateTime::<Utc>::from_timestamp(epoch_s, 0)
        .map(|dt| dt.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| epoch_s.to_string())
}

/// Range edges used to decide whether two requests are "similar".
///
/// Bucket `k` is `[edges[k-1], edges[k])`; values below the first edge form
/// bucket 0 and values at or above the last edge form the final open bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityBuckets {
    pub walltime_bucket_edges_s: Vec<f64>,
    pub cores_bucket_edges: Vec<f64>,
}

impl Default for SimilarityBuckets {
    fn default() -> Self {
        SimilarityBuckets {
            // 15 min, 1 h, 4 h, 12 h, 24 h, 48 h; beyond 48 h is open-ended.
            walltime_bucket_edges_s: vec![900.0, 3600.0, 14400.0, 43200.0, 86400.0, 172800.0],
            cores_bucket_edges: (0..=12).map(|p| f64::from(1u32 << p)).collect(),
        }
    }
}

impl SimilarityBuckets {
    pub fn validate(&self) -> Result<()> {
        for (name, edges) in [
            ("walltime_bucket_edges_s", &self.walltime_bucket_edges_s),
            ("cores_bucket_edges", &self.cores_bucket_edges),
        ] {
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(
                    "buckets",
                    format!("{name} must be finite and strictly ascending"),
                ));
            }
        }
        Ok(())
    }

    fn index(edges: &[f64], value: f64) -> usize {
        edges.partition_point(|e| *e <= value)
    }

    pub fn walltime_bucket(&self, walltime_s: f64) -> usize {
        Self::index(&self.walltime_bucket_edges_s, walltime_s)
    }

    pub fn cores_bucket(&self, cores: u32) -> usize {
        Self::index(&self.cores_bucket_edges, f64::from(cores))
    }
}

/// One queue-wait lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueWaitQuery {
    pub machine: String,
    pub queue: String,
    pub walltime_req_s: f64,
    pub cores_req: u32,
    pub now: i64,
    pub window_s: i64,
}

/// Windowed mean queue wait for a machine and queue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueWaitEstimate {
    pub machine: String,
    pub queue: String,
    pub mean_wait_s: f64,
    pub sample_stddev_s: Option<f64>,
    pub n_samples: usize,
    pub fallback_used: bool,
}

/// History indexed by (machine, queue). Filled once, then queried read-only.
#[derive(Debug, Clone, Default)]
pub struct QueueStore {
    by_queue: BTreeMap<(String, String), Vec<QueueWaitRecord>>,
}

#[derive(Deserialize)]
struct HistoryRow {
    machine: String,
    queue: String,
    submit_time_iso8601: String,
    wait_s: f64,
    walltime_req_s: f64,
    cores_req: u32,
}

pub const HISTORY_COLUMNS: [&str; 6] = [
    "machine",
    "queue",
    "submit_time_iso8601",
    "wait_s",
    "walltime_req_s",
    "cores_req",
];

impl QueueStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: QueueWaitRecord) -> Result<()> {
        record.validate()?;
        self.by_queue
            .entry((record.machine.clone(), record.queue.clone()))
            .or_default()
            .push(record);
        Ok(())
    }

    /// Reads history CSV. Bad rows become line-numbered warnings; a bad
    /// header or an unreadable stream is an error.
    pub fn ingest_csv<R: Read>(&mut self, reader: R, source: &str) -> Result<IngestReport> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
        check_header(source, &headers, &HISTORY_COLUMNS)?;
        let mut report = IngestReport::default();
        for record in rdr.records() {
            let record = match record {
                Ok(r) => r,
                Err(e) if e.is_io_error() => return Err(csv_error(source, e)),
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    report.warnings.push(format!("{source} line {line}: {}", csv_message(e)));
                    continue;
                }
            };
            let line = record.position().map_or(0, |p| p.line());
            let parsed = record
                .deserialize::<HistoryRow>(Some(&headers))
                .map_err(|e| Error::invalid("history row", csv_message(e)))
                .and_then(|row| {
                    Ok(QueueWaitRecord {
                        submit_time: parse_timestamp(&row.submit_time_iso8601)?,
                        machine: row.machine,
                        queue: row.queue,
                        wait_s: row.wait_s,
                        walltime_req_s: row.walltime_req_s,
                        cores_req: row.cores_req,
                    })
                })
                .and_then(|rec| self.insert(rec));
            match parsed {
                Ok(()) => report.accepted += 1,
                Err(e) => report.warnings.push(format!("{source} line {line}: {e}")),
            }
        }
        Ok(report)
    }

    pub fn len(&self) -> usize {
        self.by_queue.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_queue.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &QueueWaitRecord> {
        self.by_queue.values().flatten()
    }

    /// Most recent submission time in the store.
    pub fn latest_submit_time(&self) -> Option<i64> {
        self.records().map(|r| r.submit_time).max()
    }

    /// Waits of the records matching the query; bucketed when `buckets` is
    /// given.
    fn matching_waits(&self, q: &QueueWaitQuery, buckets: Option<&SimilarityBuckets>) -> Vec<f64> {
        let Some(records) = self.by_queue.get(&(q.machine.clone(), q.queue.clone())) else {
            return Vec::new();
        };
        let from = q.now.saturating_sub(q.window_s);
        let target = buckets.map(|b| (b.walltime_bucket(q.walltime_req_s), b.cores_bucket(q.cores_req)));
        let mut waits: Vec<f64> = records
            .iter()
            .filter(|r| r.submit_time >= from && r.submit_time <= q.now)
            .filter(|r| match (buckets, target) {
                (Some(b), Some((wt, cb))) => {
                    b.walltime_bucket(r.walltime_req_s) == wt && b.cores_bucket(r.cores_req) == cb
                }
                _ => true,
            })
            .map(|r| r.wait_s)
            .collect();
        // Fixed summation order regardless of ingest order.
        waits.sort_by(f64::total_cmp);
        waits
    }

    /// Mean queue wait of similar jobs, falling back to all jobs of the same
    /// machine and queue in the window.
    pub fn estimate_tq(&self, q: &QueueWaitQuery, buckets: &SimilarityBuckets) -> Result<QueueWaitEstimate> {
        if q.window_s <= 0 {
            return Err(Error::invalid("queue-wait query", "window_s must be > 0"));
        }
        buckets.validate()?;
        let mut fallback_used = false;
        let mut waits = self.matching_waits(q, Some(buckets));
        if waits.is_empty() {
            fallback_used = true;
            waits = self.matching_waits(q, None);
        }
        if waits.is_empty() {
            return Err(Error::NoQueueHistory {
                machine: q.machine.clone(),
                queue: q.queue.clone(),
            });
        }
        Ok(QueueWaitEstimate {
            machine: q.machine.clone(),
            queue: q.queue.clone(),
            mean_wait_s: stats::mean(&waits),
            sample_stddev_s: stats::sample_stddev(&waits),
            n_samples: waits.len(),
            fallback_used,
        })
    }
}
