//! Parallel batch evaluation and the latency benchmark.

use std::time::{Duration, Instant};

use dsa_policy_core::model::{EvaluationResult, SpectrumRequest};
use dsa_policy_core::reasoner::{evaluate, EvalError};
use dsa_policy_core::store::Snapshot;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

pub type Outcome = Result<EvaluationResult, EvalError>;

pub fn worker_pool(workers: usize) -> Result<ThreadPool, rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .thread_name(|i| format!("eval-{i}"))
        .build()
}

/// Evaluates every request against one pinned snapshot; output order matches input.
pub fn evaluate_parallel(requests: &[SpectrumRequest], snapshot: &Snapshot, pool: &ThreadPool) -> Vec<Outcome> {
    pool.install(|| requests.par_iter().map(|r| evaluate(r, snapshot)).collect())
}

fn evaluate_timed(requests: &[SpectrumRequest], snapshot: &Snapshot, pool: &ThreadPool) -> (Vec<Outcome>, Vec<Duration>) {
    pool.install(|| {
        requests
            .par_iter()
            .map(|r| {
                let start = Instant::now();
                let out = evaluate(r, snapshot);
                (out, start.elapsed())
            })
            .unzip()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub policy_count: usize,
    pub request_count: usize,
    pub worker_count: usize,
    pub repeat: usize,
    /// Total wall time across all repeats.
    pub wall_time_ms: f64,
    /// Slowest single repeat.
    pub max_batch_ms: f64,
    pub per_request_p50_ms: f64,
    pub per_request_p95_ms: f64,
    /// Set when verification ran: requests whose parallel result differed from sequential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatches: Option<Vec<String>>,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn bench(
    requests: &[SpectrumRequest],
    snapshot: &Snapshot,
    workers: usize,
    repeat: usize,
    verify: bool,
) -> Result<BenchReport, rayon::ThreadPoolBuildError> {
    let pool = worker_pool(workers)?;
    let repeat = repeat.max(1);
    let mut latencies = Vec::with_capacity(requests.len() * repeat);
    let mut total = Duration::ZERO;
    let mut slowest = Duration::ZERO;
    let mut last = Vec::new();
    for _ in 0..repeat {
        let start = Instant::now();
        let (out, lat) = evaluate_timed(requests, snapshot, &pool);
        let elapsed = start.elapsed();
        total += elapsed;
        slowest = slowest.max(elapsed);
        latencies.extend(lat.iter().map(|d| d.as_secs_f64() * 1e3));
        last = out;
    }
    latencies.sort_by(f64::total_cmp);

    let mismatches = verify.then(|| {
        let sequential: Vec<Outcome> = requests.iter().map(|r| evaluate(r, snapshot)).collect();
        requests
            .iter()
            .zip(sequential.iter().zip(&last))
            .filter(|(_, (s, p))| s != p)
            .map(|(r, _)| r.id.clone())
            .collect()
    });

    Ok(BenchReport {
        policy_count: snapshot.policies().len(),
        request_count: requests.len(),
        worker_count: pool.current_num_threads(),
        repeat,
        wall_time_ms: total.as_secs_f64() * 1e3,
        max_batch_ms: slowest.as_secs_f64() * 1e3,
        per_request_p50_ms: percentile(&latencies, 50.0),
        per_request_p95_ms: percentile(&latencies, 95.0),
        mismatches,
    })
}
