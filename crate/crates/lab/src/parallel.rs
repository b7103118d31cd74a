//! Thread-pool setup and the parallel drivers. Every reduction happens in
//! a fixed order after the parallel part, so results do not depend on the
//! worker count.

use blowup_core::moments::{compute_moments, merge_moment_chunks, moment_integrand, MomentSet};
use blowup_core::renorm::{sweep_cell, MapConfig, SweepRow};
use blowup_core::sphere::{mc_chunk_count, mc_chunk_many, McEstimate};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{LabError, LabResult};

pub const WORKERS_ENV: &str = "BLOWUP_WORKERS";

/// `BLOWUP_WORKERS` wins over the flag, the flag over the machine default.
pub fn worker_count(flag: Option<usize>) -> LabResult<usize> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| LabError::usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(LabError::usage(format!("{WORKERS_ENV} must be ≥ 1")));
        }
        return Ok(n);
    }
    match flag {
        Some(0) => Err(LabError::usage("workers must be ≥ 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn pool(workers: usize) -> LabResult<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::usage(format!("cannot start {workers} worker threads: {e}")))
}

/// Monte Carlo `(B, B_1, ..., B_n)` with chunks spread over the pool.
pub fn mc_moments(pool: &ThreadPool, n: usize, delta: &[f64], samples: u64, seed: u64) -> LabResult<Vec<McEstimate>> {
    if samples < 1000 {
        return Err(LabError::usage("Monte Carlo check needs at least 1000 samples"));
    }
    let f = moment_integrand(n, delta)?;
    let chunks = pool.install(|| {
        (0..mc_chunk_count(samples))
            .into_par_iter()
            .map(|c| mc_chunk_many(n, n + 1, &mut &f, samples, seed, c))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(merge_moment_chunks(n, &chunks, seed))
}

pub fn moments_many(pool: &ThreadPool, n: usize, deltas: &[Vec<f64>], order: usize) -> LabResult<Vec<MomentSet>> {
    let out = pool.install(|| {
        deltas
            .par_iter()
            .map(|d| compute_moments(d, n, order))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(out)
}

pub fn sweep(pool: &ThreadPool, cells: &[(f64, Vec<f64>)], cfg: &MapConfig, max_steps: usize) -> LabResult<Vec<SweepRow>> {
    let out = pool.install(|| {
        cells
            .par_iter()
            .map(|(t, d)| sweep_cell(*t, d, cfg, max_steps))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(out)
}
