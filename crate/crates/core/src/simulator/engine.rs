use rayon::prelude::*;

use crate::error::{Error, Result};

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "LEVYFLUCT_WORKERS";

/// Explicit request, else `LEVYFLUCT_WORKERS`, else one per available core.
pub fn worker_count(requested: Option<usize>) -> Result<usize> {
    if let Some(n) = requested {
        return if n == 0 {
            Err(Error::WorkerPool("worker count must be >= 1".into()))
        } else {
            Ok(n)
        };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::WorkerPool(format!(
                "{WORKERS_ENV}={v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// `(0..n).map(f)` on a pool of `workers` threads. Results come back in index
/// order, so the output does not depend on the worker count or scheduling.
pub fn par_map<T, F>(n: u64, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let threads = worker_count(workers)?;
    if threads == 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::WorkerPool(e.to_string()))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

/// Fallible variant of [`par_map`]; the first error in index order wins.
pub fn try_par_map<T, F>(n: u64, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    par_map(n, workers, f)?.into_iter().collect()
}
