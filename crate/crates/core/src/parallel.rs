//! Worker-count control. Library code parallelizes with rayon; callers pick
//! the pool size here. Results never depend on the pool size because every
//! parallel map collects in input order.

use crate::error::{Error, Result};

/// Environment variable capping the worker count (`0` or unset = automatic).
pub const THREADS_ENV: &str = "XSEP_THREADS";

/// Worker count requested through [`THREADS_ENV`], `0` meaning automatic.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::param(format!("{THREADS_ENV}={v} is not a worker count"))),
        Err(_) => Ok(0),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (`0` = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
