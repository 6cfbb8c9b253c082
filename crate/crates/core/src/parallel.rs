//! Thread pool shared by the grid computations.
//!
//! The worker count comes from `NBODY_HKAM_THREADS` (default: available
//! parallelism). Every parallel map collects results in input order, so
//! outputs do not depend on the number of threads.

use std::sync::OnceLock;

use rayon::prelude::*;

pub const THREADS_VAR: &str = "NBODY_HKAM_THREADS";

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let n = std::env::var(THREADS_VAR)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|n| *n > 0)
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            });
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
    })
}

pub fn threads() -> usize {
    pool().current_num_threads()
}

/// Ordered parallel map.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    pool().install(|| items.par_iter().map(&f).collect())
}
