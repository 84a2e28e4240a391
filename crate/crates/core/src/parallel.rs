//! Replica-level parallelism.
//!
//! With the `parallel` feature (default) replicas are spread over the rayon
//! pool; without it, or with [`Exec::Sequential`], they run in order on the
//! calling thread. Results always come back in replica order, so every
//! downstream fold is deterministic either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// Whether replicas can actually run concurrently in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Applies `f` to every seed, returning results in seed order.
pub fn map_seeds<T, F>(seeds: &[u64], exec: Exec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return seeds.par_iter().map(|&s| f(s)).collect();
    }
    let _ = exec;
    seeds.iter().map(|&s| f(s)).collect()
}

/// Applies `f` to `start, start + 1, ..., start + count - 1` in order.
pub fn map_range<T, F>(start: u64, count: u64, exec: Exec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(|i| f(start + i)).collect();
    }
    let _ = exec;
    (0..count).map(|i| f(start + i)).collect()
}

/// Sets the global worker count. Only the first call has an effect.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
