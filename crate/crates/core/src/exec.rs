//! Data-parallel mapping with a sequential fallback.
//!
//! Results are always returned in index order, so a parallel run produces the
//! same values as a sequential one. Without the `parallel` feature every policy
//! runs sequentially.

use serde::{Deserialize, Serialize};

/// How independent per-item work is scheduled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exec {
    /// Run items one after another on the calling thread.
    Sequential,
    /// Fan items out over the rayon pool when the feature is enabled.
    #[default]
    Parallel,
}

/// Whether this build can run work in parallel.
pub const PARALLEL_AVAILABLE: bool = cfg!(feature = "parallel");

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel if n > 1 => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Maps `f` over `items` with their indices, returning results in index order.
pub fn map_indexed<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    map_range(exec, items.len(), |i| f(i, &items[i]))
}
