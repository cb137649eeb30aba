//! Ordered map over an index range: rayon-parallel with the `parallel`
//! feature, a plain loop otherwise. Output order is always index order.

/// How independent work items are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Rayon pool; identical to `Sequential` without the `parallel` feature.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if PARALLEL {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Whether this build was compiled with the rayon pool.
pub const PARALLEL: bool = cfg!(feature = "parallel");

pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}
