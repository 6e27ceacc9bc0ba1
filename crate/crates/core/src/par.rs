//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Parallelism::Parallel`] fans work
//! out over the rayon pool. Without it every call runs sequentially. Results
//! are always collected in input order, so output never depends on the mode.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// True when this build can actually run work in parallel.
    pub const fn available() -> bool {
        cfg!(feature = "parallel")
    }

    pub fn is_parallel(self) -> bool {
        self == Parallelism::Parallel && Self::available()
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Runs `worker` `workers` times concurrently (or once per slot in turn).
    pub fn run_workers<F>(self, workers: usize, worker: F)
    where
        F: Fn(usize) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && workers > 1 {
            rayon::scope(|s| {
                for id in 0..workers {
                    let worker = &worker;
                    s.spawn(move |_| worker(id));
                }
            });
            return;
        }
        for id in 0..workers {
            worker(id);
        }
    }
}
