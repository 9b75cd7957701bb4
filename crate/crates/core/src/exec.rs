//! Execution mode for the data-parallel inner loops (tree batches, retrieval
//! scans, evaluation cells).
//!
//! With the `parallel` feature (on by default) [`ExecMode::Parallel`] runs on
//! the rayon global pool. Without it every mode degrades to a plain
//! sequential iterator, so results never depend on the feature.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this build can actually run in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    pub fn effective(self) -> ExecMode {
        if Self::parallel_available() {
            self
        } else {
            ExecMode::Sequential
        }
    }

    /// Map `f` over `items`, preserving input order in the output.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self.effective() {
            ExecMode::Sequential => items.iter().map(f).collect(),
            ExecMode::Parallel => par_map(items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Run `f` with at most `jobs` worker threads. `jobs <= 1` runs inline.
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce(ExecMode) -> R + Send) -> R {
    if jobs <= 1 || !ExecMode::parallel_available() {
        return f(ExecMode::Sequential);
    }
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| f(ExecMode::Parallel)),
            Err(err) => {
                log::warn!("falling back to sequential execution: {err}");
                f(ExecMode::Sequential)
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        f(ExecMode::Sequential)
    }
}
