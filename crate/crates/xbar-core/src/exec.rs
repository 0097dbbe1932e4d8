//! Execution backends: data-parallel via rayon (default) or sequential.
//!
//! Every parallel loop in the crate is an order-preserving indexed map with
//! no cross-element floating-point reduction, so both backends produce
//! bitwise-identical results; the backend only changes wall-clock time.
//! The sequential path is always compiled (it is the fallback when the
//! `parallel` feature is disabled, and the baseline the bench suite
//! compares against).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Smallest per-task range for parallel index maps; keeps rayon's task
/// overhead negligible for cheap per-element work like sparse mat-vec rows.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 2048;

/// Which backend an operation should run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Rayon data-parallel when the `parallel` feature is enabled;
    /// silently degrades to sequential otherwise.
    #[default]
    Parallel,
    Sequential,
}

/// `(0..n).map(f)` collected in index order.
pub fn map_range<U, F>(mode: ExecMode, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        return (0..n).into_par_iter().with_min_len(MIN_CHUNK).map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// `items.map(f)` collected in input order.
pub fn map_slice<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}
