//! Data-parallel execution helpers.
//!
//! With the default `parallel` feature the helpers fan work out over rayon;
//! without it they run a plain sequential loop. Callers must pass pure
//! closures so both paths produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving index order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Sequential reference version of [`map_indexed`]; used by benchmarks to
/// compare against the parallel path.
pub fn map_indexed_seq<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Maps `f` over a slice of items, preserving order.
#[cfg(feature = "parallel")]
pub fn map_items<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.par_iter().map(f).collect()
}

/// Maps `f` over a slice of items, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_items<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}
