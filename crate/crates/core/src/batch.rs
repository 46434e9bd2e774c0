//! Data-parallel maps over independent work items.
//!
//! With the `parallel` feature (on by default) [`map`] runs on the rayon
//! thread pool; without it, or through [`map_sequential`], items are
//! processed in order on the calling thread. Results come back in input
//! order either way, so output never depends on scheduling.

use crate::error::Result;
use crate::fit::{fit_resonance, ResonanceFit};
use crate::model::ComplexSweep;

/// Whether [`map`] uses the thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(items, f)
    }
}

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Runs `trial` for each seed in `seeds`.
pub fn monte_carlo<R, F>(seeds: std::ops::Range<u64>, trial: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    let seeds: Vec<u64> = seeds.collect();
    map(&seeds, |&s| trial(s))
}

pub fn fit_sweeps(sweeps: &[ComplexSweep]) -> Vec<Result<ResonanceFit>> {
    map(sweeps, fit_resonance)
}

pub fn fit_sweeps_sequential(sweeps: &[ComplexSweep]) -> Vec<Result<ResonanceFit>> {
    map_sequential(sweeps, fit_resonance)
}
