//! Execution strategy for the sampling loops.
//!
//! Every estimator in this crate reduces a large batch of independent
//! evaluations. With the `parallel` feature (default) the batch is mapped
//! with rayon; without it the same code runs sequentially. Outputs are
//! collected in input order and reduced sequentially afterwards, so results
//! are identical bit for bit in both modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, preserving index order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, kept so benchmarks can measure the speedup of
/// [`map_indices`] against a single-threaded baseline.
pub fn map_indices_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Index of the maximum value, ties resolved to the lowest index.
/// NaN entries are skipped; returns `None` on an empty or all-NaN slice.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
