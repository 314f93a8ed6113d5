//! Execution mode switch.
//!
//! Every data-parallel loop in the crate goes through [`map_rows`] or
//! [`map_indices`]. Per-item work is independent and each item's
//! accumulation order is fixed, so the two modes are bit-identical.

/// Whether data-parallel loops run on the rayon pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// `Parallel` silently degrades to sequential when the `parallel`
    /// feature is off.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Applies `f` to each index in `0..n`, collecting results in order.
pub fn map_indices<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Fills each `width`-sized chunk of `out` with `f(row, chunk)`.
pub fn map_rows<F>(mode: ExecMode, out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = mode;
    out.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
}
