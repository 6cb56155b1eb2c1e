//! Execution strategy for the data-parallel loops.
//!
//! With the `parallel` feature the hot loops run on the rayon pool; without
//! it, or when [`Execution::Sequential`] is requested, they run on the calling
//! thread. Both paths produce bit-identical results: parallel work is only
//! ever split into independent per-item computations or into fixed-size
//! chunks whose partial results are combined in chunk order.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for ordered reductions. Fixed so the summation order
/// does not depend on the number of worker threads.
pub(crate) const REDUCE_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `(0..n).map(f).collect()`, possibly in parallel.
    pub(crate) fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// `items.iter().map(f).collect()`, possibly in parallel.
    pub(crate) fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Applies `f(row_index, row)` to every `width`-long row of `data`.
    pub(crate) fn for_each_row<T, F>(self, data: &mut [T], width: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| f(y, row));
            return;
        }
        data.chunks_mut(width)
            .enumerate()
            .for_each(|(y, row)| f(y, row));
    }

    /// Maximum of `f(i)` over `0..n`, or `0.0` when `n == 0`.
    pub(crate) fn max_over(self, n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n)
                .into_par_iter()
                .map(f)
                .reduce(|| 0.0, f64::max);
        }
        (0..n).map(f).fold(0.0, f64::max)
    }

    /// Maps each fixed-size chunk of `0..n` to a partial result, returned in
    /// chunk order so the caller can fold them deterministically.
    pub(crate) fn map_chunks<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    {
        let chunks = n.div_ceil(REDUCE_CHUNK);
        self.map_range(chunks, |c| {
            let start = c * REDUCE_CHUNK;
            f(start..(start + REDUCE_CHUNK).min(n))
        })
    }
}
