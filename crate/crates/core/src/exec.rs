//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate goes through [`Exec::map`], which returns
//! results in index order. Reductions are always performed sequentially over
//! that ordered output, so the result is bit-identical regardless of the
//! policy or the size of the thread pool. Without the `parallel` feature,
//! [`Exec::Parallel`] silently degrades to the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Evaluate `f(0..n)` and collect the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            #[cfg(not(feature = "parallel"))]
            Exec::Parallel => (0..n).map(f).collect(),
        }
    }

    /// Apply `f(index, item)` to every element of `items`.
    pub fn for_each_mut<T, F>(self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
            #[cfg(not(feature = "parallel"))]
            Exec::Parallel => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Run `f` inside a dedicated pool of `threads` workers. With the `parallel`
/// feature disabled this just calls `f`.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
        {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
