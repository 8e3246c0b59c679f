//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run as plain sequential iterators. Output order always matches input
//! order, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible ordered map; returns the first error in input order.
pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

/// Configures the global worker pool. A no-op for the sequential build.
pub fn set_workers(workers: usize) {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            // Fails only if the pool was already initialised; keep the existing one then.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
    }
}

/// True when compiled with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
