//! Order-preserving map over indices, parallel when the `parallel` feature
//! is enabled. Results always come back in index order.

#[cfg(feature = "parallel")]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Caps the worker pool at `threads`. Must run before any parallel work;
/// a no-op without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn set_thread_count(threads: usize) -> crate::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::Error::InvalidArgument(format!("cannot size thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
pub fn set_thread_count(_threads: usize) -> crate::Result<()> {
    Ok(())
}
