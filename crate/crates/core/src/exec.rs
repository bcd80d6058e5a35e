//! Execution strategy: data-parallel mapping over episodes with a
//! sequential fallback.
//!
//! The `parallel` feature (on by default) backs [`par_map`] with a rayon
//! pool; without it, both entry points run sequentially and the public
//! surface is unchanged. Results are returned in input order either way,
//! and callers derive per-item seeds from stable identifiers, so outputs
//! never depend on worker count or scheduling.

/// Maps `f` over `items`, in parallel when the `parallel` feature is
/// enabled. Output order matches input order.
#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

/// Sequential build of [`par_map`]: same signature, same ordering.
#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Always-sequential map, kept available under every feature set so
/// benchmarks can compare the two strategies directly.
pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Runs `f` under a worker pool of the given size (0 = library default).
/// Without the `parallel` feature the job count is ignored and `f` simply
/// runs on the caller's thread.
#[cfg(feature = "parallel")]
pub fn install<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        // Pool creation can only fail on resource exhaustion; degrade to
        // the global pool rather than aborting the run.
        Err(_) => f(),
    }
}

/// Sequential build of [`install`].
#[cfg(not(feature = "parallel"))]
pub fn install<R: Send>(_jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}
