//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) batch work runs on rayon;
//! without it everything runs on the calling thread and produces identical
//! results, in the same order.

/// Applies `f` to every item, keeping input order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_seq(items, f)
}

/// Always sequential; the baseline the benches compare against.
pub fn map_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Runs `op` with at most `workers` threads available to [`map`].
#[cfg(feature = "parallel")]
pub fn with_workers<R, OP>(workers: usize, op: OP) -> R
where
    R: Send,
    OP: FnOnce() -> R + Send,
{
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(op),
        Err(e) => {
            log::warn!("falling back to the global pool: {e}");
            op()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R, OP>(_workers: usize, op: OP) -> R
where
    R: Send,
    OP: FnOnce() -> R + Send,
{
    op()
}

pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
