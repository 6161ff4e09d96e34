//! Work distribution over indexed jobs.
//!
//! With the `parallel` feature jobs run on a rayon pool sized by `workers`
//! (0 means the global pool). Without it, or with `workers == 1`, everything
//! runs on the calling thread. Callers only rely on the result being
//! independent of the schedule: `map_indexed` preserves index order and
//! `fold_indexed` requires an associative, commutative merge.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of workers actually used for a request of `workers`.
pub fn effective_workers(workers: usize) -> usize {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            rayon::current_num_threads()
        } else {
            workers
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        1
    }
}

#[cfg(feature = "parallel")]
fn in_pool<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return job();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        // Pool creation only fails on thread spawn errors; the global pool
        // still gives the same answer.
        Err(_) => job(),
    }
}

/// `(0..n).map(f)` collected in index order.
pub fn map_indexed<T, F>(workers: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers != 1 {
            return in_pool(workers, || (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Folds `f(i)` for every index into an accumulator. `merge` must be
/// associative and commutative for the result to be schedule independent.
pub fn fold_indexed<A, F, G, M>(workers: usize, n: usize, init: F, step: G, merge: M) -> A
where
    A: Send,
    F: Fn() -> A + Sync + Send,
    G: Fn(A, usize) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers != 1 {
            return in_pool(workers, || {
                (0..n).into_par_iter().fold(&init, &step).reduce(&init, &merge)
            });
        }
    }
    let _ = (workers, &merge);
    (0..n).fold(init(), step)
}
