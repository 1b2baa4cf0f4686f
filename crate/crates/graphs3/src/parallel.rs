//! Order-preserving parallel map with a bounded worker count.

use rayon::prelude::*;

/// Apply `f` to every item with at most `workers` threads. Output order
/// equals input order regardless of completion order.
pub fn map_ordered<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    if items.len() <= 1 || workers <= 1 {
        return items.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction");
    pool.install(|| items.into_par_iter().map(f).collect())
}
