//! Order-preserving map over a slice, parallel when the `parallel` feature
//! is enabled and sequential otherwise.

/// Applies `f` to every item and returns results in input order.
///
/// With the `parallel` feature the work runs on a dedicated pool of
/// `workers` threads; `workers <= 1` always runs inline.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(err) => {
            log::warn!("could not start a {workers}-thread pool ({err}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], _workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Number of logical cores, at least 1.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_for_any_worker_count() {
        let items: Vec<u64> = (0..257).collect();
        let expected: Vec<u64> = items.iter().map(|v| v * v).collect();
        for workers in [1, 2, 8] {
            assert_eq!(map_ordered(&items, workers, |v| v * v), expected);
        }
        assert!(map_ordered(&Vec::<u64>::new(), 4, |v| *v).is_empty());
    }
}
