use rayon::{ThreadPool, ThreadPoolBuilder};

/// Thread pool with `workers` threads; `0` means one per available core.
pub(crate) fn pool(workers: usize) -> ThreadPool {
    ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to build worker pool")
}

/// Number of threads a `workers` setting resolves to.
pub fn resolve_workers(workers: usize) -> usize {
    if workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        workers
    }
}
