//! Worker-pool helper. Callers pass a `jobs` cap (0 means one worker per
//! logical CPU) and a closure that uses rayon parallel iterators inside.

/// Runs `f` inside a dedicated rayon pool of at most `jobs` threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("worker pool");
    pool.install(f)
}

#[cfg(test)]
mod tests {
    use rayon::prelude::*;

    #[test]
    fn pool_size_does_not_change_collected_order() {
        let square = |jobs| {
            super::with_jobs(jobs, || {
                (0..100u64).into_par_iter().map(|i| i * i).collect::<Vec<_>>()
            })
        };
        assert_eq!(square(1), square(4));
    }
}
