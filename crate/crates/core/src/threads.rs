//! Worker-pool setup honoring the `HJB_EXEC_THREADS` cap (0 or unset = auto).

use std::sync::OnceLock;

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

fn pool() -> &'static rayon::ThreadPool {
    POOL.get_or_init(|| {
        let requested = std::env::var("HJB_EXEC_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(0);
        let mut builder = rayon::ThreadPoolBuilder::new();
        if requested > 0 {
            builder = builder.num_threads(requested);
        }
        builder.build().expect("worker pool")
    })
}

/// Run `f` inside the capped worker pool.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    pool().install(f)
}
