//! Execution mode switch.
//!
//! Parallel kernels only split work across independent output rows, and
//! every row is reduced in the same order as the serial kernel, so fast and
//! deterministic modes produce bit-identical results. Deterministic mode
//! (the default) never touches the thread pool.

use std::sync::atomic::{AtomicBool, Ordering};

static FAST: AtomicBool = AtomicBool::new(false);

/// Rows below this count are always processed serially.
pub(crate) const PAR_MIN_ROWS: usize = 64;

pub fn set_fast_mode(enabled: bool) {
    FAST.store(enabled, Ordering::Relaxed);
}

pub fn fast_mode() -> bool {
    FAST.load(Ordering::Relaxed)
}

/// Reads `MERIT_THREADS` and sizes the global rayon pool accordingly.
/// Returns the thread count in effect. Safe to call more than once.
pub fn init_thread_pool_from_env() -> usize {
    if let Some(n) = std::env::var("MERIT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
