//! Data-parallel helpers.
//!
//! With the `parallel` feature the helpers fan work out over the rayon
//! global pool; without it they run on the calling thread. Results are
//! always returned in input order, so output does not depend on the number
//! of worker threads.
//!
//! [`set_sequential`] forces the sequential path at runtime even when the
//! feature is enabled. The benchmark suite uses it to compare both paths in
//! a single binary.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force (or stop forcing) sequential execution for every helper in this module.
pub fn set_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

/// True when work will be spread across threads.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<'a, S, T, F>(items: &'a [S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&'a S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Sort floats ascending. NaNs are rejected by callers before this point.
pub(crate) fn sort_floats(values: &mut [f64]) {
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        values.par_sort_unstable_by(f64::total_cmp);
        return;
    }
    values.sort_unstable_by(f64::total_cmp);
}
