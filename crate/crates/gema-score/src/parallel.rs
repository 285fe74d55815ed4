//! Data-parallel dispatch: rayon when the `parallel` feature is enabled
//! (the default), plain sequential iteration otherwise.
//!
//! Every call site routes through [`par_map`] so the two builds share one
//! code path and produce identical, input-ordered results.

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

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Caps the worker-thread count for all subsequent parallel maps. Returns
/// whether the setting took effect: `false` once a pool already exists, or
/// always in a sequential build.
#[cfg(feature = "parallel")]
pub fn configure_thread_count(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok()
}

/// Sequential builds have no pool to configure.
#[cfg(not(feature = "parallel"))]
pub fn configure_thread_count(_threads: usize) -> bool {
    false
}

/// Sequential map with the same signature as [`par_map`], available in every
/// build. Benchmarks use it as the single-threaded baseline.
pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_input_order() {
        let out = par_map((0..1000).collect::<Vec<i64>>(), |v| v * v);
        let expected: Vec<i64> = (0..1000).map(|v| v * v).collect();
        assert_eq!(out, expected);
    }

    #[test]
    fn par_and_seq_agree() {
        let items: Vec<u32> = (0..257).collect();
        assert_eq!(
            par_map(items.clone(), |v| v.wrapping_mul(2654435761)),
            seq_map(items, |v| v.wrapping_mul(2654435761))
        );
    }
}
