//! Index-ordered parallel map with a sequential fallback.
//!
//! With the `parallel` feature the work is spread over a rayon pool; without
//! it, or when `jobs == 1`, the closure runs in a plain loop. Results always
//! come back in index order, so reductions over them are independent of the
//! degree of parallelism.

/// Maps `f` over `0..len`. `jobs = 0` uses every available core.
pub fn map_indexed<R, F>(len: usize, jobs: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if jobs == 1 || len <= 1 {
        return (0..len).map(f).collect();
    }
    imp::map_indexed(len, jobs, f)
}

/// Whether this build can actually run work concurrently.
pub const fn is_parallel_build() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    pub(super) fn map_indexed<R, F>(len: usize, jobs: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        if jobs == 0 {
            return (0..len).into_par_iter().map(f).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| (0..len).into_par_iter().map(f).collect()),
            Err(_) => (0..len).into_par_iter().map(f).collect(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub(super) fn map_indexed<R, F>(len: usize, _jobs: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}

/// SplitMix64 finalizer used to derive independent per-task seeds from a
/// master seed and a task index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_jobs() {
        let seq = map_indexed(1000, 1, |i| i * i);
        for jobs in [0, 2, 3] {
            assert_eq!(map_indexed(1000, jobs, |i| i * i), seq);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), a.len());
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }
}
