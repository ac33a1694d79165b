//! Worker-pool configuration and small helpers shared by the data-parallel
//! kernels.

use rayon::ThreadPool;

/// Environment variable capping the worker count (0 or unset = automatic).
pub const THREADS_ENV: &str = "UVBAKE_THREADS";

/// Rows per band when binning primitives for row-parallel rasterization.
pub const BAND_ROWS: usize = 8;

/// Worker count requested through [`THREADS_ENV`]; `0` means automatic.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

/// Builds a pool with `threads` workers (`0` = rayon's default).
pub fn build_pool(threads: usize) -> ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .thread_name(|i| format!("uvbake-{i}"))
        .build()
        .expect("failed to build worker pool")
}

/// Runs `f` inside a pool sized by [`THREADS_ENV`].
pub fn with_env_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    build_pool(threads_from_env()).install(f)
}

/// Assigns each primitive (given by its inclusive row range) to every band
/// of [`BAND_ROWS`] rows it touches. Lists stay sorted by primitive index.
pub(crate) fn bin_rows(row_ranges: &[Option<(usize, usize)>], height: usize) -> Vec<Vec<u32>> {
    let bands = height.div_ceil(BAND_ROWS);
    let mut bins = vec![Vec::new(); bands];
    for (i, range) in row_ranges.iter().enumerate() {
        if let Some((lo, hi)) = *range {
            for band in &mut bins[lo / BAND_ROWS..=hi / BAND_ROWS] {
                band.push(i as u32);
            }
        }
    }
    bins
}

/// Pairwise (tree) summation. For a fixed input order the result does not
/// depend on how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
