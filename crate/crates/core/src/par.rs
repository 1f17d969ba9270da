use crate::error::Result;

/// `(0..count).map(f)` on `n_workers` threads (0 = all cores), order preserved.
pub(crate) fn map_indexed<T, F>(n_workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n_workers != 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n_workers)
                .build()
                .map_err(|e| crate::Error::Param(format!("cannot start worker pool: {e}")))?;
            return Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()));
        }
    }
    let _ = n_workers;
    Ok((0..count).map(f).collect())
}
