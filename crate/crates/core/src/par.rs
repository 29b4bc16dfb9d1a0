//! Order-preserving data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature, [`Exec::Parallel`] runs on rayon; without it
//! every call degrades to a plain iterator. Results always come back in
//! input order, so callers see identical output for any worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn map_owned<T, U, F>(self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.into_par_iter().map(f).collect(),
            _ => items.into_iter().map(f).collect(),
        }
    }
}

/// Runs `f` inside a pool of `workers` threads (0 = rayon default).
/// A worker count of 1 forces sequential execution.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce(Exec) -> R + Send) -> Result<R> {
    if workers == 1 {
        return Ok(f(Exec::Sequential));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(|| f(Exec::Parallel)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = Error::Config;
        Ok(f(Exec::Sequential))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let xs: Vec<u64> = (0..10_000).collect();
        let seq = Exec::Sequential.map(&xs, |x| x * x);
        let par = Exec::Parallel.map(&xs, |x| x * x);
        assert_eq!(seq, par);
        let owned = Exec::Parallel.map_owned(xs.clone(), |x| x + 1);
        assert_eq!(owned[9_999], 10_000);
    }

    #[test]
    fn worker_pools() {
        for w in [0, 1, 3] {
            let v = with_workers(w, |exec| exec.map(&[1, 2, 3], |x| x * 2)).unwrap();
            assert_eq!(v, [2, 4, 6]);
        }
    }
}
