//! Data-parallel execution of independent work items.
//!
//! With the `parallel` feature (default) items run on a rayon pool; without
//! it, or with [`Execution::Sequential`], they run in index order on the
//! calling thread. Results are always returned in index order, so callers that
//! fold them sequentially get bit-identical output either way.

/// How to execute a batch of independent items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon's global pool.
    #[default]
    Parallel,
    Workers(usize),
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => Execution::Sequential,
            Some(k) => Execution::Workers(k),
            None => Execution::Parallel,
        }
    }
}

/// Computes `f(0), ..., f(n - 1)` and returns them in order.
pub fn map_indexed<T, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Execution::Workers(k) => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                Err(_) => (0..n).map(f).collect(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel | Execution::Workers(_) => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        for exec in [
            Execution::Sequential,
            Execution::Parallel,
            Execution::Workers(3),
        ] {
            let out = map_indexed(100, exec, |i| i * i);
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }
}
