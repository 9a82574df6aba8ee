//! Deterministic task execution: data-parallel with rayon when the `parallel`
//! feature is on, plain sequential otherwise. Task i's output depends only on
//! i (tasks derive their own RNG streams), and results are collected in index
//! order, so output is byte-identical for any worker count.

pub struct Executor {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    /// `workers == 0` means "use all available cores".
    pub fn new(workers: usize) -> Self {
        let workers = if workers == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            workers
        };
        #[cfg(feature = "parallel")]
        {
            let pool = if workers > 1 {
                rayon::ThreadPoolBuilder::new().num_threads(workers).build().ok()
            } else {
                None
            };
            Executor { workers, pool }
        }
        #[cfg(not(feature = "parallel"))]
        Executor { workers }
    }

    pub fn sequential() -> Self {
        Self::new(1)
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Map f over 0..n, collecting results in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(f).collect());
        }
        (0..n).map(f).collect()
    }
}
