//! Sequential or thread-pool execution of data-parallel loops.

use rayon::prelude::*;

use crate::error::{FmmError, Result};

/// Environment variable capping the worker count; `0` selects sequential
/// execution.
pub const THREADS_ENV: &str = "CYLFMM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Plain loops on the calling thread. Reference mode for determinism.
    Sequential,
    /// Rayon global pool.
    #[default]
    Parallel,
    /// Dedicated pool with this many workers.
    Threads(usize),
}

impl Execution {
    /// Read [`THREADS_ENV`]; unset means [`Execution::Parallel`].
    pub fn from_env() -> Result<Self> {
        match std::env::var(THREADS_ENV) {
            Err(_) => Ok(Execution::Parallel),
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(0) => Ok(Execution::Sequential),
                Ok(n) => Ok(Execution::Threads(n)),
                Err(_) => Err(FmmError::Config(format!(
                    "{THREADS_ENV}={v} is not a count"
                ))),
            },
        }
    }
}

/// Runs closures over slices according to an [`Execution`] mode.
pub(crate) struct Runner {
    parallel: bool,
    pool: Option<rayon::ThreadPool>,
}

impl Runner {
    pub fn new(exec: Execution) -> Result<Self> {
        match exec {
            Execution::Sequential => Ok(Self {
                parallel: false,
                pool: None,
            }),
            Execution::Parallel => Ok(Self {
                parallel: true,
                pool: None,
            }),
            Execution::Threads(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| FmmError::Config(format!("thread pool: {e}")))?;
                Ok(Self {
                    parallel: true,
                    pool: Some(pool),
                })
            }
        }
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    pub fn for_each_mut<T, F>(&self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        if self.parallel {
            self.install(|| items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t)));
        } else {
            items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        }
    }

    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        if self.parallel {
            self.install(|| items.par_iter().map(&f).collect())
        } else {
            items.iter().map(f).collect()
        }
    }
}
