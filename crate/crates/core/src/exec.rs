//! Trial execution: rayon workers when the `parallel` feature is on, a
//! plain loop otherwise.
//!
//! Accumulators must merge associatively and exactly (integer counters), so
//! the result is the same for any thread count or split.

use crate::error::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Sequential,
    /// `threads == 0` uses the global rayon pool.
    Parallel { threads: usize },
}

impl Execution {
    /// `1` runs sequentially, `0` picks the default pool size.
    pub fn from_threads(threads: usize) -> Self {
        if threads == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { threads }
        }
    }

    /// Folds `step` over trial indices `0..trials` and merges partial
    /// accumulators with `merge`.
    pub fn fold_trials<A, I, S, M>(self, trials: u64, init: I, step: S, merge: M) -> Result<A>
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        S: Fn(&mut A, u64) -> Result<()> + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        match self {
            Execution::Sequential => sequential(trials, &init, &step),
            Execution::Parallel { threads } => parallel(threads, trials, init, step, merge),
        }
    }
}

fn sequential<A, I, S>(trials: u64, init: &I, step: &S) -> Result<A>
where
    I: Fn() -> A,
    S: Fn(&mut A, u64) -> Result<()>,
{
    let mut acc = init();
    for t in 0..trials {
        step(&mut acc, t)?;
    }
    Ok(acc)
}

#[cfg(feature = "parallel")]
fn parallel<A, I, S, M>(threads: usize, trials: u64, init: I, step: S, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    S: Fn(&mut A, u64) -> Result<()> + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    use rayon::prelude::*;

    let run = || {
        (0..trials)
            .into_par_iter()
            .try_fold(&init, |mut acc, t| {
                step(&mut acc, t)?;
                Ok(acc)
            })
            .try_reduce(&init, |a, b| Ok(merge(a, b)))
    };
    if threads == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(run),
        // Could not spawn workers; the sequential result is identical.
        Err(_) => sequential(trials, &init, &step),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel<A, I, S, M>(_threads: usize, trials: u64, init: I, step: S, _merge: M) -> Result<A>
where
    I: Fn() -> A,
    S: Fn(&mut A, u64) -> Result<()>,
{
    sequential(trials, &init, &step)
}
