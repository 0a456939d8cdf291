//! Worker-pool setup and a rayon-backed fitness evaluator.

use lossforge_core::expr::ExprTree;
use lossforge_core::genetics::FitnessEvaluator;
use rayon::prelude::*;

use crate::{CliError, CliResult};

pub const THREADS_VAR: &str = "LOSSFORGE_THREADS";

/// Applies `LOSSFORGE_THREADS` to the global rayon pool. Unset or `0` leaves
/// rayon on auto (one worker per core); anything unparsable is a usage error.
pub fn init_thread_pool() -> CliResult<()> {
    let raw = match std::env::var(THREADS_VAR) {
        Ok(v) => v,
        Err(_) => return Ok(()),
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        CliError::Config(format!(
            "{THREADS_VAR} must be a non-negative integer, got `{raw}`"
        ))
    })?;
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("cannot configure worker pool: {e}")))
}

/// Fans fitness batches out across the rayon pool.
///
/// Results keep job order, so search runs are deterministic regardless of
/// worker count.
pub struct ParallelEvaluator<E> {
    inner: E,
}

impl<E: FitnessEvaluator> ParallelEvaluator<E> {
    pub fn new(inner: E) -> Self {
        ParallelEvaluator { inner }
    }
}

impl<E: FitnessEvaluator> FitnessEvaluator for ParallelEvaluator<E> {
    fn evaluate(&self, tree: &ExprTree, seed: u64) -> f64 {
        self.inner.evaluate(tree, seed)
    }

    fn evaluate_batch(&self, jobs: &[(&ExprTree, u64)]) -> Vec<f64> {
        jobs.par_iter()
            .map(|(tree, seed)| self.inner.evaluate(tree, *seed))
            .collect()
    }
}
