//! Execution strategy for data-parallel loops.
//!
//! With the `parallel` feature (default) the parallel strategy runs on the
//! rayon pool; without it every strategy runs sequentially. Results never
//! depend on the strategy: every reduction used through this module is
//! associative and commutative over integers or applies a total-order
//! tie-break.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether this strategy actually fans out in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `0..n` through `map` and folds the results with `reduce`.
pub fn map_reduce<R, M, F>(n: usize, exec: Execution, identity: R, map: M, reduce: F) -> R
where
    R: Send + Sync + Clone,
    M: Fn(usize) -> R + Sync + Send,
    F: Fn(R, R) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n)
            .into_par_iter()
            .map(&map)
            .reduce(|| identity.clone(), &reduce);
    }
    let _ = exec;
    (0..n).map(map).fold(identity, reduce)
}

/// Caps the global worker pool. Has no effect without the `parallel`
/// feature or when the pool was already initialized.
pub fn limit_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let f = |i: usize| (i as u64).wrapping_mul(2654435761) % 1000;
        let a = map_reduce(10_000, Execution::Parallel, 0u64, f, |a, b| a + b);
        let b = map_reduce(10_000, Execution::Sequential, 0u64, f, |a, b| a + b);
        assert_eq!(a, b);
        assert_eq!(map_reduce(0, Execution::Parallel, 7u64, f, |a, b| a + b), 7);
    }
}
