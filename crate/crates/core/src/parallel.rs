//! Data-parallel fold/merge over independent work items.
//!
//! With the `parallel` feature the work is split across the rayon pool;
//! without it every strategy runs as a plain sequential fold. Callers must
//! supply an associative, commutative merge so results do not depend on the
//! split.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a sweep over many sources is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this strategy actually fans out across threads in the
    /// current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Folds `items` into per-worker states created by `init`, then merges them.
pub fn fold_merge<T, S, I, F, M>(exec: Execution, items: &[T], init: I, fold: F, merge: M) -> S
where
    T: Sync,
    S: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(S, &T) -> S + Sync + Send,
    M: Fn(S, S) -> S + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        return items.par_iter().fold(&init, &fold).reduce(&init, &merge);
    }
    let _ = (&merge, exec);
    items.iter().fold(init(), fold)
}

/// Maps `items` in order; output order always matches input order.
pub fn map_ordered<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        return items.par_iter().map(&f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let items: Vec<u64> = (1..=10_000).collect();
        let run = |e| fold_merge(e, &items, || 0u64, |acc, x| acc + x * x, |a, b| a + b);
        assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
        let sq = map_ordered(Execution::Parallel, &items, |x| x * 2);
        assert_eq!(sq[9_999], 20_000);
    }
}
