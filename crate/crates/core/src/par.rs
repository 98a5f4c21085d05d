//! Data-parallel helpers. With the `parallel` feature disabled every call runs
//! sequentially; results never depend on which path executed.

/// Execution strategy for batch operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    /// Run on the calling thread only.
    Sequential,
    /// Fan out over the rayon pool when the `parallel` feature is enabled.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Order-preserving map over a slice.
pub(crate) fn map_slice<T, U, F>(exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving map over fixed-size chunks of a slice.
pub(crate) fn map_chunks<T, U, F>(exec: Exec, items: &[T], chunk: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&[T]) -> U + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_chunks(chunk).map(f).collect();
    }
    let _ = exec;
    items.chunks(chunk).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_strategies_agree() {
        let xs: Vec<u64> = (0..10_000).collect();
        let a = map_slice(Exec::Sequential, &xs, |x| x * x);
        let b = map_slice(Exec::Parallel, &xs, |x| x * x);
        assert_eq!(a, b);
        let c = map_chunks(Exec::Sequential, &xs, 97, |c| c.iter().sum::<u64>());
        let d = map_chunks(Exec::Parallel, &xs, 97, |c| c.iter().sum::<u64>());
        assert_eq!(c, d);
    }
}
