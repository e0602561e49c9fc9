//! Replica fan-out.
//!
//! With the `parallel` feature, replicas are mapped on the rayon pool;
//! without it, sequentially. Both return results in replica order, so every
//! associative merge downstream sees the same sequence.

/// Map `f` over `0..n`, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_replicas<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_replicas<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_replicas_sequential(n, f)
}

/// Sequential fallback, always compiled.
pub fn map_replicas_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let a = map_replicas(100, |i| i * i);
        let b = map_replicas_sequential(100, |i| i * i);
        assert_eq!(a, b);
    }
}
