//! Parallel/sequential execution shim.
//!
//! With the `parallel` feature the mappers run on the rayon pool; without it
//! they run sequentially. Results are always collected in input order and any
//! reduction happens in a fixed order afterwards, so both builds produce
//! bit-identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Map `f` over the items of a slice, collecting results in input order.
pub fn map_slice<'a, I, T, F>(items: &'a [I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&'a I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Apply `f` to disjoint mutable chunks of `data`, in parallel when enabled.
/// Chunk boundaries are fixed by `chunk_len`, independent of thread count.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let v = map_indexed(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }
}

/// Cap the worker pool. With the `parallel` feature this configures the
/// global rayon pool (first call wins); without it the call is a no-op.
/// Returns whether a cap was applied.
pub fn init_threads(n: Option<usize>) -> bool {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = n {
            return rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok();
        }
        false
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}
