//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the loops run on the current rayon pool;
//! without it they are plain iterators. Reductions always split the work
//! into fixed-size chunks and add the partial sums left to right, so the
//! result is bitwise identical for any thread count and for both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for vector reductions.
pub const REDUCE_CHUNK: usize = 4096;

/// Fills `out` row by row: `f(row_index, row_slice)`.
pub fn fill_rows<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(j, row)| f(j, row));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(width).enumerate().for_each(|(j, row)| f(j, row));
}

/// Same as [`fill_rows`] for pair-valued rows.
pub fn fill_pair_rows<F>(out: &mut [[f64; 2]], width: usize, f: F)
where
    F: Fn(usize, &mut [[f64; 2]]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(j, row)| f(j, row));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(width).enumerate().for_each(|(j, row)| f(j, row));
}

/// Sum of `f(row)` over `0..rows`, reduced in row order.
pub fn sum_rows<F>(rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_range(rows, f).into_iter().sum()
}

/// `(0..len).map(f).collect()` preserving order.
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..len).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    (0..len).map(f).collect()
}

/// Order-preserving map over a slice.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    items.iter().map(f).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len().div_ceil(REDUCE_CHUNK);
    sum_rows(chunks, |c| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(a.len());
        a[lo..hi].iter().zip(&b[lo..hi]).map(|(x, y)| x * y).sum()
    })
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    #[cfg(feature = "parallel")]
    y.par_chunks_mut(REDUCE_CHUNK)
        .zip(x.par_chunks(REDUCE_CHUNK))
        .for_each(|(yc, xc)| yc.iter_mut().zip(xc).for_each(|(yi, xi)| *yi += alpha * xi));
    #[cfg(not(feature = "parallel"))]
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// `y = x + beta * y`
pub fn xpby(x: &[f64], beta: f64, y: &mut [f64]) {
    #[cfg(feature = "parallel")]
    y.par_chunks_mut(REDUCE_CHUNK)
        .zip(x.par_chunks(REDUCE_CHUNK))
        .for_each(|(yc, xc)| yc.iter_mut().zip(xc).for_each(|(yi, xi)| *yi = xi + beta * *yi));
    #[cfg(not(feature = "parallel"))]
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = xi + beta * *yi);
}
