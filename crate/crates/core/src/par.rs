//! Chunked data-parallel execution with a sequential fallback.
//!
//! Work is always split into fixed-size chunks, and every chunk derives its
//! own RNG from `(seed, step, chunk)`. The chunk results are reduced in chunk
//! order, so the output does not depend on how many threads ran the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Points per chunk in the per-point sweeps.
pub const CHUNK: usize = 2048;

/// How the per-point sweeps are executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Chunks are distributed over the current rayon pool.
    Parallel,
}

impl Execution {
    /// `Parallel` for more than one thread when the `parallel` feature is on.
    pub fn for_threads(threads: usize) -> Self {
        if cfg!(feature = "parallel") && threads > 1 {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[inline]
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream for one `(seed, step, chunk)` triple.
pub(crate) fn stream_rng(seed: u64, step: u64, chunk: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ step) ^ chunk.wrapping_mul(0xA24B_AED4_963E_E407));
    ChaCha8Rng::seed_from_u64(key)
}

/// Runs `f(chunk_index, offset, a_chunk, b_chunk)` over matching chunks of
/// two mutable slices and returns the per-chunk results in chunk order.
pub(crate) fn map_chunks_mut<A, B, T, F>(
    exec: Execution,
    a: &mut [A],
    b: &mut [B],
    chunk: usize,
    f: F,
) -> Vec<T>
where
    A: Send,
    B: Send,
    T: Send,
    F: Fn(usize, usize, &mut [A], &mut [B]) -> T + Sync + Send,
{
    assert_eq!(a.len(), b.len());
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            a.par_chunks_mut(chunk)
                .zip(b.par_chunks_mut(chunk))
                .enumerate()
                .map(|(i, (ca, cb))| f(i, i * chunk, ca, cb))
                .collect()
        }
        _ => a
            .chunks_mut(chunk)
            .zip(b.chunks_mut(chunk))
            .enumerate()
            .map(|(i, (ca, cb))| f(i, i * chunk, ca, cb))
            .collect(),
    }
}

/// Maps `f` over `0..n` in index order.
pub(crate) fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Runs `f` inside a dedicated pool of `threads` workers when parallel
/// execution is available; otherwise runs it directly.
pub(crate) fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if threads > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => return pool.install(f),
            Err(e) => log::warn!("could not build a {threads}-thread pool ({e}); using the global pool"),
        }
    }
    #[cfg(not(feature = "parallel"))]
    if threads > 1 {
        log::debug!("built without the `parallel` feature; ignoring threads={threads}");
    }
    f()
}
