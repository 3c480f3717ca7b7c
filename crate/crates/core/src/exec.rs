//! Deterministic Monte Carlo execution.
//!
//! Work is expressed as a pure function of a global item index; randomness
//! for item i comes from a ChaCha stream keyed by (master seed, i). Results
//! are gathered in index order, so output bytes are identical whether the
//! map runs sequentially or on a rayon pool of any size.
//!
//! With the `parallel` feature disabled the crate compiles without rayon and
//! every map runs sequentially. With the feature enabled, callers can still
//! force the sequential path at runtime (used by the benchmark suite and the
//! determinism tests) via [`force_sequential`].

use std::cell::Cell;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Run `f` with all [`map_indexed`] calls on this thread forced onto the
/// sequential path, regardless of the `parallel` feature.
pub fn force_sequential<R>(f: impl FnOnce() -> R) -> R {
    FORCE_SEQUENTIAL.with(|flag| {
        let prev = flag.replace(true);
        let out = f();
        flag.set(prev);
        out
    })
}

fn sequential_forced() -> bool {
    FORCE_SEQUENTIAL.with(Cell::get)
}

/// RNG for work item `index` under `master_seed`. Streams are independent
/// for distinct indices.
pub fn item_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Stable master-seed derivation for independent sub-experiments (one
/// splitmix64 step of master ⊕ salt), so sweep points do not share RNG
/// streams.
pub fn derive_seed(master_seed: u64, salt: u64) -> u64 {
    let mut z = master_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Map `f` over 0..n, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential_forced() {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    map_indexed_seq(n, f)
}

/// Sequential twin of [`map_indexed`], always available.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fold a large index range in fixed-size batches. `fold_batch` consumes the
/// half-open global index range of one batch and returns a partial
/// accumulator; partials are merged in batch order. Batch size is part of
/// the call, so the work split never depends on the thread count.
pub fn batched_fold<A, F, M>(total: u64, batch_size: u64, fold_batch: F, mut merge: M) -> Option<A>
where
    A: Send,
    F: Fn(u64, u64) -> A + Sync + Send,
    M: FnMut(A, A) -> A,
{
    assert!(batch_size > 0, "batch size must be positive");
    let batches = total.div_ceil(batch_size) as usize;
    let partials = map_indexed(batches, |b| {
        let start = b as u64 * batch_size;
        let end = (start + batch_size).min(total);
        fold_batch(start, end)
    });
    partials.into_iter().reduce(|a, b| merge(a, b))
}
