//! Deterministic RNG streams and a small fixed-order parallel map.
//!
//! Every sampling consumer draws from a ChaCha stream addressed by
//! (master seed, stream id), so results are reproducible regardless of
//! thread count. `MSPDUALS_THREADS` caps the worker count.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

/// Independent RNG stream `stream` under `master_seed`.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Samples an index from a finite distribution given by `probs`.
pub fn sample_index(probs: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn worker_threads() -> usize {
    if let Ok(v) = std::env::var("MSPDUALS_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Maps `f` over `0..n` with up to [`worker_threads`] workers. Results come
/// back in index order, so reductions over the output are deterministic.
pub fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = worker_threads().min(n.max(1));
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    let mut out: Vec<Option<T>> = Vec::with_capacity(n);
    out.resize_with(n, || None);
    let slots: Vec<&mut [Option<T>]> = {
        let mut rest = out.as_mut_slice();
        let mut v = Vec::new();
        while !rest.is_empty() {
            let take = chunk.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            v.push(head);
            rest = tail;
        }
        v
    };
    std::thread::scope(|scope| {
        for (w, slot) in slots.into_iter().enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (off, cell) in slot.iter_mut().enumerate() {
                    *cell = Some(f(w * chunk + off));
                }
            });
        }
    });
    out.into_iter().map(|x| x.expect("worker failed")).collect()
}

/// Mean and standard error of a sample.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = {
            let mut r = stream_rng(7, 1);
            (0..4).map(|_| r.random()).collect()
        };
        let b: Vec<f64> = {
            let mut r = stream_rng(7, 1);
            (0..4).map(|_| r.random()).collect()
        };
        let c: Vec<f64> = {
            let mut r = stream_rng(7, 2);
            (0..4).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn parallel_map_preserves_order() {
        let out = parallel_map(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn categorical_sampling_covers_support() {
        let mut rng = stream_rng(1, 0);
        let probs = [0.25, 0.5, 0.25];
        let mut counts = [0usize; 3];
        for _ in 0..4000 {
            counts[sample_index(&probs, &mut rng)] += 1;
        }
        assert!(counts[1] > counts[0] && counts[1] > counts[2]);
        assert!(counts.iter().all(|&c| c > 500));
    }
}
