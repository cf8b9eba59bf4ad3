//! Deterministic data-parallel primitives for the solver's hot loops.
//!
//! Every reduction here is computed over fixed-size chunks whose partial
//! sums are combined in chunk order. The parallel path (feature
//! `parallel`, on by default) and the sequential fallback therefore
//! produce bit-identical results: thread scheduling can never reorder a
//! floating-point sum. The [`seq`] and [`par`] submodules expose both
//! paths directly so benchmarks can compare them; the top-level functions
//! dispatch on input size.

/// Chunk width for deterministic reductions and parallel maps.
pub const CHUNK: usize = 8192;

/// Inputs shorter than this stay on the sequential path even when the
/// `parallel` feature is enabled; spawning tasks costs more than the work.
pub const PAR_THRESHOLD: usize = 1 << 15;

#[inline]
fn sum_chunk(xs: &[f64]) -> f64 {
    xs.iter().sum()
}

#[inline]
fn dot_chunk(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn masked_chunk(xs: &[f64], mask: &[bool]) -> f64 {
    xs.iter()
        .zip(mask)
        .map(|(&x, &m)| if m { x } else { 0.0 })
        .sum()
}

/// Sequential implementations. Always available.
pub mod seq {
    use super::{dot_chunk, sum_chunk, CHUNK};

    /// Chunked sum; identical rounding to [`super::par::sum`].
    pub fn sum(xs: &[f64]) -> f64 {
        xs.chunks(CHUNK).map(sum_chunk).sum()
    }

    /// Chunked dot product.
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.chunks(CHUNK)
            .zip(b.chunks(CHUNK))
            .map(|(ca, cb)| dot_chunk(ca, cb))
            .sum()
    }

    /// Sum of the entries selected by the mask.
    pub fn masked_sum(xs: &[f64], mask: &[bool]) -> f64 {
        assert_eq!(xs.len(), mask.len());
        xs.chunks(CHUNK)
            .zip(mask.chunks(CHUNK))
            .map(|(cx, cm)| super::masked_chunk(cx, cm))
            .sum()
    }

    /// In-place map over a mutable slice.
    pub fn for_each_mut<T: Send, F: Fn(&mut T) + Sync + Send>(xs: &mut [T], f: F) {
        xs.iter_mut().for_each(f);
    }

    /// Writes `f(i, src[i])` into `dst[i]`.
    pub fn map_into<S: Sync, T: Send, F: Fn(usize, &S) -> T + Sync + Send>(
        src: &[S],
        dst: &mut Vec<T>,
        f: F,
    ) {
        dst.clear();
        dst.extend(src.iter().enumerate().map(|(i, s)| f(i, s)));
    }
}

/// Parallel implementations backed by rayon. Chunk layout matches [`seq`],
/// so results are bit-identical.
#[cfg(feature = "parallel")]
pub mod par {
    use super::{dot_chunk, sum_chunk, CHUNK};
    use rayon::prelude::*;

    /// Chunked sum; partials are combined in chunk order.
    pub fn sum(xs: &[f64]) -> f64 {
        let partials: Vec<f64> = xs.par_chunks(CHUNK).map(sum_chunk).collect();
        partials.iter().sum()
    }

    /// Chunked dot product.
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        let partials: Vec<f64> = a
            .par_chunks(CHUNK)
            .zip(b.par_chunks(CHUNK))
            .map(|(ca, cb)| dot_chunk(ca, cb))
            .collect();
        partials.iter().sum()
    }

    /// Sum of the entries selected by the mask.
    pub fn masked_sum(xs: &[f64], mask: &[bool]) -> f64 {
        assert_eq!(xs.len(), mask.len());
        let partials: Vec<f64> = xs
            .par_chunks(CHUNK)
            .zip(mask.par_chunks(CHUNK))
            .map(|(cx, cm)| super::masked_chunk(cx, cm))
            .collect();
        partials.iter().sum()
    }

    /// In-place map over a mutable slice.
    pub fn for_each_mut<T: Send, F: Fn(&mut T) + Sync + Send>(xs: &mut [T], f: F) {
        xs.par_iter_mut().for_each(f);
    }

    /// Writes `f(i, src[i])` into `dst[i]`.
    pub fn map_into<S: Sync, T: Send, F: Fn(usize, &S) -> T + Sync + Send>(
        src: &[S],
        dst: &mut Vec<T>,
        f: F,
    ) {
        dst.clear();
        src.par_iter()
            .enumerate()
            .map(|(i, s)| f(i, s))
            .collect_into_vec(dst);
    }
}

/// Deterministic chunked reduction: `chunk_fn` maps each fixed `[start, end)`
/// chunk of `0..len` to a partial value and the partials are combined in
/// chunk order, so the result is identical on the sequential and parallel
/// paths.
pub fn reduce_chunks<T, F>(len: usize, chunk_fn: F, identity: T, combine: fn(T, T) -> T) -> T
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let n_chunks = len.div_ceil(CHUNK).max(1);
    #[cfg(feature = "parallel")]
    if len >= PAR_THRESHOLD {
        use rayon::prelude::*;
        let partials: Vec<T> = (0..n_chunks)
            .into_par_iter()
            .map(|k| chunk_fn(k * CHUNK, len.min((k + 1) * CHUNK)))
            .collect();
        return partials.into_iter().fold(identity, combine);
    }
    (0..n_chunks)
        .map(|k| chunk_fn(k * CHUNK, len.min((k + 1) * CHUNK)))
        .fold(identity, combine)
}

/// Sum of a slice, parallel above [`PAR_THRESHOLD`].
pub fn sum(xs: &[f64]) -> f64 {
    #[cfg(feature = "parallel")]
    if xs.len() >= PAR_THRESHOLD {
        return par::sum(xs);
    }
    seq::sum(xs)
}

/// Dot product, parallel above [`PAR_THRESHOLD`].
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(feature = "parallel")]
    if a.len() >= PAR_THRESHOLD {
        return par::dot(a, b);
    }
    seq::dot(a, b)
}

/// Masked sum, parallel above [`PAR_THRESHOLD`].
pub fn masked_sum(xs: &[f64], mask: &[bool]) -> f64 {
    #[cfg(feature = "parallel")]
    if xs.len() >= PAR_THRESHOLD {
        return par::masked_sum(xs, mask);
    }
    seq::masked_sum(xs, mask)
}

/// In-place map, parallel above [`PAR_THRESHOLD`].
pub fn for_each_mut<T: Send, F: Fn(&mut T) + Sync + Send>(xs: &mut [T], f: F) {
    #[cfg(feature = "parallel")]
    if xs.len() >= PAR_THRESHOLD {
        return par::for_each_mut(xs, f);
    }
    seq::for_each_mut(xs, f);
}

/// Indexed map into a reused buffer, parallel above [`PAR_THRESHOLD`].
pub fn map_into<S: Sync, T: Send, F: Fn(usize, &S) -> T + Sync + Send>(
    src: &[S],
    dst: &mut Vec<T>,
    f: F,
) {
    #[cfg(feature = "parallel")]
    if src.len() >= PAR_THRESHOLD {
        return par::map_into(src, dst, f);
    }
    seq::map_into(src, dst, f);
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse sigmoid; `logit(0.5)` is exactly zero.
#[inline]
pub fn logit(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "logit argument must be in (0,1)");
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64) * 0.37 + 0.01).collect()
    }

    #[test]
    fn seq_sum_matches_naive_closely() {
        let xs = ramp(10_000);
        let naive: f64 = xs.iter().sum();
        assert!((seq::sum(&xs) - naive).abs() / naive < 1e-12);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn par_and_seq_are_bit_identical() {
        for n in [0, 1, CHUNK - 1, CHUNK, CHUNK + 1, 3 * CHUNK + 17, 100_000] {
            let xs = ramp(n);
            let ys: Vec<f64> = xs.iter().map(|x| 1.0 / (x + 1.0)).collect();
            let mask: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
            assert_eq!(seq::sum(&xs).to_bits(), par::sum(&xs).to_bits());
            assert_eq!(seq::dot(&xs, &ys).to_bits(), par::dot(&xs, &ys).to_bits());
            assert_eq!(
                seq::masked_sum(&xs, &mask).to_bits(),
                par::masked_sum(&xs, &mask).to_bits()
            );
        }
    }

    #[test]
    fn masked_sum_matches_filtered_sum() {
        let xs = ramp(1000);
        let mask: Vec<bool> = (0..1000).map(|i| i % 7 == 0).collect();
        let expected: f64 = xs
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&x, _)| x)
            .sum();
        assert!((seq::masked_sum(&xs, &mask) - expected).abs() < 1e-9);
    }

    #[test]
    fn dispatch_matches_seq() {
        let xs = ramp(PAR_THRESHOLD + 5);
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.5).collect();
        assert_eq!(dot(&xs, &ys).to_bits(), seq::dot(&xs, &ys).to_bits());
        assert_eq!(sum(&xs).to_bits(), seq::sum(&xs).to_bits());
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) - 0.8807970779778823).abs() < 1e-15);
        assert!((sigmoid(-3.0) - 0.04742587317756678).abs() < 1e-15);
        // Stable in the far tails.
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn logit_is_sigmoid_inverse() {
        for p in [0.1, 0.25, 0.5, 0.9] {
            assert!((sigmoid(logit(p)) - p).abs() < 1e-12);
        }
        assert_eq!(logit(0.5), 0.0);
    }

    #[test]
    fn map_into_reuses_buffer() {
        let src = ramp(100);
        let mut dst = Vec::new();
        map_into(&src, &mut dst, |i, x| x + i as f64);
        assert_eq!(dst.len(), 100);
        assert_eq!(dst[3], src[3] + 3.0);
    }

    #[test]
    fn reduce_chunks_matches_direct_reduction() {
        // n = 0 is excluded from the bit comparison: std's float Sum
        // identity is -0.0 while the explicit identity here is +0.0.
        for n in [1, CHUNK, CHUNK + 3, PAR_THRESHOLD + 11] {
            let xs = ramp(n);
            let got = reduce_chunks(
                n,
                |lo, hi| xs[lo..hi].iter().sum::<f64>(),
                0.0,
                |a, b| a + b,
            );
            assert_eq!(got.to_bits(), seq::sum(&xs).to_bits(), "n = {n}");
        }
        assert_eq!(reduce_chunks(0, |_, _| 1.0, 0.0, |a, b| a + b), 1.0);
    }
}
