//! Deterministic floating-point reductions.
//!
//! Every metric in the crate sums in ascending index order with pairwise
//! (cascade) accumulation, so results are bit-identical across runs and
//! independent of how work was scheduled.

const BASE_CASE: usize = 8;

/// Pairwise sum of `values` in ascending index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BASE_CASE {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise dot product, reusing `scratch` for the elementwise products.
pub fn pairwise_dot(a: impl Iterator<Item = f64>, b: &[f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(a.zip(b).map(|(x, y)| x * y));
    pairwise_sum(scratch)
}

/// Amplitude decibels to a linear factor, `10^(dB/20)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Linear amplitude factor to decibels, `20·log₁₀(x)`.
pub fn linear_to_db(x: f64) -> f64 {
    20.0 * x.log10()
}

/// SplitMix64 finalizer; used to derive independent seeds from a tuple.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed derivation: folds each word of `path` into `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(master), |acc, &w| mix64(acc ^ mix64(w)))
}
