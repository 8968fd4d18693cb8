//! Box-plot statistics.
//!
//! Quantiles interpolate linearly between order statistics: for sorted
//! `x₀ ≤ … ≤ xₙ₋₁` and probability `p`, with `h = (n − 1)p`,
//! `Q(p) = x⌊h⌋ + (h − ⌊h⌋)(x⌊h⌋+1 − x⌊h⌋)`. Whiskers reach the most extreme
//! samples inside `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]`; samples outside are
//! outliers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    #[serde(with = "super::float_text")]
    pub median: f64,
    #[serde(with = "super::float_text")]
    pub q1: f64,
    #[serde(with = "super::float_text")]
    pub q3: f64,
    #[serde(with = "super::float_text")]
    pub iqr: f64,
    #[serde(with = "super::float_text")]
    pub whisker_low: f64,
    #[serde(with = "super::float_text")]
    pub whisker_high: f64,
    #[serde(with = "super::float_text::vec")]
    pub outliers: Vec<f64>,
}

/// Quantile `p ∈ [0, 1]` of ascending `sorted`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() || sorted[lo] == sorted[lo + 1] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Statistics of the non-NaN `values`; `None` when none remain.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    let mut x: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if x.is_empty() {
        return None;
    }
    x.sort_by(f64::total_cmp);
    let q1 = quantile(&x, 0.25);
    let q3 = quantile(&x, 0.75);
    let iqr = if q1 == q3 { 0.0 } else { q3 - q1 };
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |v: f64| v >= lo_fence && v <= hi_fence;
    let whisker_low = x.iter().copied().find(|&v| inside(v)).unwrap_or(q1);
    let whisker_high = x.iter().rev().copied().find(|&v| inside(v)).unwrap_or(q3);
    Some(BoxStats {
        n: x.len(),
        median: quantile(&x, 0.5),
        q1,
        q3,
        iqr,
        whisker_low,
        whisker_high,
        outliers: x.iter().copied().filter(|&v| !inside(v)).collect(),
    })
}
