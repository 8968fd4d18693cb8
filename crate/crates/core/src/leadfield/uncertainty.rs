//! Zero-averaged row norms, the attenuation set `V_δ`, and lead field noise.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LeadField;
use crate::numeric::{db_to_linear, pairwise_sum};
use crate::{Error, Result};

/// Subtracts each row's mean from its entries.
pub fn zero_average_rows(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let k = matrix.ncols();
    let mut out = matrix.clone();
    if k == 0 {
        return out;
    }
    let mut row = Vec::with_capacity(k);
    for i in 0..matrix.nrows() {
        row.clear();
        row.extend(matrix.row(i).iter().copied());
        let mean = pairwise_sum(&row) / k as f64;
        for j in 0..k {
            out[(i, j)] -= mean;
        }
    }
    out
}

/// Positions whose zero-averaged lead field norm is at least `delta` times
/// the largest one. A position's norm is the max over its three Cartesian
/// rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationSet {
    pub delta: f64,
    pub member_indices: Vec<usize>,
    pub row_norms: Vec<f64>,
    pub max_norm: f64,
}

impl AttenuationSet {
    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    pub fn contains(&self, position: usize) -> bool {
        self.member_indices.binary_search(&position).is_ok()
    }

    /// `delta` in decibels.
    pub fn delta_db(&self) -> f64 {
        crate::numeric::linear_to_db(self.delta)
    }
}

pub(crate) fn position_norms(field: &LeadField) -> Vec<f64> {
    let z = zero_average_rows(field.matrix());
    let mut scratch = Vec::with_capacity(z.ncols());
    (0..field.grid().len())
        .map(|p| {
            (0..3)
                .map(|c| {
                    scratch.clear();
                    scratch.extend(z.row(3 * p + c).iter().map(|v| v * v));
                    pairwise_sum(&scratch).sqrt()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

pub fn attenuation_set(field: &LeadField, delta: f64) -> Result<AttenuationSet> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta must lie in [0, 1], got {delta}")));
    }
    let row_norms = position_norms(field);
    let max_norm = row_norms.iter().copied().fold(0.0, f64::max);
    let threshold = delta * max_norm;
    let member_indices = (0..row_norms.len()).filter(|&p| row_norms[p] >= threshold).collect();
    Ok(AttenuationSet {
        delta,
        member_indices,
        row_norms,
        max_norm,
    })
}

/// Smallest admissible nuisance threshold `ε` at `target_index`:
/// `δ · maxₖ‖l̃ₖ‖ / ‖l̃_target‖`.
pub fn dynamic_range_bound(set: &AttenuationSet, target_index: usize) -> Result<f64> {
    let norm = *set.row_norms.get(target_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "position {target_index} out of range ({} positions)",
            set.row_norms.len()
        ))
    })?;
    if norm <= 0.0 {
        return Err(Error::DegenerateTarget(format!(
            "zero-averaged lead field vanishes at position {target_index}"
        )));
    }
    Ok(set.delta * set.max_norm / norm)
}

/// Gaussian perturbation of a lead field, calibrated by peak signal-to-noise
/// ratio `20·log₁₀(max|L| / σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub psnr_db: f64,
    pub seed: u64,
    pub realization_index: u64,
}

/// `σ = max|L| · 10^(−psnr/20)`.
pub fn noise_sigma(field: &LeadField, psnr_db: f64) -> f64 {
    field.peak() * db_to_linear(-psnr_db)
}

/// Returns `field + E` with `E` i.i.d. `N(0, σ²)`. The stream is ChaCha20
/// keyed by `seed`, on stream `realization_index`, filled row by row.
pub fn add_noise(field: &LeadField, spec: &NoiseSpec) -> Result<LeadField> {
    if spec.psnr_db.is_nan() || spec.psnr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!("PSNR must be a number, got {}", spec.psnr_db)));
    }
    let sigma = noise_sigma(field, spec.psnr_db);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(spec.realization_index);
    let mut m = field.matrix().clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z: f64 = StandardNormal.sample(&mut rng);
            m[(i, j)] += sigma * z;
        }
    }
    Ok(field.with_matrix(m, Some(*spec)))
}
