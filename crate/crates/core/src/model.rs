//! Domain types shared across the crate and the decision-variable metrics.
//!
//! Units: lengths in millimetres, currents in milliamperes, current densities
//! in A/m². The lead axis is the `z` axis.

use std::collections::HashSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::leadfield::ReducedSystem;
use crate::numeric::{pairwise_dot, pairwise_sum};
use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Direction of the lead axis.
pub const LEAD_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

/// Reference activation level (A/m²). Reported alongside results, never used
/// as a constraint.
pub const ACTIVATION_REFERENCE: f64 = 3.85;

/// Default intensity threshold `Γ₀` for the lattice search (units of Γ).
pub const DEFAULT_GAMMA0: f64 = 0.8;

/// Relative slack used when validating current patterns.
pub const PATTERN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub center: Vec3,
    pub normal: Vec3,
    pub label: String,
    pub row: usize,
    pub sector: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactArray {
    lead_diameter_mm: f64,
    contacts: Vec<Contact>,
    impedance_kohm: f64,
}

impl ContactArray {
    pub fn new(lead_diameter_mm: f64, contacts: Vec<Contact>, impedance_kohm: f64) -> Result<Self> {
        if contacts.len() < 2 {
            return Err(Error::InvalidGeometry(format!(
                "a lead needs at least 2 contacts, got {}",
                contacts.len()
            )));
        }
        if !(lead_diameter_mm > 0.0 && lead_diameter_mm.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "lead diameter must be positive, got {lead_diameter_mm}"
            )));
        }
        let mut seen = HashSet::new();
        for c in &contacts {
            if !seen.insert(c.label.as_str()) {
                return Err(Error::InvalidGeometry(format!("duplicate contact label {:?}", c.label)));
            }
            if c.center.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("center of contact {}", c.label)));
            }
        }
        Ok(Self {
            lead_diameter_mm,
            contacts,
            impedance_kohm,
        })
    }

    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }

    pub fn contacts(&self) -> &[Contact] {
        &self.contacts
    }

    pub fn lead_diameter_mm(&self) -> f64 {
        self.lead_diameter_mm
    }

    pub fn impedance_kohm(&self) -> f64 {
        self.impedance_kohm
    }

    pub fn label(&self, index: usize) -> &str {
        &self.contacts[index].label
    }

    /// Largest deviation of a contact center from the lead cylinder surface.
    pub fn max_surface_deviation_mm(&self) -> f64 {
        let radius = self.lead_diameter_mm / 2.0;
        self.contacts
            .iter()
            .map(|c| (c.center.x.hypot(c.center.y) - radius).abs())
            .fold(0.0, f64::max)
    }

    /// Number of distinct rows (axial levels).
    pub fn row_count(&self) -> usize {
        self.contacts.iter().map(|c| c.row).max().map_or(0, |r| r + 1)
    }

    /// Mirror image across the plane through the origin with unit normal `n`.
    pub fn mirrored(&self, n: &Vec3) -> Self {
        let reflect = |v: &Vec3| v - 2.0 * v.dot(n) * n;
        Self {
            lead_diameter_mm: self.lead_diameter_mm,
            contacts: self
                .contacts
                .iter()
                .map(|c| Contact {
                    center: reflect(&c.center),
                    normal: reflect(&c.normal),
                    ..c.clone()
                })
                .collect(),
            impedance_kohm: self.impedance_kohm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Low,
    High,
    Custom,
}

/// Positions at which the current density is sampled. Each position carries
/// three Cartesian unit dipole directions, so the grid has `3·len()` scalar
/// degrees of freedom; row `3p + c` is component `c` at position `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofGrid {
    positions: Vec<Vec3>,
    resolution: Resolution,
}

impl DofGrid {
    pub fn new(positions: Vec<Vec3>, resolution: Resolution) -> Result<Self> {
        if positions.iter().flat_map(|p| p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid position".into()));
        }
        let mut order: Vec<usize> = (0..positions.len()).collect();
        let key = |i: usize| [positions[i].x, positions[i].y, positions[i].z];
        order.sort_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka[0]
                .total_cmp(&kb[0])
                .then(ka[1].total_cmp(&kb[1]))
                .then(ka[2].total_cmp(&kb[2]))
        });
        for w in order.windows(2) {
            if positions[w[0]] == positions[w[1]] {
                return Err(Error::InvalidGeometry(format!(
                    "grid positions {} and {} coincide",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        Ok(Self { positions, resolution })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Total scalar degrees of freedom.
    pub fn dof_count(&self) -> usize {
        3 * self.positions.len()
    }

    /// Index of and distance to the closest grid position.
    pub fn nearest(&self, p: &Vec3) -> Option<(usize, f64)> {
        self.positions
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (q - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    pub fn mirrored(&self, n: &Vec3) -> Self {
        Self {
            positions: self.positions.iter().map(|v| v - 2.0 * v.dot(n) * n).collect(),
            resolution: self.resolution,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    Parallel,
    Perpendicular,
    Custom,
}

impl Alignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Alignment::Parallel => "parallel",
            Alignment::Perpendicular => "perpendicular",
            Alignment::Custom => "custom",
        }
    }
}

/// A dipolar target: where, which direction, and how strong (A/m²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    position: Vec3,
    orientation: Vec3,
    alignment: Alignment,
    magnitude: f64,
}

impl TargetSpec {
    pub fn new(position: Vec3, orientation: Vec3, alignment: Alignment, magnitude: f64) -> Result<Self> {
        if position.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target position".into()));
        }
        if (orientation.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidTarget(format!(
                "orientation must have unit norm, got {}",
                orientation.norm()
            )));
        }
        if !magnitude.is_finite() || magnitude < 0.0 {
            return Err(Error::InvalidTarget(format!("magnitude must be finite and ≥ 0, got {magnitude}")));
        }
        Ok(Self {
            position,
            orientation,
            alignment,
            magnitude,
        })
    }

    /// Target oriented relative to the lead: along its axis (`Parallel`) or
    /// radially away from it (`Perpendicular`).
    pub fn aligned(position: Vec3, alignment: Alignment, magnitude: f64) -> Result<Self> {
        let orientation = match alignment {
            Alignment::Parallel => Vec3::from(LEAD_AXIS),
            Alignment::Perpendicular => {
                let r = position.x.hypot(position.y);
                if r > 0.0 {
                    Vec3::new(position.x / r, position.y / r, 0.0)
                } else {
                    Vec3::x()
                }
            }
            Alignment::Custom => {
                return Err(Error::InvalidTarget("custom alignment needs an explicit orientation".into()))
            }
        };
        Self::new(position, orientation, alignment, magnitude)
    }

    /// Same target with a different magnitude.
    pub fn with_magnitude(&self, magnitude: f64) -> Result<Self> {
        Self::new(self.position, self.orientation, self.alignment, magnitude)
    }

    pub fn position(&self) -> &Vec3 {
        &self.position
    }

    pub fn orientation(&self) -> &Vec3 {
        &self.orientation
    }

    pub fn alignment(&self) -> Alignment {
        self.alignment
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }
}

/// Per-contact and total current limits (mA).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentLimits {
    pub per_contact_ma: f64,
    pub total_budget_ma: f64,
}

impl Default for CurrentLimits {
    fn default() -> Self {
        Self {
            per_contact_ma: 2.0,
            total_budget_ma: 4.0,
        }
    }
}

impl CurrentLimits {
    pub fn new(per_contact_ma: f64, total_budget_ma: f64) -> Result<Self> {
        if !(per_contact_ma > 0.0 && total_budget_ma > 0.0)
            || !per_contact_ma.is_finite()
            || !total_budget_ma.is_finite()
        {
            return Err(Error::InvalidArgument(format!(
                "current limits must be positive and finite, got ({per_contact_ma}, {total_budget_ma})"
            )));
        }
        Ok(Self {
            per_contact_ma,
            total_budget_ma,
        })
    }

    /// Uniform factor `≤ 1` that brings `currents` inside both limits.
    pub fn shrink_factor(&self, currents: &[f64]) -> f64 {
        let peak = currents.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let total: f64 = pairwise_sum(&currents.iter().map(|y| y.abs()).collect::<Vec<_>>());
        let excess = (peak / self.per_contact_ma).max(total / self.total_budget_ma);
        if excess > 1.0 {
            1.0 / excess
        } else {
            1.0
        }
    }
}

/// Electrode currents satisfying the box, budget and zero-sum constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentPattern {
    currents: Vec<f64>,
    limits: CurrentLimits,
}

impl CurrentPattern {
    pub fn new(currents: Vec<f64>, limits: CurrentLimits) -> Result<Self> {
        if currents.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("current pattern entry".into()));
        }
        let box_tol = limits.per_contact_ma * (1.0 + PATTERN_TOLERANCE);
        if let Some((l, y)) = currents.iter().enumerate().find(|(_, y)| y.abs() > box_tol) {
            return Err(Error::InvalidPattern(format!(
                "contact {l} carries {y} mA, above the ±{} mA limit",
                limits.per_contact_ma
            )));
        }
        let abs: Vec<f64> = currents.iter().map(|y| y.abs()).collect();
        let total = pairwise_sum(&abs);
        if total > limits.total_budget_ma * (1.0 + PATTERN_TOLERANCE) {
            return Err(Error::InvalidPattern(format!(
                "total injected current {total} mA exceeds the {} mA budget",
                limits.total_budget_ma
            )));
        }
        let sum = pairwise_sum(&currents);
        if sum.abs() > PATTERN_TOLERANCE * limits.total_budget_ma {
            return Err(Error::InvalidPattern(format!("currents sum to {sum} mA, not zero")));
        }
        Ok(Self { currents, limits })
    }

    pub fn zeros(k: usize, limits: CurrentLimits) -> Self {
        Self {
            currents: vec![0.0; k],
            limits,
        }
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    pub fn limits(&self) -> CurrentLimits {
        self.limits
    }

    pub fn len(&self) -> usize {
        self.currents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.currents.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        pairwise_sum(&self.currents.iter().map(|y| y.abs()).collect::<Vec<_>>())
    }

    /// Contacts carrying more than `threshold` mA in magnitude.
    pub fn active_contacts(&self, threshold: f64) -> Vec<usize> {
        (0..self.currents.len())
            .filter(|&l| self.currents[l].abs() > threshold)
            .collect()
    }
}

/// Focused density `Γ`, nuisance density `Ξ`, and field ratio `Θ = Γ/Ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionVariables {
    pub gamma: f64,
    pub xi: f64,
    #[serde(with = "crate::harness::float_text")]
    pub theta: f64,
}

impl DecisionVariables {
    pub fn evaluate(system: &ReducedSystem, pattern: &CurrentPattern) -> Result<Self> {
        let gamma = focused_density(system, pattern)?;
        let xi = nuisance_density(system, pattern)?;
        Ok(Self {
            gamma,
            xi,
            theta: field_ratio(gamma, xi),
        })
    }
}

fn check_len(system: &ReducedSystem, currents: &[f64]) -> Result<()> {
    if currents.len() != system.contact_count() {
        return Err(Error::DimensionMismatch {
            what: "current pattern length (contact count K)",
            expected: system.contact_count(),
            actual: currents.len(),
        });
    }
    Ok(())
}

/// `Γ = x₁ᵀ(L₁y) / ‖x₁‖₂`.
pub fn focused_density(system: &ReducedSystem, pattern: &CurrentPattern) -> Result<f64> {
    focused_density_raw(system, pattern.currents())
}

/// [`focused_density`] on a bare current vector.
pub fn focused_density_raw(system: &ReducedSystem, currents: &[f64]) -> Result<f64> {
    check_len(system, currents)?;
    let x1 = system.x1();
    let mut scratch = Vec::new();
    let x_norm = pairwise_dot(x1.iter().copied(), x1.as_slice(), &mut scratch).sqrt();
    if x_norm == 0.0 {
        return Err(Error::InvalidTarget("target vector x₁ has zero norm".into()));
    }
    let l1 = system.l1();
    let field: Vec<f64> = (0..l1.nrows())
        .map(|i| pairwise_dot(l1.row(i).iter().copied(), currents, &mut scratch))
        .collect();
    Ok(pairwise_dot(x1.iter().copied(), &field, &mut scratch) / x_norm)
}

/// `Ξ = ‖L₂y‖₂ / √M`.
pub fn nuisance_density(system: &ReducedSystem, pattern: &CurrentPattern) -> Result<f64> {
    nuisance_density_raw(system, pattern.currents())
}

/// [`nuisance_density`] on a bare current vector.
pub fn nuisance_density_raw(system: &ReducedSystem, currents: &[f64]) -> Result<f64> {
    check_len(system, currents)?;
    let l2 = system.l2();
    let m = l2.nrows();
    if m == 0 {
        return Err(Error::EmptyNuisance);
    }
    let mut scratch = Vec::with_capacity(currents.len());
    let squares: Vec<f64> = (0..m)
        .map(|i| {
            let w = pairwise_dot(l2.row(i).iter().copied(), currents, &mut scratch);
            w * w
        })
        .collect();
    Ok(pairwise_sum(&squares).sqrt() / (m as f64).sqrt())
}

/// `Θ = Γ/Ξ`. When `Ξ = 0` the ratio is `+∞` for `Γ > 0`, `−∞` for `Γ < 0`,
/// and `0` when both vanish.
pub fn field_ratio(gamma: f64, xi: f64) -> f64 {
    if xi > 0.0 {
        gamma / xi
    } else if gamma > 0.0 {
        f64::INFINITY
    } else if gamma < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wide_limits() -> CurrentLimits {
        CurrentLimits::new(1e6, 1e6).unwrap()
    }

    fn system(l1: DMatrix<f64>, l2: DMatrix<f64>, x1: Vec<f64>) -> ReducedSystem {
        ReducedSystem::from_parts(l1, l2, DVector::from_vec(x1)).unwrap()
    }

    fn random_system(rng: &mut ChaCha8Rng, k: usize, m: usize) -> ReducedSystem {
        let l1 = DMatrix::from_fn(1, k, |_, _| rng.random_range(-1.0..1.0));
        let l2 = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
        system(l1, l2, vec![rng.random_range(0.5..2.0)])
    }

    fn zero_sum(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        let mut y: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = y.iter().sum::<f64>() / k as f64;
        y.iter_mut().for_each(|v| *v -= mean);
        y
    }

    #[test]
    fn gamma_of_zero_pattern_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_system(&mut rng, 4, 3);
        let p = CurrentPattern::zeros(4, CurrentLimits::default());
        assert_eq!(focused_density(&s, &p).unwrap(), 0.0);
        assert_eq!(nuisance_density(&s, &p).unwrap(), 0.0);
    }

    #[test]
    fn gamma_two_contact_hand_value() {
        let s = system(
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DMatrix::from_row_slice(1, 2, &[0.5, 0.5]),
            vec![1.0],
        );
        let p = CurrentPattern::new(vec![1.0, -1.0], CurrentLimits::default()).unwrap();
        // scalar oracle: x₁·(1·1 + (−1)·(−1)) / |x₁|
        let oracle = 1.0 * (1.0 * 1.0 + (-1.0) * (-1.0)) / 1.0;
        assert_eq!(focused_density(&s, &p).unwrap(), 2.0);
        assert_eq!(oracle, 2.0);
    }

    #[test]
    fn gamma_dimension_mismatch_names_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_system(&mut rng, 4, 3);
        let p = CurrentPattern::new(vec![1.0, -1.0], CurrentLimits::default()).unwrap();
        match focused_density(&s, &p) {
            Err(Error::DimensionMismatch { expected, actual, .. }) => {
                assert_eq!((expected, actual), (4, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gamma_zero_target_is_invalid() {
        let s = system(
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DMatrix::from_row_slice(1, 2, &[0.5, 0.5]),
            vec![0.0],
        );
        let p = CurrentPattern::new(vec![1.0, -1.0], CurrentLimits::default()).unwrap();
        assert!(matches!(focused_density(&s, &p), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn xi_identity_unit_vector() {
        let m = 4;
        let s = system(DMatrix::from_element(1, m, 1.0), DMatrix::identity(m, m), vec![1.0]);
        let xi = nuisance_density_raw(&s, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((xi - 1.0 / (m as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn xi_matches_column_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_system(&mut rng, 3, 5);
        let y = zero_sum(&mut rng, 3);
        // column-by-column brute force
        let mut w = [0.0f64; 5];
        for (l, yl) in y.iter().enumerate() {
            for (m, wm) in w.iter_mut().enumerate() {
                *wm += s.l2()[(m, l)] * yl;
            }
        }
        let expect = (w.iter().map(|v| v * v).sum::<f64>() / 5.0).sqrt();
        let got = nuisance_density_raw(&s, &y).unwrap();
        assert!(((got - expect) / expect).abs() < 1e-12);
    }

    #[test]
    fn xi_needs_nuisance_rows() {
        let s = system(DMatrix::from_element(1, 2, 1.0), DMatrix::zeros(0, 2), vec![1.0]);
        assert!(matches!(nuisance_density_raw(&s, &[1.0, -1.0]), Err(Error::EmptyNuisance)));
    }

    #[test]
    fn field_ratio_conventions() {
        assert!((field_ratio(2.42, 1.21) - 2.0).abs() < 1e-15);
        assert_eq!(field_ratio(0.0, 0.0), 0.0);
        assert_eq!(field_ratio(1.0, 0.0), f64::INFINITY);
        assert_eq!(field_ratio(-1.0, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn metrics_homogeneity_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let s = random_system(&mut rng, 6, 9);
            let y = zero_sum(&mut rng, 6);
            let c: f64 = rng.random_range(0.1..10.0);
            let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
            let p = CurrentPattern::new(y, wide_limits()).unwrap();
            let q = CurrentPattern::new(cy, wide_limits()).unwrap();
            let a = DecisionVariables::evaluate(&s, &p).unwrap();
            let b = DecisionVariables::evaluate(&s, &q).unwrap();
            assert!(((b.gamma - c * a.gamma) / (c * a.gamma)).abs() < 1e-10);
            assert!(((b.xi - c * a.xi) / (c * a.xi)).abs() < 1e-10);
            assert!(((b.theta - a.theta) / a.theta).abs() < 1e-10);
        }
    }

    #[test]
    fn metrics_are_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_system(&mut rng, 8, 40);
        let p = CurrentPattern::new(zero_sum(&mut rng, 8), wide_limits()).unwrap();
        let a = DecisionVariables::evaluate(&s, &p).unwrap();
        let b = DecisionVariables::evaluate(&s, &p).unwrap();
        assert_eq!(a.gamma.to_bits(), b.gamma.to_bits());
        assert_eq!(a.xi.to_bits(), b.xi.to_bits());
        assert_eq!(a.theta.to_bits(), b.theta.to_bits());
    }

    #[test]
    fn contact_array_rejects_duplicates_and_singletons() {
        let c = |label: &str| Contact {
            center: Vec3::new(0.635, 0.0, 0.0),
            normal: Vec3::x(),
            label: label.into(),
            row: 0,
            sector: 0,
        };
        assert!(ContactArray::new(1.27, vec![c("a")], 2.0).is_err());
        assert!(ContactArray::new(1.27, vec![c("a"), c("a")], 2.0).is_err());
        assert!(ContactArray::new(1.27, vec![c("a"), c("b")], 2.0).is_ok());
    }

    #[test]
    fn grid_rejects_coincident_positions() {
        let p = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        assert!(DofGrid::new(p, Resolution::Custom).is_err());
    }

    #[test]
    fn target_orientation_must_be_unit() {
        assert!(TargetSpec::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 0.0), Alignment::Custom, 1.0).is_err());
        let t = TargetSpec::aligned(Vec3::new(3.0, 4.0, 1.0), Alignment::Perpendicular, 1.0).unwrap();
        assert!((t.orientation() - Vec3::new(0.6, 0.8, 0.0)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn pattern_constructor_enforces_invariants(
            raw in proptest::collection::vec(-3.0f64..3.0, 2..10),
            shift in prop_oneof![Just(0.0f64), -0.5f64..0.5],
        ) {
            let limits = CurrentLimits::default();
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            let centered: Vec<f64> = raw.iter().map(|v| v - mean + shift).collect();
            let peak = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let total: f64 = centered.iter().map(|v| v.abs()).sum();
            let sum: f64 = centered.iter().sum();
            let margin = 1e-6;
            let clearly_ok = peak <= 2.0 - margin && total <= 4.0 - margin && sum.abs() <= 1e-12;
            let clearly_bad = peak > 2.0 + margin || total > 4.0 + margin || sum.abs() > 1e-6;
            let res = CurrentPattern::new(centered, limits);
            if clearly_ok { prop_assert!(res.is_ok()); }
            if clearly_bad { prop_assert!(res.is_err()); }
        }
    }
}
