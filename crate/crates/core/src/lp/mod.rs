//! Linear programming: the L1L1 epigraph formulation and an interior-point
//! solver.
//!
//! A [`LinearProgram`] is
//!
//! ```text
//! minimize    cᵀx
//! subject to  A_eq x  = b_eq
//!             A_ub x ≤ b_ub
//!             lower ≤ x ≤ upper
//! ```
//!
//! [`solve_lp`] runs a homogeneous self-dual predictor-corrector method and
//! reports an optimality [`Certificate`] measured on the original data.

mod format;
mod ipm;
mod kkt;
mod sparse;

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::leadfield::ReducedSystem;
use crate::model::{CurrentLimits, CurrentPattern};
use crate::numeric::pairwise_sum;
use crate::{Error, Result};

pub use format::write_lp_format;
pub use ipm::{solve_lp, solve_lp_with, LpSolver, SolverOptions};
pub use sparse::{SparseBuilder, SparseMatrix};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl LpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "iteration_limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableRole {
    /// `y⁺`, the positive part of the contact currents.
    CurrentPositive,
    /// `y⁻`, the negative part of the contact currents.
    CurrentNegative,
    /// `t`, epigraph of the target residual magnitudes.
    ResidualEpigraph,
    /// `s`, epigraph of the censored nuisance magnitudes.
    NuisanceEpigraph,
    Generic,
}

/// Contiguous blocks of LP variables and what they stand for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMap {
    blocks: Vec<(VariableRole, Range<usize>)>,
}

impl VariableMap {
    pub fn new(blocks: Vec<(VariableRole, Range<usize>)>) -> Self {
        Self { blocks }
    }

    pub fn generic(n: usize) -> Self {
        Self::new(vec![(VariableRole::Generic, 0..n)])
    }

    pub fn blocks(&self) -> &[(VariableRole, Range<usize>)] {
        &self.blocks
    }

    pub fn range(&self, role: VariableRole) -> Option<Range<usize>> {
        self.blocks.iter().find(|(r, _)| *r == role).map(|(_, r)| r.clone())
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|(_, r)| r.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when the blocks tile `0..n` in order with no gaps or overlaps.
    pub fn partitions(&self, n: usize) -> bool {
        let mut next = 0;
        for (_, r) in &self.blocks {
            if r.start != next || r.end < r.start {
                return false;
            }
            next = r.end;
        }
        next == n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    objective: Vec<f64>,
    eq_matrix: Arc<SparseMatrix>,
    eq_rhs: Vec<f64>,
    ineq_matrix: Arc<SparseMatrix>,
    ineq_rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    variable_map: VariableMap,
    current_limits: Option<CurrentLimits>,
}

impl LinearProgram {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        objective: Vec<f64>,
        eq_matrix: SparseMatrix,
        eq_rhs: Vec<f64>,
        ineq_matrix: SparseMatrix,
        ineq_rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        variable_map: VariableMap,
    ) -> Result<Self> {
        let n = objective.len();
        let dims = [
            ("equality matrix columns", eq_matrix.ncols()),
            ("inequality matrix columns", ineq_matrix.ncols()),
            ("lower bounds", lower.len()),
            ("upper bounds", upper.len()),
        ];
        for (what, actual) in dims {
            if actual != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    actual,
                });
            }
        }
        if eq_rhs.len() != eq_matrix.nrows() {
            return Err(Error::DimensionMismatch {
                what: "equality right-hand side",
                expected: eq_matrix.nrows(),
                actual: eq_rhs.len(),
            });
        }
        if ineq_rhs.len() != ineq_matrix.nrows() {
            return Err(Error::DimensionMismatch {
                what: "inequality right-hand side",
                expected: ineq_matrix.nrows(),
                actual: ineq_rhs.len(),
            });
        }
        let finite = objective
            .iter()
            .chain(&eq_rhs)
            .chain(&ineq_rhs)
            .chain(eq_matrix.values())
            .chain(ineq_matrix.values())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("linear program data".into()));
        }
        check_bounds(&lower, &upper)?;
        if !variable_map.partitions(n) {
            return Err(Error::InvalidArgument(format!(
                "variable map does not partition {n} variables"
            )));
        }
        Ok(Self {
            objective,
            eq_matrix: Arc::new(eq_matrix),
            eq_rhs,
            ineq_matrix: Arc::new(ineq_matrix),
            ineq_rhs,
            lower,
            upper,
            variable_map,
            current_limits: None,
        })
    }

    /// A program with the same constraint matrices (shared, not copied)
    /// but a new objective and new variable bounds.
    pub fn with_objective_and_bounds(&self, objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = self.variable_count();
        for (what, actual) in [
            ("objective length", objective.len()),
            ("lower bounds", lower.len()),
            ("upper bounds", upper.len()),
        ] {
            if actual != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    actual,
                });
            }
        }
        if !objective.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("linear program objective".into()));
        }
        check_bounds(&lower, &upper)?;
        Ok(Self {
            objective,
            lower,
            upper,
            ..self.clone()
        })
    }

    pub fn with_current_limits(mut self, limits: CurrentLimits) -> Self {
        self.current_limits = Some(limits);
        self
    }

    pub fn variable_count(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn eq_matrix(&self) -> &SparseMatrix {
        &self.eq_matrix
    }

    pub(crate) fn eq_matrix_arc(&self) -> Arc<SparseMatrix> {
        Arc::clone(&self.eq_matrix)
    }

    pub(crate) fn ineq_matrix_arc(&self) -> Arc<SparseMatrix> {
        Arc::clone(&self.ineq_matrix)
    }

    pub fn eq_rhs(&self) -> &[f64] {
        &self.eq_rhs
    }

    pub fn ineq_matrix(&self) -> &SparseMatrix {
        &self.ineq_matrix
    }

    pub fn ineq_rhs(&self) -> &[f64] {
        &self.ineq_rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn variable_map(&self) -> &VariableMap {
        &self.variable_map
    }

    pub fn current_limits(&self) -> Option<CurrentLimits> {
        self.current_limits
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self.objective.iter().zip(x).map(|(c, v)| c * v).collect();
        pairwise_sum(&terms)
    }
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    for (j, (&l, &u)) in lower.iter().zip(upper).enumerate() {
        if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("variable {j} has bounds [{l}, {u}]")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Relative violation of the primal constraints and bounds.
    pub primal_residual: f64,
    /// Relative violation of dual feasibility.
    pub dual_residual: f64,
    /// Relative duality gap.
    pub gap: f64,
}

impl Certificate {
    pub fn within(&self, tol: f64) -> bool {
        self.primal_residual <= tol && self.dual_residual <= tol && self.gap <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub status: LpStatus,
    pub certificate: Certificate,
    pub iterations: usize,
}

/// Scaling constants of the L1L1 problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1L1Scaling {
    /// `ζ = ‖L‖₁`, the largest absolute column sum.
    pub zeta: f64,
    /// `ν = ‖x‖∞`.
    pub nu: f64,
}

pub fn l1l1_scaling(system: &ReducedSystem) -> Result<L1L1Scaling> {
    let nu = system.target_peak();
    if nu == 0.0 {
        return Err(Error::DegenerateTarget("target vector is zero (ν = ‖x‖∞ = 0)".into()));
    }
    let zeta = system.l1_operator_norm();
    if !(zeta.is_finite() && nu.is_finite()) {
        return Err(Error::NonFinite(format!("L1L1 scaling ζ = {zeta}, ν = {nu}")));
    }
    Ok(L1L1Scaling { zeta, nu })
}

fn check_l1l1_params(alpha: f64, epsilon: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be finite and ≥ 0, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(())
}

/// The nonsmooth L1L1 objective
/// `‖L₁y − x₁‖₁ + Σₘ max(|ν⁻¹(L₂y)ₘ|, ε) + αζ‖y‖₁`.
pub fn l1l1_objective(system: &ReducedSystem, y: &[f64], alpha: f64, epsilon: f64) -> Result<f64> {
    let sc = l1l1_scaling(system)?;
    if y.len() != system.contact_count() {
        return Err(Error::DimensionMismatch {
            what: "current vector length",
            expected: system.contact_count(),
            actual: y.len(),
        });
    }
    let dot = |row: nalgebra::DMatrixView<f64>| -> f64 {
        let t: Vec<f64> = row.iter().zip(y).map(|(a, b)| a * b).collect();
        pairwise_sum(&t)
    };
    let (l1, l2, x1) = (system.l1(), system.l2(), system.x1());
    let fit: Vec<f64> = (0..l1.nrows())
        .map(|i| (dot(l1.rows(i, 1).as_view()) - x1[i]).abs())
        .collect();
    let nuisance: Vec<f64> = (0..l2.nrows())
        .map(|m| (dot(l2.rows(m, 1).as_view()) / sc.nu).abs().max(epsilon))
        .collect();
    let l1y = pairwise_sum(&y.iter().map(|v| v.abs()).collect::<Vec<_>>());
    Ok(pairwise_sum(&fit) + pairwise_sum(&nuisance) + alpha * sc.zeta * l1y)
}

/// Epigraph LP of the L1L1 problem over variables `[y⁺, y⁻, t, s]`.
///
/// Rows: `±(L₁(y⁺−y⁻) − x₁) − t ≤ 0`, `±ν⁻¹L₂(y⁺−y⁻) − s ≤ 0`,
/// `y⁺ₗ + y⁻ₗ ≤ c`, `Σ(y⁺+y⁻) ≤ B`, and `Σ(y⁺−y⁻) = 0`; bounds `y± ≥ 0`,
/// `s ≥ ε`, `t` free.
pub fn build_l1l1_lp(system: &ReducedSystem, alpha: f64, epsilon: f64, limits: CurrentLimits) -> Result<LinearProgram> {
    check_l1l1_params(alpha, epsilon)?;
    L1L1Family::new(system, limits)?.instance(alpha, epsilon)
}

/// The L1L1 LP of one reduced system for every `(α, ε)`.
///
/// The constraint matrices do not depend on the hyperparameters, so they are
/// built once and shared by all instances; an [`LpSolver`] prepared on one
/// instance solves all of them.
#[derive(Debug, Clone)]
pub struct L1L1Family {
    base: LinearProgram,
    scaling: L1L1Scaling,
    contacts: usize,
    nuisance: usize,
}

impl L1L1Family {
    pub fn new(system: &ReducedSystem, limits: CurrentLimits) -> Result<Self> {
        let sc = l1l1_scaling(system)?;
        let k = system.contact_count();
        let n1 = system.target_count();
        let m = system.nuisance_count();
        let (yp, yn, t0, s0) = (0, k, 2 * k, 2 * k + n1);
        let n = 2 * k + n1 + m;

        let mut g = SparseBuilder::new(n);
        let mut h = Vec::with_capacity(2 * n1 + 2 * m + k + 1);
        let (l1, l2, x1) = (system.l1(), system.l2(), system.x1());
        for i in 0..n1 {
            for sign in [1.0, -1.0] {
                let row = (0..k)
                    .map(|j| (yp + j, sign * l1[(i, j)]))
                    .chain((0..k).map(|j| (yn + j, -sign * l1[(i, j)])))
                    .chain(std::iter::once((t0 + i, -1.0)));
                g.push_row(row);
                h.push(sign * x1[i]);
            }
        }
        let inv_nu = 1.0 / sc.nu;
        for r in 0..m {
            for sign in [1.0, -1.0] {
                let row = (0..k)
                    .map(|j| (yp + j, sign * inv_nu * l2[(r, j)]))
                    .chain((0..k).map(|j| (yn + j, -sign * inv_nu * l2[(r, j)])))
                    .chain(std::iter::once((s0 + r, -1.0)));
                g.push_row(row);
                h.push(0.0);
            }
        }
        for j in 0..k {
            g.push_row([(yp + j, 1.0), (yn + j, 1.0)].into_iter());
            h.push(limits.per_contact_ma);
        }
        g.push_row((0..2 * k).map(|j| (j, 1.0)));
        h.push(limits.total_budget_ma);

        let mut a = SparseBuilder::new(n);
        a.push_row((0..k).map(|j| (yp + j, 1.0)).chain((0..k).map(|j| (yn + j, -1.0))));

        let map = VariableMap::new(vec![
            (VariableRole::CurrentPositive, yp..yp + k),
            (VariableRole::CurrentNegative, yn..yn + k),
            (VariableRole::ResidualEpigraph, t0..t0 + n1),
            (VariableRole::NuisanceEpigraph, s0..s0 + m),
        ]);
        let (c, lower) = Self::vectors(k, n1, m, 0.0, 0.0);
        let base = LinearProgram::new(c, a.finish(), vec![0.0], g.finish(), h, lower, vec![f64::INFINITY; n], map)?
            .with_current_limits(limits);
        Ok(Self {
            base,
            scaling: sc,
            contacts: k,
            nuisance: m,
        })
    }

    fn vectors(k: usize, n1: usize, m: usize, penalty: f64, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
        let mut c = vec![penalty; 2 * k];
        c.extend(std::iter::repeat_n(1.0, n1 + m));
        let mut lower = vec![0.0; 2 * k];
        lower.extend(std::iter::repeat_n(f64::NEG_INFINITY, n1));
        lower.extend(std::iter::repeat_n(epsilon, m));
        (c, lower)
    }

    pub fn scaling(&self) -> L1L1Scaling {
        self.scaling
    }

    /// The program at `α = 0, ε = 0`.
    pub fn base(&self) -> &LinearProgram {
        &self.base
    }

    pub fn instance(&self, alpha: f64, epsilon: f64) -> Result<LinearProgram> {
        check_l1l1_params(alpha, epsilon)?;
        let n = self.base.variable_count();
        let n1 = n - 2 * self.contacts - self.nuisance;
        let (c, lower) = Self::vectors(self.contacts, n1, self.nuisance, alpha * self.scaling.zeta, epsilon);
        self.base.with_objective_and_bounds(c, lower, vec![f64::INFINITY; n])
    }
}

/// LP point corresponding to currents `y`, with epigraph variables at their
/// lower envelopes.
pub fn l1l1_point(system: &ReducedSystem, y: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let sc = l1l1_scaling(system)?;
    let k = system.contact_count();
    let mut x: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    x.extend(y.iter().map(|v| (-v).max(0.0)));
    let dot = |row: Vec<f64>| pairwise_sum(&row.iter().zip(y).map(|(a, b)| a * b).collect::<Vec<_>>());
    for i in 0..system.target_count() {
        let v = dot(system.l1().row(i).iter().copied().collect());
        x.push((v - system.x1()[i]).abs());
    }
    for r in 0..system.nuisance_count() {
        let v = dot(system.l2().row(r).iter().copied().collect());
        x.push((v / sc.nu).abs().max(epsilon));
    }
    debug_assert_eq!(x.len(), 2 * k + system.target_count() + system.nuisance_count());
    Ok(x)
}

/// Contact currents `y⁺ − y⁻` of an optimal L1L1 solution, re-centred to an
/// exact zero sum and, if solver round-off left them marginally outside the
/// limits, uniformly scaled back inside.
pub fn extract_pattern(lp: &LinearProgram, sol: &LpSolution) -> Result<CurrentPattern> {
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp {
            status: sol.status,
            context: "cannot extract a pattern from a non-optimal solution".into(),
        });
    }
    let map = lp.variable_map();
    let (pos, neg) = match (map.range(VariableRole::CurrentPositive), map.range(VariableRole::CurrentNegative)) {
        (Some(p), Some(n)) if p.len() == n.len() => (p, n),
        _ => {
            return Err(Error::InvalidArgument(
                "linear program has no current variables to extract".into(),
            ))
        }
    };
    let limits = lp
        .current_limits()
        .ok_or_else(|| Error::InvalidArgument("linear program carries no current limits".into()))?;
    let mut y: Vec<f64> = pos.zip(neg).map(|(p, n)| sol.values[p] - sol.values[n]).collect();
    recenter(&mut y);
    let f = limits.shrink_factor(&y);
    if f < 1.0 {
        y.iter_mut().for_each(|v| *v *= f);
    }
    CurrentPattern::new(y, limits)
}

/// Subtracts the mean so the entries sum to zero.
pub(crate) fn recenter(y: &mut [f64]) {
    if y.is_empty() {
        return;
    }
    let mean = pairwise_sum(y) / y.len() as f64;
    y.iter_mut().for_each(|v| *v -= mean);
}

#[cfg(test)]
mod tests;
