//! The three current-steering methods: reciprocity (RP), Tikhonov-type
//! least squares (TLS) and the L1L1 linear program.
//!
//! Each maps a [`ReducedSystem`] and its hyperparameters to a
//! [`SolveOutcome`] carrying a feasible [`CurrentPattern`] and its
//! [`DecisionVariables`].

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::leadfield::ReducedSystem;
use crate::lp::{extract_pattern, Certificate, L1L1Family, LpSolver, LpStatus, SolverOptions};
use crate::model::{CurrentLimits, CurrentPattern, DecisionVariables};
use crate::numeric::{db_to_linear, linear_to_db, pairwise_dot, pairwise_sum};
use crate::{Error, Result};

/// Condition estimate above which TLS reports a warning.
pub const TLS_CONDITION_WARNING: f64 = 1e14;
const TLS_REFINE_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[value(rename_all = "lowercase")]
pub enum Method {
    Rp,
    Tls,
    L1l1,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rp => "rp",
            Method::Tls => "tls",
            Method::L1l1 => "l1l1",
        }
    }
}

/// A hyperparameter in both conventions, `linear = 10^(db/20)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperValue {
    #[serde(with = "crate::harness::float_text")]
    pub db: f64,
    pub linear: f64,
}

impl HyperValue {
    pub fn from_db(db: f64) -> Self {
        Self {
            db,
            linear: db_to_linear(db),
        }
    }

    pub fn from_linear(linear: f64) -> Self {
        Self {
            db: linear_to_db(linear),
            linear,
        }
    }
}

pub type Hyperparameters = BTreeMap<String, HyperValue>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub lp_status: Option<LpStatus>,
    pub certificate: Option<Certificate>,
    /// TLS: `‖Ay − b‖₂ / ‖b‖₂` of the unnormalized solution.
    pub relative_residual: Option<f64>,
    /// TLS: `λmax / λmin` of the system matrix.
    pub condition_estimate: Option<f64>,
    /// TLS: solution before zero-sum and limit normalization.
    pub raw_currents: Option<Vec<f64>>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub pattern: CurrentPattern,
    pub metrics: DecisionVariables,
    pub method: Method,
    pub hyperparameters: Hyperparameters,
    pub diagnostics: SolverDiagnostics,
}

/// Metrics of `pattern`; a zero pattern on a zero target scores zero.
pub fn outcome_metrics(system: &ReducedSystem, pattern: &CurrentPattern) -> Result<DecisionVariables> {
    if system.target_peak() == 0.0 && pattern.currents().iter().all(|&y| y == 0.0) {
        return Ok(DecisionVariables {
            gamma: 0.0,
            xi: 0.0,
            theta: 0.0,
        });
    }
    DecisionVariables::evaluate(system, pattern)
}

fn finish(
    system: &ReducedSystem,
    pattern: CurrentPattern,
    method: Method,
    hyperparameters: Hyperparameters,
    mut diagnostics: SolverDiagnostics,
    started: Instant,
) -> Result<SolveOutcome> {
    let metrics = outcome_metrics(system, &pattern)?;
    diagnostics.wall_time_s = started.elapsed().as_secs_f64();
    Ok(SolveOutcome {
        pattern,
        metrics,
        method,
        hyperparameters,
        diagnostics,
    })
}

/// `w = L₁ᵀx₁`, one pairwise dot per contact.
pub fn reciprocity_weights(system: &ReducedSystem) -> Vec<f64> {
    let (l1, x1) = (system.l1(), system.x1());
    let mut scratch = Vec::new();
    (0..l1.ncols())
        .map(|j| pairwise_dot(l1.column(j).iter().copied(), x1.as_slice(), &mut scratch))
        .collect()
}

/// Reciprocity: full amplitude on the contacts with the largest and the
/// smallest entry of `L₁ᵀx₁`, lowest index on ties.
///
/// The amplitude is `min(per_contact, total_budget / 2)`.
pub fn solve_rp(system: &ReducedSystem, limits: CurrentLimits) -> Result<SolveOutcome> {
    let started = Instant::now();
    let k = system.contact_count();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("RP needs at least two contacts, got {k}")));
    }
    let w = reciprocity_weights(system);
    if let Some(bad) = w.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("reciprocity weight {bad}")));
    }
    let mut anode = 0;
    let mut cathode = 0;
    for j in 1..k {
        if w[j] > w[anode] {
            anode = j;
        }
        if w[j] < w[cathode] {
            cathode = j;
        }
    }
    if w[anode] == w[cathode] {
        return Err(Error::DegenerateTarget(
            "L₁ᵀx₁ is constant across contacts; no distinct anode/cathode pair".into(),
        ));
    }
    let amplitude = limits.per_contact_ma.min(limits.total_budget_ma / 2.0);
    let mut y = vec![0.0; k];
    y[anode] = amplitude;
    y[cathode] = -amplitude;
    let pattern = CurrentPattern::new(y, limits)?;
    finish(
        system,
        pattern,
        Method::Rp,
        Hyperparameters::new(),
        SolverDiagnostics::default(),
        started,
    )
}

/// Cached Gram matrices of one reduced system for repeated TLS solves.
#[derive(Debug, Clone)]
pub struct TlsOperator {
    l1tl1: DMatrix<f64>,
    l2tl2: DMatrix<f64>,
    rhs: DVector<f64>,
    spectral_sq: f64,
}

impl TlsOperator {
    pub fn new(system: &ReducedSystem) -> Result<Self> {
        let l1tl1 = system.l1().tr_mul(system.l1());
        let l2tl2 = system.l2().tr_mul(system.l2());
        let rhs = DVector::from_vec(reciprocity_weights(system));
        if rhs.iter().chain(l2tl2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("TLS system data".into()));
        }
        let full = &l1tl1 + &l2tl2;
        let spectral_sq = full.symmetric_eigenvalues().iter().fold(0.0f64, |m, v| m.max(*v));
        Ok(Self {
            l1tl1,
            l2tl2,
            rhs,
            spectral_sq,
        })
    }

    /// `ς = ‖L‖₂` of the stacked reduced matrix.
    pub fn spectral_norm(&self) -> f64 {
        self.spectral_sq.sqrt()
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// `L₁ᵀL₁ + γ²β²L₂ᵀL₂ + γ²ς²I`.
    pub fn system_matrix(&self, gamma: f64, beta: f64) -> DMatrix<f64> {
        let k = self.rhs.len();
        let gb = gamma * gamma * beta * beta;
        let ridge = gamma * gamma * self.spectral_sq;
        let mut a = &self.l1tl1 + &self.l2tl2 * gb;
        for i in 0..k {
            a[(i, i)] += ridge;
        }
        a
    }

    /// Solves the normal equations without normalization.
    pub fn solve_raw(&self, gamma: f64, beta: f64) -> Result<TlsSolution> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("TLS γ must be finite and > 0, got {gamma}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("TLS β must be finite and ≥ 0, got {beta}")));
        }
        let a = self.system_matrix(gamma, beta);
        let b = &self.rhs;
        let mut warnings = Vec::new();
        let eig = a.symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(v.abs())));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > TLS_CONDITION_WARNING {
            warnings.push(format!("TLS system is ill-conditioned (condition estimate {condition:.3e})"));
        }
        let chol = a.clone().cholesky();
        let eig_solver = if chol.is_none() {
            warnings.push("TLS matrix is not numerically positive definite; used a truncated eigensolve".into());
            Some(a.clone().symmetric_eigen())
        } else {
            None
        };
        let solve = |r: &DVector<f64>| -> Option<DVector<f64>> {
            match (&chol, &eig_solver) {
                (Some(ch), _) => Some(ch.solve(r)),
                (None, Some(e)) => {
                    let cut = e.eigenvalues.len() as f64 * f64::EPSILON * hi;
                    let mut y = DVector::zeros(r.len());
                    for (i, &lam) in e.eigenvalues.iter().enumerate() {
                        if lam > cut {
                            let v = e.eigenvectors.column(i);
                            y += v * (v.dot(r) / lam);
                        }
                    }
                    Some(y)
                }
                (None, None) => None,
            }
        };
        let mut y = solve(b).ok_or_else(|| Error::NonFinite("TLS system is singular".into()))?;
        let residual = |y: &DVector<f64>| -> DVector<f64> { b - &a * y };
        let b_norm = b.norm();
        let mut r = residual(&y);
        for _ in 0..TLS_REFINE_STEPS {
            let Some(dy) = solve(&r) else { break };
            let candidate = &y + dy;
            let rc = residual(&candidate);
            if rc.norm() >= r.norm() {
                break;
            }
            y = candidate;
            r = rc;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("TLS solution".into()));
        }
        let relative_residual = if b_norm > 0.0 { r.norm() / b_norm } else { r.norm() };
        Ok(TlsSolution {
            currents: y.as_slice().to_vec(),
            relative_residual,
            condition,
            warnings,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlsSolution {
    pub currents: Vec<f64>,
    pub relative_residual: f64,
    pub condition: f64,
    pub warnings: Vec<String>,
}

/// Zero-mean, then uniformly scaled inside the box and budget.
pub fn normalize_currents(raw: &[f64], limits: CurrentLimits) -> Result<CurrentPattern> {
    let mut y = raw.to_vec();
    let mean = pairwise_sum(&y) / y.len().max(1) as f64;
    y.iter_mut().for_each(|v| *v -= mean);
    let f = limits.shrink_factor(&y);
    if f < 1.0 {
        y.iter_mut().for_each(|v| *v *= f);
    }
    CurrentPattern::new(y, limits)
}

pub fn solve_tls(system: &ReducedSystem, gamma: f64, beta: f64, limits: CurrentLimits) -> Result<SolveOutcome> {
    solve_tls_with(&TlsOperator::new(system)?, system, gamma, beta, limits)
}

/// [`solve_tls`] reusing a prepared operator of the same system.
pub fn solve_tls_with(
    op: &TlsOperator,
    system: &ReducedSystem,
    gamma: f64,
    beta: f64,
    limits: CurrentLimits,
) -> Result<SolveOutcome> {
    let started = Instant::now();
    let raw = op.solve_raw(gamma, beta)?;
    let pattern = normalize_currents(&raw.currents, limits)?;
    let hyper = Hyperparameters::from([
        ("gamma".to_string(), HyperValue::from_linear(gamma)),
        ("beta".to_string(), HyperValue::from_linear(beta)),
    ]);
    let diagnostics = SolverDiagnostics {
        iterations: 1,
        relative_residual: Some(raw.relative_residual),
        condition_estimate: Some(raw.condition),
        raw_currents: Some(raw.currents),
        warnings: raw.warnings,
        ..Default::default()
    };
    finish(system, pattern, Method::Tls, hyper, diagnostics, started)
}

/// The L1L1 program of one system, prepared for many `(α, ε)`.
#[derive(Debug)]
pub struct L1L1Solver {
    limits: CurrentLimits,
    prepared: Option<(L1L1Family, LpSolver)>,
    options: SolverOptions,
}

impl L1L1Solver {
    pub fn new(system: &ReducedSystem, limits: CurrentLimits) -> Result<Self> {
        let prepared = if system.target_peak() == 0.0 {
            None
        } else {
            let family = L1L1Family::new(system, limits)?;
            let solver = LpSolver::new(family.base());
            Some((family, solver))
        };
        Ok(Self {
            limits,
            prepared,
            options: SolverOptions::default(),
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    /// Solves at `(α, ε)`; `system` must be the one this solver was built on.
    pub fn solve(&self, system: &ReducedSystem, alpha: f64, epsilon: f64) -> Result<SolveOutcome> {
        let started = Instant::now();
        let hyper = Hyperparameters::from([
            ("alpha".to_string(), HyperValue::from_linear(alpha)),
            ("epsilon".to_string(), HyperValue::from_linear(epsilon)),
        ]);
        let Some((family, solver)) = &self.prepared else {
            if !(alpha >= 0.0 && alpha.is_finite()) || !(0.0..=1.0).contains(&epsilon) {
                return Err(Error::InvalidArgument(format!(
                    "L1L1 needs finite α ≥ 0 and ε ∈ [0, 1], got ({alpha}, {epsilon})"
                )));
            }
            let pattern = CurrentPattern::zeros(system.contact_count(), self.limits);
            let diagnostics = SolverDiagnostics {
                warnings: vec!["target vector is zero; y = 0 is optimal".into()],
                ..Default::default()
            };
            return finish(system, pattern, Method::L1l1, hyper, diagnostics, started);
        };
        let lp = family.instance(alpha, epsilon)?;
        let sol = solver.solve(&lp, &self.options);
        if sol.status != LpStatus::Optimal {
            return Err(Error::Lp {
                status: sol.status,
                context: format!(
                    "L1L1 at α = {alpha:e}, ε = {epsilon:e} after {} iterations",
                    sol.iterations
                ),
            });
        }
        let pattern = extract_pattern(&lp, &sol)?;
        let diagnostics = SolverDiagnostics {
            iterations: sol.iterations,
            lp_status: Some(sol.status),
            certificate: Some(sol.certificate),
            ..Default::default()
        };
        finish(system, pattern, Method::L1l1, hyper, diagnostics, started)
    }
}

pub fn solve_l1l1(system: &ReducedSystem, alpha: f64, epsilon: f64, limits: CurrentLimits) -> Result<SolveOutcome> {
    L1L1Solver::new(system, limits)?.solve(system, alpha, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{build_l1l1_lp, solve_lp, LinearProgram, SparseMatrix, VariableMap, VariableRole};
    use crate::model::focused_density_raw;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(rng: &mut ChaCha8Rng, n1: usize, m: usize, k: usize) -> ReducedSystem {
        let l1 = DMatrix::from_fn(n1, k, |_, _| rng.random_range(-1.0..1.0));
        let l2 = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
        let x1 = DVector::from_fn(n1, |_, _| rng.random_range(0.5..2.0));
        ReducedSystem::from_parts(l1, l2, x1).unwrap()
    }

    fn toy(w: &[f64]) -> ReducedSystem {
        let k = w.len();
        let l1 = DMatrix::from_row_slice(1, k, w);
        let l2 = DMatrix::from_fn(2, k, |i, j| (i + j) as f64 * 0.1 + 0.05);
        ReducedSystem::from_parts(l1, l2, DVector::from_element(1, 1.0)).unwrap()
    }

    #[test]
    fn rp_picks_extreme_weights() {
        let out = solve_rp(&toy(&[3.0, -1.0, -5.0, 2.0]), CurrentLimits::default()).unwrap();
        assert_eq!(out.pattern.currents(), &[2.0, 0.0, -2.0, 0.0]);
        assert_eq!(out.method, Method::Rp);
    }

    #[test]
    fn rp_sign_symmetry_and_ties() {
        let sys = toy(&[3.0, -1.0, -5.0, 2.0]);
        let neg = ReducedSystem::from_parts(sys.l1().clone(), sys.l2().clone(), -sys.x1()).unwrap();
        let out = solve_rp(&neg, CurrentLimits::default()).unwrap();
        assert_eq!(out.pattern.currents(), &[-2.0, 0.0, 2.0, 0.0]);
        let tied = solve_rp(&toy(&[1.0, 4.0, 4.0, -2.0, -2.0]), CurrentLimits::default()).unwrap();
        assert_eq!(tied.pattern.currents(), &[0.0, 2.0, 0.0, -2.0, 0.0]);
    }

    #[test]
    fn rp_rejects_constant_weights_and_single_contact() {
        assert!(matches!(
            solve_rp(&toy(&[1.5, 1.5, 1.5]), CurrentLimits::default()),
            Err(Error::DegenerateTarget(_))
        ));
        assert!(solve_rp(&toy(&[1.0]), CurrentLimits::default()).is_err());
    }

    #[test]
    fn rp_amplitude_respects_budget() {
        let lim = CurrentLimits::new(2.0, 3.0).unwrap();
        let out = solve_rp(&toy(&[1.0, 0.0, -1.0]), lim).unwrap();
        assert_eq!(out.pattern.currents(), &[1.5, 0.0, -1.5]);
    }

    /// Every signed two-contact configuration at amplitude `a`.
    fn best_pair_gamma(sys: &ReducedSystem, a: f64) -> f64 {
        let k = sys.contact_count();
        let mut best = f64::NEG_INFINITY;
        for p in 0..k {
            for q in 0..k {
                if p != q {
                    let mut y = vec![0.0; k];
                    y[p] = a;
                    y[q] = -a;
                    best = best.max(focused_density_raw(sys, &y).unwrap());
                }
            }
        }
        best
    }

    #[test]
    fn rp_matches_pair_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let k = if trial % 2 == 0 { 8 } else { 40 };
            let sys = random_system(&mut rng, 1 + trial % 3, 5, k);
            let out = solve_rp(&sys, CurrentLimits::default()).unwrap();
            assert_eq!(out.metrics.gamma, best_pair_gamma(&sys, 2.0));
        }
    }

    #[test]
    fn rp_dominates_two_contact_restrictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let sys = random_system(&mut rng, 1, 6, 6);
            let lim = CurrentLimits::default();
            let rp = solve_rp(&sys, lim).unwrap();
            let other = solve_tls(&sys, 1e-2, 1.0, lim).unwrap();
            // strongest positive and negative contact of the other pattern, at full amplitude
            let y = other.pattern.currents();
            let (mut p, mut q) = (0, 0);
            for j in 0..y.len() {
                if y[j] > y[p] {
                    p = j;
                }
                if y[j] < y[q] {
                    q = j;
                }
            }
            if p == q {
                continue;
            }
            let mut pair = vec![0.0; y.len()];
            pair[p] = 2.0;
            pair[q] = -2.0;
            assert!(rp.metrics.gamma >= focused_density_raw(&sys, &pair).unwrap());
        }
    }

    /// Dense normal-equations oracle assembled from the raw blocks.
    fn tls_oracle(sys: &ReducedSystem, gamma: f64, beta: f64) -> DVector<f64> {
        let l = sys.stacked();
        let sv = l.clone().svd(false, false).singular_values;
        let sigma = sv.iter().fold(0.0f64, |m, v| m.max(*v));
        let k = sys.contact_count();
        let mut a = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let mut s = 0.0;
                for r in 0..sys.target_count() {
                    s += sys.l1()[(r, i)] * sys.l1()[(r, j)];
                }
                let mut t = 0.0;
                for r in 0..sys.nuisance_count() {
                    t += sys.l2()[(r, i)] * sys.l2()[(r, j)];
                }
                a[(i, j)] = s + gamma * gamma * beta * beta * t + if i == j { gamma * gamma * sigma * sigma } else { 0.0 };
            }
        }
        let b = DVector::from_fn(k, |i, _| (0..sys.target_count()).map(|r| sys.l1()[(r, i)] * sys.x1()[r]).sum());
        a.lu().solve(&b).unwrap()
    }

    #[test]
    fn tls_matches_dense_oracle_on_six_by_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let sys = random_system(&mut rng, 2, 4, 4);
        let (gamma, beta) = (0.3, 1.7);
        let raw = TlsOperator::new(&sys).unwrap().solve_raw(gamma, beta).unwrap();
        let want = tls_oracle(&sys, gamma, beta);
        let got = DVector::from_vec(raw.currents.clone());
        assert!((got - &want).norm() <= 1e-10 * want.norm());
        assert!(raw.relative_residual <= 1e-12);
    }

    #[test]
    fn tls_square_system_approaches_inverse() {
        let l1 = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, -0.3, 1.0, 0.2, 0.1, 0.0, 1.5]);
        let x1 = DVector::from_vec(vec![1.0, -0.5, 0.25]);
        let sys = ReducedSystem::from_parts(l1.clone(), DMatrix::zeros(2, 3), x1.clone()).unwrap();
        let raw = TlsOperator::new(&sys).unwrap().solve_raw(1e-7, 0.0).unwrap();
        let want = l1.lu().solve(&x1).unwrap();
        let got = DVector::from_vec(raw.currents);
        assert!((got - &want).norm() <= 1e-9 * want.norm());
    }

    #[test]
    fn tls_beta_zero_is_ridge_and_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let sys = random_system(&mut rng, 1, 9, 5);
        let op = TlsOperator::new(&sys).unwrap();
        let a = op.system_matrix(0.2, 0.0);
        let mut ridge = sys.l1().tr_mul(sys.l1());
        for i in 0..5 {
            ridge[(i, i)] += 0.04 * op.spectral_norm().powi(2);
        }
        assert!((a - ridge).abs().max() <= 1e-14);
        let one = solve_tls_with(&op, &sys, 0.2, 0.5, CurrentLimits::default()).unwrap();
        let two = solve_tls_with(&op, &sys, 0.2, 0.5, CurrentLimits::default()).unwrap();
        assert_eq!(one.pattern, two.pattern);
        assert_eq!(one.diagnostics.raw_currents, two.diagnostics.raw_currents);
    }

    #[test]
    fn tls_rejects_bad_parameters() {
        let sys = toy(&[1.0, -1.0, 0.5]);
        for (g, b) in [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1), (f64::NAN, 1.0)] {
            assert!(solve_tls(&sys, g, b, CurrentLimits::default()).is_err());
        }
    }

    #[test]
    fn tls_records_hyperparameters_in_both_units() {
        let sys = toy(&[1.0, -1.0, 0.5]);
        let out = solve_tls(&sys, 0.1, 10.0, CurrentLimits::default()).unwrap();
        let g = out.hyperparameters["gamma"];
        assert!((g.db + 20.0).abs() < 1e-12 && g.linear == 0.1);
        assert!((out.hyperparameters["beta"].db - 20.0).abs() < 1e-12);
    }

    #[test]
    fn l1l1_zero_target_gives_zero_pattern() {
        let sys = ReducedSystem::from_parts(DMatrix::from_element(1, 3, 1.0), DMatrix::from_element(2, 3, 0.5), DVector::zeros(1))
            .unwrap();
        let out = solve_l1l1(&sys, 0.1, 0.5, CurrentLimits::default()).unwrap();
        assert_eq!(out.pattern.currents(), &[0.0; 3]);
        assert_eq!(out.metrics.gamma, 0.0);
        assert!(solve_l1l1(&sys, -1.0, 0.5, CurrentLimits::default()).is_err());
    }

    #[test]
    fn l1l1_huge_alpha_gives_zero() {
        let sys = random_system(&mut ChaCha8Rng::seed_from_u64(15), 1, 5, 4);
        let zeta = sys.l1_operator_norm();
        let x1_l1: f64 = sys.x1().iter().map(|v| v.abs()).sum();
        let out = solve_l1l1(&sys, 1e6 * x1_l1 / zeta, 0.1, CurrentLimits::default()).unwrap();
        assert!(out.pattern.currents().iter().all(|v| v.abs() <= 1e-6));
    }

    /// `min ‖L₁y − x₁‖₁ + αζ‖y‖₁` over the limits, built by hand without the
    /// nuisance block.
    fn target_only_lp(sys: &ReducedSystem, alpha: f64, lim: CurrentLimits) -> LinearProgram {
        let k = sys.contact_count();
        let n1 = sys.target_count();
        let n = 2 * k + n1;
        let zeta = sys.l1_operator_norm();
        let mut trip = Vec::new();
        let mut h = Vec::new();
        let mut row = 0;
        for i in 0..n1 {
            for s in [1.0, -1.0] {
                for j in 0..k {
                    trip.push((row, j, s * sys.l1()[(i, j)]));
                    trip.push((row, k + j, -s * sys.l1()[(i, j)]));
                }
                trip.push((row, 2 * k + i, -1.0));
                h.push(s * sys.x1()[i]);
                row += 1;
            }
        }
        for j in 0..k {
            trip.push((row, j, 1.0));
            trip.push((row, k + j, 1.0));
            h.push(lim.per_contact_ma);
            row += 1;
        }
        for j in 0..2 * k {
            trip.push((row, j, 1.0));
        }
        h.push(lim.total_budget_ma);
        row += 1;
        let eq: Vec<_> = (0..k).map(|j| (0, j, 1.0)).chain((0..k).map(|j| (0, k + j, -1.0))).collect();
        let mut c = vec![alpha * zeta; 2 * k];
        c.extend(std::iter::repeat_n(1.0, n1));
        let mut lower = vec![0.0; 2 * k];
        lower.extend(std::iter::repeat_n(f64::NEG_INFINITY, n1));
        LinearProgram::new(
            c,
            SparseMatrix::from_triplets(1, n, &eq).unwrap(),
            vec![0.0],
            SparseMatrix::from_triplets(row, n, &trip).unwrap(),
            h,
            lower,
            vec![f64::INFINITY; n],
            VariableMap::new(vec![
                (VariableRole::CurrentPositive, 0..k),
                (VariableRole::CurrentNegative, k..2 * k),
                (VariableRole::ResidualEpigraph, 2 * k..n),
            ]),
        )
        .unwrap()
    }

    #[test]
    fn epsilon_one_reduces_to_target_only_fit() {
        // |L₂y| ≤ 0.1·Σ|y| ≤ 0.4 < ν over the feasible set, so every s sits at ε = 1
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..8 {
            let k = 4;
            let l1 = DMatrix::from_fn(1, k, |_, _| rng.random_range(-1.0..1.0));
            let l2 = DMatrix::from_fn(5, k, |_, _| rng.random_range(-0.1..0.1));
            let x1 = DVector::from_element(1, rng.random_range(0.5..2.0));
            let sys = ReducedSystem::from_parts(l1, l2, x1).unwrap();
            let lim = CurrentLimits::default();
            let alpha = 1e-2;
            let full = solve_lp(&build_l1l1_lp(&sys, alpha, 1.0, lim).unwrap(), 1e-10, 1000);
            let reduced = solve_lp(&target_only_lp(&sys, alpha, lim), 1e-10, 1000);
            let m = sys.nuisance_count() as f64;
            let scale = 1.0 + reduced.objective_value.abs();
            assert!((full.objective_value - m - reduced.objective_value).abs() <= 1e-8 * scale);
            let yf: Vec<f64> = (0..k).map(|j| full.values[j] - full.values[k + j]).collect();
            let yr: Vec<f64> = (0..k).map(|j| reduced.values[j] - reduced.values[k + j]).collect();
            let gf = focused_density_raw(&sys, &yf).unwrap();
            let gr = focused_density_raw(&sys, &yr).unwrap();
            assert!((gf - gr).abs() <= 1e-6 * (1.0 + gr.abs()), "{gf} vs {gr}");
        }
    }

    #[test]
    fn l1l1_solver_reuse_matches_one_shot() {
        let sys = random_system(&mut ChaCha8Rng::seed_from_u64(17), 1, 12, 6);
        let lim = CurrentLimits::default();
        let solver = L1L1Solver::new(&sys, lim).unwrap();
        for (a, e) in [(1e-3, 1e-4), (1e-2, 0.2)] {
            let one = solve_l1l1(&sys, a, e, lim).unwrap();
            let two = solver.solve(&sys, a, e).unwrap();
            assert_eq!(one.pattern, two.pattern);
            assert_eq!(one.diagnostics.lp_status, Some(LpStatus::Optimal));
        }
    }

    fn check_limits(y: &[f64], lim: CurrentLimits) {
        let tol = 1e-6;
        assert!(y.iter().all(|v| v.abs() <= lim.per_contact_ma * (1.0 + tol)));
        assert!(y.iter().map(|v| v.abs()).sum::<f64>() <= lim.total_budget_ma * (1.0 + tol));
        assert!(y.iter().sum::<f64>().abs() <= tol * lim.total_budget_ma);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn every_method_respects_limits(
            seed in any::<u64>(),
            k in 3usize..9,
            per in 0.5f64..3.0,
            budget in 1.0f64..6.0,
            log_gamma in -6.0f64..0.0,
            log_alpha in -4.0f64..0.0,
            eps in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = random_system(&mut rng, 1, 6, k);
            let lim = CurrentLimits::new(per, budget).unwrap();
            let outs = [
                solve_rp(&sys, lim).unwrap(),
                solve_tls(&sys, 10f64.powf(log_gamma), 2.0, lim).unwrap(),
                solve_l1l1(&sys, 10f64.powf(log_alpha), eps, lim).unwrap(),
            ];
            for out in &outs {
                check_limits(out.pattern.currents(), lim);
                prop_assert_eq!(out.metrics, DecisionVariables::evaluate(&sys, &out.pattern).unwrap());
            }
        }

        #[test]
        fn normalization_is_uniform_scaling(raw in proptest::collection::vec(-50.0f64..50.0, 2..12)) {
            let lim = CurrentLimits::default();
            let p = normalize_currents(&raw, lim).unwrap();
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            let centred: Vec<f64> = raw.iter().map(|v| v - mean).collect();
            let (i, big) = centred.iter().enumerate().fold((0, 0.0f64), |(bi, b), (i, v)| if v.abs() > b { (i, v.abs()) } else { (bi, b) });
            prop_assume!(big > 1e-9);
            let f = p.currents()[i] / centred[i];
            for (a, b) in p.currents().iter().zip(&centred) {
                prop_assert!((a - f * b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
            check_limits(p.currents(), lim);
        }
    }
}
