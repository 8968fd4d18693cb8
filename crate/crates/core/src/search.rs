//! Lattice search over two hyperparameters in decibels.
//!
//! Every lattice point is solved, then the candidate with the largest field
//! ratio `Θ` among those reaching `Γ ≥ Γ₀` is selected. When no point reaches
//! `Γ₀` the largest `Γ` wins and the result is flagged infeasible. Ties go to
//! the smallest grid coordinates `(i, j)`, so the choice never depends on
//! evaluation order.

use serde::{Deserialize, Serialize};

use crate::leadfield::ReducedSystem;
use crate::model::CurrentLimits;
use crate::numeric::db_to_linear;
use crate::par;
use crate::solvers::{HyperValue, L1L1Solver, Method, SolveOutcome, TlsOperator, solve_tls_with};
use crate::{Error, Result};

/// Default field-strength threshold `Γ₀`, in the units of `Γ`.
pub const DEFAULT_GAMMA0: f64 = 0.8;
/// Default number of lattice points per axis.
pub const DEFAULT_STEPS: usize = 8;

/// Evenly spaced decibel values `min_db..=max_db`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub min_db: f64,
    pub max_db: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(name: &str, min_db: f64, max_db: f64, steps: usize) -> Result<Self> {
        let axis = Self {
            name: name.to_string(),
            min_db,
            max_db,
            steps,
        };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_db.is_finite() && self.max_db.is_finite()) || self.min_db > self.max_db {
            return Err(Error::InvalidArgument(format!(
                "axis {} needs finite min_db ≤ max_db, got [{}, {}]",
                self.name, self.min_db, self.max_db
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument(format!("axis {} needs at least one step", self.name)));
        }
        Ok(())
    }

    /// Value of point `i`; a single step sits at `min_db`.
    pub fn value_db(&self, i: usize) -> f64 {
        if self.steps == 1 || i == 0 {
            self.min_db
        } else if i + 1 == self.steps {
            self.max_db
        } else {
            self.min_db + (self.max_db - self.min_db) * (i as f64 / (self.steps - 1) as f64)
        }
    }

    pub fn values_db(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.value_db(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[value(name = "l1l1_a")]
    L1l1A,
    #[value(name = "l1l1_b")]
    L1l1B,
    #[value(name = "tls_default")]
    TlsDefault,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::L1l1A => "l1l1_a",
            Variant::L1l1B => "l1l1_b",
            Variant::TlsDefault => "tls_default",
        }
    }

    pub fn method(self) -> Method {
        match self {
            Variant::L1l1A | Variant::L1l1B => Method::L1l1,
            Variant::TlsDefault => Method::Tls,
        }
    }
}

/// Hyperparameter names expected on each axis of a method.
pub fn axis_names(method: Method) -> Option<(&'static str, &'static str)> {
    match method {
        Method::L1l1 => Some(("alpha", "epsilon")),
        Method::Tls => Some(("gamma", "beta")),
        Method::Rp => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub method: Method,
    pub param1: Axis,
    pub param2: Axis,
}

impl SearchSpace {
    pub fn new(method: Method, param1: Axis, param2: Axis) -> Result<Self> {
        let space = Self { method, param1, param2 };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        let Some((n1, n2)) = axis_names(self.method) else {
            return Err(Error::InvalidArgument(format!(
                "method {} has no hyperparameters to search",
                self.method.as_str()
            )));
        };
        if self.param1.name != n1 || self.param2.name != n2 {
            return Err(Error::InvalidArgument(format!(
                "{} axes must be ({n1}, {n2}), got ({}, {})",
                self.method.as_str(),
                self.param1.name,
                self.param2.name
            )));
        }
        self.param1.validate()?;
        self.param2.validate()?;
        if self.method == Method::L1l1 && self.param2.max_db > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must stay ≤ 0 dB, got max {}",
                self.param2.max_db
            )));
        }
        Ok(())
    }

    pub fn preset(variant: Variant) -> Self {
        Self::preset_with_steps(variant, DEFAULT_STEPS).expect("presets are valid")
    }

    pub fn preset_with_steps(variant: Variant, steps: usize) -> Result<Self> {
        let (method, a, b) = match variant {
            Variant::L1l1A => (Method::L1l1, ("alpha", -100.0, -30.0), ("epsilon", -160.0, 0.0)),
            Variant::L1l1B => (Method::L1l1, ("alpha", -100.0, -30.0), ("epsilon", -10.0, 0.0)),
            Variant::TlsDefault => (Method::Tls, ("gamma", -200.0, -110.0), ("beta", -50.0, 40.0)),
        };
        Self::new(
            method,
            Axis::new(a.0, a.1, a.2, steps)?,
            Axis::new(b.0, b.1, b.2, steps)?,
        )
    }

    pub fn point_count(&self) -> usize {
        self.param1.steps * self.param2.steps
    }

    /// Grid coordinates in row-major order.
    pub fn coordinates(&self) -> Vec<(usize, usize)> {
        (0..self.param1.steps)
            .flat_map(|i| (0..self.param2.steps).map(move |j| (i, j)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub outcome: SolveOutcome,
    pub grid_coordinates: (usize, usize),
    pub feasible: bool,
}

/// A lattice point whose solve failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub grid_coordinates: (usize, usize),
    pub param1_db: f64,
    pub param2_db: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: CandidateSolution,
    /// Successful candidates in row-major grid order.
    pub all: Vec<CandidateSolution>,
    pub failures: Vec<PointFailure>,
}

/// Index of the selected candidate: largest `Θ` among feasible ones, else
/// largest `Γ`; smallest coordinates on ties.
pub fn select_best(candidates: &[CandidateSolution]) -> Option<usize> {
    let any_feasible = candidates.iter().any(|c| c.feasible);
    let score = |c: &CandidateSolution| {
        if any_feasible {
            c.outcome.metrics.theta
        } else {
            c.outcome.metrics.gamma
        }
    };
    let mut best: Option<usize> = None;
    for (idx, c) in candidates.iter().enumerate() {
        if any_feasible && !c.feasible {
            continue;
        }
        best = match best {
            None => Some(idx),
            Some(b) => {
                let cb = &candidates[b];
                let ord = score(c)
                    .total_cmp(&score(cb))
                    .then_with(|| cb.grid_coordinates.cmp(&c.grid_coordinates));
                Some(if ord.is_gt() { idx } else { b })
            }
        };
    }
    best
}

enum Prepared {
    L1l1(L1L1Solver),
    Tls(TlsOperator),
}

/// Searches `space` on `system`, evaluating lattice points in parallel when
/// the `parallel` feature is enabled.
pub fn lattice_search(
    system: &ReducedSystem,
    space: &SearchSpace,
    gamma0: f64,
    limits: CurrentLimits,
) -> Result<SearchResult> {
    search_impl(system, space, gamma0, limits, true)
}

/// [`lattice_search`] on the calling thread only.
pub fn lattice_search_sequential(
    system: &ReducedSystem,
    space: &SearchSpace,
    gamma0: f64,
    limits: CurrentLimits,
) -> Result<SearchResult> {
    search_impl(system, space, gamma0, limits, false)
}

fn search_impl(
    system: &ReducedSystem,
    space: &SearchSpace,
    gamma0: f64,
    limits: CurrentLimits,
    parallel: bool,
) -> Result<SearchResult> {
    space.validate()?;
    if !(gamma0 > 0.0 && gamma0.is_finite()) {
        return Err(Error::InvalidArgument(format!("Γ₀ must be finite and > 0, got {gamma0}")));
    }
    let prepared = match space.method {
        Method::L1l1 => Prepared::L1l1(L1L1Solver::new(system, limits)?),
        Method::Tls => Prepared::Tls(TlsOperator::new(system)?),
        Method::Rp => unreachable!("validated above"),
    };
    let evaluate = |&(i, j): &(usize, usize)| -> std::result::Result<CandidateSolution, PointFailure> {
        let (d1, d2) = (space.param1.value_db(i), space.param2.value_db(j));
        let (v1, v2) = (db_to_linear(d1), db_to_linear(d2));
        let solved = match &prepared {
            Prepared::L1l1(s) => s.solve(system, v1, v2),
            Prepared::Tls(op) => solve_tls_with(op, system, v1, v2, limits),
        };
        match solved {
            Ok(mut outcome) => {
                outcome.hyperparameters.insert(space.param1.name.clone(), HyperValue::from_db(d1));
                outcome.hyperparameters.insert(space.param2.name.clone(), HyperValue::from_db(d2));
                let feasible = outcome.metrics.gamma >= gamma0;
                Ok(CandidateSolution {
                    outcome,
                    grid_coordinates: (i, j),
                    feasible,
                })
            }
            Err(e) => Err(PointFailure {
                grid_coordinates: (i, j),
                param1_db: d1,
                param2_db: d2,
                message: e.to_string(),
            }),
        }
    };
    let coords = space.coordinates();
    let results = if parallel {
        par::map(&coords, evaluate)
    } else {
        par::map_sequential(&coords, evaluate)
    };
    let mut all = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(c) => all.push(c),
            Err(f) => failures.push(f),
        }
    }
    let Some(b) = select_best(&all) else {
        return Err(Error::AllCandidatesFailed(
            failures
                .iter()
                .map(|f| {
                    format!(
                        "({}, {}) at ({} dB, {} dB): {}",
                        f.grid_coordinates.0, f.grid_coordinates.1, f.param1_db, f.param2_db, f.message
                    )
                })
                .collect(),
        ));
    };
    Ok(SearchResult {
        best: all[b].clone(),
        all,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DecisionVariables;
    use crate::solvers::{solve_l1l1, solve_tls};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(seed: u64, k: usize, m: usize) -> ReducedSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l1 = DMatrix::from_fn(1, k, |_, _| rng.random_range(-1.0..1.0));
        let l2 = DMatrix::from_fn(m, k, |_, _| rng.random_range(-0.5..0.5));
        ReducedSystem::from_parts(l1, l2, DVector::from_element(1, 1.0)).unwrap()
    }

    fn l1l1_space(s1: usize, s2: usize) -> SearchSpace {
        SearchSpace::new(
            Method::L1l1,
            Axis::new("alpha", -60.0, -20.0, s1).unwrap(),
            Axis::new("epsilon", -40.0, 0.0, s2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn presets_carry_the_published_ranges() {
        let a = SearchSpace::preset(Variant::L1l1A);
        assert_eq!((a.param1.min_db, a.param1.max_db), (-100.0, -30.0));
        assert_eq!((a.param2.min_db, a.param2.max_db), (-160.0, 0.0));
        let b = SearchSpace::preset(Variant::L1l1B);
        assert_eq!((b.param2.min_db, b.param2.max_db), (-10.0, 0.0));
        let t = SearchSpace::preset(Variant::TlsDefault);
        assert_eq!(t.method, Method::Tls);
        assert_eq!((t.param1.min_db, t.param1.max_db), (-200.0, -110.0));
        assert_eq!((t.param2.min_db, t.param2.max_db), (-50.0, 40.0));
        assert_eq!(a.point_count(), 64);
    }

    #[test]
    fn axis_values_and_validation() {
        let ax = Axis::new("alpha", -100.0, -30.0, 8).unwrap();
        let v = ax.values_db();
        assert_eq!(v[0], -100.0);
        assert_eq!(v[7], -30.0);
        assert!((v[1] + 90.0).abs() < 1e-12);
        assert_eq!(Axis::new("alpha", -10.0, 0.0, 1).unwrap().values_db(), vec![-10.0]);
        assert!(Axis::new("alpha", 0.0, -1.0, 3).is_err());
        assert!(Axis::new("alpha", 0.0, 1.0, 0).is_err());
        let bad = SearchSpace::new(
            Method::L1l1,
            Axis::new("gamma", -1.0, 0.0, 2).unwrap(),
            Axis::new("epsilon", -1.0, 0.0, 2).unwrap(),
        );
        assert!(bad.is_err());
        let rp = SearchSpace::new(
            Method::Rp,
            Axis::new("alpha", -1.0, 0.0, 2).unwrap(),
            Axis::new("epsilon", -1.0, 0.0, 2).unwrap(),
        );
        assert!(rp.is_err());
    }

    #[test]
    fn singleton_lattice_equals_direct_call() {
        let sys = toy(1, 5, 8);
        let lim = CurrentLimits::default();
        let space = l1l1_space(1, 1);
        let res = lattice_search(&sys, &space, 0.01, lim).unwrap();
        let direct = solve_l1l1(&sys, db_to_linear(-60.0), db_to_linear(-40.0), lim).unwrap();
        assert_eq!(res.all.len(), 1);
        assert_eq!(res.best.outcome.pattern, direct.pattern);
        assert_eq!(res.best.outcome.metrics, direct.metrics);
        assert_eq!(res.best.outcome.hyperparameters["alpha"].db, -60.0);
    }

    #[test]
    fn unreachable_threshold_falls_back_to_largest_gamma() {
        let sys = toy(2, 5, 8);
        let res = lattice_search(&sys, &l1l1_space(3, 3), 1e9, CurrentLimits::default()).unwrap();
        assert!(!res.best.feasible);
        assert!(res.all.iter().all(|c| !c.feasible));
        let top = res.all.iter().map(|c| c.outcome.metrics.gamma).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(res.best.outcome.metrics.gamma, top);
    }

    #[test]
    fn four_by_four_matches_exhaustive_rescan() {
        let sys = toy(3, 6, 10);
        let lim = CurrentLimits::default();
        let space = l1l1_space(4, 4);
        let gamma0 = 0.05;
        let res = lattice_search(&sys, &space, gamma0, lim).unwrap();
        assert_eq!(res.all.len(), 16);
        // independent rescan: direct solver calls and a plain scan
        let mut best: Option<((usize, usize), f64, bool)> = None;
        let mut rows = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                let a = 10f64.powf(space.param1.values_db()[i] / 20.0);
                let e = 10f64.powf(space.param2.values_db()[j] / 20.0);
                let out = solve_l1l1(&sys, a, e, lim).unwrap();
                rows.push(((i, j), out.metrics.gamma, out.metrics.theta));
            }
        }
        let any = rows.iter().any(|r| r.1 >= gamma0);
        for &(ij, g, t) in &rows {
            if any && g < gamma0 {
                continue;
            }
            let s = if any { t } else { g };
            if best.is_none_or(|(_, bs, _)| s > bs) {
                best = Some((ij, s, any));
            }
        }
        let (ij, _, feasible) = best.unwrap();
        assert_eq!(res.best.grid_coordinates, ij);
        assert_eq!(res.best.feasible, feasible);
    }

    #[test]
    fn tls_search_runs_and_records_decibels() {
        let sys = toy(4, 5, 8);
        let space = SearchSpace::preset_with_steps(Variant::TlsDefault, 3).unwrap();
        let res = lattice_search(&sys, &space, 0.01, CurrentLimits::default()).unwrap();
        assert_eq!(res.all.len(), 9, "{:?}", res.failures);
        let (i, j) = res.best.grid_coordinates;
        assert_eq!(res.best.outcome.hyperparameters["gamma"].db, space.param1.value_db(i));
        assert_eq!(res.best.outcome.hyperparameters["beta"].db, space.param2.value_db(j));
        let direct = solve_tls(&sys, db_to_linear(space.param1.value_db(i)), db_to_linear(space.param2.value_db(j)), CurrentLimits::default()).unwrap();
        assert_eq!(direct.pattern, res.best.outcome.pattern);
    }

    #[test]
    fn all_failing_points_are_aggregated() {
        // zero nuisance block: metrics cannot be evaluated
        let sys = ReducedSystem::from_parts(
            DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.5]),
            DMatrix::zeros(0, 3),
            DVector::from_element(1, 1.0),
        );
        let Ok(sys) = sys else { return };
        let err = lattice_search(&sys, &l1l1_space(2, 2), 0.1, CurrentLimits::default()).unwrap_err();
        match err {
            Error::AllCandidatesFailed(msgs) => assert_eq!(msgs.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn selection_breaks_ties_lexicographically() {
        let sys = toy(5, 4, 6);
        let out = solve_l1l1(&sys, 0.01, 0.1, CurrentLimits::default()).unwrap();
        let mk = |ij, feasible| CandidateSolution {
            outcome: out.clone(),
            grid_coordinates: ij,
            feasible,
        };
        let cands = vec![mk((1, 0), true), mk((0, 2), true), mk((0, 1), false), mk((2, 2), true)];
        assert_eq!(select_best(&cands), Some(1));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let sys = toy(6, 6, 9);
        let space = l1l1_space(3, 3);
        let a = lattice_search(&sys, &space, 0.05, CurrentLimits::default()).unwrap();
        let b = lattice_search_sequential(&sys, &space, 0.05, CurrentLimits::default()).unwrap();
        let strip = |r: &SearchResult| -> Vec<(DecisionVariables, (usize, usize))> {
            r.all.iter().map(|c| (c.outcome.metrics, c.grid_coordinates)).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.best.grid_coordinates, b.best.grid_coordinates);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn refinement_never_lowers_best_theta(seed in any::<u64>(), gamma0 in 0.01f64..0.3) {
            let sys = toy(seed, 5, 7);
            let lim = CurrentLimits::default();
            let coarse = lattice_search(&sys, &l1l1_space(2, 2), gamma0, lim).unwrap();
            let fine = lattice_search(&sys, &l1l1_space(3, 3), gamma0, lim).unwrap();
            if coarse.best.feasible {
                prop_assert!(fine.best.feasible);
                prop_assert!(fine.best.outcome.metrics.theta >= coarse.best.outcome.metrics.theta);
            }
        }

        #[test]
        fn search_is_deterministic_and_flag_consistent(seed in any::<u64>(), gamma0 in 0.01f64..2.0) {
            let sys = toy(seed, 4, 6);
            let lim = CurrentLimits::default();
            let one = lattice_search(&sys, &l1l1_space(2, 3), gamma0, lim).unwrap();
            let two = lattice_search(&sys, &l1l1_space(2, 3), gamma0, lim).unwrap();
            prop_assert_eq!(one.best.grid_coordinates, two.best.grid_coordinates);
            let again = DecisionVariables::evaluate(&sys, &one.best.outcome.pattern).unwrap();
            prop_assert_eq!(one.best.feasible, again.gamma >= gamma0);
            for c in &one.all {
                prop_assert_eq!(c.feasible, c.outcome.metrics.gamma >= gamma0);
            }
        }
    }
}
