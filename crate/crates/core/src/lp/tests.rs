use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn generic(
    c: Vec<f64>,
    ineq: &[(usize, usize, f64)],
    h: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
) -> LinearProgram {
    let n = c.len();
    LinearProgram::new(
        c,
        SparseMatrix::zeros(0, n),
        vec![],
        SparseMatrix::from_triplets(h.len(), n, ineq).unwrap(),
        h,
        lower,
        upper,
        VariableMap::generic(n),
    )
    .unwrap()
}

fn solve(lp: &LinearProgram) -> LpSolution {
    solve_lp(lp, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)
}

#[test]
fn min_x_subject_to_x_at_least_one() {
    let lp = generic(vec![1.0], &[(0, 0, -1.0)], vec![-1.0], vec![f64::NEG_INFINITY], vec![f64::INFINITY]);
    let sol = solve(&lp);
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.values[0] - 1.0).abs() < 1e-7);
    assert!(sol.certificate.within(DEFAULT_TOLERANCE));
}

#[test]
fn contradictory_bounds_are_infeasible() {
    // x ≤ 0 and x ≥ 1
    let lp = generic(
        vec![1.0],
        &[(0, 0, 1.0), (1, 0, -1.0)],
        vec![0.0, -1.0],
        vec![f64::NEG_INFINITY],
        vec![f64::INFINITY],
    );
    assert_eq!(solve(&lp).status, LpStatus::Infeasible);
}

#[test]
fn unbounded_ray_is_detected() {
    let lp = generic(vec![-1.0, 0.0], &[(0, 1, 1.0)], vec![1.0], vec![0.0, 0.0], vec![f64::INFINITY; 2]);
    assert_eq!(solve(&lp).status, LpStatus::Unbounded);
}

#[test]
fn iteration_cap_is_reported() {
    let lp = generic(vec![1.0], &[(0, 0, -1.0)], vec![-1.0], vec![f64::NEG_INFINITY], vec![f64::INFINITY]);
    assert_eq!(solve_lp(&lp, 1e-8, 1).status, LpStatus::IterationLimit);
}

#[test]
fn malformed_programs_are_rejected() {
    let a = SparseMatrix::zeros(0, 2);
    let g = SparseMatrix::zeros(0, 2);
    let bad_bounds = LinearProgram::new(
        vec![1.0, 1.0],
        a.clone(),
        vec![],
        g.clone(),
        vec![],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        VariableMap::generic(2),
    );
    assert!(bad_bounds.is_err());
    let bad_map = LinearProgram::new(
        vec![1.0, 1.0],
        a,
        vec![],
        g,
        vec![],
        vec![0.0; 2],
        vec![1.0; 2],
        VariableMap::generic(3),
    );
    assert!(bad_map.is_err());
}

/// Minimum over all basic feasible solutions of `min cᵀx, Ax = b, Gx ≤ h`.
fn vertex_oracle(c: &[f64], a: &DMatrix<f64>, b: &[f64], g: &DMatrix<f64>, h: &[f64]) -> Option<f64> {
    let n = c.len();
    let p = a.nrows();
    let m = g.nrows();
    let need = n - p;
    let mut best: Option<f64> = None;
    let mut pick: Vec<usize> = (0..need).collect();
    loop {
        let mut mat = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for i in 0..p {
            mat.row_mut(i).copy_from(&a.row(i));
            rhs[i] = b[i];
        }
        for (k, &r) in pick.iter().enumerate() {
            mat.row_mut(p + k).copy_from(&g.row(r));
            rhs[p + k] = h[r];
        }
        if let Some(x) = mat.clone().lu().solve(&rhs) {
            let residual = (&mat * &x - &rhs).amax();
            let feasible = residual < 1e-9
                && (0..m).all(|r| (g.row(r) * &x)[0] <= h[r] + 1e-9)
                && (0..p).all(|r| ((a.row(r) * &x)[0] - b[r]).abs() <= 1e-9);
            if feasible {
                let v: f64 = c.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(v, |bv: f64| bv.min(v)));
            }
        }
        // next combination
        let mut i = need;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < m - need + i {
                pick[i] += 1;
                for k in i + 1..need {
                    pick[k] = pick[k - 1] + 1;
                }
                break;
            }
        }
    }
}

#[test]
fn random_small_programs_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..40 {
        let n = rng.random_range(2..=6);
        let p = rng.random_range(0..=1.min(n - 1));
        let mi = rng.random_range(1..=6);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ad = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..p).map(|i| (0..n).map(|j| ad[(i, j)] * x0[j]).sum()).collect();
        let gd = DMatrix::from_fn(mi, n, |_, _| rng.random_range(-1.0..1.0));
        let h: Vec<f64> = (0..mi)
            .map(|i| (0..n).map(|j| gd[(i, j)] * x0[j]).sum::<f64>() + rng.random_range(0.0..1.0))
            .collect();
        let lower = vec![-3.0; n];
        let upper = vec![3.0; n];
        let lp = LinearProgram::new(
            c.clone(),
            SparseMatrix::from_dense(&ad),
            b.clone(),
            SparseMatrix::from_dense(&gd),
            h.clone(),
            lower,
            upper,
            VariableMap::generic(n),
        )
        .unwrap();
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal, "case {case}");

        // oracle over the same constraints with bounds as explicit rows
        let mut g_full = DMatrix::zeros(mi + 2 * n, n);
        g_full.rows_mut(0, mi).copy_from(&gd);
        let mut h_full = h.clone();
        for j in 0..n {
            g_full[(mi + 2 * j, j)] = 1.0;
            g_full[(mi + 2 * j + 1, j)] = -1.0;
            h_full.push(3.0);
            h_full.push(3.0);
        }
        let oracle = vertex_oracle(&c, &ad, &b, &g_full, &h_full).expect("feasible by construction");
        assert!(
            (sol.objective_value - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()),
            "case {case}: ipm {} vs oracle {oracle}",
            sol.objective_value
        );
    }
}

#[test]
fn solver_is_deterministic() {
    let sys = random_system(&mut ChaCha8Rng::seed_from_u64(3), 5, 30);
    let lp = build_l1l1_lp(&sys, 0.01, 0.05, CurrentLimits::default()).unwrap();
    let a = solve(&lp);
    let b = solve(&lp);
    assert_eq!(a, b);
}

fn random_system(rng: &mut ChaCha8Rng, k: usize, m: usize) -> ReducedSystem {
    let l1 = DMatrix::from_fn(1, k, |_, _| rng.random_range(-1.0..1.0));
    let l2 = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
    ReducedSystem::from_parts(l1, l2, DVector::from_element(1, rng.random_range(0.5..2.0))).unwrap()
}

fn currents(lp: &LinearProgram, sol: &LpSolution) -> Vec<f64> {
    let pos = lp.variable_map().range(VariableRole::CurrentPositive).unwrap();
    let neg = lp.variable_map().range(VariableRole::CurrentNegative).unwrap();
    pos.zip(neg).map(|(p, n)| sol.values[p] - sol.values[n]).collect()
}

#[test]
fn l1l1_bookkeeping() {
    let sys = random_system(&mut ChaCha8Rng::seed_from_u64(4), 4, 7);
    let lp = build_l1l1_lp(&sys, 0.1, 0.0, CurrentLimits::default()).unwrap();
    assert_eq!(lp.variable_count(), 2 * 4 + 1 + 7);
    assert_eq!(lp.eq_matrix().nrows(), 1);
    assert!(lp.variable_map().partitions(lp.variable_count()));
    let s = lp.variable_map().range(VariableRole::NuisanceEpigraph).unwrap();
    assert!(s.clone().all(|j| lp.lower()[j] == 0.0));
    assert_eq!(s.len(), 7);
}

#[test]
fn l1l1_rejects_bad_parameters() {
    let sys = random_system(&mut ChaCha8Rng::seed_from_u64(5), 3, 2);
    let lim = CurrentLimits::default();
    assert!(build_l1l1_lp(&sys, -1.0, 0.1, lim).is_err());
    assert!(build_l1l1_lp(&sys, 0.1, 1.5, lim).is_err());
    let zero = ReducedSystem::from_parts(sys.l1().clone(), sys.l2().clone(), DVector::zeros(1)).unwrap();
    assert!(matches!(build_l1l1_lp(&zero, 0.1, 0.1, lim), Err(Error::DegenerateTarget(_))));
}

#[test]
fn epigraph_objective_equals_nonsmooth_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..30 {
        let sys = random_system(&mut rng, 5, 9);
        let alpha = rng.random_range(0.0..0.5);
        let eps = rng.random_range(0.0..1.0);
        let lp = build_l1l1_lp(&sys, alpha, eps, CurrentLimits::default()).unwrap();
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = l1l1_objective(&sys, &y, alpha, eps).unwrap();
        let via_lp = lp.objective_value(&l1l1_point(&sys, &y, eps).unwrap());
        assert!((direct - via_lp).abs() <= 1e-10 * direct.abs());
    }
}

#[test]
fn zero_epsilon_is_plain_l1_fitting() {
    let sys = random_system(&mut ChaCha8Rng::seed_from_u64(7), 3, 4);
    let y = [0.3, -0.5, 0.2];
    let nu = sys.target_peak();
    let fit = (0..3).map(|j| sys.l1()[(0, j)] * y[j]).sum::<f64>() - sys.x1()[0];
    let nuisance: f64 = (0..4)
        .map(|m| ((0..3).map(|j| sys.l2()[(m, j)] * y[j]).sum::<f64>() / nu).abs())
        .sum();
    let got = l1l1_objective(&sys, &y, 0.0, 0.0).unwrap();
    assert!((got - (fit.abs() + nuisance)).abs() < 1e-12);
}

/// Minimum of the nonsmooth objective over a K = 3 zero-sum grid.
fn grid_minimum(sys: &ReducedSystem, alpha: f64, eps: f64, lim: CurrentLimits, step: f64) -> f64 {
    let n = (2.0 * lim.per_contact_ma / step).round() as i64;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let a = -lim.per_contact_ma + i as f64 * step;
            let b = -lim.per_contact_ma + j as f64 * step;
            let y = [a, b, -a - b];
            if y.iter().any(|v| v.abs() > lim.per_contact_ma + 1e-12)
                || y.iter().map(|v| v.abs()).sum::<f64>() > lim.total_budget_ma + 1e-12
            {
                continue;
            }
            best = best.min(l1l1_objective(sys, &y, alpha, eps).unwrap());
        }
    }
    best
}

#[test]
fn tiny_instance_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lim = CurrentLimits::default();
    for _ in 0..5 {
        let sys = random_system(&mut rng, 3, 2);
        let alpha = rng.random_range(0.0..0.2);
        let eps = rng.random_range(0.0..0.5);
        let lp = build_l1l1_lp(&sys, alpha, eps, lim).unwrap();
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        let step = 0.01;
        let grid = grid_minimum(&sys, alpha, eps, lim, step);
        let sc = l1l1_scaling(&sys).unwrap();
        let lip = (0..3)
            .map(|j| {
                sys.l1()[(0, j)].abs() + (0..2).map(|m| sys.l2()[(m, j)].abs()).sum::<f64>() / sc.nu
                    + alpha * sc.zeta
            })
            .fold(0.0, f64::max);
        assert!(sol.objective_value <= grid + 1e-8);
        assert!(grid <= sol.objective_value + lip * 4.0 * step, "grid {grid} vs lp {}", sol.objective_value);
    }
}

#[test]
fn pattern_extraction() {
    let sys = random_system(&mut ChaCha8Rng::seed_from_u64(9), 6, 20);
    let lp = build_l1l1_lp(&sys, 0.02, 0.1, CurrentLimits::default()).unwrap();
    let sol = solve(&lp);
    let pat = extract_pattern(&lp, &sol).unwrap();
    let sum: f64 = pat.currents().iter().sum();
    assert!(sum.abs() <= 1e-15 * pat.l1_norm().max(1.0));
    let raw = currents(&lp, &sol);
    for (a, b) in raw.iter().zip(pat.currents()) {
        assert!((a - b).abs() < 1e-7);
    }
    // y⁺ₗ·y⁻ₗ vanishes at the optimum
    for l in 0..6 {
        assert!(sol.values[l] * sol.values[6 + l] <= 1e-8, "contact {l}");
    }
    let failed = LpSolution {
        status: LpStatus::Infeasible,
        ..sol
    };
    assert!(matches!(extract_pattern(&lp, &failed), Err(Error::Lp { .. })));
}

#[test]
fn hand_built_bookkeeping_round_trip() {
    let map = VariableMap::new(vec![
        (VariableRole::CurrentPositive, 0..2),
        (VariableRole::CurrentNegative, 2..4),
    ]);
    let lp = LinearProgram::new(
        vec![0.0; 4],
        SparseMatrix::zeros(0, 4),
        vec![],
        SparseMatrix::zeros(0, 4),
        vec![],
        vec![0.0; 4],
        vec![f64::INFINITY; 4],
        map,
    )
    .unwrap()
    .with_current_limits(CurrentLimits::default());
    let sol = LpSolution {
        values: vec![1.5, 0.0, 0.0, 1.5],
        objective_value: 0.0,
        status: LpStatus::Optimal,
        certificate: Certificate {
            primal_residual: 0.0,
            dual_residual: 0.0,
            gap: 0.0,
        },
        iterations: 0,
    };
    assert_eq!(extract_pattern(&lp, &sol).unwrap().currents(), &[1.5, -1.5]);
}

#[test]
fn regularization_path_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..3 {
        let sys = random_system(&mut rng, 5, 25);
        let mut last_norm = f64::INFINITY;
        for db in [-60.0, -40.0, -30.0, -20.0, -10.0, 0.0] {
            let alpha = crate::numeric::db_to_linear(db);
            let lp = build_l1l1_lp(&sys, alpha, 0.05, CurrentLimits::default()).unwrap();
            let sol = solve(&lp);
            let norm: f64 = currents(&lp, &sol).iter().map(|v| v.abs()).sum();
            assert!(norm <= last_norm + 1e-6, "‖y‖₁ rose to {norm} from {last_norm} at {db} dB");
            last_norm = norm;
        }
        let mut last_obj = f64::NEG_INFINITY;
        for eps in [0.0, 0.01, 0.1, 0.3, 0.7, 1.0] {
            let lp = build_l1l1_lp(&sys, 0.01, eps, CurrentLimits::default()).unwrap();
            let obj = solve(&lp).objective_value;
            assert!(obj >= last_obj - 1e-8 * obj.abs(), "objective fell at ε = {eps}");
            last_obj = obj;
        }
    }
}

#[test]
fn huge_alpha_gives_zero_pattern() {
    let sys = random_system(&mut ChaCha8Rng::seed_from_u64(11), 4, 10);
    let sc = l1l1_scaling(&sys).unwrap();
    let alpha = 1e6 * sys.x1()[0].abs() / sc.zeta;
    let lp = build_l1l1_lp(&sys, alpha, 0.1, CurrentLimits::default()).unwrap();
    let sol = solve(&lp);
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!(currents(&lp, &sol).iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn lp_format_fixture() {
    let lp = LinearProgram::new(
        vec![1.0, -2.5],
        SparseMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap(),
        vec![1.0],
        SparseMatrix::from_triplets(1, 2, &[(0, 0, -1.0), (0, 1, 0.5)]).unwrap(),
        vec![2.0],
        vec![0.0, f64::NEG_INFINITY],
        vec![f64::INFINITY, f64::INFINITY],
        VariableMap::generic(2),
    )
    .unwrap();
    let mut out = Vec::new();
    write_lp_format(&lp, &mut out).unwrap();
    let expect = "\\ exported by leadsteer\n\
Minimize\n obj: 1.0 x0 - 2.5 x1\n\
Subject To\n e0: 1.0 x0 + 1.0 x1 = 1.0\n c0: - 1.0 x0 + 0.5 x1 <= 2.0\n\
Bounds\n x0 >= 0.0\n x1 free\n\
End\n";
    assert_eq!(String::from_utf8(out).unwrap(), expect);
}

#[test]
fn shared_solver_matches_fresh_solves() {
    let sys = random_system(&mut ChaCha8Rng::seed_from_u64(21), 6, 30);
    let lim = CurrentLimits::default();
    let family = L1L1Family::new(&sys, lim).unwrap();
    let solver = LpSolver::new(family.base());
    for (alpha, eps) in [(1e-4, 0.0), (1e-2, 0.3), (0.0, 1.0)] {
        let lp = family.instance(alpha, eps).unwrap();
        assert!(solver.is_compatible(&lp));
        let shared = solver.solve(&lp, &SolverOptions::default());
        let fresh = solve(&build_l1l1_lp(&sys, alpha, eps, lim).unwrap());
        assert_eq!(shared.status, LpStatus::Optimal);
        assert!((shared.objective_value - fresh.objective_value).abs() <= 1e-7 * (1.0 + fresh.objective_value.abs()));
    }
    let other = build_l1l1_lp(&sys, 0.1, 0.1, lim).unwrap();
    assert!(!solver.is_compatible(&other));
    assert_eq!(solver.solve(&other, &SolverOptions::default()).status, LpStatus::Optimal);
}
