//! Homogeneous self-dual interior-point method (Mehrotra predictor-corrector).
//!
//! Works on `min cᵀx  s.t.  Ax = b,  Gx + s = h,  s ≥ 0`, with variable
//! bounds folded into `G`. Rows are scaled to unit infinity norm and the cost
//! to unit infinity norm before iterating; the certificate is always
//! expressed in terms of the unscaled data.

use std::sync::Arc;

use super::kkt::{KktFactor, KktStructure};
use super::sparse::{SparseBuilder, SparseMatrix};
use super::{Certificate, LinearProgram, LpSolution, LpStatus, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

const STEP_FRACTION: f64 = 0.99;
const STALL_LIMIT: usize = 40;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest `α ≤ 1` keeping `v + α·dv ≥ 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

fn row_scale(m: &SparseMatrix) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| {
            let r = m.row_inf_norm(i);
            if r > 0.0 {
                1.0 / r
            } else {
                1.0
            }
        })
        .collect()
}

/// Which side of variable `j` a bound row encodes.
#[derive(Debug, Clone, Copy, PartialEq)]
enum BoundRow {
    Lower(usize),
    Upper(usize),
}

/// Constraint data of an LP, scaled and analysed once.
///
/// Programs that share the same constraint matrices (see
/// [`LinearProgram::with_objective_and_bounds`]) and the same pattern of
/// finite bounds reuse this preparation; only the objective, right-hand
/// sides and bound values may differ between solves.
#[derive(Debug)]
pub struct LpSolver {
    eq: Arc<SparseMatrix>,
    ineq: Arc<SparseMatrix>,
    bound_rows: Vec<BoundRow>,
    g: SparseMatrix,
    a: SparseMatrix,
    rg: Vec<f64>,
    ra: Vec<f64>,
    st: KktStructure,
}

fn bound_rows(lp: &LinearProgram) -> Vec<BoundRow> {
    let mut rows = Vec::new();
    for j in 0..lp.variable_count() {
        if lp.lower()[j].is_finite() {
            rows.push(BoundRow::Lower(j));
        }
        if lp.upper()[j].is_finite() {
            rows.push(BoundRow::Upper(j));
        }
    }
    rows
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

fn failure(n: usize, status: LpStatus, iterations: usize, certificate: Certificate) -> LpSolution {
    LpSolution {
        values: vec![f64::NAN; n],
        objective_value: f64::NAN,
        status,
        certificate,
        iterations,
    }
}

impl LpSolver {
    pub fn new(lp: &LinearProgram) -> Self {
        let n = lp.variable_count();
        let rows = bound_rows(lp);
        let mut bounds = SparseBuilder::new(n);
        for r in &rows {
            match *r {
                BoundRow::Lower(j) => bounds.push_row(std::iter::once((j, -1.0))),
                BoundRow::Upper(j) => bounds.push_row(std::iter::once((j, 1.0))),
            }
        }
        let mut g = lp.ineq_matrix().vstack(&bounds.finish());
        let mut a = lp.eq_matrix().clone();
        let rg = row_scale(&g);
        let ra = row_scale(&a);
        g.scale_rows(&rg);
        a.scale_rows(&ra);
        let st = KktStructure::analyze(&g, &a);
        Self {
            eq: lp.eq_matrix_arc(),
            ineq: lp.ineq_matrix_arc(),
            bound_rows: rows,
            g,
            a,
            rg,
            ra,
            st,
        }
    }

    /// True when `lp` can be solved with this preparation.
    pub fn is_compatible(&self, lp: &LinearProgram) -> bool {
        Arc::ptr_eq(&self.eq, &lp.eq_matrix_arc())
            && Arc::ptr_eq(&self.ineq, &lp.ineq_matrix_arc())
            && bound_rows(lp) == self.bound_rows
    }

    /// Solves `lp`, re-preparing first if it is not compatible.
    pub fn solve(&self, lp: &LinearProgram, opts: &SolverOptions) -> LpSolution {
        if !self.is_compatible(lp) {
            return LpSolver::new(lp).solve(lp, opts);
        }
        self.run(lp, opts)
    }

    fn run(&self, lp: &LinearProgram, opts: &SolverOptions) -> LpSolution {
        let (g, a, st) = (&self.g, &self.a, &self.st);
        let n = lp.variable_count();
        let (me, mi) = (a.nrows(), g.nrows());
        let tol = if opts.tolerance > 0.0 { opts.tolerance } else { DEFAULT_TOLERANCE };

        let mut h_orig = lp.ineq_rhs().to_vec();
        h_orig.extend(self.bound_rows.iter().map(|r| match *r {
            BoundRow::Lower(j) => -lp.lower()[j],
            BoundRow::Upper(j) => lp.upper()[j],
        }));
        let b_orig = lp.eq_rhs();
        let c_orig = lp.objective();
        let h: Vec<f64> = h_orig.iter().zip(&self.rg).map(|(v, s)| v * s).collect();
        let b: Vec<f64> = b_orig.iter().zip(&self.ra).map(|(v, s)| v * s).collect();
        let cmax = inf_norm(c_orig);
        let cost = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };
        let c: Vec<f64> = c_orig.iter().map(|v| v * cost).collect();
        let (nb, nh, nc) = (inf_norm(b_orig), inf_norm(&h_orig), inf_norm(c_orig));

        let data_scale = 1.0 + inf_norm(&h).max(inf_norm(&b)).max(inf_norm(&c));
        let reg = 1e-11 * data_scale;

        // initial point: least-squares primal and dual estimates, shifted inside
        let (mut it, init_ok) = {
            let ones = vec![1.0; mi];
            let f = KktFactor::new(st, g, a, &ones, reg);
            let (x, _, zp) = f.solve(&vec![0.0; n], &b, &h);
            let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
            let (_, y, zd) = f.solve(&neg_c, &vec![0.0; me], &vec![0.0; mi]);
            let shift = |v: Vec<f64>| -> Vec<f64> {
                let lo = v.iter().fold(f64::INFINITY, |m, x| m.min(*x));
                if mi == 0 || lo > 0.0 {
                    v
                } else {
                    v.into_iter().map(|x| x + 1.0 - lo).collect()
                }
            };
            let s = shift(zp.iter().map(|v| -v).collect());
            let z = shift(zd);
            let ok = x.iter().chain(&y).chain(&s).chain(&z).all(|v| v.is_finite());
            (
                Iterate {
                    x,
                    y,
                    z,
                    s,
                    tau: 1.0,
                    kappa: 1.0,
                },
                ok,
            )
        };
        let nan_cert = Certificate {
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            gap: f64::INFINITY,
        };
        if !init_ok {
            return failure(n, LpStatus::IterationLimit, 0, nan_cert);
        }

        let mut best_merit = f64::INFINITY;
        let mut stall = 0;
        let mut last_cert = nan_cert;
        let mut gx = vec![0.0; mi];
        for iter in 0..opts.max_iterations.max(1) {
            let Iterate { x, y, z, s, tau, kappa } = &it;
            let (tau, kappa) = (*tau, *kappa);

            // residuals of the embedding
            let mut rx: Vec<f64> = c.iter().map(|v| v * tau).collect();
            a.tr_mul_vec_acc(y, &mut rx);
            st.g_tr_mul_acc(g, z, &mut rx);
            let ax = a.mul_vec(x);
            let ry: Vec<f64> = ax.iter().zip(&b).map(|(v, b)| v - b * tau).collect();
            st.g_mul_into(g, x, &mut gx);
            let rz: Vec<f64> = (0..mi).map(|i| s[i] + gx[i] - h[i] * tau).collect();
            let cx = dot(&c, x);
            let by = dot(&b, y);
            let hz = dot(&h, z);
            let rt = kappa + cx + by + hz;
            let mu = (dot(s, z) + tau * kappa) / (mi as f64 + 1.0);

            // certificate on the unscaled problem at (x, y, z, s) / τ
            let ry_o = (0..me).map(|i| (ry[i] / (self.ra[i] * tau)).abs()).fold(0.0, f64::max);
            let rz_o = (0..mi).map(|i| (rz[i] / (self.rg[i] * tau)).abs()).fold(0.0, f64::max);
            let rx_o = inf_norm(&rx) / (cost * tau);
            let pcost = cx / (cost * tau);
            let dcost = -(by + hz) / (cost * tau);
            let comp = dot(s, z) / (cost * tau * tau);
            let cert = Certificate {
                primal_residual: (ry_o / (1.0 + nb)).max(rz_o / (1.0 + nh)),
                dual_residual: rx_o / (1.0 + nc),
                gap: (pcost - dcost).abs().max(comp.abs()) / (1.0 + pcost.abs().min(dcost.abs())),
            };
            last_cert = cert;
            if cert.within(tol) {
                let xv: Vec<f64> = x.iter().map(|v| v / tau).collect();
                return LpSolution {
                    objective_value: lp.objective_value(&xv),
                    values: xv,
                    status: LpStatus::Optimal,
                    certificate: cert,
                    iterations: iter,
                };
            }
            if tau < kappa {
                let aty: Vec<f64> = rx.iter().zip(&c).map(|(r, c)| r - c * tau).collect();
                if by + hz < 0.0 && inf_norm(&aty) <= tol * -(by + hz) {
                    return failure(n, LpStatus::Infeasible, iter, cert);
                }
                let gxs: Vec<f64> = (0..mi).map(|i| gx[i] + s[i]).collect();
                if cx < 0.0 && inf_norm(&ax).max(inf_norm(&gxs)) <= tol * -cx {
                    return failure(n, LpStatus::Unbounded, iter, cert);
                }
            }
            let merit = cert.primal_residual.max(cert.dual_residual).max(cert.gap);
            if merit < 0.5 * best_merit {
                best_merit = merit;
                stall = 0;
            } else {
                stall += 1;
                if stall > STALL_LIMIT {
                    return failure(n, LpStatus::IterationLimit, iter, cert);
                }
            }

            let d: Vec<f64> = (0..mi).map(|i| z[i] / s[i]).collect();
            let f = KktFactor::new(st, g, a, &d, reg);
            let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
            let (x1, y1, z1) = f.solve(&neg_c, &b, &h);
            let denom = dot(&c, &x1) + dot(&b, &y1) + dot(&h, &z1) - kappa / tau;

            let direction = |eta: f64, ds: &[f64], dk: f64| {
                let rhs_x: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
                let rhs_y: Vec<f64> = ry.iter().map(|v| -eta * v).collect();
                let rhs_z: Vec<f64> = (0..mi).map(|i| -eta * rz[i] + ds[i] / z[i]).collect();
                let (x2, y2, z2) = f.solve(&rhs_x, &rhs_y, &rhs_z);
                let dtau = (-eta * rt + dk / tau - (dot(&c, &x2) + dot(&b, &y2) + dot(&h, &z2))) / denom;
                let dx: Vec<f64> = x2.iter().zip(&x1).map(|(a, b)| a + dtau * b).collect();
                let dy: Vec<f64> = y2.iter().zip(&y1).map(|(a, b)| a + dtau * b).collect();
                let dz: Vec<f64> = z2.iter().zip(&z1).map(|(a, b)| a + dtau * b).collect();
                let dsv: Vec<f64> = (0..mi).map(|i| -(ds[i] + s[i] * dz[i]) / z[i]).collect();
                let dkappa = -(dk + kappa * dtau) / tau;
                (dx, dy, dz, dsv, dtau, dkappa)
            };
            let step = |dz: &[f64], dsv: &[f64], dtau: f64, dkappa: f64| {
                max_step(s, dsv)
                    .min(max_step(z, dz))
                    .min(max_step(&[tau], &[dtau]))
                    .min(max_step(&[kappa], &[dkappa]))
            };

            // predictor
            let ds_aff: Vec<f64> = (0..mi).map(|i| s[i] * z[i]).collect();
            let (_, _, dz_a, ds_a, dtau_a, dkappa_a) = direction(1.0, &ds_aff, tau * kappa);
            let alpha_aff = step(&dz_a, &ds_a, dtau_a, dkappa_a);
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // corrector
            let ds_c: Vec<f64> = (0..mi).map(|i| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu).collect();
            let dk_c = tau * kappa + dtau_a * dkappa_a - sigma * mu;
            let (dx, dy, dz, dsv, dtau, dkappa) = direction(1.0 - sigma, &ds_c, dk_c);
            let alpha = (STEP_FRACTION * step(&dz, &dsv, dtau, dkappa)).min(1.0);

            let upd = |v: &[f64], dv: &[f64]| -> Vec<f64> { v.iter().zip(dv).map(|(a, b)| a + alpha * b).collect() };
            let next = Iterate {
                x: upd(x, &dx),
                y: upd(y, &dy),
                z: upd(z, &dz),
                s: upd(s, &dsv),
                tau: tau + alpha * dtau,
                kappa: kappa + alpha * dkappa,
            };
            let finite = next.x.iter().chain(&next.z).chain(&next.s).all(|v| v.is_finite())
                && next.tau.is_finite()
                && next.kappa.is_finite();
            if !finite {
                return failure(n, LpStatus::IterationLimit, iter, cert);
            }
            it = next;
        }
        failure(n, LpStatus::IterationLimit, opts.max_iterations, last_cert)
    }
}

pub fn solve_lp(lp: &LinearProgram, tolerance: f64, max_iterations: usize) -> LpSolution {
    solve_lp_with(
        lp,
        &SolverOptions {
            tolerance,
            max_iterations,
        },
    )
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &SolverOptions) -> LpSolution {
    LpSolver::new(lp).run(lp, opts)
}
