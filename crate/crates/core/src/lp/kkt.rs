//! Linear algebra for the interior-point Newton systems.
//!
//! Each iteration solves
//!
//! ```text
//! [ 0  Aᵀ  Gᵀ ] [dx]   [rx]
//! [ A  0   0  ] [dy] = [ry]
//! [ G  0  −W  ] [dz]   [rz]      W = diag(s/z)
//! ```
//!
//! `dz` is eliminated with `D = W⁻¹`, leaving `[H Aᵀ; A 0]` with `H = GᵀDG`.
//! Variables that sit in a handful of rows whose other entries are all
//! multiples of one common vector ("leaves", e.g. epigraph variables) are
//! then eliminated analytically: each contributes a rank-one term
//! `c_j v_j v_jᵀ` to the remaining dense block. Leaf vectors are stored once
//! per distinct column up to sign, so forming the dense block is a single
//! `PᵀCP` product.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::sparse::SparseMatrix;

const REFINE_STEPS: usize = 1;
const REFINE_TOLERANCE: f64 = 1e-13;

/// Gather/scatter of a core column onto a deduplicated leaf column.
#[derive(Debug, Clone, Copy)]
struct ColumnRef {
    unique: usize,
    sign: f64,
}

#[derive(Debug)]
pub(crate) struct KktStructure {
    n: usize,
    core: Vec<usize>,
    core_of: Vec<Option<usize>>,
    leaf_var: Vec<usize>,
    /// CSR-like lists of (row, leaf coefficient m, parallel factor g).
    leaf_ptr: Vec<usize>,
    leaf_rows: Vec<usize>,
    leaf_m: Vec<f64>,
    leaf_g: Vec<f64>,
    free_rows: Vec<usize>,
    /// `leaves × unique` reference vectors.
    p: DMatrix<f64>,
    columns: Vec<Option<ColumnRef>>,
}

fn same_direction(reference: &[(usize, f64)], row: &[(usize, f64)]) -> Option<f64> {
    if reference.len() != row.len() {
        return None;
    }
    let g = row[0].1 / reference[0].1;
    for (&(ja, va), &(jb, vb)) in reference.iter().zip(row) {
        if ja != jb || (vb - g * va).abs() > 4.0 * f64::EPSILON * vb.abs() {
            return None;
        }
    }
    Some(g)
}

impl KktStructure {
    pub(crate) fn analyze(g: &SparseMatrix, a: &SparseMatrix) -> Self {
        let n = g.ncols();
        let counts = g.column_counts();
        let col_rows = g.column_rows();
        let mut in_eq = vec![false; n];
        for i in 0..a.nrows() {
            for &j in a.row(i).0 {
                in_eq[j] = true;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&j| (counts[j], j));

        let mut claimed = vec![false; g.nrows()];
        let mut is_leaf = vec![false; n];
        let mut leaf_var = Vec::new();
        let mut leaf_ptr = vec![0];
        let mut leaf_rows = Vec::new();
        let mut leaf_m = Vec::new();
        let mut leaf_g = Vec::new();
        let mut leaf_ref: Vec<Vec<(usize, f64)>> = Vec::new();

        for &j in &order {
            let rows = &col_rows[j];
            if rows.is_empty() || in_eq[j] || rows.iter().any(|&r| claimed[r]) {
                continue;
            }
            let mut reference: Option<Vec<(usize, f64)>> = None;
            let mut entries = Vec::with_capacity(rows.len());
            let mut ok = true;
            for &r in rows {
                let (cols, vals) = g.row(r);
                let mut m = 0.0;
                let rest: Vec<(usize, f64)> = cols
                    .iter()
                    .zip(vals)
                    .filter_map(|(&c, &v)| {
                        if c == j {
                            m = v;
                            None
                        } else {
                            Some((c, v))
                        }
                    })
                    .collect();
                if rest.iter().any(|&(c, _)| is_leaf[c]) {
                    ok = false;
                    break;
                }
                let gr = if rest.is_empty() {
                    0.0
                } else if let Some(rf) = &reference {
                    match same_direction(rf, &rest) {
                        Some(gr) => gr,
                        None => {
                            ok = false;
                            break;
                        }
                    }
                } else {
                    reference = Some(rest);
                    1.0
                };
                entries.push((r, m, gr));
            }
            if !ok {
                continue;
            }
            is_leaf[j] = true;
            for &(r, m, gr) in &entries {
                claimed[r] = true;
                leaf_rows.push(r);
                leaf_m.push(m);
                leaf_g.push(gr);
            }
            leaf_ptr.push(leaf_rows.len());
            leaf_var.push(j);
            leaf_ref.push(reference.unwrap_or_default());
        }

        let core: Vec<usize> = (0..n).filter(|&j| !is_leaf[j]).collect();
        let mut core_of = vec![None; n];
        for (i, &j) in core.iter().enumerate() {
            core_of[j] = Some(i);
        }
        let free_rows: Vec<usize> = (0..g.nrows()).filter(|&r| !claimed[r]).collect();

        // dense reference vectors over core columns, then dedupe up to sign
        let nl = leaf_var.len();
        let nc = core.len();
        let mut v = DMatrix::<f64>::zeros(nl, nc);
        for (l, rf) in leaf_ref.iter().enumerate() {
            for &(c, val) in rf {
                v[(l, core_of[c].expect("leaf rows only touch core columns"))] = val;
            }
        }
        let mut columns = vec![None; nc];
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut unique_cols: Vec<usize> = Vec::new();
        let mut unique_sign: Vec<f64> = Vec::new();
        for a in 0..nc {
            let col = v.column(a);
            let Some(first) = col.iter().find(|x| **x != 0.0) else {
                continue;
            };
            let sign = first.signum();
            let key: Vec<u64> = col.iter().map(|x| (sign * x + 0.0).to_bits()).collect();
            let u = *seen.entry(key).or_insert_with(|| {
                unique_cols.push(a);
                unique_sign.push(sign);
                unique_cols.len() - 1
            });
            columns[a] = Some(ColumnRef { unique: u, sign });
        }
        let mut p = DMatrix::<f64>::zeros(nl, unique_cols.len());
        for (u, (&a, &s)) in unique_cols.iter().zip(&unique_sign).enumerate() {
            for l in 0..nl {
                p[(l, u)] = s * v[(l, a)];
            }
        }
        Self {
            n,
            core,
            core_of,
            leaf_var,
            leaf_ptr,
            leaf_rows,
            leaf_m,
            leaf_g,
            free_rows,
            p,
            columns,
        }
    }

    /// Packs core entries of `x` onto the deduplicated columns of `P`.
    fn compress(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::<f64>::zeros(self.p.ncols());
        for (ia, ca) in self.columns.iter().enumerate() {
            if let Some(ca) = ca {
                out[ca.unique] += ca.sign * x[self.core[ia]];
            }
        }
        out
    }

    /// `out = G x`, using the leaf factorization of the claimed rows.
    pub(crate) fn g_mul_into(&self, g: &SparseMatrix, x: &[f64], out: &mut [f64]) {
        let nl = self.leaf_var.len();
        if nl > 0 {
            let vx = if self.p.ncols() > 0 {
                &self.p * self.compress(x)
            } else {
                DVector::zeros(nl)
            };
            for l in 0..nl {
                let xl = x[self.leaf_var[l]];
                for q in self.leaf_ptr[l]..self.leaf_ptr[l + 1] {
                    out[self.leaf_rows[q]] = self.leaf_m[q] * xl + self.leaf_g[q] * vx[l];
                }
            }
        }
        for &r in &self.free_rows {
            let (cols, vals) = g.row(r);
            out[r] = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `out += Gᵀ z`.
    pub(crate) fn g_tr_mul_acc(&self, g: &SparseMatrix, z: &[f64], out: &mut [f64]) {
        let nl = self.leaf_var.len();
        if nl > 0 {
            let mut t = DVector::<f64>::zeros(nl);
            for l in 0..nl {
                let (mut acc_m, mut acc_g) = (0.0, 0.0);
                for q in self.leaf_ptr[l]..self.leaf_ptr[l + 1] {
                    let zr = z[self.leaf_rows[q]];
                    acc_m += self.leaf_m[q] * zr;
                    acc_g += self.leaf_g[q] * zr;
                }
                out[self.leaf_var[l]] += acc_m;
                t[l] = acc_g;
            }
            if self.p.ncols() > 0 {
                let pt = self.p.tr_mul(&t);
                for (ia, ca) in self.columns.iter().enumerate() {
                    if let Some(ca) = ca {
                        out[self.core[ia]] += ca.sign * pt[ca.unique];
                    }
                }
            }
        }
        for &r in &self.free_rows {
            let (cols, vals) = g.row(r);
            let zr = z[r];
            if zr != 0.0 {
                for (&j, &v) in cols.iter().zip(vals) {
                    out[j] += v * zr;
                }
            }
        }
    }

    /// `G x` as a new vector.
    pub(crate) fn g_mul(&self, g: &SparseMatrix, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.nrows()];
        self.g_mul_into(g, x, &mut out);
        out
    }

    #[cfg(test)]
    pub(crate) fn core_size(&self) -> usize {
        self.core.len()
    }

    #[cfg(test)]
    pub(crate) fn leaf_count(&self) -> usize {
        self.leaf_var.len()
    }
}

/// A factorization of the Newton system for one scaling `D`.
pub(crate) struct KktFactor<'a> {
    st: &'a KktStructure,
    g: &'a SparseMatrix,
    a: &'a SparseMatrix,
    d: Vec<f64>,
    h_leaf: Vec<f64>,
    beta: Vec<f64>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<'a> KktFactor<'a> {
    pub(crate) fn new(st: &'a KktStructure, g: &'a SparseMatrix, a: &'a SparseMatrix, d: &[f64], reg: f64) -> Self {
        let nl = st.leaf_var.len();
        let mut h_leaf = vec![0.0; nl];
        let mut beta = vec![0.0; nl];
        let mut c = vec![0.0; nl];
        for l in 0..nl {
            let span = st.leaf_ptr[l]..st.leaf_ptr[l + 1];
            let (mut hjj, mut num, mut dg2, mut pairs) = (reg, 0.0, 0.0, 0.0);
            for q in span.clone() {
                let (dr, m, gr) = (d[st.leaf_rows[q]], st.leaf_m[q], st.leaf_g[q]);
                hjj += dr * m * m;
                num += dr * m * gr;
                dg2 += dr * gr * gr;
                for q2 in (q + 1)..span.end {
                    let (d2, m2, g2) = (d[st.leaf_rows[q2]], st.leaf_m[q2], st.leaf_g[q2]);
                    let cross = m * g2 - m2 * gr;
                    pairs += dr * d2 * cross * cross;
                }
            }
            h_leaf[l] = hjj;
            beta[l] = num / hjj;
            c[l] = (pairs + reg * dg2) / hjj;
        }

        let nc = st.core.len();
        let np = a.nrows();
        let mut kkt = DMatrix::<f64>::zeros(nc + np, nc + np);
        if nl > 0 && st.p.ncols() > 0 {
            let mut b = st.p.clone();
            for l in 0..nl {
                let w = c[l].max(0.0).sqrt();
                b.row_mut(l).scale_mut(w);
            }
            let hu = b.transpose() * &b;
            for (ia, ca) in st.columns.iter().enumerate() {
                let Some(ca) = ca else { continue };
                for (ib, cb) in st.columns.iter().enumerate() {
                    let Some(cb) = cb else { continue };
                    kkt[(ia, ib)] = ca.sign * cb.sign * hu[(ca.unique, cb.unique)];
                }
            }
        }
        for &r in &st.free_rows {
            let dr = d[r];
            let (cols, vals) = g.row(r);
            for (&ja, &va) in cols.iter().zip(vals) {
                let ia = st.core_of[ja].expect("free rows touch core only");
                for (&jb, &vb) in cols.iter().zip(vals) {
                    let ib = st.core_of[jb].expect("free rows touch core only");
                    kkt[(ia, ib)] += dr * va * vb;
                }
            }
        }
        for i in 0..nc {
            kkt[(i, i)] += reg;
        }
        for i in 0..np {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let jc = st.core_of[j].expect("equality rows touch core only");
                kkt[(nc + i, jc)] = v;
                kkt[(jc, nc + i)] = v;
            }
            kkt[(nc + i, nc + i)] = -reg;
        }
        Self {
            st,
            g,
            a,
            d: d.to_vec(),
            h_leaf,
            beta,
            lu: (nc + np > 0).then(|| kkt.lu()),
        }
    }

    /// One pass of the reduced solve; no refinement.
    fn solve_once(&self, rx: &[f64], ry: &[f64], rz: &[f64], dx: &mut [f64], dy: &mut [f64], dz: &mut [f64]) {
        let st = self.st;
        let (nc, np) = (st.core.len(), self.a.nrows());
        let nl = st.leaf_var.len();

        let dz_rhs: Vec<f64> = rz.iter().zip(&self.d).map(|(r, d)| r * d).collect();
        let mut f = rx.to_vec();
        st.g_tr_mul_acc(self.g, &dz_rhs, &mut f);

        let mut rhs = DVector::<f64>::zeros(nc + np);
        for (i, &j) in st.core.iter().enumerate() {
            rhs[i] = f[j];
        }
        for i in 0..np {
            rhs[nc + i] = ry[i];
        }
        let nu = st.p.ncols();
        if nl > 0 && nu > 0 {
            let w = DVector::from_iterator(nl, (0..nl).map(|l| self.beta[l] * f[st.leaf_var[l]]));
            let pw = st.p.tr_mul(&w);
            for (ia, ca) in st.columns.iter().enumerate() {
                if let Some(ca) = ca {
                    rhs[ia] -= ca.sign * pw[ca.unique];
                }
            }
        }
        let sol = match &self.lu {
            Some(lu) => lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(nc + np)),
            None => rhs,
        };
        for (i, &j) in st.core.iter().enumerate() {
            dx[j] = sol[i];
        }
        dy.copy_from_slice(&sol.as_slice()[nc..]);
        if nl > 0 {
            let mut compressed = DVector::<f64>::zeros(nu);
            for (ia, ca) in st.columns.iter().enumerate() {
                if let Some(ca) = ca {
                    compressed[ca.unique] += ca.sign * sol[ia];
                }
            }
            let vdx = if nu > 0 {
                &st.p * &compressed
            } else {
                DVector::zeros(nl)
            };
            for l in 0..nl {
                let j = st.leaf_var[l];
                dx[j] = (f[j] - self.beta[l] * self.h_leaf[l] * vdx[l]) / self.h_leaf[l];
            }
        }
        st.g_mul_into(self.g, dx, dz);
        for ((z, r), d) in dz.iter_mut().zip(rz).zip(&self.d) {
            *z = d * (*z - r);
        }
    }

    /// Residual of the unregularized full system at `(dx, dy, dz)`.
    fn residual(
        &self,
        rx: &[f64],
        ry: &[f64],
        rz: &[f64],
        dx: &[f64],
        dy: &[f64],
        dz: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut ex = rx.to_vec();
        let mut t = vec![0.0; self.st.n];
        self.a.tr_mul_vec_acc(dy, &mut t);
        self.st.g_tr_mul_acc(self.g, dz, &mut t);
        ex.iter_mut().zip(&t).for_each(|(e, v)| *e -= v);
        let ady = self.a.mul_vec(dx);
        let ey: Vec<f64> = ry.iter().zip(&ady).map(|(r, v)| r - v).collect();
        let gdx = self.st.g_mul(self.g, dx);
        let ez: Vec<f64> = (0..rz.len()).map(|i| rz[i] - (gdx[i] - dz[i] / self.d[i])).collect();
        (ex, ey, ez)
    }

    /// Solves the full system with iterative refinement.
    pub(crate) fn solve(&self, rx: &[f64], ry: &[f64], rz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, p, m) = (self.st.n, self.a.nrows(), self.g.nrows());
        let (mut dx, mut dy, mut dz) = (vec![0.0; n], vec![0.0; p], vec![0.0; m]);
        self.solve_once(rx, ry, rz, &mut dx, &mut dy, &mut dz);
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let scale = 1.0 + inf(rx).max(inf(ry)).max(inf(rz));
        let mut last = f64::INFINITY;
        let (mut cx, mut cy, mut cz) = (vec![0.0; n], vec![0.0; p], vec![0.0; m]);
        for _ in 0..REFINE_STEPS {
            let (ex, ey, ez) = self.residual(rx, ry, rz, &dx, &dy, &dz);
            let err = inf(&ex).max(inf(&ey)).max(inf(&ez));
            if err <= REFINE_TOLERANCE * scale || err >= 0.5 * last {
                break;
            }
            last = err;
            self.solve_once(&ex, &ey, &ez, &mut cx, &mut cy, &mut cz);
            dx.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
            dy.iter_mut().zip(&cy).for_each(|(a, b)| *a += b);
            dz.iter_mut().zip(&cz).for_each(|(a, b)| *a += b);
        }
        (dx, dy, dz)
    }
}
