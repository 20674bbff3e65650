//! Small dense convex QP solver.
//!
//! Equalities are removed with an SVD null-space basis, then the reduced
//! strictly convex problem is solved with the Goldfarb-Idnani dual active-set
//! method. Violated constraints enter most-violated first, lowest index on ties.

use nalgebra as na;
use na::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::math::{null_space, pinv_solve};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("QP infeasible: constraints {violated:?} cannot hold together (violation {residual:e})")]
    Infeasible { violated: Vec<usize>, residual: f64 },
    #[error("QP hit the iteration limit ({iterations})")]
    MaxIterations { iterations: usize },
    #[error("QP reduced Hessian is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NonConvex { min_eigenvalue: f64 },
    #[error("QP dimension mismatch: {0}")]
    Dimension(String),
}

impl QpError {
    pub fn code(&self) -> &'static str {
        match self {
            QpError::Infeasible { .. } => "qp_infeasible",
            QpError::MaxIterations { .. } => "qp_max_iterations",
            QpError::NonConvex { .. } => "qp_non_convex",
            QpError::Dimension(_) => "qp_dimension",
        }
    }
}

/// Weighted least-squares objective term `w * |A x - b|^2`.
#[derive(Clone, Debug)]
pub struct LsqTerm {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    pub n: usize,
    pub terms: Vec<LsqTerm>,
    pub eq_mat: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_mat: DMatrix<f64>,
    pub ineq_upper: DVector<f64>,
    /// Optional lower bounds on `G x`; use `-inf` for none.
    pub ineq_lower: Option<DVector<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct QpOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { max_iter: 1000, tol: 1e-9 }
    }
}

/// Which side of an inequality row is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    pub dual: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity).max(self.dual)
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    /// Multipliers of `G x <= h`, zero when inactive.
    pub upper_multipliers: DVector<f64>,
    /// Multipliers of `G x >= l`, zero when inactive.
    pub lower_multipliers: DVector<f64>,
    pub active: Vec<(usize, Side)>,
    pub residuals: KktResiduals,
    pub objective: f64,
    pub iterations: usize,
}

impl QuadraticProgram {
    pub fn new(n: usize) -> Self {
        QuadraticProgram {
            n,
            terms: Vec::new(),
            eq_mat: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_mat: DMatrix::zeros(0, n),
            ineq_upper: DVector::zeros(0),
            ineq_lower: None,
        }
    }

    pub fn add_term(&mut self, a: DMatrix<f64>, b: DVector<f64>, weight: f64) {
        self.terms.push(LsqTerm { a, b, weight });
    }

    /// `P`, `c` and constant with objective `x'Px/2 + c'x + k`.
    pub fn hessian(&self) -> (DMatrix<f64>, DVector<f64>, f64) {
        let mut p = DMatrix::zeros(self.n, self.n);
        let mut c = DVector::zeros(self.n);
        let mut k = 0.0;
        for t in &self.terms {
            p += t.a.tr_mul(&t.a) * (2.0 * t.weight);
            c -= t.a.tr_mul(&t.b) * (2.0 * t.weight);
            k += t.weight * t.b.norm_squared();
        }
        (p, c, k)
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| t.weight * (&t.a * x - &t.b).norm_squared()).sum()
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.n;
        let bad = self.terms.iter().any(|t| t.a.ncols() != n || t.a.nrows() != t.b.len() || t.weight < 0.0)
            || self.eq_mat.ncols() != n
            || self.eq_mat.nrows() != self.eq_rhs.len()
            || self.ineq_mat.ncols() != n
            || self.ineq_mat.nrows() != self.ineq_upper.len()
            || self.ineq_lower.as_ref().is_some_and(|l| l.len() != self.ineq_upper.len());
        if bad {
            Err(QpError::Dimension("inconsistent term or constraint shapes".into()))
        } else {
            Ok(())
        }
    }
}

/// Independent KKT check of a candidate primal-dual point.
///
/// Each residual is scaled by `1 + ` the magnitude of the terms it balances.
pub fn kkt_residuals(
    qp: &QuadraticProgram,
    x: &DVector<f64>,
    eq_mult: &DVector<f64>,
    upper: &DVector<f64>,
    lower: &DVector<f64>,
) -> KktResiduals {
    let (p, c, _) = qp.hessian();
    let inf = |v: &DVector<f64>| v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let px = &p * x;
    let ce = qp.eq_mat.tr_mul(eq_mult);
    let gz = qp.ineq_mat.tr_mul(&(upper - lower));
    let grad = &px + &c + &ce + &gz;
    let scale = 1.0 + inf(&px).max(inf(&c)).max(inf(&ce)).max(inf(&gz));
    let stationarity = inf(&grad) / scale;

    let eq_res = &qp.eq_mat * x - &qp.eq_rhs;
    let gx = &qp.ineq_mat * x;
    let mut primal = inf(&eq_res) / (1.0 + inf(&qp.eq_rhs));
    let mut comp = 0.0f64;
    let mut dual = 0.0f64;
    for i in 0..gx.len() {
        let h = qp.ineq_upper[i];
        let sc = 1.0 + h.abs().min(1e300) + gx[i].abs();
        if h.is_finite() {
            primal = primal.max((gx[i] - h).max(0.0) / sc);
            comp = comp.max((upper[i] * (h - gx[i])).abs() / (sc * (1.0 + upper[i].abs())));
        } else {
            dual = dual.max(upper[i].abs());
        }
        dual = dual.max((-upper[i]).max(0.0) / (1.0 + inf(&px)));
        let l = qp.ineq_lower.as_ref().map_or(f64::NEG_INFINITY, |l| l[i]);
        if l.is_finite() {
            let scl = 1.0 + l.abs() + gx[i].abs();
            primal = primal.max((l - gx[i]).max(0.0) / scl);
            comp = comp.max((lower[i] * (gx[i] - l)).abs() / (scl * (1.0 + lower[i].abs())));
        } else {
            dual = dual.max(lower[i].abs());
        }
        dual = dual.max((-lower[i]).max(0.0) / (1.0 + inf(&px)));
    }
    KktResiduals { stationarity, primal, complementarity: comp, dual }
}

/// Full QR by Householder reflections: returns (Q n x n, R k x k upper) for an n x k input.
fn householder_qr(b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, k) = b.shape();
    let mut r = b.clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    for j in 0..k.min(n) {
        let x = r.view((j, j), (n - j, 1)).into_owned();
        let alpha = x.norm();
        if alpha == 0.0 {
            continue;
        }
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        let mut v = x.clone();
        v[0] += sign * alpha;
        let vn = v.norm_squared();
        if vn == 0.0 {
            continue;
        }
        // R <- (I - 2 v v'/v'v) R on rows j..
        for c in j..k {
            let mut dot = 0.0;
            for i in 0..n - j {
                dot += v[i] * r[(j + i, c)];
            }
            let f = 2.0 * dot / vn;
            for i in 0..n - j {
                r[(j + i, c)] -= f * v[i];
            }
        }
        // Q <- Q (I - 2 v v'/v'v)
        for row in 0..n {
            let mut dot = 0.0;
            for i in 0..n - j {
                dot += q[(row, j + i)] * v[i];
            }
            let f = 2.0 * dot / vn;
            for i in 0..n - j {
                q[(row, j + i)] -= f * v[i];
            }
        }
    }
    let rk = r.view((0, 0), (k, k)).upper_triangle();
    (q, rk)
}

fn back_substitute(r: &DMatrix<f64>, d: &DVector<f64>) -> DVector<f64> {
    let k = d.len();
    let mut x = DVector::zeros(k);
    for i in (0..k).rev() {
        let mut s = d[i];
        for j in i + 1..k {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

struct Reduced {
    /// Constraint normals `a_i` with `a_i' y >= b_i`.
    a: DMatrix<f64>,
    b: DVector<f64>,
}

/// Solution, active rows, their multipliers and the iteration count.
type DualSolution = (DVector<f64>, Vec<usize>, Vec<f64>, usize);

/// Goldfarb-Idnani on `min y'Hy/2 + g'y s.t. A y >= b`.
fn dual_active_set(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    cons: &Reduced,
    opts: &QpOptions,
) -> Result<DualSolution, QpError> {
    let n = h.nrows();
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = h.clone().cholesky().filter(|c| {
        let l = c.l_dirty();
        (0..n).all(|i| l[(i, i)] * l[(i, i)] > 1e-12 * scale)
    });
    let Some(chol) = chol else {
        let ev = h.clone().symmetric_eigenvalues();
        let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(QpError::NonConvex { min_eigenvalue: min });
    };
    let l = chol.l();
    let l_inv = l.clone().solve_lower_triangular(&DMatrix::identity(n, n)).expect("cholesky factor is invertible");
    let mut y = -chol.solve(g);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let ncons = cons.b.len();
    let tol_of = |i: usize| opts.tol * (1.0 + cons.b[i].abs());
    let mut iters = 0;
    loop {
        // most violated inactive constraint
        let mut best: Option<(usize, f64)> = None;
        for i in 0..ncons {
            if active.contains(&i) {
                continue;
            }
            let s = cons.a.column(i).dot(&y) - cons.b[i];
            if s < -tol_of(i) && best.is_none_or(|(_, bs)| s < bs) {
                best = Some((i, s));
            }
        }
        let Some((p, _)) = best else {
            return Ok((y, active, u, iters));
        };
        let np = cons.a.column(p).into_owned();
        let mut up = 0.0;
        loop {
            iters += 1;
            if iters > opts.max_iter {
                return Err(QpError::MaxIterations { iterations: opts.max_iter });
            }
            let q = active.len();
            let nmat = DMatrix::from_fn(n, q, |i, j| cons.a[(i, active[j])]);
            let (qm, rm) = householder_qr(&(&l_inv * &nmat));
            let v = &l_inv * &np;
            let d = qm.tr_mul(&v);
            let d1 = d.rows(0, q).into_owned();
            let d2 = d.rows(q, n - q).into_owned();
            let r = if q > 0 { back_substitute(&rm, &d1) } else { DVector::zeros(0) };
            let dependent = d2.norm() <= 1e-12 * v.norm().max(1e-300);
            let z = if dependent {
                DVector::zeros(n)
            } else {
                l_inv.tr_mul(&(qm.columns(q, n - q) * &d2))
            };
            // partial (dual) step length
            let mut t1 = f64::INFINITY;
            let mut k_drop = None;
            for j in 0..q {
                if r[j] > 0.0 {
                    let t = u[j] / r[j];
                    if t < t1 {
                        t1 = t;
                        k_drop = Some(j);
                    }
                }
            }
            let sp = np.dot(&y) - cons.b[p];
            let t2 = if dependent { f64::INFINITY } else { -sp / z.dot(&np) };
            let t = t1.min(t2);
            if !t.is_finite() {
                let mut violated = active.clone();
                violated.push(p);
                return Err(QpError::Infeasible { violated, residual: -sp });
            }
            if !t2.is_finite() {
                for j in 0..q {
                    u[j] -= t * r[j];
                }
                up += t;
                let k = k_drop.unwrap();
                active.remove(k);
                u.remove(k);
                continue;
            }
            y += &z * t;
            for j in 0..q {
                u[j] -= t * r[j];
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let k = k_drop.unwrap();
            active.remove(k);
            u.remove(k);
        }
    }
}

/// One Newton step on the KKT system of the final active set. Ill-conditioned
/// Hessians leave the dual iterates a few digits short; the step is kept only
/// when it lowers the residual and the multipliers stay nonnegative.
fn refine(h: &DMatrix<f64>, g: &DVector<f64>, cons: &Reduced, act: &[usize], y: DVector<f64>, u: Vec<f64>) -> (DVector<f64>, Vec<f64>) {
    let (n, q) = (h.nrows(), act.len());
    let a = DMatrix::from_fn(n, q, |i, j| cons.a[(i, act[j])]);
    let uv = DVector::from_vec(u.clone());
    let residual = |y: &DVector<f64>, u: &DVector<f64>| {
        let mut r = DVector::zeros(n + q);
        r.rows_mut(0, n).copy_from(&(h * y + g - &a * u));
        for j in 0..q {
            r[n + j] = a.column(j).dot(y) - cons.b[act[j]];
        }
        r
    };
    let r0 = residual(&y, &uv);
    let mut k = DMatrix::zeros(n + q, n + q);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    k.view_mut((0, n), (n, q)).copy_from(&(-&a));
    k.view_mut((n, 0), (q, n)).copy_from(&a.transpose());
    let Some(step) = k.lu().solve(&(-&r0)) else { return (y, u) };
    let y1 = &y + step.rows(0, n);
    let u1 = &uv + step.rows(n, q);
    if u1.iter().all(|&x| x >= 0.0) && residual(&y1, &u1).amax() < r0.amax() {
        (y1, u1.iter().copied().collect())
    } else {
        (y, u)
    }
}

pub fn solve(qp: &QuadraticProgram, opts: &QpOptions) -> Result<QpSolution, QpError> {
    qp.check()?;
    let n = qp.n;
    let (p, c, _) = qp.hessian();

    // equality elimination
    let (x0, z) = if qp.eq_mat.nrows() > 0 {
        let (x0, _) = pinv_solve(&qp.eq_mat, &qp.eq_rhs, 1e-10);
        let res = (&qp.eq_mat * &x0 - &qp.eq_rhs).amax();
        if res > 1e-9 * (1.0 + qp.eq_rhs.amax()) {
            return Err(QpError::Infeasible { violated: Vec::new(), residual: res });
        }
        let (z, _) = null_space(&qp.eq_mat, n, 1e-10);
        (x0, z)
    } else {
        (DVector::zeros(n), DMatrix::identity(n, n))
    };
    let nr = z.ncols();

    // inequality rows as a' y >= b
    let m = qp.ineq_mat.nrows();
    let mut rows: Vec<(usize, Side)> = Vec::new();
    for i in 0..m {
        if qp.ineq_upper[i].is_finite() {
            rows.push((i, Side::Upper));
        }
    }
    if let Some(lo) = &qp.ineq_lower {
        for i in 0..m {
            if lo[i].is_finite() {
                rows.push((i, Side::Lower));
            }
        }
    }
    let gz = &qp.ineq_mat * &z;
    let gx0 = &qp.ineq_mat * &x0;
    let mut a = DMatrix::zeros(nr, rows.len());
    let mut b = DVector::zeros(rows.len());
    for (k, &(i, side)) in rows.iter().enumerate() {
        match side {
            Side::Upper => {
                a.set_column(k, &(-gz.row(i).transpose()));
                b[k] = -(qp.ineq_upper[i] - gx0[i]);
            }
            Side::Lower => {
                a.set_column(k, &gz.row(i).transpose());
                b[k] = qp.ineq_lower.as_ref().unwrap()[i] - gx0[i];
            }
        }
    }
    let cons = Reduced { a, b };

    let (y, act, u, iterations) = if nr == 0 {
        for k in 0..rows.len() {
            if cons.b[k] > opts.tol * (1.0 + cons.b[k].abs()) {
                return Err(QpError::Infeasible { violated: vec![k], residual: cons.b[k] });
            }
        }
        (DVector::zeros(0), Vec::new(), Vec::new(), 0)
    } else {
        let hr = z.tr_mul(&p) * &z;
        let hr = (&hr + hr.transpose()) * 0.5;
        let gr = z.tr_mul(&(&p * &x0 + &c));
        let (y, act, u, it) = dual_active_set(&hr, &gr, &cons, opts)?;
        let (y, u) = refine(&hr, &gr, &cons, &act, y, u);
        (y, act, u, it)
    };
    let x = &x0 + &z * &y;

    let mut upper = DVector::zeros(m);
    let mut lower = DVector::zeros(m);
    let mut active = Vec::new();
    for (j, &k) in act.iter().enumerate() {
        let (i, side) = rows[k];
        match side {
            Side::Upper => upper[i] = u[j],
            Side::Lower => lower[i] = u[j],
        }
        active.push((i, side));
    }
    active.sort_by_key(|&(i, s)| (i, s == Side::Lower));

    let eq_multipliers = if qp.eq_mat.nrows() > 0 {
        let rhs = -(&p * &x + &c + qp.ineq_mat.tr_mul(&(&upper - &lower)));
        pinv_solve(&qp.eq_mat.transpose(), &rhs, 1e-10).0
    } else {
        DVector::zeros(0)
    };
    let residuals = kkt_residuals(qp, &x, &eq_multipliers, &upper, &lower);
    Ok(QpSolution {
        objective: qp.objective(&x),
        x,
        eq_multipliers,
        upper_multipliers: upper,
        lower_multipliers: lower,
        active,
        residuals,
        iterations,
    })
}
