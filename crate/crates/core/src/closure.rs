//! Loop-closure constraints, mapping Jacobian and the maps built on it.

use nalgebra as na;
use na::{DMatrix, DVector, Matrix3, Vector3};
use serde::Serialize;

use crate::dynamics::{joint_space_inertia, nonlinear_terms};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, Kinematics};
use crate::math::{log_so3, singular_values, skew};
use crate::model::{GeneralizedState, MechanismModel};
use crate::relative::relative_kinematics;

pub const DEFAULT_SINGULAR_THRESHOLD: f64 = 1e-8;
pub const CLOSURE_CONSISTENCY_TOL: f64 = 1e-6;

/// Passive DOFs reported through `q = P theta_u`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SelectionMap {
    pub dofs: Vec<usize>,
}

impl SelectionMap {
    pub fn new(model: &MechanismModel, dofs: Vec<usize>) -> Result<Self> {
        for (i, &d) in dofs.iter().enumerate() {
            if d >= model.m {
                return Err(Error::Config(format!("selected DOF {d} is not passive")));
            }
            if dofs[..i].contains(&d) {
                return Err(Error::Config(format!("DOF {d} selected twice")));
            }
        }
        Ok(SelectionMap { dofs })
    }

    pub fn from_model(model: &MechanismModel) -> Self {
        SelectionMap { dofs: model.selection.clone() }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dofs.len(), self.dofs.iter().map(|&d| v[d]))
    }

    /// Rows of `a` picked by the selection.
    pub fn rows(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.dofs.len(), a.ncols(), |i, j| a[(self.dofs[i], j)])
    }
}

/// Inverse of the left Jacobian of SO(3): d log(R)/dt = J^-1 w for R' = [w]x R.
fn left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let t = phi.norm();
    let px = skew(phi);
    let c = if t < 1e-6 {
        1.0 / 12.0 + t * t / 720.0
    } else {
        1.0 / (t * t) - (1.0 + t.cos()) / (2.0 * t * t.sin())
    };
    Matrix3::identity() - px * 0.5 + px * px * c
}

/// Closure error of every loop, stacked in declaration order.
pub fn closure_error(model: &MechanismModel, kin: &Kinematics) -> DVector<f64> {
    let rows: usize = model.loops.iter().map(|l| l.rows()).sum();
    let mut e = DVector::zeros(rows);
    let mut r = 0;
    for lp in &model.loops {
        let a = kin.frame_pose(&lp.frame_a);
        let u = kin.frame_pose(&lp.frame_u);
        let rt = a.rotation.transpose();
        let p = rt * (u.position - a.position);
        let phi = log_so3(&(rt * u.rotation));
        let mut c = 0;
        for k in 0..6 {
            if lp.mask[k] {
                let v = if k < 3 { p[k] } else { phi[k - 3] };
                e[r] = v - lp.constants[c];
                r += 1;
                c += 1;
            }
        }
    }
    e
}

/// Stacked closure quantities at one state, with `J_lu` factored once.
#[derive(Clone, Debug)]
pub struct ClosureSystem {
    pub n: usize,
    pub m: usize,
    /// Number of base velocity columns (0 or 6).
    pub off: usize,
    /// Constraint Jacobian, rows x nv.
    pub jl: DMatrix<f64>,
    /// Exact derivative of the closure error, equal to `jl` on position rows.
    pub error_jacobian: DMatrix<f64>,
    pub error: DVector<f64>,
    /// Acceleration bias `J_l' nu`.
    pub bias: DVector<f64>,
    pub row_loop: Vec<usize>,
    pub loop_names: Vec<String>,
    pub sigma_min: f64,
    pub threshold: f64,
    jlu_inv: Option<DMatrix<f64>>,
    jm: Option<DMatrix<f64>>,
}

impl ClosureSystem {
    pub fn new(model: &MechanismModel, kin: &Kinematics) -> Self {
        Self::with_threshold(model, kin, DEFAULT_SINGULAR_THRESHOLD)
    }

    pub fn from_state(model: &MechanismModel, state: &GeneralizedState) -> Result<Self> {
        let kin = forward_kinematics(model, state)?;
        Ok(Self::new(model, &kin))
    }

    pub fn with_threshold(model: &MechanismModel, kin: &Kinematics, threshold: f64) -> Self {
        let nv = model.nv();
        let rows: usize = model.loops.iter().map(|l| l.rows()).sum();
        let mut jl = DMatrix::zeros(rows, nv);
        let mut ej = DMatrix::zeros(rows, nv);
        let mut error = DVector::zeros(rows);
        let mut bias = DVector::zeros(rows);
        let mut row_loop = Vec::with_capacity(rows);
        let mut r = 0;
        for (li, lp) in model.loops.iter().enumerate() {
            let rel = relative_kinematics(model, kin, &lp.frame_a, &lp.frame_u);
            let phi = log_so3(&rel.rot);
            let rot_rows = lp.mask[3..].iter().any(|&b| b).then(|| left_jacobian_inv(&phi) * rel.jacobian.rows(3, 3));
            let mut c = 0;
            for k in 0..6 {
                if !lp.mask[k] {
                    continue;
                }
                jl.row_mut(r).copy_from(&rel.jacobian.row(k));
                bias[r] = rel.bias[k];
                if k < 3 {
                    error[r] = rel.pos[k] - lp.constants[c];
                    ej.row_mut(r).copy_from(&rel.jacobian.row(k));
                } else {
                    error[r] = phi[k - 3] - lp.constants[c];
                    ej.row_mut(r).copy_from(&rot_rows.as_ref().unwrap().row(k - 3));
                }
                row_loop.push(li);
                r += 1;
                c += 1;
            }
        }
        let off = model.base_dofs();
        let (n, m) = (model.n, model.m);
        let mut sys = ClosureSystem {
            n,
            m,
            off,
            jl,
            error_jacobian: ej,
            error,
            bias,
            row_loop,
            loop_names: model.loops.iter().map(|l| l.name.clone()).collect(),
            sigma_min: f64::INFINITY,
            threshold,
            jlu_inv: None,
            jm: None,
        };
        if rows == m && m > 0 {
            let jlu = sys.jlu();
            sys.sigma_min = singular_values(&jlu).last().copied().unwrap_or(0.0);
            if sys.sigma_min >= threshold {
                if let Some(inv) = jlu.lu().try_inverse() {
                    let jm = -&inv * sys.jla();
                    sys.jlu_inv = Some(inv);
                    sys.jm = Some(jm);
                }
            }
        } else if m == 0 && rows == 0 {
            sys.jlu_inv = Some(DMatrix::zeros(0, 0));
            sys.jm = Some(DMatrix::zeros(0, n));
        } else {
            sys.sigma_min = 0.0;
        }
        sys
    }

    pub fn rows(&self) -> usize {
        self.jl.nrows()
    }

    pub fn jlu(&self) -> DMatrix<f64> {
        self.jl.columns(self.off, self.m).into_owned()
    }

    pub fn jla(&self) -> DMatrix<f64> {
        self.jl.columns(self.off + self.m, self.n - self.m).into_owned()
    }

    pub fn jlb(&self) -> DMatrix<f64> {
        self.jl.columns(0, self.off).into_owned()
    }

    pub fn is_singular(&self) -> bool {
        self.jm.is_none()
    }

    fn singular(&self) -> Error {
        if self.rows() != self.m {
            return Error::Dimension(format!(
                "{} constraint rows for {} passive DOFs",
                self.rows(),
                self.m
            ));
        }
        Error::SingularLinkage { sigma_min: self.sigma_min, loop_name: self.worst_loop() }
    }

    /// Loop carrying the largest share of the smallest left singular vector.
    pub fn worst_loop(&self) -> String {
        let jlu = self.jlu();
        if jlu.nrows() == 0 || jlu.ncols() == 0 {
            return String::new();
        }
        let svd = jlu.svd(true, false);
        let u = svd.u.unwrap();
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let col = u.column(imin);
        let (row, _) = col.iter().enumerate().fold((0, -1.0), |acc, (i, &x)| {
            if x.abs() > acc.1 {
                (i, x.abs())
            } else {
                acc
            }
        });
        self.row_loop.get(row).map(|&l| self.loop_names[l].clone()).unwrap_or_default()
    }

    /// `J_m = -J_lu^-1 J_la`.
    pub fn mapping_jacobian(&self) -> Result<&DMatrix<f64>> {
        self.jm.as_ref().ok_or_else(|| self.singular())
    }

    pub fn jlu_inverse(&self) -> Result<&DMatrix<f64>> {
        self.jlu_inv.as_ref().ok_or_else(|| self.singular())
    }

    /// `J_lu^-1 x`.
    pub fn solve_passive(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.jlu_inverse()? * x)
    }

    /// `J_lu^-T x`.
    pub fn solve_passive_transpose(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.jlu_inverse()?.tr_mul(x))
    }

    pub fn dfk(&self, qa_dot: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.mapping_jacobian()? * qa_dot)
    }

    /// Passive accelerations for a fixed base (or zero base acceleration).
    pub fn passive_accelerations(&self, qa_dd: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.mapping_jacobian()? * qa_dd - self.solve_passive(&self.bias)?)
    }

    /// Lift base and actuated accelerations to the full `nu_dot`.
    pub fn lift_accelerations(&self, base: &DVector<f64>, qa_dd: &DVector<f64>) -> Result<DVector<f64>> {
        let (off, m, n) = (self.off, self.m, self.n);
        let mut rhs = self.jla() * qa_dd + &self.bias;
        if off > 0 {
            rhs += self.jlb() * base;
        }
        let qu = -self.solve_passive(&rhs)?;
        let mut out = DVector::zeros(off + n);
        out.rows_mut(0, off).copy_from(base);
        out.rows_mut(off, m).copy_from(&qu);
        out.rows_mut(off + m, n - m).copy_from(qa_dd);
        Ok(out)
    }

    /// Linear lift `nu = L [nu_b; theta_dot_a]` of size nv x (off + n - m).
    pub fn lift(&self) -> Result<DMatrix<f64>> {
        let (off, m, n) = (self.off, self.m, self.n);
        let na = n - m;
        let mut l = DMatrix::zeros(off + n, off + na);
        for i in 0..off {
            l[(i, i)] = 1.0;
        }
        if off > 0 && m > 0 {
            let lb = -(self.jlu_inverse()? * self.jlb());
            l.view_mut((off, 0), (m, off)).copy_from(&lb);
        }
        l.view_mut((off, off), (m, na)).copy_from(self.mapping_jacobian()?);
        for i in 0..na {
            l[(off + m + i, off + i)] = 1.0;
        }
        Ok(l)
    }

    pub fn forward_torque_map(&self, tau_u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.mapping_jacobian()?.tr_mul(tau_u))
    }

    fn task_map(&self, sel: &SelectionMap) -> Result<DMatrix<f64>> {
        let pjm = sel.rows(self.mapping_jacobian()?);
        if pjm.nrows() != pjm.ncols() {
            return Err(Error::Dimension(format!(
                "selection has {} rows for {} actuated DOFs",
                pjm.nrows(),
                pjm.ncols()
            )));
        }
        let s = singular_values(&pjm).last().copied().unwrap_or(0.0);
        if s < self.threshold {
            return Err(Error::SingularTaskMap { sigma_min: s });
        }
        Ok(pjm)
    }

    /// `theta_dot_a = (P J_m)^-1 q_dot`.
    pub fn dik(&self, sel: &SelectionMap, q_dot: &DVector<f64>) -> Result<DVector<f64>> {
        let pjm = self.task_map(sel)?;
        pjm.lu().solve(q_dot).ok_or(Error::SingularTaskMap { sigma_min: 0.0 })
    }

    /// `tau_j = (J_m^T P^T)^-1 tau`.
    pub fn inverse_torque_map(&self, sel: &SelectionMap, tau: &DVector<f64>) -> Result<DVector<f64>> {
        let pjm = self.task_map(sel)?;
        pjm.transpose().lu().solve(tau).ok_or(Error::SingularTaskMap { sigma_min: 0.0 })
    }
}

/// Fixed-base closed-chain inverse dynamics. Returns `(tau, lambda)`.
pub fn closed_chain_inverse_dynamics(
    model: &MechanismModel,
    state: &GeneralizedState,
    theta_dd: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if model.floating {
        return Err(Error::BaseKind("fixed"));
    }
    if theta_dd.len() != model.n {
        return Err(Error::Dimension(format!("{} accelerations for {} DOFs", theta_dd.len(), model.n)));
    }
    let kin = forward_kinematics(model, state)?;
    let cs = ClosureSystem::new(model, &kin);
    let residual = (&cs.jl * theta_dd + &cs.bias).norm();
    if residual > CLOSURE_CONSISTENCY_TOL {
        return Err(Error::ClosureInconsistent { residual });
    }
    let jm = cs.mapping_jacobian()?;
    let mm = joint_space_inertia(model, &kin);
    let h = nonlinear_terms(model, &kin, state);
    let (m, n) = (model.m, model.n);
    let fu = mm.rows(0, m) * theta_dd + h.rows(0, m);
    let fa = mm.rows(m, n - m) * theta_dd + h.rows(m, n - m);
    let tau = fa + jm.tr_mul(&fu);
    let lambda = cs.solve_passive_transpose(&fu)?;
    Ok((tau, lambda))
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleReport {
    pub index: usize,
    pub rank: usize,
    pub sigma_min: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub n: usize,
    pub m: usize,
    pub actuated: usize,
    pub constraint_rows: usize,
    pub rows_match: bool,
    pub samples: Vec<SampleReport>,
    pub near_singular: Vec<usize>,
    pub rank_deficient: Vec<usize>,
    pub pass: bool,
}

/// Check that passive motion is fully constrained and the free DOFs match the actuators.
pub fn validate_assumptions(model: &MechanismModel, samples: &[GeneralizedState]) -> Result<AssumptionReport> {
    let rows: usize = model.loops.iter().map(|l| l.rows()).sum();
    let mut out = AssumptionReport {
        n: model.n,
        m: model.m,
        actuated: model.n - model.m,
        constraint_rows: rows,
        rows_match: rows == model.m,
        samples: Vec::new(),
        near_singular: Vec::new(),
        rank_deficient: Vec::new(),
        pass: false,
    };
    for (i, s) in samples.iter().enumerate() {
        let kin = forward_kinematics(model, s)?;
        let cs = ClosureSystem::new(model, &kin);
        let jlu = cs.jlu();
        let sv = singular_values(&jlu);
        let smax = sv.first().copied().unwrap_or(0.0);
        let rank = sv.iter().filter(|&&x| x > 1e-10 * smax.max(1e-300)).count();
        let smin = if jlu.nrows() == jlu.ncols() { sv.last().copied().unwrap_or(f64::INFINITY) } else { 0.0 };
        if rank < model.m || rank < rows {
            out.rank_deficient.push(i);
        }
        if smin < cs.threshold {
            out.near_singular.push(i);
        }
        out.samples.push(SampleReport { index: i, rank, sigma_min: smin });
    }
    out.pass = out.rows_match && out.rank_deficient.is_empty() && out.near_singular.is_empty() && model.m < model.n;
    Ok(out)
}

/// Newton solve of the passive DOFs so that all loops close, keeping base and actuators.
pub fn solve_closure(model: &MechanismModel, state: &GeneralizedState, tol: f64, max_iter: usize) -> Result<GeneralizedState> {
    let mut s = state.clone();
    let (off, m) = (model.base_dofs(), model.m);
    for _ in 0..max_iter {
        let kin = forward_kinematics(model, &s)?;
        let e = closure_error(model, &kin);
        if e.norm() < tol {
            return Ok(s);
        }
        let cs = ClosureSystem::new(model, &kin);
        let ej = cs.error_jacobian.columns(off, m).into_owned();
        let step = ej.lu().solve(&e).ok_or_else(|| cs.singular())?;
        for i in 0..m {
            s.theta[i] -= step[i];
        }
    }
    let kin = forward_kinematics(model, &s)?;
    let e = closure_error(model, &kin).norm();
    if e < tol {
        Ok(s)
    } else {
        Err(Error::MaxIterations { iterations: max_iter, error: e })
    }
}
