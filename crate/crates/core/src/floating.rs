//! Constrained floating-base dynamics and QP inverse dynamics.

use nalgebra as na;
use na::{DMatrix, DVector, Matrix3, Vector3};

use crate::closure::ClosureSystem;
use crate::dynamics::{gravity_terms, joint_space_inertia, nonlinear_terms};
use crate::error::{Error, Result};
use crate::kinematics::{fill_point_jacobian, forward_kinematics, frame_acceleration_bias, frame_jacobian, Kinematics};
use crate::model::{Contact, FrameRef, GeneralizedState, MechanismModel};
use crate::qp::{self, KktResiduals, QpOptions, QuadraticProgram};

pub const STANDARD_GRAVITY: f64 = 9.80665;

/// World normal and two tangents of a contact.
#[derive(Clone, Copy, Debug)]
pub struct ContactFrame {
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub t1: Vector3<f64>,
    pub t2: Vector3<f64>,
}

pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let e = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let t1 = (e - n * n.dot(&e)).normalize();
    (t1, n.cross(&t1))
}

#[derive(Clone, Debug)]
pub struct DynamicsComponents {
    pub n: usize,
    pub m: usize,
    pub mass_matrix: DMatrix<f64>,
    pub h: DVector<f64>,
    pub g: DVector<f64>,
    /// Stacked world linear point Jacobians, 3c x nv.
    pub jc: DMatrix<f64>,
    pub jc_bias: DVector<f64>,
    pub closure: ClosureSystem,
    pub contacts: Vec<Contact>,
    pub frames: Vec<ContactFrame>,
    pub total_mass: f64,
}

impl DynamicsComponents {
    pub fn nv(&self) -> usize {
        self.n + 6
    }
    pub fn nc(&self) -> usize {
        self.contacts.len()
    }
    pub fn mb(&self) -> DMatrix<f64> {
        self.mass_matrix.rows(0, 6).into_owned()
    }
    pub fn mu(&self) -> DMatrix<f64> {
        self.mass_matrix.rows(6, self.m).into_owned()
    }
    pub fn ma(&self) -> DMatrix<f64> {
        self.mass_matrix.rows(6 + self.m, self.n - self.m).into_owned()
    }
    pub fn hb(&self) -> DVector<f64> {
        self.h.rows(0, 6).into_owned()
    }
    pub fn hu(&self) -> DVector<f64> {
        self.h.rows(6, self.m).into_owned()
    }
    pub fn ha(&self) -> DVector<f64> {
        self.h.rows(6 + self.m, self.n - self.m).into_owned()
    }
    pub fn jcb(&self) -> DMatrix<f64> {
        self.jc.columns(0, 6).into_owned()
    }
    pub fn jcu(&self) -> DMatrix<f64> {
        self.jc.columns(6, self.m).into_owned()
    }
    pub fn jca(&self) -> DMatrix<f64> {
        self.jc.columns(6 + self.m, self.n - self.m).into_owned()
    }

    /// Residual `M nu_dot + h - S tau - J_c' F - J_l' lambda` (infinity norm).
    pub fn equation_residual(&self, nu_dot: &DVector<f64>, tau: &DVector<f64>, f: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        let mut r = &self.mass_matrix * nu_dot + &self.h - self.jc.tr_mul(f) - self.closure.jl.tr_mul(lambda);
        let off = 6 + self.m;
        for i in 0..tau.len() {
            r[off + i] -= tau[i];
        }
        r.amax()
    }
}

pub fn contact_jacobians(model: &MechanismModel, kin: &Kinematics, contacts: &[Contact]) -> (DMatrix<f64>, DVector<f64>, Vec<ContactFrame>) {
    let nv = model.nv();
    let mut jc = DMatrix::zeros(3 * contacts.len(), nv);
    let mut bias = DVector::zeros(3 * contacts.len());
    let mut frames = Vec::with_capacity(contacts.len());
    for (i, c) in contacts.iter().enumerate() {
        let r = kin.rot[c.link];
        let x = kin.pos[c.link] + r * c.point;
        fill_point_jacobian(model, kin, c.link, &x, &mut jc, 3 * i, false);
        let f = FrameRef { link: c.link, rot: Matrix3::identity(), pos: c.point };
        let b = frame_acceleration_bias(kin, &f);
        bias.fixed_rows_mut::<3>(3 * i).copy_from(&b.fixed_rows::<3>(0));
        let n = (r * c.normal).normalize();
        let (t1, t2) = tangent_basis(&n);
        frames.push(ContactFrame { position: x, normal: n, t1, t2 });
    }
    (jc, bias, frames)
}

pub fn assemble(model: &MechanismModel, state: &GeneralizedState, contacts: &[Contact]) -> Result<DynamicsComponents> {
    if !model.floating {
        return Err(Error::BaseKind("floating"));
    }
    let kin = forward_kinematics(model, state)?;
    Ok(assemble_with(model, state, &kin, contacts))
}

pub fn assemble_with(model: &MechanismModel, state: &GeneralizedState, kin: &Kinematics, contacts: &[Contact]) -> DynamicsComponents {
    let (jc, jc_bias, frames) = contact_jacobians(model, kin, contacts);
    DynamicsComponents {
        n: model.n,
        m: model.m,
        mass_matrix: joint_space_inertia(model, kin),
        h: nonlinear_terms(model, kin, state),
        g: gravity_terms(model, kin, state),
        jc,
        jc_bias,
        closure: ClosureSystem::new(model, kin),
        contacts: contacts.to_vec(),
        frames,
        total_mass: model.total_mass(),
    }
}

/// Operational-space task with regularization weights.
#[derive(Clone, Debug)]
pub struct TaskSpec {
    pub jacobian: DMatrix<f64>,
    /// `J_t' nu`.
    pub bias: DVector<f64>,
    pub desired: DVector<f64>,
    pub eps: f64,
    pub gamma: f64,
    pub friction_edges: usize,
}

impl TaskSpec {
    pub const DEFAULT_EPS: f64 = 1e-6;
    pub const DEFAULT_GAMMA: f64 = 1e-6;

    /// Task on a frame (usually the base link) with desired classical acceleration.
    pub fn frame(model: &MechanismModel, kin: &Kinematics, frame: &FrameRef, desired: DVector<f64>) -> Self {
        TaskSpec {
            jacobian: frame_jacobian(model, kin, frame),
            bias: DVector::from_column_slice(frame_acceleration_bias(kin, frame).as_slice()),
            desired,
            eps: Self::DEFAULT_EPS,
            gamma: Self::DEFAULT_GAMMA,
            friction_edges: 4,
        }
    }

    pub fn base(model: &MechanismModel, kin: &Kinematics, desired: DVector<f64>) -> Self {
        Self::frame(model, kin, &FrameRef::at_link(model.root), desired)
    }
}

#[derive(Clone, Debug)]
pub struct QpIdSolution {
    pub nu_dot: DVector<f64>,
    pub forces: DVector<f64>,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub variables: usize,
}

/// Forces enter the QP divided by this scale so they are O(1).
pub fn force_scale(total_mass: f64) -> f64 {
    total_mass.max(1e-3) * STANDARD_GRAVITY
}

fn cone_rows(frames: &[ContactFrame], contacts: &[Contact], edges: usize, col0: usize, ncols: usize) -> (DMatrix<f64>, DVector<f64>) {
    let per = 1 + edges;
    let mut g = DMatrix::zeros(per * frames.len(), ncols);
    for (i, (f, c)) in frames.iter().zip(contacts).enumerate() {
        let r0 = per * i;
        let col = col0 + 3 * i;
        for k in 0..3 {
            g[(r0, col + k)] = -f.normal[k];
        }
        for e in 0..edges {
            let ang = 2.0 * std::f64::consts::PI * e as f64 / edges as f64;
            let (ca, sa) = (ang.cos(), ang.sin());
            // exact zeros keep the four-edge pyramid axis aligned
            let (ca, sa) = (if ca.abs() < 1e-15 { 0.0 } else { ca }, if sa.abs() < 1e-15 { 0.0 } else { sa });
            let d = f.t1 * ca + f.t2 * sa;
            for k in 0..3 {
                g[(r0 + 1 + e, col + k)] = d[k] - c.mu * f.normal[k];
            }
        }
    }
    let h = DVector::zeros(g.nrows());
    (g, h)
}

/// Step 1: minimize the task error under dynamics, contact, loop and cone constraints.
pub fn qp_inverse_dynamics(dc: &DynamicsComponents, task: &TaskSpec) -> Result<QpIdSolution> {
    let nv = dc.nv();
    let nf = 3 * dc.nc();
    let nx = nv + nf;
    let s = force_scale(dc.total_mass);
    let mut qp = QuadraticProgram::new(nx);
    let mut jt = DMatrix::zeros(task.jacobian.nrows(), nx);
    jt.columns_mut(0, nv).copy_from(&task.jacobian);
    qp.add_term(jt, &task.desired - &task.bias, 1.0);
    let mut reg = DMatrix::zeros(nv, nx);
    reg.columns_mut(0, nv).fill_with_identity();
    qp.add_term(reg, DVector::zeros(nv), task.eps);
    if nf > 0 {
        let mut rf = DMatrix::zeros(nf, nx);
        rf.columns_mut(nv, nf).fill_with_identity();
        qp.add_term(rf, DVector::zeros(nf), task.gamma);
    }
    let rows = dc.closure.rows();
    let neq = 6 + nf + rows;
    let mut c = DMatrix::zeros(neq, nx);
    let mut d = DVector::zeros(neq);
    c.view_mut((0, 0), (6, nv)).copy_from(&dc.mb());
    if nf > 0 {
        c.view_mut((0, nv), (6, nf)).copy_from(&(-dc.jcb().transpose() * s));
        c.view_mut((6, 0), (nf, nv)).copy_from(&dc.jc);
        d.rows_mut(6, nf).copy_from(&(-&dc.jc_bias));
    }
    d.rows_mut(0, 6).copy_from(&(-dc.hb()));
    c.view_mut((6 + nf, 0), (rows, nv)).copy_from(&dc.closure.jl);
    d.rows_mut(6 + nf, rows).copy_from(&(-&dc.closure.bias));
    qp.eq_mat = c;
    qp.eq_rhs = d;
    let (g, h) = cone_rows(&dc.frames, &dc.contacts, task.friction_edges, nv, nx);
    qp.ineq_mat = g;
    qp.ineq_upper = h;
    let sol = qp::solve(&qp, &QpOptions::default())?;
    Ok(QpIdSolution {
        nu_dot: sol.x.rows(0, nv).into_owned(),
        forces: sol.x.rows(nv, nf) * s,
        residuals: sol.residuals,
        iterations: sol.iterations,
        variables: nx,
    })
}

/// Step 2: `lambda = J_lu^-T (M_u nu_dot + h_u - J_cu' F)`.
pub fn lagrange_multipliers(dc: &DynamicsComponents, nu_dot: &DVector<f64>, f: &DVector<f64>) -> Result<DVector<f64>> {
    if dc.m == 0 {
        return Ok(DVector::zeros(0));
    }
    let rhs = dc.mu() * nu_dot + dc.hu() - dc.jcu().tr_mul(f);
    dc.closure.solve_passive_transpose(&rhs)
}

/// Step 3: `tau = M_a nu_dot + h_a - J_ca' F - J_la' lambda`.
pub fn actuated_torques(dc: &DynamicsComponents, nu_dot: &DVector<f64>, f: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
    let mut tau = dc.ma() * nu_dot + dc.ha() - dc.jca().tr_mul(f);
    if dc.m > 0 {
        tau -= dc.closure.jla().tr_mul(lambda);
    }
    tau
}

#[derive(Clone, Debug)]
pub struct InverseDynamicsResult {
    pub nu_dot: DVector<f64>,
    pub forces: DVector<f64>,
    pub lambda: DVector<f64>,
    pub tau: DVector<f64>,
    pub residuals: KktResiduals,
    pub variables: usize,
}

/// The three steps in sequence on the full formulation.
pub fn inverse_dynamics(dc: &DynamicsComponents, task: &TaskSpec) -> Result<InverseDynamicsResult> {
    let s = qp_inverse_dynamics(dc, task)?;
    let lambda = lagrange_multipliers(dc, &s.nu_dot, &s.forces)?;
    let tau = actuated_torques(dc, &s.nu_dot, &s.forces, &lambda);
    Ok(InverseDynamicsResult { nu_dot: s.nu_dot, forces: s.forces, lambda, tau, residuals: s.residuals, variables: s.variables })
}

/// Dynamics in base plus actuated accelerations, `nu_dot = L x + l0`.
#[derive(Clone, Debug)]
pub struct ProjectedDynamics {
    pub lift: DMatrix<f64>,
    pub lift_offset: DVector<f64>,
    pub mbm: DMatrix<f64>,
    pub hbm: DVector<f64>,
    pub mum: DMatrix<f64>,
    pub hum: DVector<f64>,
    pub mam: DMatrix<f64>,
    pub ham: DVector<f64>,
    /// Joint-space part `(M_a + J_m' M_u) L`.
    pub mjm: DMatrix<f64>,
    pub hjm: DVector<f64>,
    /// `J_ca + J_cu J_m`.
    pub jcmj: DMatrix<f64>,
    /// `J_c L` and the matching bias.
    pub jcm: DMatrix<f64>,
    pub jcm_bias: DVector<f64>,
    pub jcb: DMatrix<f64>,
    pub jcu: DMatrix<f64>,
    pub jm: DMatrix<f64>,
    pub n_actuated: usize,
    pub nc: usize,
    pub total_mass: f64,
    pub frames: Vec<ContactFrame>,
    pub contacts: Vec<Contact>,
    jlu_inv: DMatrix<f64>,
}

pub fn project(dc: &DynamicsComponents) -> Result<ProjectedDynamics> {
    let cs = &dc.closure;
    let lift = cs.lift()?;
    let jm = cs.mapping_jacobian()?.clone();
    let nv = dc.nv();
    let mut l0 = DVector::zeros(nv);
    if dc.m > 0 {
        l0.rows_mut(6, dc.m).copy_from(&(-cs.solve_passive(&cs.bias)?));
    }
    let (mb, mu, ma) = (dc.mb(), dc.mu(), dc.ma());
    let mj = &ma + jm.tr_mul(&mu);
    let hj = dc.ha() + jm.tr_mul(&dc.hu());
    let jcu = dc.jcu();
    Ok(ProjectedDynamics {
        mbm: &mb * &lift,
        hbm: dc.hb() + &mb * &l0,
        mum: &mu * &lift,
        hum: dc.hu() + &mu * &l0,
        mam: &ma * &lift,
        ham: dc.ha() + &ma * &l0,
        mjm: &mj * &lift,
        hjm: hj + &mj * &l0,
        jcmj: dc.jca() + &jcu * &jm,
        jcm: &dc.jc * &lift,
        jcm_bias: &dc.jc_bias + &dc.jc * &l0,
        jcb: dc.jcb(),
        jcu,
        jm,
        n_actuated: dc.n - dc.m,
        nc: dc.nc(),
        total_mass: dc.total_mass,
        frames: dc.frames.clone(),
        contacts: dc.contacts.clone(),
        jlu_inv: cs.jlu_inverse()?.clone(),
        lift,
        lift_offset: l0,
    })
}

impl ProjectedDynamics {
    /// Decision-variable count of the projected QP.
    pub fn variables(&self) -> usize {
        6 + self.n_actuated + 3 * self.nc
    }

    pub fn lift_acceleration(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.lift * x + &self.lift_offset
    }

    /// Task Jacobian and bias in projected coordinates.
    pub fn project_task(&self, task: &TaskSpec) -> (DMatrix<f64>, DVector<f64>) {
        (&task.jacobian * &self.lift, &task.bias + &task.jacobian * &self.lift_offset)
    }

    pub fn multipliers(&self, x: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
        let rhs = &self.mum * x + &self.hum - self.jcu.tr_mul(f);
        self.jlu_inv.tr_mul(&rhs)
    }

    pub fn torques(&self, x: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
        &self.mjm * x + &self.hjm - self.jcmj.tr_mul(f)
    }
}

#[derive(Clone, Debug)]
pub struct ProjectedIdSolution {
    /// Base and actuated accelerations.
    pub x: DVector<f64>,
    pub forces: DVector<f64>,
    pub residuals: KktResiduals,
    pub variables: usize,
}

pub fn projected_qp_inverse_dynamics(pd: &ProjectedDynamics, task: &TaskSpec) -> Result<ProjectedIdSolution> {
    let nxa = 6 + pd.n_actuated;
    let nf = 3 * pd.nc;
    let nx = nxa + nf;
    let s = force_scale(pd.total_mass);
    let (jtm, jtm_bias) = pd.project_task(task);
    let mut qp = QuadraticProgram::new(nx);
    let mut jt = DMatrix::zeros(jtm.nrows(), nx);
    jt.columns_mut(0, nxa).copy_from(&jtm);
    qp.add_term(jt, &task.desired - &jtm_bias, 1.0);
    // same acceleration regularization as the full problem, through the lift
    let nv = pd.lift.nrows();
    let mut reg = DMatrix::zeros(nv, nx);
    reg.columns_mut(0, nxa).copy_from(&pd.lift);
    qp.add_term(reg, -&pd.lift_offset, task.eps);
    if nf > 0 {
        let mut rf = DMatrix::zeros(nf, nx);
        rf.columns_mut(nxa, nf).fill_with_identity();
        qp.add_term(rf, DVector::zeros(nf), task.gamma);
    }
    let neq = 6 + nf;
    let mut c = DMatrix::zeros(neq, nx);
    let mut d = DVector::zeros(neq);
    c.view_mut((0, 0), (6, nxa)).copy_from(&pd.mbm);
    d.rows_mut(0, 6).copy_from(&(-&pd.hbm));
    if nf > 0 {
        c.view_mut((0, nxa), (6, nf)).copy_from(&(-pd.jcb.transpose() * s));
        c.view_mut((6, 0), (nf, nxa)).copy_from(&pd.jcm);
        d.rows_mut(6, nf).copy_from(&(-&pd.jcm_bias));
    }
    qp.eq_mat = c;
    qp.eq_rhs = d;
    let (g, h) = cone_rows(&pd.frames, &pd.contacts, task.friction_edges, nxa, nx);
    qp.ineq_mat = g;
    qp.ineq_upper = h;
    let sol = qp::solve(&qp, &QpOptions::default())?;
    Ok(ProjectedIdSolution {
        x: sol.x.rows(0, nxa).into_owned(),
        forces: sol.x.rows(nxa, nf) * s,
        residuals: sol.residuals,
        variables: nx,
    })
}

/// Projected pipeline: QP, then multipliers and torques from projected blocks.
pub fn projected_inverse_dynamics(pd: &ProjectedDynamics, task: &TaskSpec) -> Result<InverseDynamicsResult> {
    let s = projected_qp_inverse_dynamics(pd, task)?;
    let lambda = pd.multipliers(&s.x, &s.forces);
    let tau = pd.torques(&s.x, &s.forces);
    Ok(InverseDynamicsResult {
        nu_dot: pd.lift_acceleration(&s.x),
        forces: s.forces,
        lambda,
        tau,
        residuals: s.residuals,
        variables: s.variables,
    })
}
