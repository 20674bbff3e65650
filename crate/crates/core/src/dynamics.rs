//! Joint-space inertia (composite bodies) and Newton-Euler bias forces.
//!
//! Internally spatial vectors are (angular; linear) at the world origin.

use nalgebra as na;
use na::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};

use crate::kinematics::Kinematics;
use crate::math::skew;
use crate::model::{GeneralizedState, JointKind, MechanismModel};

type V6 = Vector6<f64>;

fn sv(w: &Vector3<f64>, v: &Vector3<f64>) -> V6 {
    V6::new(w.x, w.y, w.z, v.x, v.y, v.z)
}

fn ang(x: &V6) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

fn lin(x: &V6) -> Vector3<f64> {
    Vector3::new(x[3], x[4], x[5])
}

fn cross_motion(v: &V6, m: &V6) -> V6 {
    let (w, vo) = (ang(v), lin(v));
    sv(&w.cross(&ang(m)), &(w.cross(&lin(m)) + vo.cross(&ang(m))))
}

fn cross_force(v: &V6, f: &V6) -> V6 {
    let (w, vo) = (ang(v), lin(v));
    sv(&(w.cross(&ang(f)) + vo.cross(&lin(f))), &w.cross(&lin(f)))
}

/// Spatial inertia of a link about the world origin.
pub fn link_spatial_inertia(model: &MechanismModel, kin: &Kinematics, l: usize) -> Matrix6<f64> {
    let link = &model.links[l];
    let r = kin.rot[l];
    let c = kin.pos[l] + r * link.com;
    let ic = r * link.inertia * r.transpose();
    let cx = skew(&c);
    let m = link.mass;
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&(ic + cx * cx.transpose() * m));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(cx * m));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(cx.transpose() * m));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * m));
    out
}

fn motion_subspace(model: &MechanismModel, kin: &Kinematics, j: usize) -> V6 {
    let z = kin.axis[j];
    match model.joints[j].kind {
        JointKind::Revolute => sv(&z, &kin.joint_pos[j].cross(&z)),
        JointKind::Prismatic => sv(&Vector3::zeros(), &z),
        JointKind::Floating => V6::zeros(),
    }
}

fn base_subspace(p: &Vector3<f64>) -> na::Matrix6<f64> {
    let mut s = Matrix6::zeros();
    for k in 0..3 {
        s[(3 + k, k)] = 1.0;
        let e = Vector3::ith(k, 1.0);
        let pe = p.cross(&e);
        s[(k, 3 + k)] = 1.0;
        for i in 0..3 {
            s[(3 + i, 3 + k)] = pe[i];
        }
    }
    s
}

/// Joint-space inertia matrix M (nv x nv).
pub fn joint_space_inertia(model: &MechanismModel, kin: &Kinematics) -> DMatrix<f64> {
    let nv = model.nv();
    let off = model.base_dofs();
    let mut ic: Vec<Matrix6<f64>> =
        (0..model.links.len()).map(|l| link_spatial_inertia(model, kin, l)).collect();
    for &c in model.order.iter().rev() {
        if let Some(j) = model.parent_joint[c] {
            if let Some(p) = model.joints[j].parent {
                let add = ic[c];
                ic[p] += add;
            }
        }
    }
    let mut m = DMatrix::zeros(nv, nv);
    let sb = model.floating.then(|| base_subspace(&kin.pos[model.root]));
    for (dof, &j) in model.dof_joint.iter().enumerate() {
        let c = model.joints[j].child;
        let s = motion_subspace(model, kin, j);
        let f = ic[c] * s;
        let col = off + dof;
        m[(col, col)] = s.dot(&f);
        let parent = model.joints[j].parent.unwrap();
        for k in model.chain(parent) {
            let v = motion_subspace(model, kin, k).dot(&f);
            let row = off + model.joints[k].dof.unwrap();
            m[(row, col)] = v;
            m[(col, row)] = v;
        }
        if let Some(sb) = &sb {
            let fb = sb.transpose() * f;
            for i in 0..6 {
                m[(i, col)] = fb[i];
                m[(col, i)] = fb[i];
            }
        }
    }
    if let Some(sb) = &sb {
        let mbb = sb.transpose() * ic[model.root] * sb;
        m.view_mut((0, 0), (6, 6)).copy_from(&mbb);
    }
    m
}

/// Inverse dynamics `M nu_dot + C nu + g`, with optional velocity and gravity terms.
pub fn rnea(
    model: &MechanismModel,
    kin: &Kinematics,
    state: &GeneralizedState,
    nu_dot: Option<&DVector<f64>>,
    with_velocity: bool,
    with_gravity: bool,
) -> DVector<f64> {
    let nl = model.links.len();
    let off = model.base_dofs();
    let g = if with_gravity { model.gravity } else { Vector3::zeros() };
    let mut vel = vec![V6::zeros(); nl];
    let mut acc = vec![V6::zeros(); nl];
    let root = model.root;
    let qdd = |i: usize| nu_dot.map_or(0.0, |a| a[i]);
    if model.floating {
        let p = kin.pos[root];
        let (v, w) = if with_velocity { state.base_vel.unwrap() } else { (Vector3::zeros(), Vector3::zeros()) };
        let a = Vector3::new(qdd(0), qdd(1), qdd(2));
        let wd = Vector3::new(qdd(3), qdd(4), qdd(5));
        vel[root] = sv(&w, &(v + p.cross(&w)));
        acc[root] = sv(&wd, &(a + v.cross(&w) + p.cross(&wd) - g));
    } else {
        acc[root] = sv(&Vector3::zeros(), &(-g));
    }
    let mut force = vec![V6::zeros(); nl];
    for &c in &model.order {
        if let Some(j) = model.parent_joint[c] {
            let jt = &model.joints[j];
            if let (Some(p), Some(dof)) = (jt.parent, jt.dof) {
                let s = motion_subspace(model, kin, j);
                let qd = if with_velocity { state.theta_dot[dof] } else { 0.0 };
                vel[c] = vel[p] + s * qd;
                acc[c] = acc[p] + s * qdd(off + dof) + cross_motion(&vel[c], &(s * qd));
            }
        }
        let inertia = link_spatial_inertia(model, kin, c);
        force[c] = inertia * acc[c] + cross_force(&vel[c], &(inertia * vel[c]));
    }
    let mut tau = DVector::zeros(model.nv());
    for &c in model.order.iter().rev() {
        if let Some(j) = model.parent_joint[c] {
            let jt = &model.joints[j];
            if let (Some(p), Some(dof)) = (jt.parent, jt.dof) {
                tau[off + dof] = motion_subspace(model, kin, j).dot(&force[c]);
                let fc = force[c];
                force[p] += fc;
            }
        }
    }
    if model.floating {
        let fb = base_subspace(&kin.pos[root]).transpose() * force[root];
        tau.rows_mut(0, 6).copy_from(&fb);
    }
    tau
}

/// Coriolis, centrifugal and gravity terms h(q, nu).
pub fn nonlinear_terms(model: &MechanismModel, kin: &Kinematics, state: &GeneralizedState) -> DVector<f64> {
    rnea(model, kin, state, None, true, true)
}

/// Gravity terms g(q) = h(q, 0).
pub fn gravity_terms(model: &MechanismModel, kin: &Kinematics, state: &GeneralizedState) -> DVector<f64> {
    rnea(model, kin, state, None, false, true)
}

/// Gravitational potential energy, zero at the world origin.
pub fn potential_energy(model: &MechanismModel, kin: &Kinematics) -> f64 {
    model
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| -l.mass * model.gravity.dot(&(kin.pos[i] + kin.rot[i] * l.com)))
        .sum()
}
