//! Forward kinematics, frame Jacobians and acceleration biases.
//!
//! Velocities are classical: linear velocity of a point and angular velocity,
//! both in world coordinates. Jacobians stack the linear rows first.

use std::collections::BTreeMap;

use nalgebra as na;
use na::{DMatrix, Matrix3, Rotation3, Unit, Vector3, Vector6};
use serde::Serialize;

use crate::error::Result;
use crate::math::skew;
use crate::model::{FrameRef, GeneralizedState, JointKind, MechanismModel};

#[derive(Clone, Debug, Serialize)]
pub struct FramePose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

/// World kinematics of a frame, with the bias acceleration at zero `nu_dot`.
#[derive(Clone, Debug)]
pub struct FrameKinematics {
    pub rot: Matrix3<f64>,
    pub pos: Vector3<f64>,
    pub lin_vel: Vector3<f64>,
    pub ang_vel: Vector3<f64>,
    pub lin_bias: Vector3<f64>,
    pub ang_bias: Vector3<f64>,
}

/// One forward pass over the tree.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub rot: Vec<Matrix3<f64>>,
    pub pos: Vec<Vector3<f64>>,
    pub omega: Vec<Vector3<f64>>,
    pub vel: Vec<Vector3<f64>>,
    pub alpha: Vec<Vector3<f64>>,
    pub acc: Vec<Vector3<f64>>,
    /// World axis per joint (zero for the floating joint).
    pub axis: Vec<Vector3<f64>>,
    /// World origin of each joint frame.
    pub joint_pos: Vec<Vector3<f64>>,
}

pub fn forward_kinematics(model: &MechanismModel, state: &GeneralizedState) -> Result<Kinematics> {
    model.check_state(state)?;
    let nl = model.links.len();
    let nj = model.joints.len();
    let mut k = Kinematics {
        rot: vec![Matrix3::identity(); nl],
        pos: vec![Vector3::zeros(); nl],
        omega: vec![Vector3::zeros(); nl],
        vel: vec![Vector3::zeros(); nl],
        alpha: vec![Vector3::zeros(); nl],
        acc: vec![Vector3::zeros(); nl],
        axis: vec![Vector3::zeros(); nj],
        joint_pos: vec![Vector3::zeros(); nj],
    };
    let root = model.root;
    if let (Some(b), Some((v, w))) = (&state.base, &state.base_vel) {
        k.rot[root] = b.orientation.to_rotation_matrix().into_inner();
        k.pos[root] = b.position;
        k.vel[root] = *v;
        k.omega[root] = *w;
        if let Some(j) = model.parent_joint[root] {
            k.joint_pos[j] = b.position;
        }
    }
    for &c in &model.order {
        let Some(j) = model.parent_joint[c] else { continue };
        let jt = &model.joints[j];
        let (Some(p), Some(dof)) = (jt.parent, jt.dof) else { continue };
        let q = state.theta[dof];
        let qd = state.theta_dot[dof];
        let rjf = k.rot[p] * jt.origin_rot;
        let o = k.pos[p] + k.rot[p] * jt.origin_pos;
        let z = rjf * jt.axis;
        k.axis[j] = z;
        k.joint_pos[j] = o;
        let (wp, vp, ap, alp, pp) = (k.omega[p], k.vel[p], k.acc[p], k.alpha[p], k.pos[p]);
        match jt.kind {
            JointKind::Revolute => {
                let r = Rotation3::from_axis_angle(&Unit::new_unchecked(jt.axis), q);
                k.rot[c] = rjf * r.matrix();
                k.pos[c] = o;
                let d = o - pp;
                k.omega[c] = wp + z * qd;
                k.vel[c] = vp + wp.cross(&d);
                k.alpha[c] = alp + wp.cross(&z) * qd;
                k.acc[c] = ap + alp.cross(&d) + wp.cross(&wp.cross(&d));
            }
            JointKind::Prismatic => {
                k.rot[c] = rjf;
                k.pos[c] = o + z * q;
                let d = k.pos[c] - pp;
                k.omega[c] = wp;
                k.vel[c] = vp + wp.cross(&d) + z * qd;
                k.alpha[c] = alp;
                k.acc[c] = ap + alp.cross(&d) + wp.cross(&wp.cross(&d)) + wp.cross(&z) * (2.0 * qd);
            }
            JointKind::Floating => unreachable!("floating joint carries no DOF"),
        }
    }
    Ok(k)
}

impl Kinematics {
    pub fn pose(&self, link: usize) -> FramePose {
        FramePose { rotation: self.rot[link], position: self.pos[link] }
    }

    /// Poses of every link keyed by name.
    pub fn poses(&self, model: &MechanismModel) -> BTreeMap<String, FramePose> {
        model.links.iter().enumerate().map(|(i, l)| (l.name.clone(), self.pose(i))).collect()
    }

    pub fn frame_pose(&self, f: &FrameRef) -> FramePose {
        FramePose {
            rotation: self.rot[f.link] * f.rot,
            position: self.pos[f.link] + self.rot[f.link] * f.pos,
        }
    }

    pub fn frame(&self, f: &FrameRef) -> FrameKinematics {
        let l = f.link;
        let r = self.rot[l] * f.pos;
        let w = self.omega[l];
        FrameKinematics {
            rot: self.rot[l] * f.rot,
            pos: self.pos[l] + r,
            lin_vel: self.vel[l] + w.cross(&r),
            ang_vel: w,
            lin_bias: self.acc[l] + self.alpha[l].cross(&r) + w.cross(&w.cross(&r)),
            ang_bias: self.alpha[l],
        }
    }

    /// Velocity of a world point rigidly attached to a link.
    pub fn point_velocity(&self, link: usize, x: &Vector3<f64>) -> Vector3<f64> {
        self.vel[link] + self.omega[link].cross(&(x - self.pos[link]))
    }
}

/// 6 x nv Jacobian of a frame: linear rows, then angular rows.
pub fn frame_jacobian(model: &MechanismModel, kin: &Kinematics, f: &FrameRef) -> DMatrix<f64> {
    let x = kin.pos[f.link] + kin.rot[f.link] * f.pos;
    let mut jac = DMatrix::zeros(6, model.nv());
    fill_point_jacobian(model, kin, f.link, &x, &mut jac, 0, true);
    jac
}

/// Write the Jacobian of world point `x` on `link` into `out` starting at `row`.
/// With `angular`, three angular rows follow the linear ones.
pub fn fill_point_jacobian(
    model: &MechanismModel,
    kin: &Kinematics,
    link: usize,
    x: &Vector3<f64>,
    out: &mut DMatrix<f64>,
    row: usize,
    angular: bool,
) {
    let off = model.base_dofs();
    for j in model.chain(link) {
        let jt = &model.joints[j];
        let col = off + jt.dof.unwrap();
        let z = kin.axis[j];
        match jt.kind {
            JointKind::Revolute => {
                let lin = z.cross(&(x - kin.joint_pos[j]));
                for i in 0..3 {
                    out[(row + i, col)] = lin[i];
                    if angular {
                        out[(row + 3 + i, col)] = z[i];
                    }
                }
            }
            JointKind::Prismatic => {
                for i in 0..3 {
                    out[(row + i, col)] = z[i];
                }
            }
            JointKind::Floating => {}
        }
    }
    if model.floating {
        let s = -skew(&(x - kin.pos[model.root]));
        for i in 0..3 {
            out[(row + i, i)] = 1.0;
            for c in 0..3 {
                out[(row + i, 3 + c)] = s[(i, c)];
            }
            if angular {
                out[(row + 3 + i, 3 + i)] = 1.0;
            }
        }
    }
}

/// Classical acceleration bias of a frame, linear part first.
pub fn frame_acceleration_bias(kin: &Kinematics, f: &FrameRef) -> Vector6<f64> {
    let fk = kin.frame(f);
    let mut out = Vector6::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&fk.lin_bias);
    out.fixed_rows_mut::<3>(3).copy_from(&fk.ang_bias);
    out
}
