//! Relative kinematics of frame b with respect to frame a, expressed in a.

use nalgebra as na;
use na::{DMatrix, Matrix3, Vector3, Vector6};

use crate::kinematics::{frame_jacobian, FrameKinematics, Kinematics};
use crate::math::skew;
use crate::model::{FrameRef, MechanismModel};

#[derive(Clone, Debug)]
pub struct RelativeKinematics {
    /// Rotation a <- b.
    pub rot: Matrix3<f64>,
    /// Position of b relative to a, in a.
    pub pos: Vector3<f64>,
    pub lin_vel: Vector3<f64>,
    pub ang_vel: Vector3<f64>,
    /// 6 x nv, linear rows first.
    pub jacobian: DMatrix<f64>,
    /// Linear part first.
    pub bias: Vector6<f64>,
}

pub fn relative_velocity(a: &FrameKinematics, b: &FrameKinematics) -> (Vector3<f64>, Vector3<f64>) {
    let rt = a.rot.transpose();
    let p = b.pos - a.pos;
    let v = rt * (b.lin_vel - a.lin_vel - a.ang_vel.cross(&p));
    let w = rt * (b.ang_vel - a.ang_vel);
    (v, w)
}

/// Relative Jacobian from the world Jacobians of both frames.
pub fn relative_jacobian(
    a: &FrameKinematics,
    ja: &DMatrix<f64>,
    b: &FrameKinematics,
    jb: &DMatrix<f64>,
) -> DMatrix<f64> {
    let rt = a.rot.transpose();
    let px = skew(&(b.pos - a.pos));
    let nv = ja.ncols();
    let mut out = DMatrix::zeros(6, nv);
    let (ja_l, ja_a) = (ja.rows(0, 3), ja.rows(3, 3));
    let (jb_l, jb_a) = (jb.rows(0, 3), jb.rows(3, 3));
    out.rows_mut(0, 3).copy_from(&(rt * (jb_l - ja_l + px * ja_a)));
    out.rows_mut(3, 3).copy_from(&(rt * (jb_a - ja_a)));
    out
}

pub fn relative_acceleration_bias(a: &FrameKinematics, b: &FrameKinematics) -> Vector6<f64> {
    let rt = a.rot.transpose();
    let p = b.pos - a.pos;
    let wa = a.ang_vel;
    let vab = b.lin_vel - a.lin_vel;
    let extra = -2.0 * wa.cross(&vab) + wa.cross(&wa.cross(&p));
    let lin = rt * (b.lin_bias - a.lin_bias - a.ang_bias.cross(&p) + extra);
    let angular = rt * (b.ang_bias - a.ang_bias - wa.cross(&b.ang_vel));
    let mut out = Vector6::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&lin);
    out.fixed_rows_mut::<3>(3).copy_from(&angular);
    out
}

pub fn relative_kinematics(
    model: &MechanismModel,
    kin: &Kinematics,
    fa: &FrameRef,
    fb: &FrameRef,
) -> RelativeKinematics {
    let a = kin.frame(fa);
    let b = kin.frame(fb);
    let (lin_vel, ang_vel) = relative_velocity(&a, &b);
    let ja = frame_jacobian(model, kin, fa);
    let jb = frame_jacobian(model, kin, fb);
    RelativeKinematics {
        rot: a.rot.transpose() * b.rot,
        pos: a.rot.transpose() * (b.pos - a.pos),
        lin_vel,
        ang_vel,
        jacobian: relative_jacobian(&a, &ja, &b, &jb),
        bias: relative_acceleration_bias(&a, &b),
    }
}
