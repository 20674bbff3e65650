//! Immutable mechanism model and generalized state.

use nalgebra as na;
use na::{DVector, Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Floating,
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the COM, link axes.
    pub inertia: Matrix3<f64>,
}

#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Parent link, `None` for the floating joint.
    pub parent: Option<usize>,
    pub child: usize,
    pub origin_rot: Matrix3<f64>,
    pub origin_pos: Vector3<f64>,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    pub actuated: bool,
    pub limits: Option<(f64, f64)>,
    /// DOF index, `None` for the floating joint.
    pub dof: Option<usize>,
    /// Nominal coordinate; for the floating joint the origin holds the nominal base pose.
    pub home: f64,
}

/// A frame rigidly attached to a link.
#[derive(Clone, Debug)]
pub struct FrameRef {
    pub link: usize,
    pub rot: Matrix3<f64>,
    pub pos: Vector3<f64>,
}

impl FrameRef {
    pub fn at_link(link: usize) -> Self {
        FrameRef { link, rot: Matrix3::identity(), pos: Vector3::zeros() }
    }
}

#[derive(Clone, Debug)]
pub struct LoopConstraint {
    pub name: String,
    pub frame_a: FrameRef,
    pub frame_u: FrameRef,
    /// x, y, z, rx, ry, rz expressed in frame a.
    pub mask: [bool; 6],
    /// One constant per masked direction, in mask order.
    pub constants: Vec<f64>,
}

impl LoopConstraint {
    pub fn rows(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug)]
pub struct Contact {
    pub name: String,
    pub link: usize,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct ActuatorSpec {
    pub name: String,
    /// DOF index driven by this actuator.
    pub dof: usize,
    /// Ball-screw lead [m].
    pub lead: f64,
    pub efficiency: f64,
}

#[derive(Clone, Debug)]
pub struct MechanismModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub gravity: Vector3<f64>,
    pub floating: bool,
    pub root: usize,
    /// Links in parent-before-child order.
    pub order: Vec<usize>,
    /// Joint whose child is the link; `None` for a fixed root.
    pub parent_joint: Vec<Option<usize>>,
    /// DOF index to joint index.
    pub dof_joint: Vec<usize>,
    pub n: usize,
    pub m: usize,
    pub loops: Vec<LoopConstraint>,
    pub contacts: Vec<Contact>,
    pub actuators: Vec<ActuatorSpec>,
    /// Passive DOF indices reported by the selection map.
    pub selection: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasePose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for BasePose {
    fn default() -> Self {
        BasePose { position: Vector3::zeros(), orientation: UnitQuaternion::identity() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedState {
    pub base: Option<BasePose>,
    pub theta: DVector<f64>,
    /// World linear and angular base velocity.
    pub base_vel: Option<(Vector3<f64>, Vector3<f64>)>,
    pub theta_dot: DVector<f64>,
}

impl GeneralizedState {
    /// Zero velocity state at the given DOF positions.
    pub fn new(model: &MechanismModel, theta: DVector<f64>) -> Self {
        let n = model.n;
        GeneralizedState {
            base: model.floating.then(BasePose::default),
            theta,
            base_vel: model.floating.then(|| (Vector3::zeros(), Vector3::zeros())),
            theta_dot: DVector::zeros(n),
        }
    }

    pub fn zero(model: &MechanismModel) -> Self {
        Self::new(model, DVector::zeros(model.n))
    }

    /// Generalized velocity (base linear, base angular, DOF rates).
    pub fn nu(&self) -> DVector<f64> {
        match self.base_vel {
            Some((v, w)) => {
                let n = self.theta_dot.len();
                let mut out = DVector::zeros(n + 6);
                out.fixed_rows_mut::<3>(0).copy_from(&v);
                out.fixed_rows_mut::<3>(3).copy_from(&w);
                out.rows_mut(6, n).copy_from(&self.theta_dot);
                out
            }
            None => self.theta_dot.clone(),
        }
    }

    pub fn set_nu(&mut self, nu: &DVector<f64>) {
        match self.base_vel {
            Some(_) => {
                let n = self.theta_dot.len();
                self.base_vel = Some((nu.fixed_rows::<3>(0).into(), nu.fixed_rows::<3>(3).into()));
                self.theta_dot.copy_from(&nu.rows(6, n));
            }
            None => self.theta_dot.copy_from(nu),
        }
    }

    /// Advance positions by `dt * nu`; the base quaternion uses the exponential map.
    pub fn integrate(&mut self, nu: &DVector<f64>, dt: f64) {
        let off = if self.base.is_some() { 6 } else { 0 };
        if let Some(b) = self.base.as_mut() {
            let v = Vector3::new(nu[0], nu[1], nu[2]);
            let w = Vector3::new(nu[3], nu[4], nu[5]);
            b.position += v * dt;
            b.orientation = UnitQuaternion::new(w * dt) * b.orientation;
        }
        let n = self.theta.len();
        self.theta += nu.rows(off, n) * dt;
    }
}

impl MechanismModel {
    /// Velocity offset of the first DOF column.
    pub fn base_dofs(&self) -> usize {
        if self.floating {
            6
        } else {
            0
        }
    }

    pub fn nv(&self) -> usize {
        self.n + self.base_dofs()
    }

    pub fn n_actuated(&self) -> usize {
        self.n - self.m
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// DOF index of a named joint.
    pub fn dof_index(&self, name: &str) -> Option<usize> {
        self.joint_index(name).and_then(|j| self.joints[j].dof)
    }

    pub fn dof_name(&self, dof: usize) -> &str {
        &self.joints[self.dof_joint[dof]].name
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Resolve a frame name: a link, a contact, or `<loop>.a` / `<loop>.u`.
    pub fn frame(&self, name: &str) -> Result<FrameRef> {
        if let Some(i) = self.link_index(name) {
            return Ok(FrameRef::at_link(i));
        }
        if let Some(c) = self.contacts.iter().find(|c| c.name == name) {
            return Ok(FrameRef { link: c.link, rot: Matrix3::identity(), pos: c.point });
        }
        if let Some((lp, side)) = name.rsplit_once('.') {
            if let Some(l) = self.loops.iter().find(|l| l.name == lp) {
                match side {
                    "a" => return Ok(l.frame_a.clone()),
                    "u" => return Ok(l.frame_u.clone()),
                    _ => {}
                }
            }
        }
        Err(Error::UnknownFrame(name.to_string()))
    }

    /// DOF limits as (lo, hi) with infinite bounds where none are declared.
    pub fn dof_limits(&self, dof: usize) -> (f64, f64) {
        self.joints[self.dof_joint[dof]].limits.unwrap_or((f64::NEG_INFINITY, f64::INFINITY))
    }

    /// Ancestor DOF joints of a link, deepest first.
    pub fn chain(&self, link: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut l = link;
        while let Some(j) = self.parent_joint[l] {
            let jt = &self.joints[j];
            if jt.dof.is_some() {
                out.push(j);
            }
            match jt.parent {
                Some(p) => l = p,
                None => break,
            }
        }
        out
    }

    pub fn check_state(&self, s: &GeneralizedState) -> Result<()> {
        if s.theta.len() != self.n || s.theta_dot.len() != self.n {
            return Err(Error::Dimension(format!(
                "state has {} positions and {} rates, model has {} DOFs",
                s.theta.len(),
                s.theta_dot.len(),
                self.n
            )));
        }
        if s.base.is_some() != self.floating || s.base_vel.is_some() != self.floating {
            return Err(Error::Dimension("base pose presence does not match model".into()));
        }
        if let Some(b) = &s.base {
            let nq = b.orientation.quaternion().norm();
            if (nq - 1.0).abs() > 1e-10 {
                return Err(Error::Dimension(format!("base quaternion norm {nq}")));
            }
        }
        Ok(())
    }

    /// Actuated slice of a full DOF vector.
    pub fn actuated(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(self.m, self.n - self.m).into_owned()
    }

    pub fn passive(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(0, self.m).into_owned()
    }

    /// Nominal configuration at rest, closure-consistent for assembled fixtures.
    pub fn home_state(&self) -> GeneralizedState {
        let theta = DVector::from_iterator(self.n, self.dof_joint.iter().map(|&j| self.joints[j].home));
        let mut s = GeneralizedState::new(self, theta);
        if let Some(j) = self.joints.iter().find(|j| j.kind == JointKind::Floating) {
            s.base = Some(BasePose {
                position: j.origin_pos,
                orientation: UnitQuaternion::from_rotation_matrix(&na::Rotation3::from_matrix_unchecked(j.origin_rot)),
            });
        }
        s
    }
}
