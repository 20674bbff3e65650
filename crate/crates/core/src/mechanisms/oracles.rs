//! Independent oracles: closed-form geometry, with finite differences where no
//! closed-form derivative is at hand.

use nalgebra as na;
use na::{DMatrix, DVector, Matrix2, Vector2, Vector3};

use super::{knee_points, DiffParams, CRANK_L, CRANK_R};
use crate::error::{Error, Result};
use crate::math::rpy_to_matrix;
use crate::model::MechanismModel;

/// Steps of the five-point stencils for first and second derivatives.
pub const FD_STEP: f64 = 1e-4;
pub const FD_STEP2: f64 = 5e-4;

fn dof(model: &MechanismModel, name: &str) -> usize {
    model.dof_index(name).unwrap_or_else(|| panic!("fixture DOF `{name}` missing"))
}

pub trait ClosureOracle {
    fn model(&self) -> &MechanismModel;

    /// Closure-consistent DOF vector (model order) for the actuated values.
    fn configuration(&self, qa: &DVector<f64>) -> Result<DVector<f64>>;

    fn passive(&self, qa: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.configuration(qa)?.rows(0, self.model().m).into_owned())
    }

    /// `d theta_u / d theta_a`.
    fn mapping_jacobian(&self, qa: &DVector<f64>) -> Result<DMatrix<f64>> {
        let m = self.model().m;
        let mut j = DMatrix::zeros(m, qa.len());
        for k in 0..qa.len() {
            let f = |t: f64| {
                let mut x = qa.clone();
                x[k] += t;
                self.passive(&x)
            };
            let d1 = |h: f64| -> Result<DVector<f64>> { Ok((f(-2.0 * h)? - f(2.0 * h)? + (f(h)? - f(-h)?) * 8.0) / (12.0 * h)) };
            let (coarse, fine) = (d1(FD_STEP)?, d1(FD_STEP * 0.5)?);
            j.set_column(k, &((fine * 16.0 - coarse) / 15.0));
        }
        Ok(j)
    }

    /// Passive accelerations along `qa + t qa_dot + t^2/2 qa_dd`.
    fn passive_accelerations(&self, qa: &DVector<f64>, qa_dot: &DVector<f64>, qa_dd: &DVector<f64>) -> Result<DVector<f64>> {
        let g = |t: f64| self.passive(&(qa + qa_dot * t + qa_dd * (0.5 * t * t)));
        let g0 = g(0.0)?;
        let d2 = |h: f64| -> Result<DVector<f64>> {
            Ok(((g(h)? + g(-h)?) * 16.0 - g(2.0 * h)? - g(-2.0 * h)? - &g0 * 30.0) / (12.0 * h * h))
        };
        // Richardson step on the fourth-order stencil
        let (coarse, fine) = (d2(FD_STEP2)?, d2(FD_STEP2 * 0.5)?);
        Ok((fine * 16.0 - coarse) / 15.0)
    }

    /// `d theta_a / d q` for the model's selected passive DOFs.
    fn task_inverse_jacobian(&self, qa: &DVector<f64>) -> Result<DMatrix<f64>> {
        let jm = self.mapping_jacobian(qa)?;
        let sel = &self.model().selection;
        let pjm = DMatrix::from_fn(sel.len(), jm.ncols(), |i, j| jm[(sel[i], j)]);
        pjm.try_inverse().ok_or(Error::SingularTaskMap { sigma_min: 0.0 })
    }
}

/// Closed-form slider-crank.
pub struct CrankOracle {
    pub model: MechanismModel,
    pub r: f64,
    pub l: f64,
    pub d0: f64,
    i_crank: usize,
    i_rod: usize,
    i_slider: usize,
}

impl CrankOracle {
    pub fn new(model: MechanismModel) -> Self {
        let (i_crank, i_rod, i_slider) = (dof(&model, "crank"), dof(&model, "rod"), dof(&model, "slider"));
        let (r, l) = (CRANK_R, CRANK_L);
        CrankOracle { model, r, l, d0: (l * l - r * r).sqrt(), i_crank, i_rod, i_slider }
    }

    /// Slider distance from the crank pivot, `d = r cos psi + sqrt(l^2 - r^2 sin^2 psi)`.
    pub fn slider_distance(&self, psi: f64) -> f64 {
        let s = psi.sin();
        self.r * psi.cos() + (self.l * self.l - self.r * self.r * s * s).sqrt()
    }

    /// Crank angle in [0, pi] (crank above the slide line).
    pub fn crank_angle(&self, d: f64) -> Result<f64> {
        let c = (self.r * self.r + d * d - self.l * self.l) / (2.0 * self.r * d);
        if !(-1.0..=1.0).contains(&c) {
            return Err(Error::OutOfRange(format!("slider distance {d} unreachable")));
        }
        Ok(c.acos())
    }

    /// Rod angle relative to the crank.
    pub fn rod_angle(&self, psi: f64) -> f64 {
        -(self.r * psi.sin() / self.l).asin() - psi
    }

    /// (d', d'', phi', phi'') with respect to the crank angle.
    pub fn derivatives(&self, psi: f64) -> (f64, f64, f64, f64) {
        let (r, l) = (self.r, self.l);
        let (s, c) = psi.sin_cos();
        let w = (l * l - r * r * s * s).sqrt();
        let w3 = w * w * w;
        let d1 = -r * s - r * r * s * c / w;
        let d2 = -r * c - r * r * (c * c - s * s) / w - r.powi(4) * s * s * c * c / w3;
        let p1 = -r * c / w - 1.0;
        let p2 = r * s / w - r.powi(3) * s * c * c / w3;
        (d1, d2, p1, p2)
    }
}

impl ClosureOracle for CrankOracle {
    fn model(&self) -> &MechanismModel {
        &self.model
    }

    fn configuration(&self, qa: &DVector<f64>) -> Result<DVector<f64>> {
        let psi = self.crank_angle(self.d0 + qa[0])?;
        let mut th = DVector::zeros(3);
        th[self.i_crank] = psi;
        th[self.i_rod] = self.rod_angle(psi);
        th[self.i_slider] = qa[0];
        Ok(th)
    }

    fn mapping_jacobian(&self, qa: &DVector<f64>) -> Result<DMatrix<f64>> {
        let psi = self.crank_angle(self.d0 + qa[0])?;
        let (d1, _, p1, _) = self.derivatives(psi);
        let mut j = DMatrix::zeros(2, 1);
        j[(self.i_crank, 0)] = 1.0 / d1;
        j[(self.i_rod, 0)] = p1 / d1;
        Ok(j)
    }

    fn passive_accelerations(&self, qa: &DVector<f64>, qa_dot: &DVector<f64>, qa_dd: &DVector<f64>) -> Result<DVector<f64>> {
        let psi = self.crank_angle(self.d0 + qa[0])?;
        let (d1, d2, p1, p2) = self.derivatives(psi);
        let psi_d = qa_dot[0] / d1;
        let psi_dd = (qa_dd[0] - d2 * psi_d * psi_d) / d1;
        let mut out = DVector::zeros(2);
        out[self.i_crank] = psi_dd;
        out[self.i_rod] = p2 * psi_d * psi_d + p1 * psi_dd;
        Ok(out)
    }

    fn task_inverse_jacobian(&self, qa: &DVector<f64>) -> Result<DMatrix<f64>> {
        let psi = self.crank_angle(self.d0 + qa[0])?;
        Ok(DMatrix::from_element(1, 1, self.derivatives(psi).0))
    }
}

/// Differential: closed-form inverse kinematics, Newton for the forward map.
pub struct DiffOracle {
    pub model: MechanismModel,
    pub params: DiffParams,
    roll: usize,
    pitch: usize,
    legs: [[usize; 4]; 2],
}

/// Leg solution: (ux, uy, spin, actuator).
type Leg = [f64; 4];

impl DiffOracle {
    pub fn new(model: MechanismModel) -> Self {
        let leg = |s: &str| ["ux", "uy", "spin", "act"].map(|j| dof(&model, &format!("{s}_{j}")));
        let legs = [leg("l"), leg("r")];
        DiffOracle { roll: dof(&model, "roll"), pitch: dof(&model, "pitch"), legs, model, params: DiffParams::default() }
    }

    /// Leg coordinates for an output orientation.
    pub fn legs(&self, roll: f64, pitch: f64) -> [Leg; 2] {
        let p = &self.params;
        let ro = rpy_to_matrix(&Vector3::new(roll, pitch, 0.0));
        let u = ro * Vector3::y();
        [1.0, -1.0].map(|sign| {
            let a = Vector3::new(p.x0, sign * p.w, p.h);
            let pin = ro * Vector3::new(p.x0, sign * p.w, 0.0);
            // rod end: foot of the perpendicular from the anchor onto the pin line
            let e = pin + u * (a - pin).dot(&u);
            let len = (e - a).norm();
            let d = (e - a) / len;
            let uy = (-d.x).asin();
            let ux = d.y.atan2(-d.z);
            let v = rpy_to_matrix(&Vector3::new(ux, uy, 0.0)).transpose() * u;
            let spin = (-v.x).atan2(v.y);
            [ux, uy, spin, len - p.h]
        })
    }

    pub fn inverse(&self, roll: f64, pitch: f64) -> Vector2<f64> {
        let l = self.legs(roll, pitch);
        Vector2::new(l[0][3], l[1][3])
    }

    /// Output (roll, pitch) for actuator values.
    pub fn forward(&self, qa: &Vector2<f64>) -> Result<Vector2<f64>> {
        let mut x = Vector2::zeros();
        let h = 1e-7;
        for _ in 0..60 {
            let f = self.inverse(x[0], x[1]) - qa;
            if f.amax() < 1e-15 {
                return Ok(x);
            }
            let mut j = Matrix2::zeros();
            for k in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                j.set_column(k, &((self.inverse(xp[0], xp[1]) - self.inverse(xm[0], xm[1])) / (2.0 * h)));
            }
            let step = j.lu().solve(&f).ok_or_else(|| Error::OutOfRange("differential forward map singular".into()))?;
            x -= step;
            if x.amax() > 1.5 {
                return Err(Error::OutOfRange(format!("no output orientation for actuators {qa:?}")));
            }
        }
        let f = self.inverse(x[0], x[1]) - qa;
        if f.amax() < 1e-13 {
            Ok(x)
        } else {
            Err(Error::OutOfRange(format!("forward map did not converge for {qa:?}")))
        }
    }
}

impl ClosureOracle for DiffOracle {
    fn model(&self) -> &MechanismModel {
        &self.model
    }

    fn configuration(&self, qa: &DVector<f64>) -> Result<DVector<f64>> {
        let a = Vector2::new(qa[0], qa[1]);
        let x = self.forward(&a)?;
        let legs = self.legs(x[0], x[1]);
        let mut th = DVector::zeros(self.model.n);
        th[self.roll] = x[0];
        th[self.pitch] = x[1];
        for (k, leg) in legs.iter().enumerate() {
            for i in 0..3 {
                th[self.legs[k][i]] = leg[i];
            }
            th[self.legs[k][3]] = qa[k];
        }
        Ok(th)
    }

    fn task_inverse_jacobian(&self, qa: &DVector<f64>) -> Result<DMatrix<f64>> {
        let x = self.forward(&Vector2::new(qa[0], qa[1]))?;
        let h = FD_STEP;
        let mut j = DMatrix::zeros(2, 2);
        for k in 0..2 {
            let f = |t: f64| {
                let mut y = x;
                y[k] += t;
                self.inverse(y[0], y[1])
            };
            let d = (f(-2.0 * h) - f(2.0 * h) + (f(h) - f(-h)) * 8.0) / (12.0 * h);
            j.set_column(k, &d);
        }
        Ok(j)
    }
}

/// Planar knee: chained circle intersections in the xz plane.
pub struct KneeOracle {
    pub model: MechanismModel,
    idx: [usize; 7],
}

type P2 = Vector2<f64>;

fn xz(p: [f64; 3]) -> P2 {
    P2::new(p[0], p[2])
}

/// Rotation about +y acting on (x, z).
fn rot_y(t: f64, v: &P2) -> P2 {
    let (s, c) = t.sin_cos();
    P2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
}

/// Angle of the rotation about +y taking direction `v0` to direction `v`.
fn angle_y(v0: &P2, v: &P2) -> f64 {
    let t = v0.y.atan2(v0.x) - v.y.atan2(v.x);
    (t + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
}

/// Intersection of two circles closest to `near`.
fn circles(c0: &P2, r0: f64, c1: &P2, r1: f64, near: &P2) -> Result<P2> {
    let dv = c1 - c0;
    let d = dv.norm();
    let a = (r0 * r0 - r1 * r1 + d * d) / (2.0 * d);
    let h2 = r0 * r0 - a * a;
    if h2 < 0.0 {
        return Err(Error::OutOfRange("knee linkage cannot assemble".into()));
    }
    let base = c0 + dv * (a / d);
    let perp = P2::new(-dv.y, dv.x) * (h2.sqrt() / d);
    let (p, q) = (base + perp, base - perp);
    Ok(if (p - near).norm() <= (q - near).norm() { p } else { q })
}

impl KneeOracle {
    pub fn new(model: MechanismModel) -> Self {
        let idx = ["c1", "k0_rod", "k0_slider", "c2", "k1", "knee", "k2"].map(|n| dof(&model, n));
        KneeOracle { model, idx }
    }
}

impl ClosureOracle for KneeOracle {
    fn model(&self) -> &MechanismModel {
        &self.model
    }

    fn configuration(&self, qa: &DVector<f64>) -> Result<DVector<f64>> {
        use knee_points::*;
        let (o1, q1, r1, s0) = (xz(O1), xz(Q1), xz(R1), xz(S));
        let (t2, o2, u2, v, o3) = (xz(T2), xz(O2), xz(U2), xz(V), xz(O3));
        let s = s0 + P2::new(0.0, qa[0]);
        // crank c1 against the rod from the slider
        let q = circles(&o1, (q1 - o1).norm(), &s, (s0 - q1).norm(), &q1)?;
        let th1 = angle_y(&(q1 - o1), &(q - o1));
        let k0 = angle_y(&(s0 - q1), &(s - q)) - th1;
        // coupler k1 from c1 to c2
        let r = o1 + rot_y(th1, &(r1 - o1));
        let t = circles(&o2, (t2 - o2).norm(), &r, (t2 - r1).norm(), &t2)?;
        let th2 = angle_y(&(t2 - o2), &(t - o2));
        let k1 = angle_y(&(t2 - r1), &(t - r)) - th1;
        // coupler k2 from c2 to the shank
        let u = o2 + rot_y(th2, &(u2 - o2));
        let w = circles(&o3, (v - o3).norm(), &u, (v - u2).norm(), &v)?;
        let th3 = angle_y(&(v - o3), &(w - o3));
        let k2 = angle_y(&(v - u2), &(w - u)) - th2;
        let mut th = DVector::zeros(7);
        for (i, x) in [th1, k0, qa[0], th2, k1, th3, k2].into_iter().enumerate() {
            th[self.idx[i]] = x;
        }
        Ok(th)
    }
}
