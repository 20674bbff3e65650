//! Passive-state estimation, calibration, quasi-static contact wrenches, ZMP and filtering.

use nalgebra as na;
use na::{DMatrix, DVector, Vector3};
use serde::Serialize;

use crate::closure::{closure_error, ClosureSystem};
use crate::dynamics::gravity_terms;
use crate::error::{Error, Result};
use crate::floating::contact_jacobians;
use crate::kinematics::forward_kinematics;
use crate::math::{pinv_solve, sigma_min};
use crate::model::{ActuatorSpec, Contact, GeneralizedState, MechanismModel};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EstimatorConfig {
    /// Closure-error gain [1/s].
    pub alpha: f64,
    /// Actuator tracking gain [1/s].
    pub beta: f64,
    pub dt: f64,
    pub rate: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { alpha: 1.0, beta: 1000.0, dt: 1e-3, rate: 1000.0 }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.dt > 0.0 && self.rate > 0.0) {
            return Err(Error::Config("alpha, beta, dt and rate must be positive".into()));
        }
        if self.alpha * self.dt >= 2.0 || self.beta * self.dt >= 2.0 {
            return Err(Error::Config(format!(
                "gains too high for the step: alpha*dt = {}, beta*dt = {}",
                self.alpha * self.dt,
                self.beta * self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EstimatorState {
    pub theta: DVector<f64>,
    pub theta_dot: DVector<f64>,
    pub error_norm: f64,
    pub iterations: usize,
}

impl EstimatorState {
    pub fn new(model: &MechanismModel, theta: DVector<f64>) -> Result<Self> {
        let s = GeneralizedState::new(model, theta);
        let kin = forward_kinematics(model, &s)?;
        let error_norm = closure_error(model, &kin).norm();
        Ok(EstimatorState { theta: s.theta, theta_dot: DVector::zeros(model.n), error_norm, iterations: 0 })
    }
}

#[derive(Clone, Debug, Default)]
pub struct MeasurementSet {
    pub qa: DVector<f64>,
    pub qa_dot: DVector<f64>,
    /// Absolute passive readings as (passive DOF index, value).
    pub absolute: Vec<(usize, f64)>,
}

fn state_at(model: &MechanismModel, theta: &DVector<f64>) -> GeneralizedState {
    let mut s = model.home_state();
    s.theta.copy_from(theta);
    s
}

/// One estimator update followed by an explicit Euler step.
pub fn estimator_step(model: &MechanismModel, est: &EstimatorState, meas: &MeasurementSet, cfg: &EstimatorConfig) -> Result<EstimatorState> {
    let (m, n) = (model.m, model.n);
    if meas.qa.len() != n - m || meas.qa_dot.len() != n - m {
        return Err(Error::Dimension(format!("{} actuator readings for {} actuated DOFs", meas.qa.len(), n - m)));
    }
    let kin = forward_kinematics(model, &state_at(model, &est.theta))?;
    let cs = ClosureSystem::new(model, &kin);
    let qa = est.theta.rows(m, n - m);
    let qa_dot = &meas.qa_dot + (&meas.qa - qa) * cfg.beta;
    // closure error is current minus reference, hence the minus sign
    let qu_dot = cs.dfk(&qa_dot)? - cs.solve_passive(&cs.error)? * cfg.alpha;
    let mut theta_dot = DVector::zeros(n);
    theta_dot.rows_mut(0, m).copy_from(&qu_dot);
    theta_dot.rows_mut(m, n - m).copy_from(&qa_dot);
    let theta = &est.theta + &theta_dot * cfg.dt;
    let kin = forward_kinematics(model, &state_at(model, &theta))?;
    Ok(EstimatorState { error_norm: closure_error(model, &kin).norm(), theta, theta_dot, iterations: est.iterations + 1 })
}

/// Run the estimator over a measurement sequence, returning the state after each sample.
pub fn replay(model: &MechanismModel, initial: EstimatorState, samples: &[MeasurementSet], cfg: &EstimatorConfig) -> Result<Vec<EstimatorState>> {
    cfg.validate()?;
    let mut out: Vec<EstimatorState> = Vec::with_capacity(samples.len());
    let mut cur = initial;
    for s in samples {
        cur = estimator_step(model, &cur, s, cfg)?;
        out.push(cur.clone());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CalibrationConfig {
    pub alpha: f64,
    pub dt: f64,
    pub eps_stop: f64,
    pub max_iter: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { alpha: 1.0, dt: 1.0, eps_stop: 1e-4, max_iter: 20 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationResult {
    #[serde(skip)]
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub error_norm: f64,
    /// Error norm before each iteration, then the final one.
    pub history: Vec<f64>,
}

fn calibration_error(model: &MechanismModel, theta: &DVector<f64>, meas: &[(usize, f64)]) -> Result<(DVector<f64>, ClosureSystem)> {
    let kin = forward_kinematics(model, &state_at(model, theta))?;
    let cs = ClosureSystem::new(model, &kin);
    let rows = cs.rows();
    let mut e = DVector::zeros(rows + meas.len());
    e.rows_mut(0, rows).copy_from(&(-&cs.error));
    for (k, &(d, v)) in meas.iter().enumerate() {
        e[rows + k] = v - theta[d];
    }
    Ok((e, cs))
}

/// Find the full DOF vector consistent with the loops and the absolute readings.
pub fn calibrate(model: &MechanismModel, theta0: &DVector<f64>, meas: &[(usize, f64)], cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    let (n, off) = (model.n, model.base_dofs());
    if theta0.len() != n {
        return Err(Error::Dimension(format!("{} positions for {n} DOFs", theta0.len())));
    }
    if let Some(&(d, _)) = meas.iter().find(|&&(d, _)| d >= n) {
        return Err(Error::Dimension(format!("measured DOF {d} out of range")));
    }
    let rows: usize = model.loops.iter().map(|l| l.rows()).sum();
    if rows + meas.len() != n {
        return Err(Error::Dimension(format!("{rows} closure rows plus {} measurements for {n} DOFs", meas.len())));
    }
    let mut theta = theta0.clone();
    let mut history = Vec::new();
    for it in 0..=cfg.max_iter {
        let (e, cs) = calibration_error(model, &theta, meas)?;
        let norm = e.norm();
        history.push(norm);
        if norm < cfg.eps_stop {
            return Ok(CalibrationResult { theta, iterations: it, error_norm: norm, history });
        }
        if it == cfg.max_iter {
            return Err(Error::MaxIterations { iterations: it, error: norm });
        }
        let mut j = DMatrix::zeros(n, n);
        j.rows_mut(0, rows).copy_from(&cs.error_jacobian.columns(off, n));
        for (k, &(d, _)) in meas.iter().enumerate() {
            j[(rows + k, d)] = 1.0;
        }
        let s = sigma_min(&j);
        if s < cs.threshold {
            return Err(Error::SingularAugmentedSystem { sigma_min: s });
        }
        let step = j.lu().solve(&(e * cfg.alpha)).ok_or(Error::SingularAugmentedSystem { sigma_min: 0.0 })?;
        theta += step * cfg.dt;
    }
    unreachable!()
}

/// Quasi-static contact forces (ground on robot) with their locations.
#[derive(Clone, Debug, Serialize)]
pub struct WrenchSet {
    pub names: Vec<String>,
    pub links: Vec<usize>,
    pub positions: Vec<Vector3<f64>>,
    pub forces: Vec<Vector3<f64>>,
    pub rank: usize,
    pub full_rank: bool,
    /// Norm of the unexplained part of the static balance.
    pub residual: f64,
}

/// Contact forces from measured actuator forces at rest.
///
/// Solves `(J_c L)' F = L' g - [0; tau]` in the minimum-norm sense, where `L` maps
/// base and actuated rates to the full velocity. For a fixed base this is
/// `J_cm' F = g_a + J_m' g_u - tau`.
pub fn static_wrench_estimate(model: &MechanismModel, state: &GeneralizedState, contacts: &[Contact], tau: &DVector<f64>) -> Result<WrenchSet> {
    let na = model.n_actuated();
    if tau.len() != na {
        return Err(Error::Dimension(format!("{} actuator forces for {na} actuated DOFs", tau.len())));
    }
    let mut rest = state.clone();
    rest.theta_dot.fill(0.0);
    if let Some(v) = rest.base_vel.as_mut() {
        *v = (Vector3::zeros(), Vector3::zeros());
    }
    let kin = forward_kinematics(model, &rest)?;
    let cs = ClosureSystem::new(model, &kin);
    let lift = cs.lift()?;
    let g = gravity_terms(model, &kin, &rest);
    let off = model.base_dofs();
    let mut rhs = lift.tr_mul(&g);
    for i in 0..na {
        rhs[off + i] -= tau[i];
    }
    let (jc, _, frames) = contact_jacobians(model, &kin, contacts);
    let a = (jc * &lift).transpose();
    let (f, rank) = if contacts.is_empty() { (DVector::zeros(0), 0) } else { pinv_solve(&a, &rhs, 1e-10) };
    if !contacts.is_empty() && rank == 0 {
        return Err(Error::RankDeficientContactMap { rank, columns: a.ncols() });
    }
    let residual = if contacts.is_empty() { rhs.norm() } else { (&a * &f - &rhs).norm() };
    Ok(WrenchSet {
        names: contacts.iter().map(|c| c.name.clone()).collect(),
        links: contacts.iter().map(|c| c.link).collect(),
        positions: frames.iter().map(|fr| fr.position).collect(),
        forces: (0..contacts.len()).map(|i| Vector3::new(f[3 * i], f[3 * i + 1], f[3 * i + 2])).collect(),
        rank,
        full_rank: rank == a.ncols(),
        residual,
    })
}

/// Axial force of a ball-screw actuator, `tau_m 2 pi eta / L`.
pub fn ballscrew_force(spec: &ActuatorSpec, motor_torque: f64) -> f64 {
    motor_torque * 2.0 * std::f64::consts::PI * spec.efficiency / spec.lead
}

pub const SUPPORT_THRESHOLD: f64 = 1.0;

#[derive(Clone, Debug, Serialize)]
pub struct ZmpResult {
    pub zmp: Vector3<f64>,
    /// Per group: group key and its COP when the group carries load.
    pub cops: Vec<(usize, Option<Vector3<f64>>)>,
    pub total_normal: f64,
}

fn pressure_center(points: &[Vector3<f64>], forces: &[Vector3<f64>], z0: f64) -> (Vector3<f64>, f64) {
    let (mut x, mut y, mut fz) = (0.0, 0.0, 0.0);
    for (p, f) in points.iter().zip(forces) {
        let h = p.z - z0;
        x += p.x * f.z - h * f.x;
        y += p.y * f.z - h * f.y;
        fz += f.z;
    }
    (Vector3::new(x / fz, y / fz, z0), fz)
}

/// ZMP on the horizontal plane `z = z0` and the COP of each contact group.
pub fn zmp_cop(points: &[Vector3<f64>], forces: &[Vector3<f64>], groups: &[usize], z0: f64, threshold: f64) -> Result<ZmpResult> {
    if points.len() != forces.len() || groups.len() != forces.len() {
        return Err(Error::Dimension("points, forces and groups differ in length".into()));
    }
    let total: f64 = forces.iter().map(|f| f.z).sum();
    if !(total > threshold) {
        return Err(Error::NoSupport { total });
    }
    let (zmp, _) = pressure_center(points, forces, z0);
    let mut keys: Vec<usize> = groups.to_vec();
    keys.sort_unstable();
    keys.dedup();
    let cops = keys
        .into_iter()
        .map(|k| {
            let idx: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == k).collect();
            let p: Vec<_> = idx.iter().map(|&i| points[i]).collect();
            let f: Vec<_> = idx.iter().map(|&i| forces[i]).collect();
            let fz: f64 = f.iter().map(|v| v.z).sum();
            (k, (fz > threshold).then(|| pressure_center(&p, &f, z0).0))
        })
        .collect();
    Ok(ZmpResult { zmp, cops, total_normal: total })
}

/// Causal second-order Butterworth low-pass (bilinear transform, prewarped).
#[derive(Clone, Debug)]
pub struct Butterworth {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
    primed: bool,
}

impl Butterworth {
    pub fn new(cutoff: f64, rate: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < rate / 2.0) {
            return Err(Error::InvalidCutoff { cutoff, rate });
        }
        let k = (std::f64::consts::PI * cutoff / rate).tan();
        let s2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + s2 * k + k * k);
        let b0 = k * k * norm;
        Ok(Butterworth {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - s2 * k + k * k) * norm],
            x: [0.0; 2],
            y: [0.0; 2],
            primed: false,
        })
    }

    pub fn step(&mut self, x: f64) -> f64 {
        if !self.primed {
            // start from the steady state of the first sample
            self.x = [x, x];
            self.y = [x, x];
            self.primed = true;
        }
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1] - self.a[0] * self.y[0] - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

pub fn lowpass_filter(signal: &[f64], cutoff: f64, rate: f64) -> Result<Vec<f64>> {
    let mut f = Butterworth::new(cutoff, rate)?;
    Ok(signal.iter().map(|&x| f.step(x)).collect())
}
