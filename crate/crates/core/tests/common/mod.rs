#![allow(dead_code)]

pub mod qp;

use mechkit::dynamics::{joint_space_inertia, nonlinear_terms, potential_energy};
use mechkit::io::mech::{JointRecord, LinkRecord};
use mechkit::io::MechanismDocument;
use mechkit::kinematics::forward_kinematics;
use mechkit::model::{BasePose, GeneralizedState, JointKind, MechanismModel};
use nalgebra::{DVector, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform3(rng: &mut ChaCha8Rng, a: f64) -> [f64; 3] {
    [rng.gen_range(-a..a), rng.gen_range(-a..a), rng.gen_range(-a..a)]
}

fn unit3(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = Vector3::from(uniform3(rng, 1.0));
        let n = v.norm();
        if n > 0.2 && n < 1.0 {
            let u = v / n;
            return [u.x, u.y, u.z];
        }
    }
}

fn link(rng: &mut ChaCha8Rng, name: String) -> LinkRecord {
    let (a, b, c) = (rng.gen_range(0.01..0.1), rng.gen_range(0.01..0.1), rng.gen_range(0.01..0.1));
    LinkRecord {
        name,
        mass: rng.gen_range(0.2..2.0),
        com: uniform3(rng, 0.2),
        // principal moments obey the triangle inequality; small products keep it positive definite
        inertia: [a + b, b + c, a + c, 0.1 * a * rng.gen_range(-1.0..1.0), 0.1 * b * rng.gen_range(-1.0..1.0), 0.1 * c * rng.gen_range(-1.0..1.0)],
    }
}

/// Random open tree with `dofs` actuated joints, optionally on a floating base.
pub fn random_tree(rng: &mut ChaCha8Rng, dofs: usize, floating: bool) -> MechanismDocument {
    let mut doc = MechanismDocument { name: "tree".into(), gravity: [0.0, 0.0, -9.81], ..Default::default() };
    doc.links.push(link(rng, "l0".into()));
    if floating {
        doc.joints.push(JointRecord {
            name: "base".into(),
            kind: JointKind::Floating,
            parent: None,
            child: "l0".into(),
            xyz: [0.0; 3],
            rpy: [0.0; 3],
            axis: [0.0, 0.0, 1.0],
            actuated: false,
            limits: None,
            home: 0.0,
        });
    }
    for k in 1..=dofs {
        doc.links.push(link(rng, format!("l{k}")));
        let parent = rng.gen_range(0..k);
        let kind = if rng.gen_bool(0.75) { JointKind::Revolute } else { JointKind::Prismatic };
        doc.joints.push(JointRecord {
            name: format!("j{k}"),
            kind,
            parent: Some(format!("l{parent}")),
            child: format!("l{k}"),
            xyz: uniform3(rng, 0.3),
            rpy: uniform3(rng, 1.5),
            axis: unit3(rng),
            actuated: true,
            limits: None,
            home: 0.0,
        });
    }
    doc
}

pub fn random_state(model: &MechanismModel, rng: &mut ChaCha8Rng) -> GeneralizedState {
    let mut s = GeneralizedState::new(model, DVector::from_fn(model.n, |_, _| rng.gen_range(-1.0..1.0)));
    s.theta_dot = DVector::from_fn(model.n, |_, _| rng.gen_range(-1.0..1.0));
    if model.floating {
        s.base = Some(BasePose {
            position: Vector3::from(uniform3(rng, 1.0)),
            orientation: UnitQuaternion::new(Vector3::from(uniform3(rng, 2.0))),
        });
        s.base_vel = Some((Vector3::from(uniform3(rng, 1.0)), Vector3::from(uniform3(rng, 1.0))));
    }
    s
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn closed_state(model: &MechanismModel, qa: &DVector<f64>) -> GeneralizedState {
    let mut s = model.home_state();
    s.theta.rows_mut(model.m, model.n - model.m).copy_from(qa);
    mechkit::closure::solve_closure(model, &s, 1e-14, 50).unwrap()
}

/// Actuated values drawn inside `frac` of the limits.
pub fn random_qa(model: &MechanismModel, rng: &mut ChaCha8Rng, frac: f64) -> DVector<f64> {
    DVector::from_fn(model.n - model.m, |k, _| {
        let (lo, hi) = model.dof_limits(model.m + k);
        rng.gen_range(lo * frac..hi * frac)
    })
}

/// Closed state with velocities consistent with the loops.
pub fn moving_closed_state(model: &MechanismModel, rng: &mut ChaCha8Rng) -> GeneralizedState {
    let mut s = closed_state(model, &random_qa(model, rng, 0.9));
    if let Some(b) = s.base.as_mut() {
        b.position += Vector3::from(uniform3(rng, 0.2));
        b.orientation = UnitQuaternion::new(Vector3::from(uniform3(rng, 0.3))) * b.orientation;
        s.base_vel = Some((Vector3::from(uniform3(rng, 0.5)), Vector3::from(uniform3(rng, 0.5))));
    }
    let cs = mechkit::closure::ClosureSystem::from_state(model, &s).unwrap();
    let off = model.base_dofs();
    let mut x = DVector::zeros(off + model.n - model.m);
    x.rows_mut(0, off).copy_from(&s.nu().rows(0, off));
    for k in off..x.len() {
        x[k] = rng.gen_range(-1.0..1.0);
    }
    s.set_nu(&(cs.lift().unwrap() * x));
    s
}

/// Stance state with loops closed and velocities that keep every contact still.
pub fn contact_state(model: &MechanismModel, rng: &mut ChaCha8Rng, frac: f64, vel: f64) -> GeneralizedState {
    let mut s = closed_state(model, &random_qa(model, rng, frac));
    let dc = mechkit::floating::assemble(model, &s, &model.contacts).unwrap();
    let (nc, nl) = (dc.jc.nrows(), dc.closure.jl.nrows());
    let mut stack = nalgebra::DMatrix::zeros(nc + nl, dc.nv());
    stack.rows_mut(0, nc).copy_from(&dc.jc);
    stack.rows_mut(nc, nl).copy_from(&dc.closure.jl);
    let (z, _) = mechkit::math::null_space(&stack, dc.nv(), 1e-10);
    let x = DVector::from_fn(z.ncols(), |_, _| rng.gen_range(-vel..vel));
    s.set_nu(&(z * x));
    s
}

pub fn kinetic_energy(model: &MechanismModel, s: &GeneralizedState) -> f64 {
    let kin = forward_kinematics(model, s).unwrap();
    model
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let c = kin.pos[i] + kin.rot[i] * l.com;
            let v = kin.point_velocity(i, &c);
            let w = kin.omega[i];
            let ic = kin.rot[i] * l.inertia * kin.rot[i].transpose();
            0.5 * l.mass * v.norm_squared() + 0.5 * w.dot(&(ic * w))
        })
        .sum()
}

/// Drift of kinetic plus potential energy minus actuator work along an RK4 run.
pub fn energy_drift(m: &MechanismModel, s0: &GeneralizedState, tau: &DVector<f64>, dt: f64, steps: usize) -> f64 {
    let off = m.base_dofs();
    let accel = |s: &GeneralizedState| {
        let kin = forward_kinematics(m, s).unwrap();
        let mut rhs = -nonlinear_terms(m, &kin, s);
        let mut tail = rhs.rows_mut(off, m.n);
        tail += tau;
        joint_space_inertia(m, &kin).cholesky().unwrap().solve(&rhs)
    };
    let power = |nu: &DVector<f64>| nu.rows(off, m.n).dot(tau);
    let energy = |s: &GeneralizedState| kinetic_energy(m, s) + potential_energy(m, &forward_kinematics(m, s).unwrap());
    let e0 = energy(s0);
    let mut s = s0.clone();
    let mut work = 0.0;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let nu0 = s.nu();
        let stage = |nu: &DVector<f64>, dnu: &DVector<f64>, h: f64| {
            let mut st = s.clone();
            st.integrate(nu, h);
            st.set_nu(&(&nu0 + dnu * h));
            st
        };
        let k1v = nu0.clone();
        let k1a = accel(&s);
        let s2 = stage(&k1v, &k1a, 0.5 * dt);
        let (k2v, k2a) = (s2.nu(), accel(&s2));
        let s3 = stage(&k2v, &k2a, 0.5 * dt);
        let (k3v, k3a) = (s3.nu(), accel(&s3));
        let s4 = stage(&k3v, &k3a, dt);
        let (k4v, k4a) = (s4.nu(), accel(&s4));
        work += dt / 6.0 * (power(&k1v) + 2.0 * power(&k2v) + 2.0 * power(&k3v) + power(&k4v));
        let v = (&k1v + &k2v * 2.0 + &k3v * 2.0 + &k4v) / 6.0;
        let a = (&k1a + &k2a * 2.0 + &k3a * 2.0 + &k4a) / 6.0;
        s.integrate(&v, dt);
        s.set_nu(&(&nu0 + a * dt));
        worst = worst.max((energy(&s) - work - e0).abs());
    }
    worst
}
