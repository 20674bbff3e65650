use std::f64::consts::PI;

use mechkit::closure::closure_error;
use mechkit::estimation::*;
use mechkit::dynamics::gravity_terms;
use mechkit::floating::{actuated_torques, assemble, contact_jacobians, inverse_dynamics, lagrange_multipliers, TaskSpec};
use mechkit::math::pinv_solve;
use mechkit::io::parse_mechanism;
use mechkit::kinematics::forward_kinematics;
use mechkit::mechanisms::{self, ClosureOracle, CrankOracle, DiffOracle};
use mechkit::model::{ActuatorSpec, GeneralizedState};
use mechkit::Error;
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sine_samples(amp: f64, freq: f64, seconds: f64, rate: f64) -> Vec<(f64, MeasurementSet)> {
    let steps = (seconds * rate).round() as usize;
    (1..=steps)
        .map(|k| {
            let t = k as f64 / rate;
            let w = 2.0 * PI * freq;
            let m = MeasurementSet {
                qa: DVector::from_element(1, amp * (w * t).sin()),
                qa_dot: DVector::from_element(1, amp * w * (w * t).cos()),
                absolute: vec![],
            };
            (t, m)
        })
        .collect()
}

#[test]
fn exact_estimate_with_static_measurements_is_fixed() {
    let model = mechanisms::model_of(&mechanisms::crank());
    let est = EstimatorState::new(&model, model.home_state().theta).unwrap();
    let meas = MeasurementSet { qa: DVector::zeros(1), qa_dot: DVector::zeros(1), absolute: vec![] };
    let next = estimator_step(&model, &est, &meas, &EstimatorConfig::default()).unwrap();
    assert!(next.theta_dot.amax() < 1e-12);
    assert!((&next.theta - &est.theta).amax() < 1e-15);
}

#[test]
fn crank_sine_replay_tracks() {
    let model = mechanisms::model_of(&mechanisms::crank());
    let oracle = CrankOracle::new(model.clone());
    let cfg = EstimatorConfig::default();
    let samples = sine_samples(0.015, 1.0, 10.0, cfg.rate);
    let mut theta = model.home_state().theta;
    theta[0] += 0.05;
    let est = EstimatorState::new(&model, theta).unwrap();
    let meas: Vec<_> = samples.iter().map(|(_, m)| m.clone()).collect();
    let out = replay(&model, est, &meas, &cfg).unwrap();
    for ((t, m), s) in samples.iter().zip(&out) {
        if *t < 5.0 {
            continue;
        }
        assert!(s.error_norm <= 1e-3, "t = {t}: closure error {}", s.error_norm);
        assert!((s.theta[2] - m.qa[0]).abs() <= 1e-3);
        let exact = oracle.configuration(&m.qa).unwrap();
        assert!((s.theta.rows(0, 2) - exact.rows(0, 2)).amax() <= 1e-2);
    }
}

#[test]
fn frozen_measurements_decay_at_alpha() {
    let model = mechanisms::model_of(&mechanisms::crank());
    let cfg = EstimatorConfig::default();
    let mut theta = model.home_state().theta;
    theta[0] += 0.1;
    let mut est = EstimatorState::new(&model, theta).unwrap();
    let e0 = est.error_norm;
    let meas = MeasurementSet { qa: DVector::zeros(1), qa_dot: DVector::zeros(1), absolute: vec![] };
    for _ in 0..1000 {
        let next = estimator_step(&model, &est, &meas, &cfg).unwrap();
        assert!(next.error_norm < est.error_norm);
        est = next;
    }
    let ratio = est.error_norm / e0;
    let expected = (-cfg.alpha * 1.0f64).exp();
    assert!(ratio <= expected / 0.9 && ratio >= expected * 0.9, "ratio {ratio} vs {expected}");
}

#[test]
fn estimator_rejects_unstable_gains() {
    let cfg = EstimatorConfig { beta: 3000.0, ..Default::default() };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

// offsets to 1e-6 need a stop threshold below the error they leave behind
const TIGHT: CalibrationConfig = CalibrationConfig { alpha: 1.0, dt: 1.0, eps_stop: 1e-10, max_iter: 20 };

fn crank_calibration(offset: f64, q_true: f64) {
    let model = mechanisms::model_of(&mechanisms::crank());
    let oracle = CrankOracle::new(model.clone());
    let crank = model.dof_index("crank").unwrap();
    let truth = oracle.configuration(&DVector::from_element(1, q_true)).unwrap();
    let encoder = q_true - offset;
    let theta0 = oracle.configuration(&DVector::from_element(1, encoder)).unwrap();
    let meas = [(crank, truth[crank])];
    let cal = calibrate(&model, &theta0, &meas, &CalibrationConfig::default()).unwrap();
    assert!(cal.iterations <= 20 && cal.error_norm < 1e-4);
    let cal = calibrate(&model, &theta0, &meas, &TIGHT).unwrap();
    assert!(cal.iterations <= 20);
    assert!((cal.theta[2] - encoder - offset).abs() <= 1e-6, "recovered {}", cal.theta[2] - encoder);
    assert!((&cal.theta - &truth).amax() <= 1e-6);
}

#[test]
fn crank_calibration_recovers_offsets() {
    crank_calibration(0.005, 0.003);
    crank_calibration(0.01, -0.008);
    crank_calibration(-0.007, 0.012);
}

#[test]
fn calibration_at_truth_takes_no_iterations() {
    let model = mechanisms::model_of(&mechanisms::crank());
    let th = model.home_state().theta;
    let cal = calibrate(&model, &th, &[(0, th[0])], &CalibrationConfig::default()).unwrap();
    assert_eq!(cal.iterations, 0);
}

#[test]
fn diff_calibration_recovers_offsets() {
    let model = mechanisms::model_of(&mechanisms::diff());
    let oracle = DiffOracle::new(model.clone());
    let roll = model.dof_index("roll").unwrap();
    let pitch = model.dof_index("pitch").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let qa = DVector::from_fn(2, |_, _| rng.gen_range(-0.025..0.025));
        let offset = DVector::from_fn(2, |_, _| rng.gen_range(-0.01..0.01));
        let truth = oracle.configuration(&qa).unwrap();
        let theta0 = oracle.configuration(&(&qa - &offset)).unwrap();
        let meas = [(roll, truth[roll]), (pitch, truth[pitch])];
        let cal = calibrate(&model, &theta0, &meas, &CalibrationConfig::default()).unwrap();
        assert!(cal.iterations <= 20 && cal.error_norm < 1e-4);
        let cal = calibrate(&model, &theta0, &meas, &TIGHT).unwrap();
        assert!(cal.iterations <= 20);
        assert!((&cal.theta - &truth).amax() <= 1e-6, "{} vs {}", cal.theta, truth);
    }
}

#[test]
fn calibration_needs_square_system() {
    let model = mechanisms::model_of(&mechanisms::crank());
    let th = model.home_state().theta;
    let err = calibrate(&model, &th, &[], &CalibrationConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)));
}

#[test]
fn calibration_reports_singular_measurement() {
    // at dead centre the slider reading leaves crank and rod free to first order
    let model = mechanisms::model_of(&mechanisms::crank());
    let d0 = 0.03f64.sqrt();
    let th = DVector::from_vec(vec![0.0, 0.0, 0.3 - d0]);
    let slider = model.dof_index("slider").unwrap();
    let err = calibrate(&model, &th, &[(slider, 0.29 - d0)], &CalibrationConfig::default()).unwrap_err();
    assert!(matches!(err, Error::SingularAugmentedSystem { .. }), "{err:?}");
}

fn standing_minileg() -> (mechkit::MechanismModel, GeneralizedState) {
    let model = mechanisms::model_of(&mechanisms::minileg());
    let s = model.home_state();
    (model, s)
}

fn static_torques(model: &mechkit::MechanismModel, s: &GeneralizedState, contacts: &[mechkit::model::Contact], f: &DVector<f64>) -> DVector<f64> {
    let dc = assemble(model, s, contacts).unwrap();
    let z = DVector::zeros(dc.nv());
    let lam = lagrange_multipliers(&dc, &z, f).unwrap();
    actuated_torques(&dc, &z, f, &lam)
}

#[test]
fn minileg_wrench_round_trip() {
    let (model, s) = standing_minileg();
    let dc = assemble(&model, &s, &model.contacts).unwrap();
    let kin = forward_kinematics(&model, &s).unwrap();
    let id = inverse_dynamics(&dc, &TaskSpec::base(&model, &kin, DVector::zeros(6))).unwrap();
    assert!(id.nu_dot.amax() <= 1e-6);
    let tau = static_torques(&model, &s, &model.contacts, &id.forces);
    let ws = static_wrench_estimate(&model, &s, &model.contacts, &tau).unwrap();
    for (i, f) in ws.forces.iter().enumerate() {
        let g = Vector3::new(id.forces[3 * i], id.forces[3 * i + 1], id.forces[3 * i + 2]);
        assert!((f - g).amax() <= 1e-6, "contact {i}: {f} vs {g}");
    }
    let weight = model.total_mass() * model.gravity.norm();
    let normal: f64 = ws.forces.iter().map(|f| f.z).sum();
    assert!((normal - weight).abs() <= 1e-6 * weight);
    // what is left is the base inertia times the QP's residual acceleration
    assert!(ws.residual < 1e-8 * weight);

    let z = zmp_cop(&ws.positions, &ws.forces, &ws.links, 0.0, SUPPORT_THRESHOLD).unwrap();
    let m: Vector3<f64> = ws.positions.iter().zip(&ws.forces).map(|(p, f)| (p - z.zmp).cross(f)).sum();
    assert!(m.x.abs() <= 1e-9 && m.y.abs() <= 1e-9);
    let (xs, ys): (Vec<f64>, Vec<f64>) = ws.positions.iter().map(|p| (p.x, p.y)).unzip();
    let inside = |v: f64, a: &[f64]| v >= a.iter().cloned().fold(f64::MAX, f64::min) && v <= a.iter().cloned().fold(f64::MIN, f64::max);
    assert!(inside(z.zmp.x, &xs) && inside(z.zmp.y, &ys));
    assert_eq!(z.cops.len(), 2);
    assert!(z.cops.iter().all(|(_, c)| c.is_some()));
}

#[test]
fn single_stance_loads_one_foot() {
    let (model, s) = standing_minileg();
    let left: Vec<_> = model.contacts.iter().filter(|c| c.name.starts_with("l_")).cloned().collect();
    let dc = assemble(&model, &s, &left).unwrap();
    // pitch-only legs cannot balance on one foot inside the cone, so use unconstrained equilibrium
    let (f, _) = pinv_solve(&dc.jcb().transpose(), &dc.g.rows(0, 6).into_owned(), 1e-12);
    let tau = static_torques(&model, &s, &left, &f);
    let ws = static_wrench_estimate(&model, &s, &left, &tau).unwrap();
    for (i, w) in ws.forces.iter().enumerate() {
        assert!((w - Vector3::new(f[3 * i], f[3 * i + 1], f[3 * i + 2])).amax() <= 1e-6);
    }
    let normal: f64 = ws.forces.iter().map(|f| f.z).sum();
    assert!((normal - model.total_mass() * model.gravity.norm()).abs() < 1e-6 * normal);
    let z = zmp_cop(&ws.positions, &ws.forces, &ws.links, 0.0, SUPPORT_THRESHOLD).unwrap();
    assert_eq!(z.cops.len(), 1);
}

#[test]
fn hanging_model_reports_residual() {
    let model = mechanisms::model_of(&mechanisms::crank());
    let s = model.home_state();
    let kin = forward_kinematics(&model, &s).unwrap();
    let g = gravity_terms(&model, &kin, &s);
    let cs = mechkit::closure::ClosureSystem::new(&model, &kin);
    let jm = cs.mapping_jacobian().unwrap();
    let hold = DVector::from_element(1, g[2]) + jm.tr_mul(&g.rows(0, 2));
    let ws = static_wrench_estimate(&model, &s, &[], &hold).unwrap();
    assert!(ws.forces.is_empty() && ws.residual < 1e-12);
    let ws = static_wrench_estimate(&model, &s, &[], &(hold.add_scalar(1.0))).unwrap();
    assert!((ws.residual - 1.0).abs() < 1e-12);
}

const ARM: &str = "format: 1
name: arm
gravity: 0 0 -9.81
link base {
  mass: 1
  inertia: 0.01 0.01 0.01 0 0 0
}
link l1 {
  mass: 1
  com: 0 0 0.15
  inertia: 0.01 0.01 0.01 0 0 0
}
link l2 {
  mass: 1
  com: 0.15 0 0
  inertia: 0.01 0.01 0.01 0 0 0
}
link l3 {
  mass: 0.5
  com: 0.1 0 0
  inertia: 0.01 0.01 0.01 0 0 0
}
joint j1 {
  type: revolute
  parent: base
  child: l1
  axis: 0 0 1
  actuated: true
}
joint j2 {
  type: revolute
  parent: l1
  child: l2
  xyz: 0 0 0.3
  axis: 0 1 0
  actuated: true
}
joint j3 {
  type: revolute
  parent: l2
  child: l3
  xyz: 0.3 0 0
  axis: 0 1 0
  actuated: true
}
contact tip {
  link: l3
  point: 0.2 0 0
  normal: 0 0 1
}
";

#[test]
fn full_rank_contact_map_reproduces_forces() {
    let model = parse_mechanism(ARM).unwrap().to_model().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let th = DVector::from_fn(3, |i, _| rng.gen_range(-1.0..1.0) + if i == 2 { 0.0 } else { 0.3 });
        let s = GeneralizedState::new(&model, th.clone());
        let kin = forward_kinematics(&model, &s).unwrap();
        let g = gravity_terms(&model, &kin, &s);
        let (jc, _, _) = contact_jacobians(&model, &kin, &model.contacts);
        let f = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.0..20.0));
        let tau = g - jc.tr_mul(&DVector::from_column_slice(f.as_slice()));
        let ws = static_wrench_estimate(&model, &s, &model.contacts, &tau).unwrap();
        assert_eq!(ws.rank, 3);
        assert!(ws.full_rank);
        assert!((ws.forces[0] - f).amax() <= 1e-6, "{} vs {f}", ws.forces[0]);
        assert!(closure_error(&model, &kin).is_empty());
    }
}

#[test]
fn ballscrew_conversion() {
    let spec = |lead| ActuatorSpec { name: "a".into(), dof: 0, lead, efficiency: 0.95 };
    assert_eq!(ballscrew_force(&spec(0.1), 0.0), 0.0);
    assert_eq!(ballscrew_force(&spec(0.1), 1.0), 2.0 * PI * 0.95 / 0.1);
    assert_eq!(ballscrew_force(&spec(0.05), 1.0), 2.0 * PI * 0.95 / 0.05);
    assert!((ballscrew_force(&spec(0.1), 1.0) - 59.690).abs() < 5e-4);
    assert!((ballscrew_force(&spec(0.05), 1.0) - 119.381).abs() < 5e-4);
}

fn corners(x0: f64, y0: f64) -> Vec<Vector3<f64>> {
    vec![
        Vector3::new(x0 - 0.05, y0 - 0.03, 0.0),
        Vector3::new(x0 + 0.05, y0 - 0.03, 0.0),
        Vector3::new(x0 + 0.05, y0 + 0.03, 0.0),
        Vector3::new(x0 - 0.05, y0 + 0.03, 0.0),
    ]
}

#[test]
fn zmp_of_symmetric_stance_is_centroid() {
    let mut p = corners(0.0, 0.1);
    p.extend(corners(0.0, -0.1));
    let f = vec![Vector3::new(0.0, 0.0, 50.0); 8];
    let z = zmp_cop(&p, &f, &[0, 0, 0, 0, 1, 1, 1, 1], 0.0, SUPPORT_THRESHOLD).unwrap();
    assert!(z.zmp.norm() < 1e-15);
    assert!((z.cops[0].1.unwrap() - Vector3::new(0.0, 0.1, 0.0)).norm() < 1e-15);
}

#[test]
fn zmp_on_one_foot_is_its_cop() {
    let mut p = corners(0.0, 0.1);
    p.extend(corners(0.0, -0.1));
    let mut f = vec![Vector3::new(1.0, 2.0, 70.0), Vector3::new(0.0, 0.0, 30.0), Vector3::new(0.0, -1.0, 60.0), Vector3::new(0.0, 0.0, 40.0)];
    f.extend(vec![Vector3::zeros(); 4]);
    let z = zmp_cop(&p, &f, &[0, 0, 0, 0, 1, 1, 1, 1], 0.0, SUPPORT_THRESHOLD).unwrap();
    assert!((z.zmp - z.cops[0].1.unwrap()).norm() < 1e-15);
    assert!(z.cops[1].1.is_none());
}

#[test]
fn zmp_moment_balance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let p: Vec<_> = (0..8).map(|_| Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(0.0..0.05))).collect();
        let f: Vec<_> = (0..8).map(|_| Vector3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(0.0..100.0))).collect();
        let z = zmp_cop(&p, &f, &[0; 8], 0.0, SUPPORT_THRESHOLD).unwrap();
        let m: Vector3<f64> = p.iter().zip(&f).map(|(pi, fi)| (pi - z.zmp).cross(fi)).sum();
        assert!(m.x.abs() <= 1e-9 && m.y.abs() <= 1e-9, "{m}");
    }
}

#[test]
fn zmp_needs_support() {
    let p = corners(0.0, 0.0);
    let f = vec![Vector3::new(0.0, 0.0, 0.2); 4];
    assert!(matches!(zmp_cop(&p, &f, &[0; 4], 0.0, SUPPORT_THRESHOLD), Err(Error::NoSupport { .. })));
}

fn amplitude(y: &[f64]) -> f64 {
    y.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn sine(freq: f64, rate: f64, seconds: f64) -> Vec<f64> {
    (0..(seconds * rate) as usize).map(|k| (2.0 * PI * freq * k as f64 / rate).sin()).collect()
}

#[test]
fn butterworth_response() {
    let rate = 1000.0;
    let dc = lowpass_filter(&[3.5; 200], 5.0, rate).unwrap();
    assert!(dc.iter().all(|v| (v - 3.5).abs() < 1e-12));

    let y = lowpass_filter(&sine(5.0, rate, 4.0), 5.0, rate).unwrap();
    let ratio = amplitude(&y[2000..]);
    assert!((ratio - 0.5f64.sqrt()).abs() < 0.02 * 0.5f64.sqrt(), "ratio {ratio}");
    let db = 20.0 * ratio.log10();
    assert!((db + 3.0103).abs() < 0.1, "{db} dB");

    let y = lowpass_filter(&sine(50.0, rate, 4.0), 5.0, rate).unwrap();
    let db = 20.0 * amplitude(&y[2000..]).log10();
    assert!(db <= -35.0, "{db} dB");
}

#[test]
fn butterworth_rejects_bad_cutoff() {
    for c in [0.0, -1.0, 500.0, 800.0] {
        assert!(matches!(lowpass_filter(&[1.0], c, 1000.0), Err(Error::InvalidCutoff { .. })));
    }
}
