mod common;

use common::{closed_state, moving_closed_state, random_qa, random_vector};
use mechkit::closure::*;
use mechkit::dynamics::{gravity_terms, joint_space_inertia, nonlinear_terms};
use mechkit::kinematics::forward_kinematics;
use mechkit::math::inf_norm;
use mechkit::mechanisms::{self, ClosureOracle, CrankOracle};
use mechkit::model::{GeneralizedState, MechanismModel};
use mechkit::Error;
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DELTA: f64 = 1e-6;

fn fixtures() -> Vec<(&'static str, MechanismModel)> {
    mechanisms::catalog().into_iter().filter(|(n, _)| *n != "synth76").map(|(n, d)| (n, mechanisms::model_of(&d))).collect()
}

fn crank() -> CrankOracle {
    CrankOracle::new(mechanisms::model_of(&mechanisms::crank()))
}

fn unclosed(model: &MechanismModel, rng: &mut ChaCha8Rng) -> GeneralizedState {
    let mut s = moving_closed_state(model, rng);
    for k in 0..model.n {
        s.theta[k] += rng.gen_range(-0.05..0.05);
    }
    s
}

#[test]
fn oracle_configuration_closes_loops() {
    let o = crank();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for _ in 0..50 {
        let qa = random_qa(&o.model, &mut rng, 1.0);
        let s = GeneralizedState::new(&o.model, o.configuration(&qa).unwrap());
        let kin = forward_kinematics(&o.model, &s).unwrap();
        let e = closure_error(&o.model, &kin);
        assert!(e.norm() <= 1e-10);

        let cs = ClosureSystem::new(&o.model, &kin);
        let mut bumped = s.clone();
        bumped.theta[0] += 1e-3;
        let eb = closure_error(&o.model, &forward_kinematics(&o.model, &bumped).unwrap()).norm();
        let bound = cs.jl.norm() * 1e-3 * 1.1;
        assert!(eb > 0.0 && eb <= bound, "{eb} vs {bound}");
    }
}

#[test]
fn oracle_velocity_satisfies_constraint() {
    let o = crank();
    let qa = DVector::from_element(1, 0.0);
    let mut s = GeneralizedState::new(&o.model, o.configuration(&qa).unwrap());
    let jm = o.mapping_jacobian(&qa).unwrap();
    s.theta_dot.rows_mut(0, 2).copy_from(&(&jm * DVector::from_element(1, 0.7)));
    s.theta_dot[2] = 0.7;
    let cs = ClosureSystem::from_state(&o.model, &s).unwrap();
    assert!((&cs.jl * &s.theta_dot).norm() < 1e-13);
}

#[test]
fn passive_block_is_column_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for (_, m) in fixtures() {
        let s = unclosed(&m, &mut rng);
        let cs = ClosureSystem::from_state(&m, &s).unwrap();
        let v = random_vector(&mut rng, m.m);
        let mut full = DVector::zeros(m.nv());
        full.rows_mut(cs.off, m.m).copy_from(&v);
        assert_eq!(cs.jlu() * &v, &cs.jl * full);
    }
}

#[test]
fn error_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for (name, m) in fixtures() {
        for _ in 0..25 {
            let s = unclosed(&m, &mut rng);
            let nu = s.nu();
            let err = |t: f64| {
                let mut st = s.clone();
                st.integrate(&nu, t);
                closure_error(&m, &forward_kinematics(&m, &st).unwrap())
            };
            let fd = (err(DELTA) - err(-DELTA)) / (2.0 * DELTA);
            let cs = ClosureSystem::from_state(&m, &s).unwrap();
            assert!((&fd - &cs.error_jacobian * &nu).norm() <= 10.0 * DELTA, "{name}");
            assert!((&cs.error - err(0.0)).norm() < 1e-15);
        }
    }
}

#[test]
fn bias_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for (name, m) in fixtures() {
        for _ in 0..25 {
            let s = unclosed(&m, &mut rng);
            let nu = s.nu();
            let rate = |t: f64| {
                let mut st = s.clone();
                st.integrate(&nu, t);
                let cs = ClosureSystem::from_state(&m, &st).unwrap();
                &cs.jl * &nu
            };
            let fd = (rate(DELTA) - rate(-DELTA)) / (2.0 * DELTA);
            let cs = ClosureSystem::from_state(&m, &s).unwrap();
            assert!((fd - &cs.bias).norm() <= 10.0 * DELTA, "{name}");
        }
    }
}

#[test]
fn mapping_jacobian_annihilates_constraint() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for (name, m) in fixtures() {
        for _ in 0..50 {
            let s = moving_closed_state(&m, &mut rng);
            let cs = ClosureSystem::from_state(&m, &s).unwrap();
            let jm = cs.mapping_jacobian().unwrap();
            assert!(inf_norm(&(cs.jlu() * jm + cs.jla())) <= 1e-10, "{name}");
        }
    }
}

#[test]
fn crank_mapping_is_closed_form_derivative() {
    let o = crank();
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..50 {
        let qa = random_qa(&o.model, &mut rng, 1.0);
        let s = closed_state(&o.model, &qa);
        let cs = ClosureSystem::from_state(&o.model, &s).unwrap();
        let psi = s.theta[o.model.dof_index("crank").unwrap()];
        let (d1, _, p1, _) = o.derivatives(psi);
        let jm = cs.mapping_jacobian().unwrap();
        assert!((jm[(0, 0)] - 1.0 / d1).abs() < 1e-9 * (1.0 / d1).abs());
        assert!((jm[(1, 0)] - p1 / d1).abs() < 1e-9 * (p1 / d1).abs());
        assert!(cs.dfk(&DVector::zeros(1)).unwrap().amax() == 0.0);
    }
}

#[test]
fn diff_symmetric_rates_give_pure_pitch() {
    let m = mechanisms::model_of(&mechanisms::diff());
    let s = closed_state(&m, &DVector::from_vec(vec![0.01, 0.01]));
    let cs = ClosureSystem::from_state(&m, &s).unwrap();
    let rates = cs.dfk(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
    let (roll, pitch) = (m.dof_index("roll").unwrap(), m.dof_index("pitch").unwrap());
    assert!(rates[roll].abs() < 1e-12);
    assert!(rates[pitch].abs() > 1.0);
}

#[test]
fn integrated_dfk_stays_closed() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for (name, m) in fixtures().into_iter().filter(|(_, m)| !m.floating) {
        let mut s = closed_state(&m, &random_qa(&m, &mut rng, 0.5));
        let qa_dot = random_vector(&mut rng, m.n - m.m) * 0.5 * m.dof_limits(m.m).1;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let cs = ClosureSystem::from_state(&m, &s).unwrap();
            let mut v = DVector::zeros(m.n);
            v.rows_mut(0, m.m).copy_from(&cs.dfk(&qa_dot).unwrap());
            v.rows_mut(m.m, m.n - m.m).copy_from(&qa_dot);
            s.integrate(&v, 1e-5);
            worst = worst.max(closure_error(&m, &forward_kinematics(&m, &s).unwrap()).norm());
        }
        assert!(worst <= 1e-6, "{name}: {worst}");
    }
}

#[test]
fn passive_accelerations_satisfy_acceleration_constraint() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for (name, m) in fixtures().into_iter().filter(|(_, m)| !m.floating) {
        for _ in 0..25 {
            let s = moving_closed_state(&m, &mut rng);
            let cs = ClosureSystem::from_state(&m, &s).unwrap();
            let qa_dd = random_vector(&mut rng, m.n - m.m);
            let mut acc = DVector::zeros(m.n);
            acc.rows_mut(0, m.m).copy_from(&cs.passive_accelerations(&qa_dd).unwrap());
            acc.rows_mut(m.m, m.n - m.m).copy_from(&qa_dd);
            assert!((&cs.jl * &acc + &cs.bias).norm() <= 1e-9, "{name}");

            // rate of the DFK passive velocity along the actuated flow
            let qa_dot = m.actuated(&s.theta_dot);
            let at = |t: f64| {
                let mut q = closed_state(&m, &(m.actuated(&s.theta) + &qa_dot * t + &qa_dd * (0.5 * t * t)));
                let cs = ClosureSystem::from_state(&m, &q).unwrap();
                q.theta_dot.rows_mut(0, m.m).copy_from(&cs.dfk(&(&qa_dot + &qa_dd * t)).unwrap());
                q.theta_dot.rows(0, m.m).into_owned()
            };
            let fd = (at(DELTA) - at(-DELTA)) / (2.0 * DELTA);
            let zero = cs.passive_accelerations(&DVector::zeros(m.n - m.m)).unwrap();
            assert!((fd - acc.rows(0, m.m)).norm() <= 10.0 * DELTA * (1.0 + zero.norm()), "{name}");
        }
        let still = closed_state(&m, &random_qa(&m, &mut rng, 0.5));
        let cs = ClosureSystem::from_state(&m, &still).unwrap();
        assert_eq!(cs.passive_accelerations(&DVector::zeros(m.n - m.m)).unwrap().amax(), 0.0);
    }
}

#[test]
fn crank_constant_rate_acceleration_is_analytic() {
    let o = crank();
    let qa = DVector::from_element(1, 0.012);
    let psi = o.configuration(&qa).unwrap()[0];
    let (d1, d2, _, _) = o.derivatives(psi);
    let rate = 0.3;
    let mut s = closed_state(&o.model, &qa);
    let cs = ClosureSystem::from_state(&o.model, &s).unwrap();
    s.theta_dot.copy_from(&(cs.lift().unwrap() * DVector::from_element(1, rate)));
    let cs = ClosureSystem::from_state(&o.model, &s).unwrap();
    let psi_dd = cs.passive_accelerations(&DVector::zeros(1)).unwrap()[0];
    // psi'' = -d'' psi_dot^2 / d' at constant slider rate
    let psi_dot = rate / d1;
    let expect = -d2 * psi_dot * psi_dot / d1;
    assert!((psi_dd - expect).abs() < 1e-9 * expect.abs().max(1.0), "{psi_dd} vs {expect}");
}

#[test]
fn torque_maps_obey_virtual_work() {
    let mut rng = ChaCha8Rng::seed_from_u64(38);
    for (name, m) in fixtures() {
        for _ in 0..25 {
            let s = moving_closed_state(&m, &mut rng);
            let cs = ClosureSystem::from_state(&m, &s).unwrap();
            let tau_u = random_vector(&mut rng, m.m);
            let qa_dot = random_vector(&mut rng, m.n - m.m);
            let lhs = cs.forward_torque_map(&tau_u).unwrap().dot(&qa_dot);
            let rhs = tau_u.dot(&cs.dfk(&qa_dot).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{name}: {lhs} vs {rhs}");
            assert_eq!(cs.forward_torque_map(&DVector::zeros(m.m)).unwrap().amax(), 0.0);
        }
    }
}

#[test]
fn crank_unit_crank_torque_maps_to_inverse_derivative() {
    let o = crank();
    let qa = DVector::from_element(1, -0.007);
    let s = closed_state(&o.model, &qa);
    let cs = ClosureSystem::from_state(&o.model, &s).unwrap();
    let (d1, ..) = o.derivatives(s.theta[0]);
    let f = cs.forward_torque_map(&DVector::from_vec(vec![1.0, 0.0])).unwrap()[0];
    assert!((f - 1.0 / d1).abs() < 1e-9 * (1.0 / d1).abs());

    let sel = SelectionMap::from_model(&o.model);
    let rate = cs.dik(&sel, &DVector::from_element(1, 1.0)).unwrap()[0];
    assert!((rate - d1).abs() < 1e-9 * d1.abs());
    let torque = cs.inverse_torque_map(&sel, &DVector::from_element(1, 1.0)).unwrap()[0];
    assert!((torque - d1).abs() < 1e-9 * d1.abs());
}

#[test]
fn selection_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(39);
    for (name, m) in fixtures() {
        let sel = SelectionMap::from_model(&m);
        for _ in 0..25 {
            let s = moving_closed_state(&m, &mut rng);
            let cs = ClosureSystem::from_state(&m, &s).unwrap();
            let qa_dot = random_vector(&mut rng, m.n - m.m);
            let q_dot = sel.apply(&cs.dfk(&qa_dot).unwrap());
            let back = cs.dik(&sel, &q_dot).unwrap();
            assert!((&back - &qa_dot).amax() <= 1e-10 * (1.0 + qa_dot.amax()), "{name}: dik");

            let mut tau_u = DVector::zeros(m.m);
            for &d in &sel.dofs {
                tau_u[d] = rng.gen_range(-1.0..1.0);
            }
            let tau_a = cs.forward_torque_map(&tau_u).unwrap();
            let back = cs.inverse_torque_map(&sel, &tau_a).unwrap();
            assert!((&back - sel.apply(&tau_u)).amax() <= 1e-10, "{name}: itm");
            assert_eq!(cs.dik(&sel, &DVector::zeros(sel.dofs.len())).unwrap().amax(), 0.0);
            assert_eq!(cs.inverse_torque_map(&sel, &DVector::zeros(m.n - m.m)).unwrap().amax(), 0.0);
        }
    }
}

#[test]
fn closed_chain_dynamics_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for (name, m) in fixtures().into_iter().filter(|(_, m)| !m.floating) {
        for _ in 0..25 {
            let s = moving_closed_state(&m, &mut rng);
            let kin = forward_kinematics(&m, &s).unwrap();
            let cs = ClosureSystem::new(&m, &kin);
            let qa_dd = random_vector(&mut rng, m.n - m.m);
            let acc = cs.lift_accelerations(&DVector::zeros(0), &qa_dd).unwrap();
            let (tau, lambda) = closed_chain_inverse_dynamics(&m, &s, &acc).unwrap();
            assert_eq!(tau.len(), m.n - m.m);
            let mut st = DVector::zeros(m.n);
            st.rows_mut(m.m, m.n - m.m).copy_from(&tau);
            let r = joint_space_inertia(&m, &kin) * &acc + nonlinear_terms(&m, &kin, &s) - st - cs.jl.tr_mul(&lambda);
            assert!(r.amax() <= 1e-8, "{name}: {}", r.amax());
        }
    }
}

#[test]
fn static_crank_balances_gravity() {
    let o = crank();
    let s = closed_state(&o.model, &DVector::from_element(1, 0.005));
    let kin = forward_kinematics(&o.model, &s).unwrap();
    let cs = ClosureSystem::new(&o.model, &kin);
    let (tau, _) = closed_chain_inverse_dynamics(&o.model, &s, &DVector::zeros(3)).unwrap();
    let g = gravity_terms(&o.model, &kin, &s);
    let expect = cs.mapping_jacobian().unwrap().tr_mul(&g.rows(0, 2)) + g.rows(2, 1);
    assert!((tau - expect).amax() < 1e-12);

    let mut weightless = o.model.clone();
    weightless.gravity = Vector3::zeros();
    let (tau, lambda) = closed_chain_inverse_dynamics(&weightless, &s, &DVector::zeros(3)).unwrap();
    assert_eq!(tau.amax(), 0.0);
    assert_eq!(lambda.amax(), 0.0);
}

#[test]
fn inconsistent_accelerations_are_rejected() {
    let o = crank();
    let s = closed_state(&o.model, &DVector::from_element(1, 0.0));
    let acc = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    assert!(matches!(closed_chain_inverse_dynamics(&o.model, &s, &acc), Err(Error::ClosureInconsistent { .. })));
}

#[test]
fn assumptions_report_sizes() {
    let crank = mechanisms::model_of(&mechanisms::crank());
    let r = validate_assumptions(&crank, &[crank.home_state()]).unwrap();
    assert!(r.pass);
    assert_eq!((r.n, r.m, r.actuated), (3, 2, 1));
    let diff = mechanisms::model_of(&mechanisms::diff());
    let r = validate_assumptions(&diff, &[diff.home_state()]).unwrap();
    assert!(r.pass);
    assert_eq!((r.n, r.m, r.actuated), (10, 8, 2));
}

#[test]
fn duplicate_constraint_is_rank_deficient() {
    let mut doc = mechanisms::crank();
    let mut dup = doc.loops[0].clone();
    dup.name = "again".into();
    doc.loops.push(dup);
    let m = mechanisms::model_of(&doc);
    let r = validate_assumptions(&m, &[m.home_state()]).unwrap();
    assert!(!r.pass);
    assert!(!r.rows_match);
    assert_eq!(r.rank_deficient, vec![0]);
    let cs = ClosureSystem::from_state(&m, &m.home_state()).unwrap();
    assert!(cs.mapping_jacobian().is_err());
}

#[test]
fn singular_linkage_names_the_loop() {
    let o = crank();
    // crank and rod collinear
    let mut s = GeneralizedState::new(&o.model, DVector::from_vec(vec![0.0, 0.0, 0.3 - o.d0]));
    s.theta_dot.fill(0.0);
    let cs = ClosureSystem::from_state(&o.model, &s).unwrap();
    match cs.mapping_jacobian() {
        Err(Error::SingularLinkage { loop_name, sigma_min }) => {
            assert_eq!(loop_name, o.model.loops[0].name);
            assert!(sigma_min < 1e-8);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn selection_requires_passive_dofs() {
    let m = mechanisms::model_of(&mechanisms::crank());
    assert!(SelectionMap::new(&m, vec![2]).is_err());
    assert!(SelectionMap::new(&m, vec![0]).is_ok());
}
