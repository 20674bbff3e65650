//! C ABI over `mechkit`.
//!
//! Models and estimators are opaque handles created and released by the
//! library. Every fallible call returns a [`MechStatus`]; the message of the
//! last failure on the calling thread is available from [`mech_last_error`].
//! Arrays are caller-owned `double` buffers whose lengths are passed alongside.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mechkit::closure::ClosureSystem;
use mechkit::dynamics::joint_space_inertia;
use mechkit::estimation::{self, EstimatorConfig, EstimatorState, MeasurementSet};
use mechkit::io::load_model;
use mechkit::kinematics::forward_kinematics;
use mechkit::model::ActuatorSpec;
use mechkit::{analysis, Error, GeneralizedState, MechanismModel};
use nalgebra::DVector;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MechStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    DimensionMismatch = 4,
    SingularLinkage = 5,
    NoConvergence = 6,
    QpFailure = 7,
    DomainError = 8,
    Panic = 9,
}

/// Loaded mechanism model.
pub struct MechModel {
    model: MechanismModel,
}

/// Passive-state estimator bound to a copy of a model.
pub struct MechEstimator {
    model: MechanismModel,
    state: EstimatorState,
    config: EstimatorConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MechStatus {
    match e {
        Error::Parse(_) | Error::Log(_) => MechStatus::ParseError,
        Error::Dimension(_) => MechStatus::DimensionMismatch,
        Error::SingularLinkage { .. } | Error::SingularTaskMap { .. } | Error::SingularInertia => MechStatus::SingularLinkage,
        Error::MaxIterations { .. } => MechStatus::NoConvergence,
        Error::Qp(_) => MechStatus::QpFailure,
        _ => MechStatus::DomainError,
    }
}

fn fail(status: MechStatus, msg: impl Into<String>) -> MechStatus {
    set_error(msg.into());
    status
}

/// Run `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), MechStatus>) -> MechStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MechStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(MechStatus::Panic, "internal panic"),
    }
}

fn lib(e: Error) -> MechStatus {
    fail(status_of(&e), format!("{}: {e}", e.code()))
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], MechStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(MechStatus::NullPointer, "null input array"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], MechStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(MechStatus::NullPointer, "null output array"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, MechStatus> {
    p.as_ref().ok_or_else(|| fail(MechStatus::NullPointer, "null handle"))
}

fn expect(what: &str, got: usize, want: usize) -> Result<(), MechStatus> {
    if got != want {
        return Err(fail(MechStatus::DimensionMismatch, format!("{what}: length {got}, expected {want}")));
    }
    Ok(())
}

fn state_at(model: &MechanismModel, theta: &[f64]) -> Result<GeneralizedState, MechStatus> {
    expect("theta", theta.len(), model.n)?;
    let mut s = model.home_state();
    s.theta.copy_from_slice(theta);
    Ok(s)
}

/// Copy the message of the last failure on this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mech_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let k = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), k);
            *buf.add(k) = 0;
        }
        msg.len()
    })
}

/// Parse a `.mech` document.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mech_model_load(text: *const c_char, out: *mut *mut MechModel) -> MechStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return Err(fail(MechStatus::NullPointer, "null argument"));
        }
        *out = std::ptr::null_mut();
        let s = CStr::from_ptr(text).to_str().map_err(|_| fail(MechStatus::InvalidUtf8, "document is not UTF-8"))?;
        let model = load_model(s).map_err(|e| fail(MechStatus::ParseError, format!("{}: {e}", e.code())))?;
        *out = Box::into_raw(Box::new(MechModel { model }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`mech_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mech_model_free(model: *mut MechModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// DOF count `n`, passive count `m`, velocity dimension `nv` and contact count.
///
/// # Safety
/// `model` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn mech_model_dims(model: *const MechModel, n: *mut usize, m: *mut usize, nv: *mut usize, contacts: *mut usize) -> MechStatus {
    guard(|| {
        let md = &handle(model)?.model;
        for (p, v) in [(n, md.n), (m, md.m), (nv, md.nv()), (contacts, md.contacts.len())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Nominal DOF positions (length `n`).
///
/// # Safety
/// `model` must be a live handle and `theta` hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn mech_model_home(model: *const MechModel, theta: *mut f64, n: usize) -> MechStatus {
    guard(|| {
        let md = &handle(model)?.model;
        expect("theta", n, md.n)?;
        slice_mut(theta, n)?.copy_from_slice(md.home_state().theta.as_slice());
        Ok(())
    })
}

/// Close all loops for the actuated positions `qa` (length `n - m`), writing the
/// full DOF vector to `theta` (length `n`). The base stays at its home pose.
///
/// # Safety
/// `model` must be a live handle and the arrays hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mech_close(model: *const MechModel, qa: *const f64, na: usize, theta: *mut f64, n: usize) -> MechStatus {
    guard(|| {
        let md = &handle(model)?.model;
        expect("qa", na, md.n_actuated())?;
        expect("theta", n, md.n)?;
        let qa = DVector::from_column_slice(slice(qa, na)?);
        let s = analysis::close_at(md, &md.home_state(), &qa).map_err(lib)?;
        slice_mut(theta, n)?.copy_from_slice(s.theta.as_slice());
        Ok(())
    })
}

/// Closure error norm at `theta`.
///
/// # Safety
/// `model` must be a live handle, `theta` hold `n` doubles and `error` be valid.
#[no_mangle]
pub unsafe extern "C" fn mech_closure_error(model: *const MechModel, theta: *const f64, n: usize, error: *mut f64) -> MechStatus {
    guard(|| {
        let md = &handle(model)?.model;
        let s = state_at(md, slice(theta, n)?)?;
        let kin = forward_kinematics(md, &s).map_err(lib)?;
        if error.is_null() {
            return Err(fail(MechStatus::NullPointer, "null output"));
        }
        *error = mechkit::closure::closure_error(md, &kin).norm();
        Ok(())
    })
}

/// Passive rates from actuated rates, `qu_dot = J_m qa_dot`.
///
/// # Safety
/// `model` must be a live handle and the arrays hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mech_dfk(
    model: *const MechModel,
    theta: *const f64,
    n: usize,
    qa_dot: *const f64,
    na: usize,
    qu_dot: *mut f64,
    m: usize,
) -> MechStatus {
    guard(|| {
        let md = &handle(model)?.model;
        let s = state_at(md, slice(theta, n)?)?;
        expect("qa_dot", na, md.n_actuated())?;
        expect("qu_dot", m, md.m)?;
        let cs = ClosureSystem::from_state(md, &s).map_err(lib)?;
        let v = cs.dfk(&DVector::from_column_slice(slice(qa_dot, na)?)).map_err(lib)?;
        slice_mut(qu_dot, m)?.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Joint-space inertia at `theta`, column-major `nv x nv`.
///
/// # Safety
/// `model` must be a live handle and the arrays hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mech_mass_matrix(model: *const MechModel, theta: *const f64, n: usize, out: *mut f64, len: usize) -> MechStatus {
    guard(|| {
        let md = &handle(model)?.model;
        let s = state_at(md, slice(theta, n)?)?;
        expect("mass matrix", len, md.nv() * md.nv())?;
        let kin = forward_kinematics(md, &s).map_err(lib)?;
        slice_mut(out, len)?.copy_from_slice(joint_space_inertia(md, &kin).as_slice());
        Ok(())
    })
}

/// Quasi-static contact forces (3 per model contact, ground on robot) for the
/// actuator efforts `tau` at rest at `theta`.
///
/// # Safety
/// `model` must be a live handle and the arrays hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mech_static_wrench(
    model: *const MechModel,
    theta: *const f64,
    n: usize,
    tau: *const f64,
    na: usize,
    forces: *mut f64,
    len: usize,
) -> MechStatus {
    guard(|| {
        let md = &handle(model)?.model;
        let s = state_at(md, slice(theta, n)?)?;
        expect("forces", len, 3 * md.contacts.len())?;
        let tau = DVector::from_column_slice(slice(tau, na)?);
        let w = estimation::static_wrench_estimate(md, &s, &md.contacts, &tau).map_err(lib)?;
        let out = slice_mut(forces, len)?;
        for (i, f) in w.forces.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(f.as_slice());
        }
        Ok(())
    })
}

/// Ball-screw axial force for a motor torque.
#[no_mangle]
pub extern "C" fn mech_ballscrew_force(lead: f64, efficiency: f64, motor_torque: f64) -> f64 {
    let spec = ActuatorSpec { name: String::new(), dof: 0, lead, efficiency };
    estimation::ballscrew_force(&spec, motor_torque)
}

/// Create an estimator at the model's home configuration.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer. The estimator keeps
/// its own copy of the model.
#[no_mangle]
pub unsafe extern "C" fn mech_estimator_new(model: *const MechModel, alpha: f64, beta: f64, dt: f64, out: *mut *mut MechEstimator) -> MechStatus {
    guard(|| {
        let md = &handle(model)?.model;
        if out.is_null() {
            return Err(fail(MechStatus::NullPointer, "null output"));
        }
        *out = std::ptr::null_mut();
        let config = EstimatorConfig { alpha, beta, dt, rate: 1.0 / dt };
        config.validate().map_err(lib)?;
        let state = EstimatorState::new(md, md.home_state().theta).map_err(lib)?;
        *out = Box::into_raw(Box::new(MechEstimator { model: md.clone(), state, config }));
        Ok(())
    })
}

/// Feed one actuator sample; writes the estimated DOF vector and closure error norm.
///
/// # Safety
/// `est` must be a live handle and the arrays hold the stated lengths;
/// `theta` and `error` may be null.
#[no_mangle]
pub unsafe extern "C" fn mech_estimator_step(
    est: *mut MechEstimator,
    qa: *const f64,
    qa_dot: *const f64,
    na: usize,
    theta: *mut f64,
    n: usize,
    error: *mut f64,
) -> MechStatus {
    guard(|| {
        let e = est.as_mut().ok_or_else(|| fail(MechStatus::NullPointer, "null handle"))?;
        expect("qa", na, e.model.n_actuated())?;
        let meas = MeasurementSet {
            qa: DVector::from_column_slice(slice(qa, na)?),
            qa_dot: DVector::from_column_slice(slice(qa_dot, na)?),
            absolute: vec![],
        };
        e.state = estimation::estimator_step(&e.model, &e.state, &meas, &e.config).map_err(lib)?;
        if !theta.is_null() {
            expect("theta", n, e.model.n)?;
            slice_mut(theta, n)?.copy_from_slice(e.state.theta.as_slice());
        }
        if !error.is_null() {
            *error = e.state.error_norm;
        }
        Ok(())
    })
}

/// Release an estimator. Null is ignored.
///
/// # Safety
/// `est` must come from [`mech_estimator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mech_estimator_free(est: *mut MechEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}
