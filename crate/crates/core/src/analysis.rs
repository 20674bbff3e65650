//! Workspace shapes, manipulability, Cartesian inertia, centroidal momentum and
//! transmission curves.

use nalgebra as na;
use na::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use rayon::prelude::*;
use serde::Serialize;

use crate::closure::{solve_closure, ClosureSystem, SelectionMap};
use crate::dynamics::joint_space_inertia;
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, frame_jacobian, Kinematics};
use crate::math::{singular_values, skew};
use crate::model::{FrameRef, GeneralizedState, MechanismModel};
use crate::qp::{self, QpOptions, QuadraticProgram};

const CLOSE_TOL: f64 = 1e-12;
const CLOSE_ITER: usize = 50;

/// Closed state with the given actuated values, Newton-started from `seed`.
pub fn close_at(model: &MechanismModel, seed: &GeneralizedState, qa: &DVector<f64>) -> Result<GeneralizedState> {
    let mut s = seed.clone();
    s.theta.rows_mut(model.m, model.n - model.m).copy_from(qa);
    solve_closure(model, &s, CLOSE_TOL, CLOSE_ITER)
}

#[derive(Clone, Debug)]
pub struct WorkspaceConfig {
    /// Commanded actuated velocity directions.
    pub directions: Vec<DVector<f64>>,
    pub speed: f64,
    pub dt: f64,
    pub stall: f64,
    pub max_steps: usize,
    /// Distance to a limit counted as binding.
    pub binding_tol: f64,
}

impl WorkspaceConfig {
    pub fn radial(model: &MechanismModel, count: usize) -> Result<Self> {
        let na = model.n_actuated();
        let directions = match na {
            1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
            2 => (0..count)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    DVector::from_vec(vec![a.cos(), a.sin()])
                })
                .collect(),
            _ => return Err(Error::Config(format!("radial sweep needs 1 or 2 actuated DOFs, model has {na}"))),
        };
        Ok(WorkspaceConfig { directions, speed: 0.1, dt: 1e-2, stall: 1e-6, max_steps: 5000, binding_tol: 1e-6 })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WorkspaceSample {
    pub direction: usize,
    pub actuated: Vec<f64>,
    pub selected: Vec<f64>,
    pub feasible: bool,
    /// Limits touched at the stall point, as `dof:lower` or `dof:upper`.
    pub binding: Vec<String>,
    pub steps: usize,
    pub error: Option<String>,
}

fn binding_limits(model: &MechanismModel, theta: &DVector<f64>, tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    for d in 0..model.n {
        let (lo, hi) = model.dof_limits(d);
        if theta[d] - lo <= tol {
            out.push(format!("{}:lower", model.dof_name(d)));
        }
        if hi - theta[d] <= tol {
            out.push(format!("{}:upper", model.dof_name(d)));
        }
    }
    out
}

fn within_limits(model: &MechanismModel, theta: &DVector<f64>, tol: f64) -> bool {
    (0..model.n).all(|d| {
        let (lo, hi) = model.dof_limits(d);
        theta[d] >= lo - tol && theta[d] <= hi + tol
    })
}

/// One velocity step: track the commanded actuated rate under closure and position limits.
fn sweep_step(model: &MechanismModel, kin: &Kinematics, theta: &DVector<f64>, target: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    let (n, m, off) = (model.n, model.m, model.base_dofs());
    let cs = ClosureSystem::new(model, kin);
    let mut p = QuadraticProgram::new(n);
    let mut sa = DMatrix::zeros(n - m, n);
    for i in 0..n - m {
        sa[(i, m + i)] = 1.0;
    }
    p.add_term(sa, target.clone(), 1.0);
    p.eq_mat = cs.jl.columns(off, n).into_owned();
    p.eq_rhs = DVector::zeros(cs.rows());
    let limited: Vec<usize> = (0..n).filter(|&d| model.dof_limits(d) != (f64::NEG_INFINITY, f64::INFINITY)).collect();
    let mut g = DMatrix::zeros(limited.len(), n);
    let mut lo = DVector::zeros(limited.len());
    let mut hi = DVector::zeros(limited.len());
    for (r, &d) in limited.iter().enumerate() {
        let (l, h) = model.dof_limits(d);
        g[(r, d)] = 1.0;
        lo[r] = (l - theta[d]) / dt;
        hi[r] = (h - theta[d]) / dt;
    }
    p.ineq_mat = g;
    p.ineq_upper = hi;
    p.ineq_lower = Some(lo);
    Ok(qp::solve(&p, &QpOptions::default())?.x)
}

fn sweep_direction(model: &MechanismModel, sel: &SelectionMap, start: &GeneralizedState, k: usize, dir: &DVector<f64>, cfg: &WorkspaceConfig) -> WorkspaceSample {
    let target = dir.normalize() * cfg.speed;
    let mut s = start.clone();
    let mut steps = 0;
    let failed = |s: &GeneralizedState, steps, e: Error| WorkspaceSample {
        direction: k,
        actuated: s.theta.rows(model.m, model.n - model.m).iter().cloned().collect(),
        selected: sel.apply(&s.theta).iter().cloned().collect(),
        feasible: false,
        binding: vec![],
        steps,
        error: Some(e.to_string()),
    };
    loop {
        let kin = match forward_kinematics(model, &s) {
            Ok(k) => k,
            Err(e) => return failed(&s, steps, e),
        };
        let v = match sweep_step(model, &kin, &s.theta, &target, cfg.dt) {
            Ok(v) => v,
            Err(e) => return failed(&s, steps, e),
        };
        if v.norm() < cfg.stall || steps >= cfg.max_steps {
            break;
        }
        let mut next = s.clone();
        next.theta += &v * cfg.dt;
        let qa = next.theta.rows(model.m, model.n - model.m).into_owned();
        match close_at(model, &next, &qa) {
            Ok(c) => s = c,
            Err(e) => return failed(&s, steps, e),
        }
        steps += 1;
    }
    WorkspaceSample {
        direction: k,
        actuated: s.theta.rows(model.m, model.n - model.m).iter().cloned().collect(),
        selected: sel.apply(&s.theta).iter().cloned().collect(),
        feasible: within_limits(model, &s.theta, cfg.binding_tol),
        binding: binding_limits(model, &s.theta, cfg.binding_tol),
        steps,
        error: None,
    }
}

/// Trace the reachable boundary by integrating the limit-constrained velocity QP
/// along each commanded direction until motion stalls.
pub fn workspace_explore(model: &MechanismModel, sel: &SelectionMap, start: &GeneralizedState, cfg: &WorkspaceConfig) -> Result<Vec<WorkspaceSample>> {
    if cfg.directions.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    if !(cfg.dt > 0.0 && cfg.speed > 0.0) {
        return Err(Error::Config("dt and speed must be positive".into()));
    }
    for d in 0..model.n {
        let (lo, hi) = model.dof_limits(d);
        if model.joints[model.dof_joint[d]].actuated && !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config(format!("actuated DOF `{}` needs finite limits", model.dof_name(d))));
        }
    }
    let na = model.n_actuated();
    if let Some(d) = cfg.directions.iter().find(|d| d.len() != na || d.norm() == 0.0) {
        return Err(Error::Dimension(format!("sweep direction of length {} for {na} actuated DOFs", d.len())));
    }
    Ok(cfg.directions.par_iter().enumerate().map(|(k, d)| sweep_direction(model, sel, start, k, d, cfg)).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct GridSample {
    pub actuated: Vec<f64>,
    pub selected: Vec<f64>,
    pub feasible: bool,
}

/// Regular grid over the actuator box.
pub fn actuator_grid(model: &MechanismModel, per_axis: usize) -> Result<Vec<DVector<f64>>> {
    let na = model.n_actuated();
    if per_axis < 2 {
        return Err(Error::Config("grid needs at least 2 points per axis".into()));
    }
    let bounds: Vec<(f64, f64)> = (0..na).map(|i| model.dof_limits(model.m + i)).collect();
    if bounds.iter().any(|(l, h)| !(l.is_finite() && h.is_finite())) {
        return Err(Error::Config("actuator grid needs finite limits".into()));
    }
    let total = per_axis.pow(na as u32);
    Ok((0..total)
        .map(|mut idx| {
            DVector::from_fn(na, |i, _| {
                let k = idx % per_axis;
                idx /= per_axis;
                let (l, h) = bounds[i];
                l + (h - l) * k as f64 / (per_axis - 1) as f64
            })
        })
        .collect())
}

/// Dense feasibility sampling: close each actuator grid point and check every limit.
pub fn dense_feasibility(model: &MechanismModel, sel: &SelectionMap, start: &GeneralizedState, grid: &[DVector<f64>]) -> Vec<GridSample> {
    grid.par_iter()
        .map(|qa| match close_at(model, start, qa) {
            Ok(s) => GridSample {
                actuated: qa.iter().cloned().collect(),
                selected: sel.apply(&s.theta).iter().cloned().collect(),
                feasible: within_limits(model, &s.theta, 1e-12),
            },
            Err(_) => GridSample { actuated: qa.iter().cloned().collect(), selected: vec![], feasible: false },
        })
        .collect()
}

fn segment_distance(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

/// Symmetric Hausdorff distance in a 2-D plane between a closed polygon (the swept
/// boundary, in sweep order) and the boundary cells of a feasible grid region.
/// Polygon vertices are measured against feasible grid points, grid boundary cells
/// against the polygon edges.
pub fn boundary_hausdorff(polygon: &[[f64; 2]], grid: &[[f64; 2]], feasible: &[bool], per_axis: usize) -> f64 {
    let idx = |i: usize, j: usize| i + j * per_axis;
    let mut edge_cells = Vec::new();
    for j in 0..per_axis {
        for i in 0..per_axis {
            if !feasible[idx(i, j)] {
                continue;
            }
            let on_edge = i == 0 || j == 0 || i + 1 == per_axis || j + 1 == per_axis;
            let open = on_edge || !feasible[idx(i - 1, j)] || !feasible[idx(i + 1, j)] || !feasible[idx(i, j - 1)] || !feasible[idx(i, j + 1)];
            if open {
                edge_cells.push(grid[idx(i, j)]);
            }
        }
    }
    let to_grid = polygon
        .iter()
        .map(|p| {
            grid.iter()
                .zip(feasible)
                .filter(|(_, &f)| f)
                .map(|(g, _)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let k = polygon.len();
    let to_polygon = edge_cells
        .iter()
        .map(|c| (0..k).map(|i| segment_distance(c, &polygon[i], &polygon[(i + 1) % k])).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    to_grid.max(to_polygon)
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(p: &[[f64; 2]]) -> f64 {
    let k = p.len();
    (0..k).map(|i| p[i][0] * p[(i + 1) % k][1] - p[(i + 1) % k][0] * p[i][1]).sum::<f64>().abs() * 0.5
}

#[derive(Clone, Debug, Serialize)]
pub struct ManipulabilitySample {
    pub actuated: Vec<f64>,
    pub linear: f64,
    pub angular: f64,
    pub singular: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ManipulabilityMap {
    pub frame: String,
    pub samples: Vec<ManipulabilitySample>,
    /// Unnormalized maxima used for scaling.
    pub max_linear: f64,
    pub max_angular: f64,
}

fn yoshikawa(j: &DMatrix<f64>) -> f64 {
    singular_values(j).iter().product()
}

/// Projected frame Jacobian `J L` mapping base and actuated rates to the frame twist.
pub fn projected_jacobian(model: &MechanismModel, kin: &Kinematics, frame: &FrameRef) -> Result<DMatrix<f64>> {
    let cs = ClosureSystem::new(model, kin);
    Ok(frame_jacobian(model, kin, frame) * cs.lift()?)
}

/// Normalized Yoshikawa measure of the linear and angular blocks over an actuator grid.
pub fn manipulability_map(model: &MechanismModel, start: &GeneralizedState, grid: &[DVector<f64>], frame: &FrameRef, frame_name: &str) -> Result<ManipulabilityMap> {
    if grid.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    let off = model.base_dofs();
    let raw: Vec<ManipulabilitySample> = grid
        .par_iter()
        .map(|qa| {
            let eval = || -> Result<(f64, f64)> {
                let s = close_at(model, start, qa)?;
                let kin = forward_kinematics(model, &s)?;
                let jp = projected_jacobian(model, &kin, frame)?;
                let cols = jp.ncols() - off;
                let jl = jp.view((0, off), (3, cols)).into_owned();
                let ja = jp.view((3, off), (3, cols)).into_owned();
                Ok((yoshikawa(&jl), yoshikawa(&ja)))
            };
            let (linear, angular, singular) = match eval() {
                Ok((l, a)) => (l, a, false),
                Err(_) => (0.0, 0.0, true),
            };
            ManipulabilitySample { actuated: qa.iter().cloned().collect(), linear, angular, singular }
        })
        .collect();
    let max_linear = raw.iter().map(|s| s.linear).fold(0.0, f64::max);
    let max_angular = raw.iter().map(|s| s.angular).fold(0.0, f64::max);
    let samples = raw
        .into_iter()
        .map(|mut s| {
            s.linear = if max_linear > 0.0 { s.linear / max_linear } else { 0.0 };
            s.angular = if max_angular > 0.0 { s.angular / max_angular } else { 0.0 };
            s
        })
        .collect();
    Ok(ManipulabilityMap { frame: frame_name.to_string(), samples, max_linear, max_angular })
}

pub const DEFAULT_INERTIA_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InertiaAxes {
    World,
    /// Resolved in the frame's own axes.
    Frame,
}

#[derive(Clone, Debug, Serialize)]
pub struct InertiaAnalysis {
    pub lambda: Matrix6<f64>,
    pub eps: f64,
    pub axes: InertiaAxes,
    pub column_norms: Vector6<f64>,
}

/// `Lambda = (J M^-1 J' + eps I)^-1` on the projected (base + actuated) coordinates.
pub fn cartesian_inertia(model: &MechanismModel, state: &GeneralizedState, frame: &FrameRef, eps: f64, axes: InertiaAxes) -> Result<InertiaAnalysis> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("negative regularization {eps}")));
    }
    let kin = forward_kinematics(model, state)?;
    let cs = ClosureSystem::new(model, &kin);
    let lift = cs.lift()?;
    let mm = lift.tr_mul(&(joint_space_inertia(model, &kin) * &lift));
    let jm = frame_jacobian(model, &kin, frame) * &lift;
    let chol = mm.cholesky().ok_or(Error::SingularInertia)?;
    let inv = &jm * chol.solve(&jm.transpose()) + DMatrix::identity(6, 6) * eps;
    let lam = inv.try_inverse().ok_or(Error::SingularInertia)?;
    let mut lambda = Matrix6::from_iterator(lam.iter().cloned());
    if axes == InertiaAxes::Frame {
        let r = kin.frame_pose(frame).rotation;
        let mut t = Matrix6::zeros();
        t.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        t.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        lambda = t.transpose() * lambda * t;
    }
    lambda = (lambda + lambda.transpose()) * 0.5;
    let column_norms = Vector6::from_fn(|j, _| lambda.column(j).norm());
    Ok(InertiaAnalysis { lambda, eps, axes, column_norms })
}

/// Column-norm ratios `chi_j = |Lambda_ref,j| / |Lambda_test,j|`.
pub fn inertia_ratio(reference: &Matrix6<f64>, test: &Matrix6<f64>) -> Result<Vector6<f64>> {
    let mut out = Vector6::zeros();
    for j in 0..6 {
        let d = test.column(j).norm();
        if d == 0.0 {
            return Err(Error::ZeroNormColumn(j));
        }
        out[j] = reference.column(j).norm() / d;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CentroidalQuantities {
    pub com: Vector3<f64>,
    pub total_mass: f64,
    /// Per-link momenta at each link COM, 6 rows per link.
    pub a_s: DMatrix<f64>,
    pub b_s: DMatrix<f64>,
    pub j_s: DMatrix<f64>,
    /// Stacked per-link transforms from link COM to the centroid (6N x 6).
    pub x_g: DMatrix<f64>,
    /// Centroidal momentum matrix, 6 x nv (linear rows first).
    pub a_g: DMatrix<f64>,
    pub momentum: Vector6<f64>,
    /// Angular rows of `A_G` times the closure lift, 3 x (base + actuated).
    pub projected_camm: DMatrix<f64>,
}

impl CentroidalQuantities {
    pub fn camm(&self) -> DMatrix<f64> {
        self.a_g.rows(3, 3).into_owned()
    }
}

/// `A_G = X_G' B_S J_S` and `h = A_G nu`.
pub fn centroidal_momentum(model: &MechanismModel, state: &GeneralizedState) -> Result<CentroidalQuantities> {
    let total_mass = model.total_mass();
    if !(total_mass > 0.0) {
        return Err(Error::SingularInertia);
    }
    let kin = forward_kinematics(model, state)?;
    let (nl, nv) = (model.links.len(), model.nv());
    let coms: Vec<Vector3<f64>> = (0..nl).map(|l| kin.pos[l] + kin.rot[l] * model.links[l].com).collect();
    let com = coms.iter().zip(&model.links).map(|(c, l)| c * l.mass).sum::<Vector3<f64>>() / total_mass;
    let mut j_s = DMatrix::zeros(6 * nl, nv);
    let mut b_s = DMatrix::zeros(6 * nl, 6 * nl);
    let mut x_g = DMatrix::zeros(6 * nl, 6);
    for (l, link) in model.links.iter().enumerate() {
        let f = FrameRef { link: l, rot: Matrix3::identity(), pos: link.com };
        j_s.view_mut((6 * l, 0), (6, nv)).copy_from(&frame_jacobian(model, &kin, &f));
        let r = kin.rot[l];
        b_s.view_mut((6 * l, 6 * l), (3, 3)).copy_from(&(Matrix3::identity() * link.mass));
        b_s.view_mut((6 * l + 3, 6 * l + 3), (3, 3)).copy_from(&(r * link.inertia * r.transpose()));
        // linear momentum carries over, the angular part picks up (c_i - c_G) x p_i
        let mut xt = Matrix6::<f64>::identity();
        xt.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(&(coms[l] - com)));
        x_g.view_mut((6 * l, 0), (6, 6)).copy_from(&xt.transpose());
    }
    let a_s = &b_s * &j_s;
    let a_g = x_g.transpose() * &a_s;
    let h = &a_g * state.nu();
    let cs = ClosureSystem::new(model, &kin);
    let projected_camm = a_g.rows(3, 3) * cs.lift()?;
    Ok(CentroidalQuantities {
        com,
        total_mass,
        a_s,
        b_s,
        j_s,
        x_g,
        a_g,
        momentum: Vector6::from_iterator(h.iter().cloned()),
        projected_camm,
    })
}

/// Per-axis ratios of CAMM row norms over the DOF columns (base columns excluded).
pub fn camm_ratio(model_ref: &MechanismModel, reference: &DMatrix<f64>, model_test: &MechanismModel, test: &DMatrix<f64>) -> Result<Vector3<f64>> {
    camm_ratio_offset(reference, model_ref.base_dofs(), test, model_test.base_dofs())
}

/// Same as [`camm_ratio`] with the number of leading base columns given directly.
pub fn camm_ratio_offset(reference: &DMatrix<f64>, or: usize, test: &DMatrix<f64>, ot: usize) -> Result<Vector3<f64>> {
    if reference.ncols() < or || test.ncols() < ot {
        return Err(Error::Dimension("CAMM has fewer columns than base DOFs".into()));
    }
    let (cr, ct) = (reference.ncols() - or, test.ncols() - ot);
    if cr != ct || reference.nrows() != 3 || test.nrows() != 3 {
        return Err(Error::Dimension(format!("CAMM shapes 3 x {cr} and 3 x {ct} do not match")));
    }
    let mut out = Vector3::zeros();
    for i in 0..3 {
        let d = test.view((i, ot), (1, ct)).norm();
        if d == 0.0 {
            return Err(Error::ZeroNormColumn(i));
        }
        out[i] = reference.view((i, or), (1, cr)).norm() / d;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub enum TransmissionOutput {
    Dof(usize),
    /// Velocity of a frame origin along a world direction.
    Point { frame: FrameRef, direction: Vector3<f64> },
}

#[derive(Clone, Debug, Serialize)]
pub struct TransmissionSample {
    pub input: f64,
    pub output: f64,
    /// d output / d input.
    pub ratio: f64,
    /// Output effort for the applied input effort (virtual work).
    pub force: f64,
    pub error: Option<String>,
}

/// Sweep one actuator with the others held, reporting the output position, the
/// velocity ratio and the transmitted effort `F_in / ratio`.
pub fn transmission_curve(
    model: &MechanismModel,
    start: &GeneralizedState,
    actuator: usize,
    output: &TransmissionOutput,
    sweep: &[f64],
    applied: f64,
) -> Result<Vec<TransmissionSample>> {
    let (m, off) = (model.m, model.base_dofs());
    if actuator < m || actuator >= model.n {
        return Err(Error::Dimension(format!("DOF {actuator} is not actuated")));
    }
    if let TransmissionOutput::Dof(d) = output {
        if *d >= model.n {
            return Err(Error::Dimension(format!("output DOF {d} out of range")));
        }
    }
    let mut seed = start.clone();
    let mut out = Vec::with_capacity(sweep.len());
    for &x in sweep {
        let mut qa = seed.theta.rows(m, model.n - m).into_owned();
        qa[actuator - m] = x;
        let eval = |s: &GeneralizedState| -> Result<(f64, f64)> {
            let kin = forward_kinematics(model, s)?;
            let lift = ClosureSystem::new(model, &kin).lift()?;
            let col = off + actuator - m;
            Ok(match output {
                TransmissionOutput::Dof(d) => (s.theta[*d], lift[(off + d, col)]),
                TransmissionOutput::Point { frame, direction } => {
                    let p = kin.frame_pose(frame).position.dot(direction);
                    let j = frame_jacobian(model, &kin, frame).rows(0, 3).tr_mul(direction);
                    (p, j.dot(&lift.column(col)))
                }
            })
        };
        match close_at(model, &seed, &qa).and_then(|s| eval(&s).map(|r| (s, r))) {
            Ok((s, (pos, ratio))) => {
                out.push(TransmissionSample { input: x, output: pos, ratio, force: applied / ratio, error: None });
                seed = s;
            }
            Err(e) => out.push(TransmissionSample { input: x, output: f64::NAN, ratio: f64::NAN, force: f64::NAN, error: Some(e.to_string()) }),
        }
    }
    Ok(out)
}

/// Evenly spaced sweep across an actuator's limits.
pub fn actuator_sweep(model: &MechanismModel, actuator: usize, count: usize) -> Result<Vec<f64>> {
    let (lo, hi) = model.dof_limits(actuator);
    if !(lo.is_finite() && hi.is_finite()) || count < 2 {
        return Err(Error::Config("sweep needs finite limits and at least 2 samples".into()));
    }
    Ok((0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect())
}
