//! Small rotation and linear-algebra helpers shared by every module.

use nalgebra as na;
use na::{DMatrix, DVector, Matrix3, Rotation3, UnitQuaternion, Vector3};

/// Skew matrix with `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation from roll-pitch-yaw, intrinsic X then Y then Z.
pub fn rpy_to_matrix(rpy: &Vector3<f64>) -> Matrix3<f64> {
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), rpy.x);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), rpy.y);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), rpy.z);
    (rx * ry * rz).into_inner()
}

/// Inverse of [`rpy_to_matrix`]. Pitch is taken in [-pi/2, pi/2].
pub fn matrix_to_rpy(r: &Matrix3<f64>) -> Vector3<f64> {
    // R = Rx(a) Ry(b) Rz(c): r02 = sin b, r12 = -sin a cos b, r22 = cos a cos b,
    // r01 = -cos b sin c, r00 = cos b cos c
    let sb = r[(0, 2)].clamp(-1.0, 1.0);
    let b = sb.asin();
    if sb.abs() < 1.0 - 1e-12 {
        let a = (-r[(1, 2)]).atan2(r[(2, 2)]);
        let c = (-r[(0, 1)]).atan2(r[(0, 0)]);
        Vector3::new(a, b, c)
    } else {
        // gimbal lock, fold everything into roll
        let a = r[(2, 1)].atan2(r[(1, 1)]);
        Vector3::new(a, b, 0.0)
    }
}

/// Rotation vector of `r` (angle times unit axis), angle in [0, pi].
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_matrix(r);
    let (w, v) = (q.w, q.imag());
    let (w, v) = if w < 0.0 { (-w, -v) } else { (w, v) };
    let s = v.norm();
    if s < 1e-12 {
        // first order: log = 2 v / w
        return v * (2.0 / w);
    }
    let angle = 2.0 * s.atan2(w);
    v * (angle / s)
}

pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*w).into_inner()
}

/// Re-orthonormalise a nearly orthonormal matrix.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    UnitQuaternion::from_matrix(r).to_rotation_matrix().into_inner()
}

/// Singular values of a dense matrix, largest first. Empty for empty input.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    singular_values(a).last().copied().unwrap_or(f64::INFINITY)
}

/// Numerical rank with a relative tolerance on the largest singular value.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(&0.0) => 0,
        Some(&smax) => s.iter().filter(|&&x| x > rel_tol * smax).count(),
    }
}

struct TruncatedSvd {
    u: DMatrix<f64>,
    s: DVector<f64>,
    vt: DMatrix<f64>,
    null: DMatrix<f64>,
}

impl TruncatedSvd {
    fn new(a: &DMatrix<f64>, rel_tol: f64) -> Self {
        let n = a.ncols();
        // pad to at least n rows so the thin SVD carries a full V
        let rows = a.nrows().max(n);
        let mut padded = DMatrix::zeros(rows, n);
        padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        let svd = padded.svd(true, true);
        let (u, vt, sv) = (svd.u.unwrap(), svd.v_t.unwrap(), svd.singular_values);
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..sv.len()).partition(|&i| smax > 0.0 && sv[i] > rel_tol * smax);
        TruncatedSvd {
            u: DMatrix::from_fn(a.nrows(), kept.len(), |i, j| u[(i, kept[j])]),
            s: DVector::from_fn(kept.len(), |i, _| sv[kept[i]]),
            vt: DMatrix::from_fn(kept.len(), n, |i, j| vt[(kept[i], j)]),
            null: DMatrix::from_fn(n, dropped.len(), |i, j| vt[(dropped[j], i)]),
        }
    }

    fn apply(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = self.u.tr_mul(b);
        for (i, mut row) in c.row_iter_mut().enumerate() {
            row /= self.s[i];
        }
        self.vt.tr_mul(&c)
    }
}

// nalgebra's SVD can lose a few digits on wide rank-deficient systems, so
// both results below get a refinement pass against the original matrix.

/// Minimum-norm least-squares solution of `a x = b` via truncated SVD.
/// Returns `(x, rank)`.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> (DVector<f64>, usize) {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return (DVector::zeros(n), 0);
    }
    let t = TruncatedSvd::new(a, rel_tol);
    let b = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let mut x = t.apply(&b);
    for _ in 0..2 {
        x += t.apply(&(&b - a * &x));
    }
    (x.column(0).into_owned(), t.s.len())
}

/// Orthonormal basis of the null space of `a` (columns), rank tolerance relative.
pub fn null_space(a: &DMatrix<f64>, n: usize, rel_tol: f64) -> (DMatrix<f64>, usize) {
    if a.nrows() == 0 {
        return (DMatrix::identity(n, n), 0);
    }
    let t = TruncatedSvd::new(a, rel_tol);
    let k = t.null.ncols();
    if k == 0 {
        return (t.null, t.s.len());
    }
    let leak = a * &t.null;
    if leak.amax() <= 1e-15 * a.amax() {
        return (t.null, t.s.len());
    }
    let z = &t.null - t.apply(&leak);
    (z.qr().q().columns(0, k).into_owned(), t.s.len())
}

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, &x| a.max(x.abs()))
}
