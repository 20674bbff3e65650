use mechkit::qp::QuadraticProgram;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Strictly convex QP feasible at a random point, optionally with two-sided rows.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, neq: usize, nin: usize, two_sided: bool) -> QuadraticProgram {
    let mut qp = QuadraticProgram::new(n);
    qp.add_term(rand_mat(rng, n + 2, n), rand_vec(rng, n + 2) * 3.0, 1.0);
    qp.add_term(DMatrix::identity(n, n), DVector::zeros(n), 0.1);
    let x0 = rand_vec(rng, n) * 0.5;
    qp.eq_mat = rand_mat(rng, neq, n);
    qp.eq_rhs = &qp.eq_mat * &x0;
    qp.ineq_mat = rand_mat(rng, nin, n);
    let gx = &qp.ineq_mat * &x0;
    qp.ineq_upper = DVector::from_fn(nin, |i, _| gx[i] + rng.gen_range(0.0..0.3));
    if two_sided {
        qp.ineq_lower = Some(DVector::from_fn(nin, |i, _| {
            if rng.gen_bool(0.7) {
                gx[i] - rng.gen_range(0.0..0.3)
            } else {
                f64::NEG_INFINITY
            }
        }));
    }
    qp
}

pub struct Enumerated {
    pub x: DVector<f64>,
    pub upper: DVector<f64>,
    pub lower: DVector<f64>,
    pub objective: f64,
}

/// Brute force over every active pattern: solve the equality-constrained KKT
/// system and keep the best primal-dual feasible candidate.
pub fn enumerate(qp: &QuadraticProgram) -> Enumerated {
    let (p, c, _) = qp.hessian();
    let n = qp.n;
    let r = qp.ineq_upper.len();
    let lower = qp.ineq_lower.clone().unwrap_or_else(|| DVector::from_element(r, f64::NEG_INFINITY));
    let choices: Vec<Vec<u8>> = (0..r)
        .map(|i| {
            let mut v = vec![0u8, 1];
            if lower[i].is_finite() {
                v.push(2);
            }
            v
        })
        .collect();
    let total: usize = choices.iter().map(|v| v.len()).product();
    let mut best: Option<Enumerated> = None;
    for code in 0..total {
        let mut rem = code;
        let pattern: Vec<u8> = choices
            .iter()
            .map(|v| {
                let k = v[rem % v.len()];
                rem /= v.len();
                k
            })
            .collect();
        let act: Vec<usize> = (0..r).filter(|&i| pattern[i] != 0).collect();
        let k = qp.eq_rhs.len() + act.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p);
        rhs.rows_mut(0, n).copy_from(&(-&c));
        let ne = qp.eq_rhs.len();
        for i in 0..ne {
            for j in 0..n {
                kkt[(n + i, j)] = qp.eq_mat[(i, j)];
                kkt[(j, n + i)] = qp.eq_mat[(i, j)];
            }
            rhs[n + i] = qp.eq_rhs[i];
        }
        for (a, &i) in act.iter().enumerate() {
            for j in 0..n {
                kkt[(n + ne + a, j)] = qp.ineq_mat[(i, j)];
                kkt[(j, n + ne + a)] = qp.ineq_mat[(i, j)];
            }
            rhs[n + ne + a] = if pattern[i] == 1 { qp.ineq_upper[i] } else { lower[i] };
        }
        if mechkit::math::sigma_min(&kkt) < 1e-10 {
            continue;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let gx = &qp.ineq_mat * &x;
        let feasible = (0..r).all(|i| gx[i] <= qp.ineq_upper[i] + 1e-9 && gx[i] >= lower[i] - 1e-9);
        let mut up = DVector::zeros(r);
        let mut lo = DVector::zeros(r);
        let mut dual_ok = true;
        for (a, &i) in act.iter().enumerate() {
            let y = sol[n + ne + a];
            if pattern[i] == 1 {
                up[i] = y;
                dual_ok &= y >= -1e-9;
            } else {
                lo[i] = -y;
                dual_ok &= y <= 1e-9;
            }
        }
        if !(feasible && dual_ok) {
            continue;
        }
        let objective = qp.objective(&x);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(Enumerated { x, upper: up, lower: lo, objective });
        }
    }
    best.expect("feasible strictly convex QP has a KKT point")
}
