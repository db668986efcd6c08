//! Local solvers used by every search in the crate.
//!
//! Two pieces:
//!
//! * a damped Newton minimizer for smooth scalar functions restricted to the
//!   unit sphere (used by the membership oracle), and
//! * a Levenberg-Marquardt loop over products of Euclidean factors and unit
//!   spheres, with numeric Jacobians taken in tangent coordinates and a
//!   retraction (renormalization) after every step.
//!
//! Both are deterministic: no internal randomness, fixed iteration order.

use nalgebra::{DMatrix, DVector};

use crate::geometry::{retract_sphere, tangent_basis};

/// One factor of a product domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// A free vector in `R^k`.
    Euclidean(usize),
    /// A unit vector in `R^k` (so `k - 1` tangent parameters).
    Sphere(usize),
}

impl Block {
    pub fn ambient_dim(&self) -> usize {
        match *self {
            Block::Euclidean(k) | Block::Sphere(k) => k,
        }
    }

    pub fn tangent_dim(&self) -> usize {
        match *self {
            Block::Euclidean(k) => k,
            Block::Sphere(k) => k - 1,
        }
    }
}

/// A point of a product domain, stored per block in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    pub blocks: Vec<Block>,
    pub values: Vec<DVector<f64>>,
}

impl ProductState {
    pub fn new(blocks: Vec<Block>, values: Vec<DVector<f64>>) -> Self {
        assert_eq!(blocks.len(), values.len());
        for (b, v) in blocks.iter().zip(values.iter()) {
            assert_eq!(b.ambient_dim(), v.len());
            if let Block::Sphere(_) = b {
                debug_assert!((v.norm() - 1.0).abs() < 1e-9, "sphere block must start unit");
            }
        }
        Self { blocks, values }
    }

    pub fn tangent_dim(&self) -> usize {
        self.blocks.iter().map(Block::tangent_dim).sum()
    }

    /// Moves by `step` (tangent coordinates, concatenated per block) and
    /// re-projects sphere blocks onto the sphere.
    pub fn retract(&self, step: &DVector<f64>) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        let mut off = 0;
        for (b, v) in self.blocks.iter().zip(self.values.iter()) {
            let t = b.tangent_dim();
            let s = DVector::from_iterator(t, (0..t).map(|j| step[off + j]));
            off += t;
            match b {
                Block::Euclidean(_) => values.push(v + s),
                Block::Sphere(_) => {
                    let basis = tangent_basis(v);
                    values.push(retract_sphere(v, &basis, &s));
                }
            }
        }
        Self {
            blocks: self.blocks.clone(),
            values,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Stop as converged when the residual norm drops below this.
    pub tol_residual: f64,
    /// Stop when the accepted step is shorter than this.
    pub tol_step: f64,
    /// Central-difference step for the numeric Jacobian.
    pub fd_step: f64,
    pub lambda_init: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 120,
            tol_residual: 1e-12,
            tol_step: 1e-14,
            fd_step: 1e-6,
            lambda_init: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub state: ProductState,
    pub residual_norm: f64,
    pub iterations: usize,
    /// True when the residual tolerance was met.
    pub converged: bool,
}

/// Numeric Jacobian of `f` in the tangent chart centered at `state`.
fn numeric_jacobian<F>(f: &F, state: &ProductState, m: usize, fd: f64) -> DMatrix<f64>
where
    F: Fn(&ProductState) -> DVector<f64>,
{
    let n = state.tangent_dim();
    let mut jac = DMatrix::zeros(m, n);
    let mut step = DVector::zeros(n);
    for j in 0..n {
        step[j] = fd;
        let rp = f(&state.retract(&step));
        step[j] = -fd;
        let rm = f(&state.retract(&step));
        step[j] = 0.0;
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * fd);
        }
    }
    jac
}

/// Levenberg-Marquardt with numeric Jacobians over a product domain.
///
/// `residual` must return a vector of fixed length. The loop only ever
/// accepts cost-decreasing steps, so the final cost is monotone in the
/// starting cost.
pub fn levenberg_marquardt<F>(residual: F, start: ProductState, opts: &LmOptions) -> LmResult
where
    F: Fn(&ProductState) -> DVector<f64>,
{
    let mut state = start;
    let mut r = residual(&state);
    let m = r.len();
    let n = state.tangent_dim();
    let mut cost = r.norm_squared();
    let mut lambda = opts.lambda_init;
    let mut iterations = 0;

    if cost.sqrt() < opts.tol_residual {
        return LmResult {
            state,
            residual_norm: cost.sqrt(),
            iterations,
            converged: true,
        };
    }

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let jac = numeric_jacobian(&residual, &state, m, opts.fd_step);
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * &r;

        let mut accepted = false;
        for _ in 0..12 {
            // Marquardt scaling, with a floor so zero columns stay solvable
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let delta = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial = state.retract(&delta);
            let rt = residual(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                state = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if cost.sqrt() < opts.tol_residual {
                    return LmResult {
                        state,
                        residual_norm: cost.sqrt(),
                        iterations,
                        converged: true,
                    };
                }
                if delta.norm() < opts.tol_step {
                    return LmResult {
                        state,
                        residual_norm: cost.sqrt(),
                        iterations,
                        converged: cost.sqrt() < opts.tol_residual,
                    };
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !accepted {
            break; // stuck: damping exhausted without a decreasing step
        }
    }

    LmResult {
        converged: cost.sqrt() < opts.tol_residual,
        residual_norm: cost.sqrt(),
        state,
        iterations,
    }
}

#[derive(Debug, Clone)]
pub struct SphereNewtonOptions {
    pub max_iters: usize,
    /// Stop when the tangential gradient norm drops below this.
    pub grad_tol: f64,
}

impl Default for SphereNewtonOptions {
    fn default() -> Self {
        Self {
            max_iters: 80,
            grad_tol: 1e-13,
        }
    }
}

/// Damped Newton minimization of a smooth function restricted to the unit
/// sphere, given ambient value/gradient/Hessian evaluators.
///
/// For a 1-homogeneous objective the reduced Hessian is
/// `Q^T H Q - (grad . u) I` (the curvature correction of the sphere).
/// Falls back to gradient steps with backtracking whenever the Newton step
/// fails to decrease the value. Returns the best point seen.
pub fn minimize_on_sphere(
    value: &dyn Fn(&DVector<f64>) -> f64,
    grad: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    hess: &dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    start: &DVector<f64>,
    opts: &SphereNewtonOptions,
) -> (DVector<f64>, f64) {
    let mut u = start.normalize();
    let mut f = value(&u);
    for _ in 0..opts.max_iters {
        let g_amb = grad(&u);
        let basis = tangent_basis(&u);
        let g_r = basis.transpose() * &g_amb;
        if g_r.norm() < opts.grad_tol {
            break;
        }
        let h_amb = hess(&u);
        let radial = g_amb.dot(&u);
        let dim_t = basis.ncols();
        let mut h_r = basis.transpose() * &h_amb * &basis;
        for i in 0..dim_t {
            h_r[(i, i)] -= radial;
        }

        let mut moved = false;
        let mut mu = 0.0;
        let scale = h_r.diagonal().amax().max(1e-12);
        for _ in 0..10 {
            let mut damped = h_r.clone();
            for i in 0..dim_t {
                damped[(i, i)] += mu;
            }
            if let Some(ch) = damped.cholesky() {
                let step = ch.solve(&(-&g_r));
                let trial = retract_sphere(&u, &basis, &step);
                let ft = value(&trial);
                if ft < f {
                    u = trial;
                    f = ft;
                    moved = true;
                    break;
                }
            }
            mu = if mu == 0.0 { 1e-4 * scale } else { mu * 10.0 };
        }
        if !moved {
            // backtracking gradient descent in the tangent chart
            let mut t = 1.0 / scale;
            for _ in 0..40 {
                let step = -&g_r * t;
                let trial = retract_sphere(&u, &basis, &step);
                let ft = value(&trial);
                if ft < f {
                    u = trial;
                    f = ft;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !moved {
            break;
        }
    }
    (u, f)
}
