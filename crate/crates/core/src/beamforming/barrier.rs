//! Log-barrier interior-point method for small dense convex problems
//!
//! ```text
//! minimize cᵀz  subject to  f_i(z) < 0,
//! ```
//!
//! with twice differentiable convex `f_i`. Centering uses damped Newton
//! steps with a feasibility-preserving backtracking line search.

use nalgebra::{Cholesky, DMatrix, DVector};

/// A convex problem with linear objective, described through its
/// constraints.
pub(crate) trait BarrierProblem {
    fn dim(&self) -> usize;
    fn objective(&self) -> &DVector<f64>;
    /// Writes every `f_i(z)`; returns false when `z` is outside the
    /// domain of some `f_i`.
    fn constraints(&self, z: &DVector<f64>, values: &mut Vec<f64>) -> bool;
    /// Adds `Σ −∇f_i/f_i` to `grad` and `Σ ∇f_i∇f_iᵀ/f_i² − ∇²f_i/f_i` to
    /// `hess`, given the constraint values at `z`.
    fn accumulate(&self, z: &DVector<f64>, values: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BarrierOptions {
    pub t0: f64,
    pub mu: f64,
    /// Stop when the duality gap bound `m/t` falls below this.
    pub gap_tol: f64,
    /// Newton decrement threshold `λ²/2`.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions { t0: 1.0, mu: 20.0, gap_tol: 1e-9, newton_tol: 1e-10, max_newton: 80 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum BarrierError {
    Infeasible,
    Numerical(&'static str),
}

fn barrier_value<P: BarrierProblem>(p: &P, t: f64, z: &DVector<f64>, buf: &mut Vec<f64>) -> Option<f64> {
    if !p.constraints(z, buf) {
        return None;
    }
    let mut phi = t * p.objective().dot(z);
    for &f in buf.iter() {
        if !(f < 0.0) {
            return None;
        }
        phi -= (-f).ln();
    }
    phi.is_finite().then_some(phi)
}

/// Runs the barrier method from the strictly feasible `z0`.
pub(crate) fn solve<P: BarrierProblem>(
    p: &P,
    z0: DVector<f64>,
    opts: &BarrierOptions,
) -> Result<DVector<f64>, BarrierError> {
    let n = p.dim();
    let mut buf = Vec::new();
    let mut z = z0;
    if barrier_value(p, opts.t0, &z, &mut buf).is_none() {
        return Err(BarrierError::Infeasible);
    }
    let m = buf.len() as f64;
    let mut t = opts.t0;
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    loop {
        for _ in 0..opts.max_newton {
            let phi = barrier_value(p, t, &z, &mut buf).ok_or(BarrierError::Numerical("left the domain"))?;
            grad.copy_from(p.objective());
            grad *= t;
            hess.fill(0.0);
            p.accumulate(&z, &buf, &mut grad, &mut hess);
            let step = newton_step(&hess, &grad).ok_or(BarrierError::Numerical("singular Newton system"))?;
            let decrement = -grad.dot(&step);
            if !decrement.is_finite() {
                return Err(BarrierError::Numerical("non-finite Newton decrement"));
            }
            if decrement / 2.0 <= opts.newton_tol {
                break;
            }
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &z + &step * s;
                if let Some(v) = barrier_value(p, t, &trial, &mut buf) {
                    if v <= phi - 0.25 * s * decrement {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                // No descent left at working precision: treat as centered.
                break;
            }
        }
        if m / t < opts.gap_tol {
            return Ok(z);
        }
        t *= opts.mu;
    }
}

fn newton_step(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += reg;
            }
        }
        if let Some(chol) = Cholesky::new(h) {
            let step = -chol.solve(grad);
            if step.iter().all(|x| x.is_finite()) {
                return Some(step);
            }
        }
        reg = if reg == 0.0 { scale * 1e-12 } else { reg * 100.0 };
    }
    None
}
