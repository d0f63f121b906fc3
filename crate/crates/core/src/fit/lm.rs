//! Box-constrained Levenberg-Marquardt. Bounds are removed by a smooth
//! change of variables and the unconstrained problem is solved with
//! forward-difference Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub relative_decrease_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, step_tolerance: 1e-10, relative_decrease_tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresResult {
    pub solution: Vec<f64>,
    /// Euclidean norm of the residual vector at the solution.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// How one coordinate maps between the bounded and free spaces.
#[derive(Debug, Clone, Copy)]
enum Transform {
    Free,
    Interval { lo: f64, hi: f64 },
    Lower(f64),
    Upper(f64),
}

impl Transform {
    fn new(lo: f64, hi: f64) -> Self {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => Transform::Interval { lo, hi },
            (true, false) => Transform::Lower(lo),
            (false, true) => Transform::Upper(hi),
            (false, false) => Transform::Free,
        }
    }

    fn to_free(self, x: f64) -> f64 {
        const EDGE: f64 = 1e-12;
        match self {
            Transform::Free => x,
            Transform::Interval { lo, hi } => {
                let t = ((x - lo) / (hi - lo)).clamp(EDGE, 1.0 - EDGE);
                (t / (1.0 - t)).ln()
            }
            Transform::Lower(lo) => (x - lo).max(EDGE * lo.abs().max(1.0)).ln(),
            Transform::Upper(hi) => (hi - x).max(EDGE * hi.abs().max(1.0)).ln(),
        }
    }

    fn to_bounded(self, u: f64) -> f64 {
        match self {
            Transform::Free => u,
            Transform::Interval { lo, hi } => {
                let t = if u >= 0.0 { 1.0 / (1.0 + (-u).exp()) } else { u.exp() / (1.0 + u.exp()) };
                (lo + (hi - lo) * t).clamp(lo, hi)
            }
            Transform::Lower(lo) => lo + u.exp(),
            Transform::Upper(hi) => hi - u.exp(),
        }
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimise Σ r(x)² subject to lower ≤ x ≤ upper (infinite bounds allowed).
pub fn least_squares<F>(residual_fn: F, initial: &[f64], lower: &[f64], upper: &[f64]) -> Result<LeastSquaresResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    least_squares_with(residual_fn, initial, lower, upper, &LmOptions::default())
}

pub fn least_squares_with<F>(
    residual_fn: F,
    initial: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &LmOptions,
) -> Result<LeastSquaresResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dim = initial.len();
    if dim == 0 || lower.len() != dim || upper.len() != dim {
        return Err(Error::invalid("initial point and bounds must have the same non-zero length"));
    }
    for i in 0..dim {
        if lower[i].is_nan() || upper[i].is_nan() || lower[i] >= upper[i] {
            return Err(Error::invalid(format!("bound {i}: need lower < upper, got [{}, {}]", lower[i], upper[i])));
        }
        if !(lower[i] <= initial[i] && initial[i] <= upper[i]) {
            return Err(Error::invalid(format!("initial[{i}] = {} outside its bounds", initial[i])));
        }
    }
    let transforms: Vec<Transform> = (0..dim).map(|i| Transform::new(lower[i], upper[i])).collect();
    let bounded = |u: &[f64]| -> Vec<f64> { u.iter().zip(&transforms).map(|(&v, t)| t.to_bounded(v)).collect() };
    let eval = |u: &[f64]| -> Option<Vec<f64>> {
        let r = residual_fn(&bounded(u));
        r.iter().all(|v| v.is_finite()).then_some(r)
    };

    let mut u: Vec<f64> = initial.iter().zip(&transforms).map(|(&x, t)| t.to_free(x)).collect();
    let mut r = eval(&u).ok_or_else(|| Error::Fit("residuals are not finite at the initial point".into()))?;
    if r.is_empty() {
        return Err(Error::Fit("residual function returned no residuals".into()));
    }
    let mut cost = sum_sq(&r);
    let mut mu: Option<f64> = None;
    let mut converged = cost == 0.0;
    let mut iterations = 0;
    let mut stalled = false;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let jac = jacobian(&eval, &u, &r)?;
        let rv = DVector::from_column_slice(&r);
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &rv;
        if g.amax() == 0.0 {
            converged = true;
            break;
        }
        let scale: Vec<f64> = (0..dim).map(|i| a[(i, i)].max(1e-12)).collect();
        let mut damping = *mu.get_or_insert_with(|| 1e-3 * scale.iter().cloned().fold(0.0, f64::max));

        loop {
            let mut damped = a.clone();
            for i in 0..dim {
                damped[(i, i)] += damping * scale[i];
            }
            let step = match damped.cholesky() {
                Some(ch) => -ch.solve(&g),
                None if damping < 1e32 => {
                    damping *= 10.0;
                    continue;
                }
                None => {
                    stalled = true;
                    break;
                }
            };
            let step_norm = step.norm();
            let candidate: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match eval(&candidate) {
                Some(r_new) if sum_sq(&r_new) < cost => {
                    let cost_new = sum_sq(&r_new);
                    let decrease = (cost - cost_new) / cost;
                    u = candidate;
                    r = r_new;
                    cost = cost_new;
                    damping = (damping / 3.0).max(1e-15);
                    if step_norm < options.step_tolerance
                        || decrease < options.relative_decrease_tolerance
                        || cost == 0.0
                    {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    if step_norm < options.step_tolerance {
                        converged = true;
                        break;
                    }
                    damping *= 4.0;
                    if damping > 1e32 {
                        stalled = true;
                        break;
                    }
                }
            }
        }
        if stalled {
            break;
        }
        mu = Some(damping);
    }
    Ok(LeastSquaresResult { solution: bounded(&u), residual_norm: cost.sqrt(), iterations, converged })
}

fn jacobian<E>(eval: &E, u: &[f64], r: &[f64]) -> Result<DMatrix<f64>>
where
    E: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let (m, dim) = (r.len(), u.len());
    let mut jac = DMatrix::zeros(m, dim);
    let mut probe = u.to_vec();
    for j in 0..dim {
        let h = f64::EPSILON.sqrt() * u[j].abs().max(1.0);
        let mut column = None;
        for signed in [h, -h] {
            probe[j] = u[j] + signed;
            if let Some(rp) = eval(&probe) {
                column = Some((rp, signed));
                break;
            }
        }
        probe[j] = u[j];
        let (rp, step) = column.ok_or_else(|| Error::Fit("residuals not finite around the current point".into()))?;
        for i in 0..m {
            jac[(i, j)] = (rp[i] - r[i]) / step;
        }
    }
    Ok(jac)
}
