//! Dense BFGS with a backtracking Armijo line search. Problems here have at
//! most six unknowns, so the inverse Hessian is stored in full.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const GRAD_TOL: f64 = 1e-10;

/// Minimizes `f`, which returns `None` (or a non-finite value) where it is
/// undefined. Returns `None` if `f` is undefined at `x0`.
///
/// Stops when the relative change in `f` stays below `ftol` for two
/// consecutive iterations, when the gradient vanishes, or when no descent
/// step can be found.
pub(crate) fn bfgs<F>(mut f: F, x0: &[f64], max_iters: usize, ftol: f64) -> Option<Outcome>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut eval = |x: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let (v, g) = f(x.as_slice())?;
        if v.is_finite() && g.iter().all(|g| g.is_finite()) {
            Some((v, DVector::from_vec(g)))
        } else {
            None
        }
    };

    let mut x = DVector::from_column_slice(x0);
    let (mut fx, mut gx) = eval(&x)?;
    if n == 0 {
        return Some(Outcome {
            x: vec![],
            f: fx,
            iterations: 0,
            converged: true,
        });
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut small_steps = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        if gx.amax() <= GRAD_TOL {
            converged = true;
            break;
        }
        let mut dir = -(&h * &gx);
        let mut slope = dir.dot(&gx);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            dir = -gx.clone();
            slope = dir.dot(&gx);
        }
        // keep the first trial step within a unit box in unconstrained space
        let mut step = (1.0 / dir.amax()).min(1.0);
        if iterations > 1 {
            step = 1.0f64.min(10.0 / dir.amax());
        }

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &dir * step;
            if let Some((ft, gt)) = eval(&trial) {
                if ft <= fx + ARMIJO * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if h != DMatrix::identity(n, n) {
                // stale curvature; retry along the gradient
                h = DMatrix::identity(n, n);
                continue;
            }
            converged = true;
            break;
        };

        let s = &x_new - &x;
        let y = &g_new - &gx;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        let change = (fx - f_new).abs();
        x = x_new;
        gx = g_new;
        let prev = fx;
        fx = f_new;
        if change <= ftol * prev.abs().max(fx.abs()) {
            small_steps += 1;
            if small_steps >= 2 {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    Some(Outcome {
        x: x.iter().copied().collect(),
        f: fx,
        iterations,
        converged,
    })
}
