//! Central finite-difference gradient checking.
//!
//! A [`ScalarExpr`] is one generic expression evaluated two ways: plainly
//! on `f64` for the numeric side and on [`Var`] for the analytic side.
//! The finite-difference sweep only ever touches the `f64` instantiation,
//! so it is independent of the tape it checks.

use super::{Scalar, Tape};

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative-error floor: coordinates where both gradients are below this
/// scale are compared absolutely instead.
pub const REL_FLOOR: f64 = 1e-4;

/// A scalar function of a flat input vector, written once over [`Scalar`].
pub trait ScalarExpr {
    fn eval<S: Scalar>(&self, inputs: &[S]) -> S;
}

/// Central finite-difference gradient of a plain function.
pub fn central_diff_of<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let hi = f(&probe);
        probe[i] = orig - step;
        let lo = f(&probe);
        probe[i] = orig;
        grad.push((hi - lo) / (2.0 * step));
    }
    grad
}

/// Central finite-difference gradient of an expression at `x`.
pub fn central_diff_gradient<E: ScalarExpr>(expr: &E, x: &[f64], step: f64) -> Vec<f64> {
    central_diff_of(|probe: &[f64]| expr.eval(probe), x, step)
}

/// Reverse-mode gradient of an expression at `x`.
pub fn tape_gradient<E: ScalarExpr>(expr: &E, x: &[f64]) -> Vec<f64> {
    let tape = Tape::with_capacity(4 * x.len() + 16);
    let vars: Vec<_> = x.iter().map(|&v| tape.var(v)).collect();
    let out = expr.eval(&vars);
    let grads = tape.gradients(out);
    vars.iter().map(|&v| grads.wrt(v)).collect()
}

/// Worst relative error between two gradients, with an absolute floor so
/// that near-zero coordinates do not blow up the ratio.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Evaluate an expression both ways at `x` and return the worst-case
/// relative gradient error.
pub fn gradient_check_error<E: ScalarExpr>(expr: &E, x: &[f64]) -> f64 {
    let analytic = tape_gradient(expr, x);
    let numeric = central_diff_gradient(expr, x, DEFAULT_STEP);
    max_rel_error(&analytic, &numeric)
}
