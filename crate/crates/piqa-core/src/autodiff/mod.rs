//! Scalar reverse-mode automatic differentiation.
//!
//! Losses and model forward passes are written once, generically over
//! [`Scalar`]. Instantiated with `f64` they are plain math; instantiated
//! with [`Var`] they record onto a [`Tape`] from which exact gradients are
//! recovered by a reverse sweep. Correctness is pinned by the central
//! finite-difference checks in [`check`].

pub mod check;
pub mod math;

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy)]
struct Node {
    partials: [f64; 2],
    parents: [u32; 2],
}

/// Wengert list recording one scalar expression graph.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(cap)),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Drop all recorded nodes. Any [`Var`] created before the call is
    /// invalidated and must not be used afterwards.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
    }

    /// Introduce an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = {
            let mut nodes = self.nodes.borrow_mut();
            let idx = nodes.len() as u32;
            nodes.push(Node {
                partials: [0.0, 0.0],
                parents: [idx, idx],
            });
            idx
        };
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    fn push1(&self, val: f64, parent: u32, partial: f64) -> Var<'_> {
        let idx = {
            let mut nodes = self.nodes.borrow_mut();
            let idx = nodes.len() as u32;
            nodes.push(Node {
                partials: [partial, 0.0],
                parents: [parent, parent],
            });
            idx
        };
        Var {
            tape: self,
            idx,
            val,
        }
    }

    fn push2(&self, val: f64, p0: u32, d0: f64, p1: u32, d1: f64) -> Var<'_> {
        let idx = {
            let mut nodes = self.nodes.borrow_mut();
            let idx = nodes.len() as u32;
            nodes.push(Node {
                partials: [d0, d1],
                parents: [p0, p1],
            });
            idx
        };
        Var {
            tape: self,
            idx,
            val,
        }
    }

    /// Reverse sweep: adjoints of every node with respect to `output`.
    pub fn gradients(&self, output: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        adjoints[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let a = adjoints[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            if node.partials[0] != 0.0 {
                adjoints[node.parents[0] as usize] += node.partials[0] * a;
            }
            if node.partials[1] != 0.0 {
                adjoints[node.parents[1] as usize] += node.partials[1] * a;
            }
        }
        Gradients { adjoints }
    }
}

/// Adjoints produced by [`Tape::gradients`].
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    /// d(output)/d(var).
    pub fn wrt(&self, var: Var<'_>) -> f64 {
        self.adjoints[var.idx as usize]
    }
}

/// A scalar value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl<'t> Var<'t> {
    pub fn val(self) -> f64 {
        self.val
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self::Output {
        self.tape
            .push2(self.val + rhs.val, self.idx, 1.0, rhs.idx, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self::Output {
        self.tape
            .push2(self.val - rhs.val, self.idx, 1.0, rhs.idx, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self::Output {
        self.tape
            .push2(self.val * rhs.val, self.idx, rhs.val, rhs.idx, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self::Output {
        let inv = 1.0 / rhs.val;
        self.tape.push2(
            self.val * inv,
            self.idx,
            inv,
            rhs.idx,
            -self.val * inv * inv,
        )
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self::Output {
        self.tape.push1(-self.val, self.idx, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self::Output {
        self.tape.push1(self.val + rhs, self.idx, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self::Output {
        self.tape.push1(self.val - rhs, self.idx, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self::Output {
        self.tape.push1(self.val * rhs, self.idx, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self::Output {
        self.tape.push1(self.val / rhs, self.idx, 1.0 / rhs)
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Self::Output {
        rhs.tape.push1(self - rhs.val, rhs.idx, -1.0)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Self::Output {
        rhs.tape.push1(self + rhs.val, rhs.idx, 1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Self::Output {
        rhs.tape.push1(self * rhs.val, rhs.idx, self)
    }
}

/// The write-once scalar abstraction: `f64` for plain evaluation, [`Var`]
/// for gradient recording.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn value(self) -> f64;
    /// A constant in the same evaluation context as `self`.
    fn lift(self, c: f64) -> Self;
    fn abs(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn sigmoid(self) -> Self;
    fn tanh(self) -> Self;
    fn relu(self) -> Self;
    /// Standard normal CDF.
    fn normal_cdf(self) -> Self;
    /// `max(self, c)`; the identity branch keeps gradient 1 at ties.
    fn max_const(self, c: f64) -> Self;
}

impl Scalar for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, c: f64) -> Self {
        c
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sigmoid(self) -> Self {
        1.0 / (1.0 + (-self).exp())
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    fn normal_cdf(self) -> Self {
        math::normal_cdf(self)
    }
    fn max_const(self, c: f64) -> Self {
        if self >= c {
            self
        } else {
            c
        }
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        self.val
    }
    fn lift(self, c: f64) -> Self {
        self.tape.var(c)
    }
    fn abs(self) -> Self {
        let sign = if self.val >= 0.0 { 1.0 } else { -1.0 };
        self.tape.push1(self.val.abs(), self.idx, sign)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.tape.push1(e, self.idx, e)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.tape.push1(s, self.idx, 0.5 / s)
    }
    fn sigmoid(self) -> Self {
        let s = 1.0 / (1.0 + (-self.val).exp());
        self.tape.push1(s, self.idx, s * (1.0 - s))
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.tape.push1(t, self.idx, 1.0 - t * t)
    }
    fn relu(self) -> Self {
        if self.val > 0.0 {
            self.tape.push1(self.val, self.idx, 1.0)
        } else {
            self.tape.push1(0.0, self.idx, 0.0)
        }
    }
    fn normal_cdf(self) -> Self {
        self.tape.push1(
            math::normal_cdf(self.val),
            self.idx,
            math::normal_pdf(self.val),
        )
    }
    fn max_const(self, c: f64) -> Self {
        if self.val >= c {
            self.tape.push1(self.val, self.idx, 1.0)
        } else {
            self.tape.push1(c, self.idx, 0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::check::{central_diff_gradient, max_rel_error, tape_gradient};
    use super::*;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(5.0);
        let z = x * y + x;
        assert_eq!(z.val(), 18.0);
        let g = tape.gradients(z);
        assert_eq!(g.wrt(x), 6.0);
        assert_eq!(g.wrt(y), 3.0);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = x * x * x;
        let g = tape.gradients(y);
        assert!((g.wrt(x) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn unary_ops_match_finite_differences() {
        struct UnaryZoo;
        impl super::check::ScalarExpr for UnaryZoo {
            fn eval<S: Scalar>(&self, xs: &[S]) -> S {
                let x = xs[0];
                x.exp() + x.abs() + x.sigmoid() + x.tanh() + (x * x + x.lift(1.0)).sqrt()
                    + x.normal_cdf()
            }
        }
        for x0 in [-1.7, -0.3, 0.4, 2.1] {
            let analytic = tape_gradient(&UnaryZoo, &[x0]);
            let numeric = central_diff_gradient(&UnaryZoo, &[x0], 1e-5);
            assert!(max_rel_error(&analytic, &numeric) < 1e-6, "x={x0}");
        }
    }

    #[test]
    fn mixed_const_ops() {
        let tape = Tape::new();
        let x = tape.var(4.0);
        let y = (2.0 * x + 1.0) / 3.0 - (1.0 - x);
        assert!((y.val() - 6.0).abs() < 1e-12);
        let g = tape.gradients(y);
        assert!((g.wrt(x) - (2.0 / 3.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn relu_and_max_const_branches() {
        let tape = Tape::new();
        let x = tape.var(-2.0);
        let r = x.relu();
        assert_eq!(r.val(), 0.0);
        assert_eq!(tape.gradients(r).wrt(x), 0.0);

        let y = tape.var(3.0);
        let m = y.max_const(1.0);
        assert_eq!(m.val(), 3.0);
        assert_eq!(tape.gradients(m).wrt(y), 1.0);
    }

    #[test]
    fn clear_resets_tape() {
        let tape = Tape::new();
        let _ = tape.var(1.0);
        assert_eq!(tape.len(), 1);
        tape.clear();
        assert!(tape.is_empty());
    }

    #[test]
    fn f64_and_var_paths_agree() {
        fn expr<S: Scalar>(x: S, y: S) -> S {
            (x * y).sigmoid() + (x - y).abs().sqrt() * x.lift(0.25)
        }
        let tape = Tape::new();
        let v = expr(tape.var(1.2), tape.var(-0.7));
        let f = expr(1.2_f64, -0.7);
        assert_eq!(v.val(), f);
    }
}
