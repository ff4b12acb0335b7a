//! Scalar reverse-mode automatic differentiation on an explicit tape.
//!
//! Every recorded operation stores its parent indices together with the
//! *precomputed* local partial derivatives, so a single reverse sweep over
//! the node list yields the gradient of one output with respect to every
//! leaf. Only first-order derivatives are supported; the model code is
//! written so that nothing of higher order is ever required.
//!
//! The [`Scalar`] trait abstracts over plain `f64` (fast evaluation, no
//! allocation) and [`Var`] (records onto a [`Tape`]). Numeric code in this
//! crate is written once, generically, and instantiated for both.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// One recorded operation. Unary ops and leaves point `p1` (and for leaves
/// also `p0`) at the node itself with a zero partial; the reverse sweep
/// skips self-references.
#[derive(Clone, Copy)]
struct Node {
    p0: u32,
    p1: u32,
    d0: f64,
    d1: f64,
}

/// Append-only tape of recorded operations.
///
/// A tape is single-threaded and cheap to construct; training builds one
/// tape per mini-batch and drops (or resets) it after the backward sweep.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A value recorded on a tape. Copyable; holds the node index and the
/// forward value so arithmetic never needs to re-borrow the tape for reads.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

/// Adjoints for every node of a tape, produced by [`Tape::gradient`].
pub struct Gradient {
    adj: Vec<f64>,
}

impl Gradient {
    /// Derivative of the swept output with respect to `v` (typically a leaf).
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj.get(v.idx as usize).copied().unwrap_or(0.0)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all nodes but keep the allocation (for tape reuse across batches).
    pub fn reset(&self) {
        self.nodes.borrow_mut().clear();
    }

    /// Record an independent variable. Its adjoint is read back after a sweep.
    pub fn leaf(&self, val: f64) -> Var<'_> {
        let idx = self.push_raw(u32::MAX, 0.0, u32::MAX, 0.0, val);
        // A leaf is its own parent with zero partials.
        {
            let mut nodes = self.nodes.borrow_mut();
            let k = idx.idx;
            nodes[k as usize].p0 = k;
            nodes[k as usize].p1 = k;
        }
        idx
    }

    /// Record a constant. Identical to a leaf, but the name documents that
    /// its adjoint is never read.
    pub fn constant(&self, val: f64) -> Var<'_> {
        self.leaf(val)
    }

    fn push_raw(&self, p0: u32, d0: f64, p1: u32, d1: f64, val: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        assert!(idx < u32::MAX as usize, "tape overflow");
        nodes.push(Node { p0, p1, d0, d1 });
        Var {
            tape: self,
            idx: idx as u32,
            val,
        }
    }

    fn unary(&self, p: Var<'_>, d: f64, val: f64) -> Var<'_> {
        let v = self.push_raw(p.idx, d, u32::MAX, 0.0, val);
        self.nodes.borrow_mut()[v.idx as usize].p1 = v.idx;
        v
    }

    fn binary(&self, a: Var<'_>, da: f64, b: Var<'_>, db: f64, val: f64) -> Var<'_> {
        debug_assert!(
            std::ptr::eq(a.tape, b.tape),
            "operands recorded on different tapes"
        );
        self.push_raw(a.idx, da, b.idx, db, val)
    }

    /// Reverse sweep from `out`: returns the adjoint of every node at or
    /// before `out`, with `d out / d out = 1`.
    pub fn gradient(&self, out: Var<'_>) -> Gradient {
        let nodes = self.nodes.borrow();
        let n = out.idx as usize + 1;
        let mut adj = vec![0.0; n];
        adj[out.idx as usize] = 1.0;
        for k in (0..n).rev() {
            let a = adj[k];
            if a == 0.0 {
                continue;
            }
            let node = nodes[k];
            if node.p0 as usize != k {
                adj[node.p0 as usize] += node.d0 * a;
            }
            if node.p1 as usize != k {
                adj[node.p1 as usize] += node.d1 * a;
            }
        }
        Gradient { adj }
    }
}

/// Numerically stable softplus, ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic sigmoid (the derivative of softplus).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`]: returns x with softplus(x) = y, for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0, "softplus_inv requires a positive argument");
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

use std::f64::consts::FRAC_2_SQRT_PI;

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn exp(self) -> Self {
        let v = self.val.exp();
        self.tape.unary(self, v, v)
    }

    pub fn expm1(self) -> Self {
        self.tape.unary(self, self.val.exp(), self.val.exp_m1())
    }

    pub fn ln(self) -> Self {
        self.tape.unary(self, 1.0 / self.val, self.val.ln())
    }

    pub fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.tape.unary(self, 1.0 - t * t, t)
    }

    pub fn softplus(self) -> Self {
        self.tape
            .unary(self, sigmoid(self.val), softplus(self.val))
    }

    pub fn sigmoid(self) -> Self {
        let s = sigmoid(self.val);
        self.tape.unary(self, s * (1.0 - s), s)
    }

    /// Raise to a constant power. The exponent is not differentiated.
    pub fn powf_const(self, p: f64) -> Self {
        self.tape
            .unary(self, p * self.val.powf(p - 1.0), self.val.powf(p))
    }

    pub fn erf(self) -> Self {
        let d = FRAC_2_SQRT_PI * (-self.val * self.val).exp();
        self.tape
            .unary(self, d, libm::erf(self.val))
    }

    pub fn add_const(self, c: f64) -> Self {
        self.tape.unary(self, 1.0, self.val + c)
    }

    pub fn mul_const(self, c: f64) -> Self {
        self.tape.unary(self, c, self.val * c)
    }

    pub fn recip(self) -> Self {
        self.tape
            .unary(self, -1.0 / (self.val * self.val), 1.0 / self.val)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.tape.binary(self, 1.0, rhs, 1.0, self.val + rhs.val)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.tape.binary(self, 1.0, rhs, -1.0, self.val - rhs.val)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.tape
            .binary(self, rhs.val, rhs, self.val, self.val * rhs.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        // The forward value must be the rounded-once quotient so that f64
        // and tape evaluation agree bitwise; only the partials may use the
        // reciprocal form.
        let inv = 1.0 / rhs.val;
        self.tape
            .binary(self, inv, rhs, -self.val * inv * inv, self.val / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.tape.unary(self, -1.0, -self.val)
    }
}

/// A scalar number type supporting the operations the likelihood code needs.
///
/// Implemented by `f64` (plain evaluation) and [`Var`] (tape recording).
/// Constants enter expressions through `add_const` / `mul_const`, so generic
/// code never needs a tape handle to materialize a literal.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn expm1(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn softplus(self) -> Self;
    fn sigmoid(self) -> Self;
    fn powf_const(self, p: f64) -> Self;
    fn erf(self) -> Self;
    fn add_const(self, c: f64) -> Self;
    fn mul_const(self, c: f64) -> Self;
}

impl Scalar for f64 {
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn expm1(self) -> Self {
        f64::exp_m1(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn softplus(self) -> Self {
        softplus(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    fn powf_const(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn erf(self) -> Self {
        libm::erf(self)
    }
    fn add_const(self, c: f64) -> Self {
        self + c
    }
    fn mul_const(self, c: f64) -> Self {
        self * c
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        self.val
    }
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn expm1(self) -> Self {
        Var::expm1(self)
    }
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn tanh(self) -> Self {
        Var::tanh(self)
    }
    fn softplus(self) -> Self {
        Var::softplus(self)
    }
    fn sigmoid(self) -> Self {
        Var::sigmoid(self)
    }
    fn powf_const(self, p: f64) -> Self {
        Var::powf_const(self, p)
    }
    fn erf(self) -> Self {
        Var::erf(self)
    }
    fn add_const(self, c: f64) -> Self {
        Var::add_const(self, c)
    }
    fn mul_const(self, c: f64) -> Self {
        Var::mul_const(self, c)
    }
}

/// Sum of a non-empty iterator of scalars; `None` when empty. Empty sums are
/// represented as absent terms by callers rather than as a zero constant,
/// because constructing a constant would require a tape handle.
pub fn sum_opt<S: Scalar, I: IntoIterator<Item = S>>(items: I) -> Option<S> {
    let mut it = items.into_iter();
    let first = it.next()?;
    Some(it.fold(first, |acc, x| acc + x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softplus_at_zero_is_ln_two_with_half_slope() {
        let tape = Tape::new();
        let x = tape.leaf(0.0);
        let y = x.softplus();
        assert_relative_eq!(y.value(), std::f64::consts::LN_2, max_relative = 1e-15);
        let g = tape.gradient(y);
        assert_relative_eq!(g.wrt(x), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn softplus_is_stable_in_the_tails() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) == 0.0);
        assert!(softplus(-40.0) > 0.0);
        assert_relative_eq!(sigmoid(-800.0), 0.0);
        assert_relative_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn softplus_inv_round_trips() {
        for &y in &[1e-6, 0.1, 1.0, 3.5, 40.0] {
            assert_relative_eq!(softplus(softplus_inv(y)), y, max_relative = 1e-12);
        }
    }

    #[test]
    fn square_of_exp_has_expected_derivative() {
        // d/dx exp(x)^2 at x=1 is 2 e^2.
        let tape = Tape::new();
        let x = tape.leaf(1.0);
        let y = x.exp() * x.exp();
        let g = tape.gradient(y);
        assert_relative_eq!(g.wrt(x), 14.778_112_197_861_3, max_relative = 1e-12);
    }

    #[test]
    fn tanh_at_zero_has_unit_slope() {
        let tape = Tape::new();
        let x = tape.leaf(0.0);
        let g = tape.gradient(x.tanh());
        assert_relative_eq!(g.wrt(x), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn product_rule_with_shared_subexpression() {
        // y = (x + 3) * x => dy/dx = 2x + 3.
        let tape = Tape::new();
        let x = tape.leaf(1.7);
        let y = x.add_const(3.0) * x;
        let g = tape.gradient(y);
        assert_relative_eq!(g.wrt(x), 2.0 * 1.7 + 3.0, max_relative = 1e-14);
    }

    #[test]
    fn erf_slope_at_zero_is_two_over_sqrt_pi() {
        let tape = Tape::new();
        let x = tape.leaf(0.0);
        let g = tape.gradient(x.erf());
        assert_relative_eq!(g.wrt(x), FRAC_2_SQRT_PI, max_relative = 1e-14);
    }

    #[test]
    fn multiple_outputs_from_one_tape() {
        let tape = Tape::new();
        let x = tape.leaf(0.5);
        let y = tape.leaf(2.0);
        let a = x * y;
        let b = x + y;
        let ga = tape.gradient(a);
        let gb = tape.gradient(b);
        assert_relative_eq!(ga.wrt(x), 2.0);
        assert_relative_eq!(ga.wrt(y), 0.5);
        assert_relative_eq!(gb.wrt(x), 1.0);
        assert_relative_eq!(gb.wrt(y), 1.0);
    }

    // ---- randomized finite-difference property ------------------------

    /// A small straight-line program over three inputs, generated randomly
    /// and evaluated generically so the tape and the finite-difference
    /// baseline run exactly the same arithmetic.
    #[derive(Clone, Debug)]
    enum Instr {
        Add(usize, usize),
        Sub(usize, usize),
        Mul(usize, usize),
        Div(usize, usize),
        Neg(usize),
        Exp(usize),
        Expm1(usize),
        LnShift(usize),
        Tanh(usize),
        Softplus(usize),
        PowShift(usize, f64),
        Erf(usize),
        AddC(usize, f64),
        MulC(usize, f64),
    }

    fn eval_program<S: Scalar>(prog: &[Instr], inputs: &[S]) -> S {
        let mut vals: Vec<S> = inputs.to_vec();
        for ins in prog {
            let v = match *ins {
                Instr::Add(a, b) => vals[a] + vals[b],
                Instr::Sub(a, b) => vals[a] - vals[b],
                Instr::Mul(a, b) => vals[a] * vals[b],
                Instr::Div(a, b) => vals[a] / vals[b],
                Instr::Neg(a) => -vals[a],
                Instr::Exp(a) => vals[a].tanh().exp(),
                Instr::Expm1(a) => vals[a].tanh().expm1(),
                Instr::LnShift(a) => vals[a].softplus().add_const(0.1).ln(),
                Instr::Tanh(a) => vals[a].tanh(),
                Instr::Softplus(a) => vals[a].softplus(),
                Instr::PowShift(a, p) => vals[a].softplus().add_const(0.1).powf_const(p),
                Instr::Erf(a) => vals[a].erf(),
                Instr::AddC(a, c) => vals[a].add_const(c),
                Instr::MulC(a, c) => vals[a].mul_const(c),
            };
            vals.push(v);
        }
        *vals.last().unwrap()
    }

    /// Generate a random program whose intermediate values stay in a sane
    /// range at the base point (division is only emitted when the
    /// denominator is comfortably away from zero).
    fn random_program(rng: &mut ChaCha8Rng, base: &[f64]) -> Vec<Instr> {
        let mut prog = Vec::new();
        let mut vals: Vec<f64> = base.to_vec();
        let n_ops = rng.gen_range(4..20);
        while prog.len() < n_ops {
            let a = rng.gen_range(0..vals.len());
            let b = rng.gen_range(0..vals.len());
            let ins = match rng.gen_range(0..14) {
                0 => Instr::Add(a, b),
                1 => Instr::Sub(a, b),
                2 => Instr::Mul(a, b),
                3 => {
                    if vals[b].abs() < 0.3 {
                        continue;
                    }
                    Instr::Div(a, b)
                }
                4 => Instr::Neg(a),
                5 => Instr::Exp(a),
                6 => Instr::Expm1(a),
                7 => Instr::LnShift(a),
                8 => Instr::Tanh(a),
                9 => Instr::Softplus(a),
                10 => Instr::PowShift(a, rng.gen_range(1.2..3.0)),
                11 => Instr::Erf(a),
                12 => Instr::AddC(a, rng.gen_range(-2.0..2.0)),
                _ => Instr::MulC(a, rng.gen_range(-2.0..2.0)),
            };
            let v = eval_program(std::slice::from_ref(&ins), &vals); // evaluates just this op
            // Evaluating a one-instruction program appends one value; emulate
            // that here to track the running values.
            if !v.is_finite() || v.abs() > 1e6 {
                continue;
            }
            vals.push(v);
            prog.push(ins);
        }
        prog
    }

    #[test]
    fn gradients_match_central_differences_on_random_expressions() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _case in 0..100 {
            let base: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let prog = random_program(&mut rng, &base);

            let tape = Tape::new();
            let leaves: Vec<Var<'_>> = base.iter().map(|&v| tape.leaf(v)).collect();
            let out = eval_program(&prog, &leaves);
            let grad = tape.gradient(out);

            for i in 0..base.len() {
                let h = 1e-5 * base[i].abs().max(1.0);
                let mut up = base.clone();
                up[i] += h;
                let mut dn = base.clone();
                dn[i] -= h;
                let fd =
                    (eval_program::<f64>(&prog, &up) - eval_program::<f64>(&prog, &dn)) / (2.0 * h);
                let ad = grad.wrt(leaves[i]);
                let denom = fd.abs().max(ad.abs());
                if denom < 1e-7 {
                    assert!((ad - fd).abs() < 1e-7, "near-zero gradient mismatch");
                } else {
                    assert!(
                        ((ad - fd) / denom).abs() < 1e-4,
                        "case {_case} input {i}: ad={ad} fd={fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn generic_f64_and_tape_paths_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let base: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let prog = random_program(&mut rng, &base);
            let plain = eval_program::<f64>(&prog, &base);
            let tape = Tape::new();
            let leaves: Vec<Var<'_>> = base.iter().map(|&v| tape.leaf(v)).collect();
            let taped = eval_program(&prog, &leaves).value();
            assert_eq!(plain.to_bits(), taped.to_bits());
        }
    }
}
