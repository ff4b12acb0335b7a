//! Latent dynamics: a learnable, non-decreasing time transform per
//! dimension.
//!
//! The model needs, for every dimension m, a non-negative "activity speed"
//! f_m(t) together with its exact antiderivative F_m(t) = integral of f_m
//! from 0 to t. Excitation between events is measured in transformed time
//! F_m(b) - F_m(a), which is why the pair must be exactly consistent — a
//! numerically integrated F would break the closed-form likelihood.
//!
//! Two realizations are provided:
//!
//! * [`MixtureIntegralDynamics`] — the learnable form: per dimension, a
//!   mixture of monotonic feed-forward networks Phi (non-negative weights,
//!   monotone activations) plus a linear floor:
//!
//!   ```text
//!   F_m(t) = sum_c pi_c Phi_mc(t / s) + b0 * t,      f_m = dF_m/dt
//!   ```
//!
//!   with pi_c >= 0 and b0 >= 0 shared across dimensions (not normalized),
//!   and s an input scale that keeps the saturating activations in range.
//!   f_m comes from the same computation graph as F_m via the autodiff
//!   tape, never from a separately parameterized network.
//!
//! * [`AnalyticDynamics`] — fixed closed forms (constant, clipped linear
//!   ramp, piecewise constant) with exact antiderivatives, used to build
//!   ground-truth corpora and for the reduction to a classical process.
//!
//! F_m is only identified up to an additive constant: every model quantity
//! consumes differences F_m(b) - F_m(a). Evaluation code therefore works
//! with an unanchored antiderivative; [`Dynamics::integral_value`] subtracts
//! the t = 0 value for presentation only.

use crate::autodiff::{self, Scalar, Tape, Var};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------
// Monotonic network
// ---------------------------------------------------------------------

/// One dense layer with softplus-reparameterized (hence non-negative)
/// weights and unconstrained biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Raw weights, row-major `rows x cols`; effective weight is
    /// softplus(raw).
    pub w_raw: Vec<f64>,
    /// Raw (unconstrained) biases, length `rows`.
    pub b_raw: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

/// A scalar-input monotonic network Phi: non-negative weights everywhere
/// and monotone activations (tanh on all hidden layers except the last,
/// which uses softplus), followed by a linear read-out with non-negative
/// weights. Monotone non-decreasing in its input by construction, for any
/// raw parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicNetwork {
    pub layers: Vec<DenseLayer>,
    /// Raw read-out weights, length = width of the last layer.
    pub out_raw: Vec<f64>,
}

impl MonotonicNetwork {
    fn raw_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w_raw.len() + l.b_raw.len())
            .sum::<usize>()
            + self.out_raw.len()
    }
}

/// Constrained view of one layer with weights of scalar type `S`.
struct LayerView<S> {
    w: Vec<S>,
    b: Vec<S>,
    rows: usize,
    cols: usize,
    /// Softplus activation when true (the final layer), tanh otherwise.
    softplus_act: bool,
}

/// Constrained view of one network.
struct NetView<S> {
    layers: Vec<LayerView<S>>,
    out: Vec<S>,
}

impl<S: Scalar> NetView<S> {
    /// Forward pass together with the tangent (derivative with respect to
    /// the raw input t, where the network input is u = t / scale and
    /// `du = 1 / scale`). Returns (Phi, dPhi/dt).
    fn forward_tangent(&self, u: S, du: f64) -> (S, S) {
        let mut h: Vec<S> = vec![u];
        let mut hd: Vec<S> = vec![u.mul_const(0.0).add_const(du)];
        for layer in &self.layers {
            let mut nh = Vec::with_capacity(layer.rows);
            let mut nhd = Vec::with_capacity(layer.rows);
            for r in 0..layer.rows {
                let mut z = layer.b[r];
                let mut zd: Option<S> = None;
                for c in 0..layer.cols {
                    let w = layer.w[r * layer.cols + c];
                    z = z + w * h[c];
                    let term = w * hd[c];
                    zd = Some(match zd {
                        Some(acc) => acc + term,
                        None => term,
                    });
                }
                let zd = zd.expect("layer with zero inputs");
                if layer.softplus_act {
                    nh.push(z.softplus());
                    nhd.push(z.sigmoid() * zd);
                } else {
                    let t = z.tanh();
                    nh.push(t);
                    nhd.push((-(t * t)).add_const(1.0) * zd);
                }
            }
            h = nh;
            hd = nhd;
        }
        let mut phi = self.out[0] * h[0];
        let mut phid = self.out[0] * hd[0];
        for i in 1..self.out.len() {
            phi = phi + self.out[i] * h[i];
            phid = phid + self.out[i] * hd[i];
        }
        (phi, phid)
    }
}

// ---------------------------------------------------------------------
// Mixture dynamics
// ---------------------------------------------------------------------

/// Learnable dynamics: per-dimension mixtures of monotonic networks plus a
/// shared linear floor. See the module docs for the functional form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureIntegralDynamics {
    pub num_marks: usize,
    /// Mixture size C.
    pub components: usize,
    /// Hidden width H of every layer.
    pub hidden: usize,
    /// Number of layers L (>= 1).
    pub num_layers: usize,
    /// Networks indexed `m * components + c`.
    pub networks: Vec<MonotonicNetwork>,
    /// Raw mixture weights (length C, shared across dimensions; effective
    /// weight softplus(raw), deliberately not normalized).
    pub pi_raw: Vec<f64>,
    /// Raw linear floor; effective slope softplus(raw).
    pub b0_raw: f64,
    /// Input scale s: networks see u = t / s.
    #[serde(rename = "t_scale")]
    pub input_scale: f64,
}

impl MixtureIntegralDynamics {
    /// Random initialization: raw weights and biases from N(0, 0.1), the
    /// linear floor starting at an effective slope of 1.
    pub fn init(
        num_marks: usize,
        components: usize,
        num_layers: usize,
        hidden: usize,
        input_scale: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        use rand_distr::Distribution;
        let dist = rand_distr::Normal::new(0.0, 0.1)
            .expect("fixed init distribution parameters are valid");
        let mut normal = || -> f64 { dist.sample(rng) };
        let mut networks = Vec::with_capacity(num_marks * components);
        for _ in 0..num_marks * components {
            let mut layers = Vec::with_capacity(num_layers);
            for l in 0..num_layers {
                let cols = if l == 0 { 1 } else { hidden };
                layers.push(DenseLayer {
                    w_raw: (0..hidden * cols).map(|_| normal()).collect(),
                    b_raw: (0..hidden).map(|_| normal()).collect(),
                    rows: hidden,
                    cols,
                });
            }
            networks.push(MonotonicNetwork {
                layers,
                out_raw: (0..hidden).map(|_| normal()).collect(),
            });
        }
        let dynamics = MixtureIntegralDynamics {
            num_marks,
            components,
            hidden,
            num_layers,
            networks,
            pi_raw: (0..components).map(|_| normal()).collect(),
            b0_raw: autodiff::softplus_inv(1.0),
            input_scale,
        };
        dynamics.validate()?;
        Ok(dynamics)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_marks == 0
            || self.components == 0
            || self.hidden == 0
            || self.num_layers == 0
        {
            return Err(Error::InvalidParameter(
                "mixture dynamics needs at least one mark, component, layer, and hidden unit"
                    .into(),
            ));
        }
        if !(self.input_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dynamics input scale must be > 0, got {}",
                self.input_scale
            )));
        }
        if self.networks.len() != self.num_marks * self.components {
            return Err(Error::InvalidParameter(
                "mixture dynamics has the wrong number of networks".into(),
            ));
        }
        if self.pi_raw.len() != self.components {
            return Err(Error::InvalidParameter(
                "mixture weight count does not match the component count".into(),
            ));
        }
        for net in &self.networks {
            if net.layers.len() != self.num_layers {
                return Err(Error::InvalidParameter("network layer count mismatch".into()));
            }
            for (l, layer) in net.layers.iter().enumerate() {
                let cols = if l == 0 { 1 } else { self.hidden };
                if layer.rows != self.hidden
                    || layer.cols != cols
                    || layer.w_raw.len() != layer.rows * layer.cols
                    || layer.b_raw.len() != layer.rows
                {
                    return Err(Error::InvalidParameter("network layer shape mismatch".into()));
                }
            }
            if net.out_raw.len() != self.hidden {
                return Err(Error::InvalidParameter("network read-out shape mismatch".into()));
            }
        }
        Ok(())
    }

    /// Number of raw parameters (mixture weights, floor, all networks).
    pub fn raw_len(&self) -> usize {
        1 + self.pi_raw.len() + self.networks.iter().map(|n| n.raw_len()).sum::<usize>()
    }

    /// Append all raw parameters in the canonical order: pi, b0, then each
    /// network (per layer: weights then biases; then read-out).
    pub fn flatten_raw(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.pi_raw);
        out.push(self.b0_raw);
        for net in &self.networks {
            for layer in &net.layers {
                out.extend_from_slice(&layer.w_raw);
                out.extend_from_slice(&layer.b_raw);
            }
            out.extend_from_slice(&net.out_raw);
        }
    }

    /// Inverse of [`Self::flatten_raw`]; `raw` must hold `raw_len` values
    /// starting at `*offset`.
    pub fn read_raw(&mut self, raw: &[f64], offset: &mut usize) {
        let take = |n: usize, off: &mut usize| -> Vec<f64> {
            let s = raw[*off..*off + n].to_vec();
            *off += n;
            s
        };
        self.pi_raw = take(self.components, offset);
        self.b0_raw = take(1, offset)[0];
        for net in &mut self.networks {
            for layer in &mut net.layers {
                layer.w_raw = take(layer.rows * layer.cols, offset);
                layer.b_raw = take(layer.rows, offset);
            }
            net.out_raw = take(net.out_raw.len(), offset);
        }
    }
}

/// Constrained view of the mixture with scalar type `S`: either plain
/// numbers (evaluation) or tape variables (training). Built once per
/// likelihood pass so the softplus reparameterization is applied once per
/// parameter, not once per use.
pub(crate) struct MixtureView<S> {
    nets: Vec<NetView<S>>,
    pi: Vec<S>,
    b0: S,
    components: usize,
    input_scale: f64,
}

impl MixtureIntegralDynamics {
    pub(crate) fn view_f64(&self) -> MixtureView<f64> {
        self.view_with(&mut |raw, constrain| if constrain { autodiff::softplus(raw) } else { raw })
    }

    /// Tape view: records one leaf per raw parameter, in flatten order, and
    /// returns the leaves so the caller can read gradients back.
    pub(crate) fn view_on_tape<'t>(
        &self,
        tape: &'t Tape,
    ) -> (MixtureView<Var<'t>>, Vec<Var<'t>>) {
        let mut leaves = Vec::with_capacity(self.raw_len());
        let view = self.view_with(&mut |raw, constrain| {
            let leaf = tape.leaf(raw);
            leaves.push(leaf);
            if constrain {
                leaf.softplus()
            } else {
                leaf
            }
        });
        (view, leaves)
    }

    /// Shared view construction. `param(raw, constrain)` maps a raw
    /// parameter to its scalar; `constrain` marks parameters that must pass
    /// through softplus (weights, mixture weights, floor) as opposed to
    /// free biases. Called exactly once per parameter in flatten order.
    fn view_with<S: Scalar>(&self, param: &mut impl FnMut(f64, bool) -> S) -> MixtureView<S> {
        let pi: Vec<S> = self.pi_raw.iter().map(|&r| param(r, true)).collect();
        let b0 = param(self.b0_raw, true);
        let nets = self
            .networks
            .iter()
            .map(|net| NetView {
                layers: net
                    .layers
                    .iter()
                    .enumerate()
                    .map(|(l, layer)| LayerView {
                        w: layer.w_raw.iter().map(|&r| param(r, true)).collect(),
                        b: layer.b_raw.iter().map(|&r| param(r, false)).collect(),
                        rows: layer.rows,
                        cols: layer.cols,
                        softplus_act: l + 1 == self.num_layers,
                    })
                    .collect(),
                out: net.out_raw.iter().map(|&r| param(r, true)).collect(),
            })
            .collect();
        MixtureView {
            nets,
            pi,
            b0,
            components: self.components,
            input_scale: self.input_scale,
        }
    }
}

impl<S: Scalar> MixtureView<S> {
    /// Unanchored antiderivative F_m(t) and speed f_m(t), sharing one
    /// forward pass. `lift` materializes constants of type `S` (identity
    /// for f64, a tape constant for variables).
    pub(crate) fn antideriv_and_value(
        &self,
        m: usize,
        t: f64,
        lift: impl Fn(f64) -> S,
    ) -> (S, S) {
        let u = lift(t / self.input_scale);
        let du = 1.0 / self.input_scale;
        let mut big = self.b0.mul_const(t);
        let mut small = self.b0;
        for c in 0..self.components {
            let (phi, phid) = self.nets[m * self.components + c].forward_tangent(u, du);
            big = big + self.pi[c] * phi;
            small = small + self.pi[c] * phid;
        }
        (big, small)
    }
}

// ---------------------------------------------------------------------
// Analytic dynamics
// ---------------------------------------------------------------------

/// Fixed closed-form dynamics shared by all dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticForm {
    /// f(t) = value.
    Constant { value: f64 },
    /// f(t) = max(0, intercept + slope * t).
    LinearRamp { intercept: f64, slope: f64 },
    /// f(t) = values[k] on [edge_{k-1}, edge_k) with edge_{-1} = 0 and the
    /// final value extending to infinity. `breakpoints` are the interior
    /// edges, strictly increasing and positive.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

/// Closed-form dynamics with exact antiderivative. The presentation
/// `offset` shifts reported F values only; it provably cannot reach any
/// likelihood quantity because those consume antiderivative differences,
/// and the difference code never reads it. Tests perturb it to assert that
/// shift invariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticDynamics {
    pub form: AnalyticForm,
    #[serde(default)]
    pub offset: f64,
}

impl AnalyticDynamics {
    pub fn new(form: AnalyticForm) -> Result<Self> {
        let d = AnalyticDynamics { form, offset: 0.0 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.form {
            AnalyticForm::Constant { value } => {
                if !(*value >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "constant dynamics must be >= 0, got {value}"
                    )));
                }
            }
            AnalyticForm::LinearRamp { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    return Err(Error::InvalidParameter(
                        "ramp dynamics parameters must be finite".into(),
                    ));
                }
            }
            AnalyticForm::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                if values.len() != breakpoints.len() + 1 {
                    return Err(Error::InvalidParameter(
                        "piecewise dynamics needs exactly one more value than breakpoints"
                            .into(),
                    ));
                }
                let mut prev = 0.0;
                for &b in breakpoints {
                    if !(b > prev) {
                        return Err(Error::InvalidParameter(
                            "piecewise breakpoints must be strictly increasing and positive"
                                .into(),
                        ));
                    }
                    prev = b;
                }
                if values.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::InvalidParameter(
                        "piecewise dynamics values must be >= 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Speed f(t), t >= 0.
    pub fn value(&self, t: f64) -> f64 {
        match &self.form {
            AnalyticForm::Constant { value } => *value,
            AnalyticForm::LinearRamp { intercept, slope } => (intercept + slope * t).max(0.0),
            AnalyticForm::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let k = breakpoints.partition_point(|&b| b <= t);
                values[k]
            }
        }
    }

    /// Exact antiderivative with F(0) = 0, excluding the presentation
    /// offset so that differences are exactly offset-free.
    pub fn antideriv(&self, t: f64) -> f64 {
        match &self.form {
            AnalyticForm::Constant { value } => value * t,
            AnalyticForm::LinearRamp { intercept, slope } => {
                ramp_antideriv(*intercept, *slope, t)
            }
            AnalyticForm::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let mut acc = 0.0;
                let mut seg_start = 0.0;
                for (k, &edge) in breakpoints.iter().enumerate() {
                    if t <= edge {
                        return acc + values[k] * (t - seg_start);
                    }
                    acc += values[k] * (edge - seg_start);
                    seg_start = edge;
                }
                acc + values[breakpoints.len()] * (t - seg_start)
            }
        }
    }

    /// Largest speed on `[a, b]` (exact; the forms are piecewise monotone).
    pub fn max_on(&self, a: f64, b: f64) -> f64 {
        match &self.form {
            AnalyticForm::Constant { value } => *value,
            AnalyticForm::LinearRamp { .. } => self.value(a).max(self.value(b)),
            AnalyticForm::PiecewiseConstant { breakpoints, .. } => {
                let mut best = self.value(a).max(self.value(b));
                for &edge in breakpoints {
                    if edge > a && edge < b {
                        best = best.max(self.value(edge));
                    }
                }
                best
            }
        }
    }
}

/// Antiderivative of max(0, a + s t) from 0 to t >= 0.
fn ramp_antideriv(a: f64, s: f64, t: f64) -> f64 {
    let full = |x: f64| a * x + 0.5 * s * x * x;
    if s == 0.0 {
        return a.max(0.0) * t;
    }
    let root = -a / s;
    if s > 0.0 {
        // Zero before the root (if the root is positive), rising after.
        if a >= 0.0 || t <= root {
            if a >= 0.0 {
                full(t)
            } else {
                0.0
            }
        } else {
            full(t) - full(root)
        }
    } else {
        // Falling; clipped to zero after the root.
        if a <= 0.0 {
            0.0
        } else if t <= root {
            full(t)
        } else {
            full(root)
        }
    }
}

// ---------------------------------------------------------------------
// Unified front
// ---------------------------------------------------------------------

/// Either learnable mixture dynamics or a fixed closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Dynamics {
    Mixture(MixtureIntegralDynamics),
    Analytic(AnalyticDynamics),
}

impl Dynamics {
    pub fn validate(&self) -> Result<()> {
        match self {
            Dynamics::Mixture(m) => m.validate(),
            Dynamics::Analytic(a) => a.validate(),
        }
    }

    pub fn num_trainable(&self) -> usize {
        match self {
            Dynamics::Mixture(m) => m.raw_len(),
            Dynamics::Analytic(_) => 0,
        }
    }

    /// Anchored antiderivative F_m(t) - F_m(0) for presentation and export.
    /// Analytic dynamics add their presentation offset here (and only here).
    pub fn integral_value(&self, m: usize, t: f64) -> f64 {
        match self {
            Dynamics::Mixture(mix) => {
                let view = mix.view_f64();
                let (at, _) = view.antideriv_and_value(m, t, |c| c);
                let (a0, _) = view.antideriv_and_value(m, 0.0, |c| c);
                at - a0
            }
            Dynamics::Analytic(a) => a.antideriv(t) + a.offset,
        }
    }

    /// Speed f_m(t). For the mixture this differentiates the antiderivative
    /// with respect to t on a tape (the network parameters enter as
    /// constants), which keeps f and F consistent by construction.
    pub fn derivative_value(&self, m: usize, t: f64) -> f64 {
        match self {
            Dynamics::Mixture(mix) => {
                let tape = Tape::new();
                let view = mix.view_f64();
                let tvar = tape.leaf(t);
                // Rebuild the constrained view on the tape as constants;
                // only t is a differentiation target.
                let big = mix_on_tape_through_t(&view, mix, m, tvar);
                tape.gradient(big).wrt(tvar)
            }
            Dynamics::Analytic(a) => a.value(t),
        }
    }

    /// Fast evaluation of (F_m(t) unanchored, f_m(t)) used by inner loops;
    /// agrees with `derivative_value` (asserted in tests).
    pub(crate) fn antideriv_and_value_f64(&self, m: usize, t: f64) -> (f64, f64) {
        match self {
            Dynamics::Mixture(mix) => mix.view_f64().antideriv_and_value(m, t, |c| c),
            Dynamics::Analytic(a) => (a.antideriv(t), a.value(t)),
        }
    }

    /// Largest f_m on `[a, b]`: exact for analytic forms; for the mixture a
    /// dense-grid scan inflated by a safety factor (the thinning loop
    /// re-checks exact intensities, so the inflation only affects
    /// efficiency, not correctness of accepted points).
    pub fn max_value_on(&self, m: usize, a: f64, b: f64) -> f64 {
        match self {
            Dynamics::Analytic(an) => an.max_on(a, b),
            Dynamics::Mixture(_) => {
                const GRID: usize = 33;
                const SAFETY: f64 = 1.2;
                let mut best = 0.0f64;
                for k in 0..GRID {
                    let t = a + (b - a) * k as f64 / (GRID - 1) as f64;
                    best = best.max(self.antideriv_and_value_f64(m, t).1);
                }
                best * SAFETY
            }
        }
    }

    /// Sampled (t, f_m(t), F_m(t)) rows for plotting, `points >= 2` evenly
    /// spaced over `[start, end]`.
    pub fn export_grid(
        &self,
        m: usize,
        start: f64,
        end: f64,
        points: usize,
    ) -> Result<Vec<(f64, f64, f64)>> {
        if points < 2 || !(end > start) {
            return Err(Error::InvalidParameter(
                "export grid needs at least two points and end > start".into(),
            ));
        }
        let mut rows = Vec::with_capacity(points);
        for k in 0..points {
            let t = start + (end - start) * k as f64 / (points - 1) as f64;
            rows.push((t, self.derivative_value(m, t), self.integral_value(m, t)));
        }
        Ok(rows)
    }
}

/// Forward F_m with the network parameters as plain constants and t as the
/// only tape variable. Used by [`Dynamics::derivative_value`].
fn mix_on_tape_through_t<'t>(
    view: &MixtureView<f64>,
    mix: &MixtureIntegralDynamics,
    m: usize,
    t: Var<'t>,
) -> Var<'t> {
    let tape = t.tape();
    let u = t.mul_const(1.0 / mix.input_scale);
    let mut big = t.mul_const(view.b0);
    for c in 0..mix.components {
        let net = &view.nets[m * mix.components + c];
        let mut h: Vec<Var<'t>> = vec![u];
        for layer in &net.layers {
            let mut nh = Vec::with_capacity(layer.rows);
            for r in 0..layer.rows {
                let mut z = tape.constant(layer.b[r]);
                for c2 in 0..layer.cols {
                    z = z + h[c2].mul_const(layer.w[r * layer.cols + c2]);
                }
                nh.push(if layer.softplus_act {
                    z.softplus()
                } else {
                    z.tanh()
                });
            }
            h = nh;
        }
        let mut phi = h[0].mul_const(net.out[0]);
        for i in 1..net.out.len() {
            phi = phi + h[i].mul_const(net.out[i]);
        }
        big = big + phi.mul_const(view.pi[c]);
    }
    big
}
