//! The dynamics-modulated self-exciting process and its exact likelihood.
//!
//! Intensity of dimension m given the history H_t:
//!
//! ```text
//! lambda_m(t) = mu_m + f_m(t) * sum_{t_j < t} g_{m, m_j}(F_m(t) - F_m(t_j))
//! ```
//!
//! Because f_m has the exact antiderivative F_m, every integral of the
//! intensity collapses by substitution u = F_m(t) - F_m(t_j):
//!
//! ```text
//! int_a^b g(F_m(t) - F_m(t_j)) f_m(t) dt
//!     = int_{F_m(a)-F_m(t_j)}^{F_m(b)-F_m(t_j)} g(u) du
//! ```
//!
//! which is a closed-form kernel antiderivative difference. The negative
//! log likelihood over a window [w, T) is assembled from per-event terms
//!
//! ```text
//! term_i = -log lambda_{m_i}(t_i) + sum_m int_{prev_i}^{t_i} lambda_m dt
//! ```
//!
//! with `prev_i` the previous event time clamped to the window start, plus
//! a tail integral from the last event to T that is folded into the last
//! event's term. Summing any disjoint batch partition of the terms
//! therefore reproduces the full-window value exactly, which is what makes
//! mini-batch training consistent.
//!
//! All of the assembly below is written once over the [`Scalar`]
//! abstraction and instantiated both with `f64` (evaluation) and with tape
//! variables (training gradients).

use crate::autodiff::{softplus, softplus_inv, Scalar, Tape, Var};
use crate::dynamics::{AnalyticDynamics, Dynamics, MixtureView};
use crate::error::{Error, Result};
use crate::events::{Event, EventSequence};
use crate::kernels::{
    integral_generic, kernel_mass, kernel_sup_after, value_generic, KernelParams, KernelSpec,
};
use crate::training::Trainable;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------

/// Multivariate self-exciting process with kernel arguments measured in
/// transformed time. All rate-like parameters are stored raw and pass
/// through softplus, so any raw vector is a valid model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicHawkesModel {
    pub num_marks: usize,
    pub kernel: KernelSpec,
    /// Raw background rates, length M; mu = softplus(raw).
    pub mu_raw: Vec<f64>,
    /// Raw excitation amplitudes, target-major M x M:
    /// `alpha_raw[m * M + n]` scales the effect of source dimension n on
    /// target dimension m.
    #[serde(rename = "A_raw")]
    pub alpha_raw: Vec<f64>,
    /// Raw decay parameters: length M (one per target dimension, shared
    /// across sources) or M x M target-major when `beta_full`.
    pub beta_raw: Vec<f64>,
    pub beta_full: bool,
    pub dynamics: Dynamics,
}

impl DynamicHawkesModel {
    /// Build a model from natural (positive) parameter values.
    /// `alpha` is target-major M x M; `beta` has length M or M x M.
    pub fn from_rates(
        kernel: KernelSpec,
        mu: &[f64],
        alpha: &[f64],
        beta: &[f64],
        dynamics: Dynamics,
    ) -> Result<Self> {
        let m = mu.len();
        let inv = |xs: &[f64]| -> Result<Vec<f64>> {
            xs.iter()
                .map(|&x| {
                    if x > 0.0 {
                        Ok(softplus_inv(x))
                    } else {
                        Err(Error::InvalidParameter(format!(
                            "natural rate parameters must be > 0, got {x}"
                        )))
                    }
                })
                .collect()
        };
        let model = DynamicHawkesModel {
            num_marks: m,
            kernel,
            mu_raw: inv(mu)?,
            alpha_raw: inv(alpha)?,
            beta_raw: inv(beta)?,
            beta_full: m > 1 && beta.len() == m * m,
            dynamics,
        };
        model.validate()?;
        Ok(model)
    }

    /// Data-driven starting point for training: background rates at half
    /// the empirical rate, decays at the inverse mean inter-event gap, and
    /// amplitudes sized so each row's total kernel mass is roughly 0.3.
    pub fn init_from_data(
        seq: &EventSequence,
        kernel: KernelSpec,
        dynamics: Dynamics,
    ) -> Result<Self> {
        let m = seq.num_marks();
        let span = seq.horizon - seq.window_start;
        let mu: Vec<f64> = seq
            .counts_per_mark()
            .iter()
            .map(|&c| 0.5 * (c.max(1) as f64) / span)
            .collect();
        let mean_gap = if seq.events.len() > 1 {
            let first = seq.events.first().map(|e| e.time).unwrap_or(0.0);
            let last = seq.events.last().map(|e| e.time).unwrap_or(0.0);
            ((last - first) / (seq.events.len() - 1) as f64).max(1e-6)
        } else {
            1.0
        };
        let beta = 1.0 / mean_gap;
        let row_mass = 0.3;
        let pair_mass = row_mass / m as f64;
        let alpha = match kernel {
            KernelSpec::Exponential => pair_mass * beta,
            KernelSpec::Rayleigh => 2.0 * pair_mass * beta,
            // mass = alpha^(1-p) / p  =>  alpha = (p * mass)^(1 / (1-p))
            KernelSpec::PowerLaw { exponent } => {
                (exponent * pair_mass).powf(1.0 / (1.0 - exponent))
            }
        };
        Self::from_rates(
            kernel,
            &mu,
            &vec![alpha; m * m],
            &vec![beta; m],
            dynamics,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.dynamics.validate()?;
        let m = self.num_marks;
        if m == 0 {
            return Err(Error::InvalidParameter("model needs at least one mark".into()));
        }
        if self.mu_raw.len() != m || self.alpha_raw.len() != m * m {
            return Err(Error::InvalidParameter(
                "background/amplitude parameter lengths do not match the mark count".into(),
            ));
        }
        let expect_beta = if self.beta_full { m * m } else { m };
        if self.beta_raw.len() != expect_beta {
            return Err(Error::InvalidParameter(format!(
                "decay parameter length {} does not match {} (beta_full={})",
                self.beta_raw.len(),
                expect_beta,
                self.beta_full
            )));
        }
        if let Dynamics::Mixture(mix) = &self.dynamics {
            if mix.num_marks != m {
                return Err(Error::Mismatch(format!(
                    "dynamics cover {} marks but the model has {m}",
                    mix.num_marks
                )));
            }
        }
        let finite = self
            .mu_raw
            .iter()
            .chain(&self.alpha_raw)
            .chain(&self.beta_raw)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite {
                context: "model raw parameters".into(),
            });
        }
        Ok(())
    }

    /// Background rates (natural values).
    pub fn mu(&self) -> Vec<f64> {
        self.mu_raw.iter().map(|&r| softplus(r)).collect()
    }

    /// Excitation amplitudes, target-major M x M (natural values).
    pub fn alpha(&self) -> Vec<f64> {
        self.alpha_raw.iter().map(|&r| softplus(r)).collect()
    }

    /// Decay parameters in stored layout (natural values).
    pub fn beta(&self) -> Vec<f64> {
        self.beta_raw.iter().map(|&r| softplus(r)).collect()
    }

    /// Kernel parameters for the (target, source) pair.
    pub fn kernel_params(&self, target: usize, source: usize) -> KernelParams {
        KernelParams {
            alpha: softplus(self.alpha_raw[target * self.num_marks + source]),
            beta: softplus(self.beta_raw[self.beta_index(target, source)]),
        }
    }

    /// Total kernel mass per (target, source) pair, target-major. By the
    /// same change of variables the likelihood uses, entry (m, n) is the
    /// expected number of dimension-m events directly triggered by one
    /// dimension-n event — exactly, for any speed whose integral is
    /// unbounded — so this matrix governs stability.
    pub fn kernel_mass_matrix(&self) -> Result<Vec<f64>> {
        let m = self.num_marks;
        let mut out = Vec::with_capacity(m * m);
        for target in 0..m {
            for source in 0..m {
                out.push(kernel_mass(self.kernel, self.kernel_params(target, source))?);
            }
        }
        Ok(out)
    }

    /// The same model with its speed function replaced — handy for
    /// generating ground truth from a known analytic speed.
    pub fn with_dynamics(&self, dynamics: Dynamics) -> Result<Self> {
        let mut model = self.clone();
        model.dynamics = dynamics;
        model.validate()?;
        Ok(model)
    }

    /// Elapsed warped time on dimension `mark` between a past instant
    /// `t_j` and `t`: the increase of the speed's antiderivative over
    /// `[t_j, t]`. This is the quantity the kernels consume in place of
    /// `t - t_j`; with unit speed it equals `t - t_j`. Non-negative because
    /// the antiderivative is non-decreasing.
    pub fn warped_elapsed(&self, mark: usize, t_j: f64, t: f64) -> Result<f64> {
        if mark >= self.num_marks {
            return Err(Error::InvalidParameter(format!(
                "mark {mark} out of range for a model with {} dimensions",
                self.num_marks
            )));
        }
        if t_j > t {
            return Err(Error::InvalidParameter(format!(
                "warped_elapsed needs t_j <= t, got t_j = {t_j}, t = {t}"
            )));
        }
        let d = &self.dynamics;
        Ok((d.integral_value(mark, t) - d.integral_value(mark, t_j)).max(0.0))
    }

    fn beta_index(&self, target: usize, source: usize) -> usize {
        if self.beta_full {
            target * self.num_marks + source
        } else {
            target
        }
    }

    fn check_marks(&self, found: usize) -> Result<()> {
        if found != self.num_marks {
            return Err(Error::Mismatch(format!(
                "sequence has {found} marks but the model has {}",
                self.num_marks
            )));
        }
        Ok(())
    }

    /// Natural parameter vectors (mu, alpha, beta) computed once per pass.
    fn naturals(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (self.mu(), self.alpha(), self.beta())
    }
}

// ---------------------------------------------------------------------
// Evaluation interface shared with the baselines
// ---------------------------------------------------------------------

/// An intensity question: the conditioning events and the query time.
/// Every history event must satisfy `time <= query time`. Events at
/// exactly the query time follow each model's own equal-time likelihood
/// convention: excitation kernels count them at zero lag, count-based
/// models do not count them yet.
#[derive(Clone, Copy, Debug)]
pub struct IntensityQuery<'a> {
    pub history: &'a [Event],
    pub time: f64,
}

/// Negative log likelihood broken into per-event terms. `event_terms[k]`
/// belongs to the k-th scored event; the final term also carries the
/// window tail integral. `total` is exactly the in-order sum of the terms
/// (plus nothing else), so any partition of the terms reproduces it.
#[derive(Clone, Debug)]
pub struct NllReport {
    pub total: f64,
    pub num_events: usize,
    /// `total / num_events`; `None` for a window with no scored events
    /// (the total is then purely the compensator of the window).
    pub per_event: Option<f64>,
    pub event_terms: Vec<f64>,
    /// How many log-intensity terms had to be clipped at the positivity
    /// floor. Always zero for models whose intensity is bounded away from
    /// zero by a background rate; count-scaled models report their
    /// structural zeros here instead of producing infinities.
    pub floored_log_terms: usize,
}

impl NllReport {
    pub(crate) fn from_terms(terms: Vec<f64>) -> Result<Self> {
        Self::from_terms_with_floors(terms, 0)
    }

    pub(crate) fn from_terms_with_floors(terms: Vec<f64>, floored: usize) -> Result<Self> {
        let total: f64 = terms.iter().sum();
        if !total.is_finite() {
            return Err(Error::NonFinite {
                context: "negative log likelihood".into(),
            });
        }
        let n = terms.len();
        Ok(NllReport {
            total,
            num_events: n,
            per_event: if n == 0 { None } else { Some(total / n as f64) },
            event_terms: terms,
            floored_log_terms: floored,
        })
    }
}

/// Likelihood of a window without scored events: pure compensator.
pub(crate) fn compensator_only_report(
    process: &(impl PointProcess + ?Sized),
    seq: &EventSequence,
) -> Result<NllReport> {
    let total: f64 = process
        .compensators(&seq.events, seq.window_start, seq.horizon)?
        .iter()
        .sum();
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "window compensator".into(),
        });
    }
    Ok(NllReport {
        total,
        num_events: 0,
        per_event: None,
        event_terms: Vec::new(),
        floored_log_terms: 0,
    })
}

/// Everything evaluation, prediction, and simulation need from a temporal
/// point process. Implemented by the dynamics-modulated model and by all
/// baselines, so downstream code is model-agnostic.
pub trait PointProcess {
    fn num_marks(&self) -> usize;

    /// Conditional intensity of every dimension at `q.time`.
    fn intensities(&self, q: IntensityQuery<'_>) -> Vec<f64>;

    /// Upper bound on the total intensity over `[from, to]`, conditioning
    /// on the events with time <= `from` (later entries are ignored), and
    /// valid while no further events occur. Used for thinning simulation.
    fn intensity_bound(&self, events: &[Event], from: f64, to: f64) -> f64;

    /// Expected event counts per dimension over `(from, to]`, conditioning
    /// on the events with time <= `from` (later entries are ignored):
    /// the integral of each intensity with the history frozen at `from`.
    fn compensators(&self, events: &[Event], from: f64, to: f64) -> Result<Vec<f64>>;

    /// Exact negative log likelihood of the sequence over its window.
    fn nll(&self, seq: &EventSequence) -> Result<NllReport>;

    /// Predicted counts per grid interval and dimension: row s holds the
    /// compensator increments over `(boundaries[s], boundaries[s+1]]`
    /// conditioned on the actual events up to the interval start.
    fn predict_counts(&self, seq: &EventSequence, boundaries: &[f64]) -> Result<Vec<Vec<f64>>> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidParameter(
                "prediction needs at least two grid boundaries".into(),
            ));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "prediction grid boundaries must be strictly increasing".into(),
            ));
        }
        let mut rows = Vec::with_capacity(boundaries.len() - 1);
        for w in boundaries.windows(2) {
            rows.push(self.compensators(&seq.events, w[0], w[1])?);
        }
        Ok(rows)
    }

    /// Expected number of direct descendants of one event, if the model
    /// has that notion (spectral radius of the kernel mass matrix for
    /// excitation models). Values >= 1 mean simulation may not terminate.
    fn branching_ratio(&self) -> Option<f64> {
        None
    }
}

/// Spectral radius of a non-negative `m x m` matrix (row-major) by power
/// iteration with the max norm.
pub(crate) fn spectral_radius(matrix: &[f64], m: usize) -> f64 {
    let mut v = vec![1.0; m];
    let mut radius = 0.0;
    for _ in 0..200 {
        let mut w = vec![0.0; m];
        for (i, wi) in w.iter_mut().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                *wi += matrix[i * m + j] * vj;
            }
        }
        let norm = w.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if norm <= 0.0 {
            return 0.0;
        }
        radius = norm;
        for x in &mut w {
            *x /= norm;
        }
        v = w;
    }
    radius
}

// ---------------------------------------------------------------------
// Generic likelihood assembly
// ---------------------------------------------------------------------

/// Dynamics seen through a scalar type: learnable mixtures evaluate their
/// networks in `S`; fixed analytic forms are plain numbers lifted into `S`.
enum DynamicsView<'a, S> {
    Mixture(MixtureView<S>),
    Analytic(&'a AnalyticDynamics),
}

impl<S: Scalar> DynamicsView<'_, S> {
    /// (antiderivative F_m(t) unanchored, speed f_m(t)).
    fn eval(&self, m: usize, t: f64, lift: &impl Fn(f64) -> S) -> (S, S) {
        match self {
            DynamicsView::Mixture(v) => v.antideriv_and_value(m, t, lift),
            DynamicsView::Analytic(a) => (lift(a.antideriv(t)), lift(a.value(t))),
        }
    }
}

/// Cache of (F_m, f_m) pairs keyed by (mark, time slot). Slots name the
/// distinguished times of one sequence — window start, each event, the
/// horizon — so each network forward pass is recorded at most once per
/// mark per likelihood pass (this is what makes training cost linear in
/// history size per event instead of quadratic).
struct TransformCache<S> {
    entries: Vec<Option<(S, S)>>,
    slots: usize,
}

const START_SLOT: usize = 0;

fn event_slot(i: usize) -> usize {
    i + 1
}

impl<S: Copy> TransformCache<S> {
    fn new(marks: usize, num_events: usize) -> Self {
        let slots = num_events + 2;
        TransformCache {
            entries: vec![None; marks * slots],
            slots,
        }
    }

    fn end_slot(&self) -> usize {
        self.slots - 1
    }
}

/// One likelihood pass: the constrained parameters, the dynamics view, and
/// the transform cache, all over a common scalar type.
struct LikelihoodPass<'a, S, L> {
    model: &'a DynamicHawkesModel,
    seq: &'a EventSequence,
    mu: Vec<S>,
    alpha: Vec<S>,
    beta: Vec<S>,
    dynamics: DynamicsView<'a, S>,
    cache: TransformCache<S>,
    lift: L,
    first_scored: usize,
}

impl<'a, S: Scalar, L: Fn(f64) -> S> LikelihoodPass<'a, S, L> {
    fn transform(&mut self, m: usize, slot: usize, t: f64) -> (S, S) {
        let key = m * self.cache.slots + slot;
        if let Some(hit) = self.cache.entries[key] {
            return hit;
        }
        let value = self.dynamics.eval(m, t, &self.lift);
        self.cache.entries[key] = Some(value);
        value
    }

    fn pair_alpha(&self, target: usize, source: usize) -> S {
        self.alpha[target * self.model.num_marks + source]
    }

    fn pair_beta(&self, target: usize, source: usize) -> S {
        self.beta[self.model.beta_index(target, source)]
    }

    /// Integral of every dimension's intensity over `(a, b]`, with the
    /// history frozen at `a` (all events with time <= a contribute).
    fn compensator_slice(&mut self, a_slot: usize, a: f64, b_slot: usize, b: f64) -> S {
        let sources = self.seq.events.partition_point(|e| e.time <= a);
        let marks = self.model.num_marks;
        let mut total: Option<S> = None;
        for m in 0..marks {
            let (big_a, _) = self.transform(m, a_slot, a);
            let (big_b, _) = self.transform(m, b_slot, b);
            let mut acc = self.mu[m].mul_const(b - a);
            for j in 0..sources {
                let src = self.seq.events[j];
                let (big_j, _) = self.transform(m, event_slot(j), src.time);
                let x0 = big_a - big_j;
                let x1 = big_b - big_j;
                acc = acc
                    + integral_generic(
                        self.model.kernel,
                        self.pair_alpha(m, src.mark),
                        self.pair_beta(m, src.mark),
                        x0,
                        x1,
                    );
            }
            total = Some(match total {
                Some(t) => t + acc,
                None => acc,
            });
        }
        total.expect("at least one mark")
    }

    /// Intensity of the event's own dimension at the event, conditioning
    /// on all earlier-indexed events (equal timestamps included).
    fn event_intensity(&mut self, i: usize) -> S {
        let ev = self.seq.events[i];
        let (big_i, speed) = self.transform(ev.mark, event_slot(i), ev.time);
        let mut excitation: Option<S> = None;
        for j in 0..i {
            let src = self.seq.events[j];
            let (big_j, _) = self.transform(ev.mark, event_slot(j), src.time);
            let g = value_generic(
                self.model.kernel,
                self.pair_alpha(ev.mark, src.mark),
                self.pair_beta(ev.mark, src.mark),
                big_i - big_j,
            );
            excitation = Some(match excitation {
                Some(e) => e + g,
                None => g,
            });
        }
        match excitation {
            Some(e) => self.mu[ev.mark] + speed * e,
            None => self.mu[ev.mark],
        }
    }

    /// Complete likelihood term of scored event `i`: negative log intensity
    /// plus the compensator slice back to the previous event (or window
    /// start), plus — for the final event — the tail out to the horizon.
    fn event_term(&mut self, i: usize) -> S {
        let ev = self.seq.events[i];
        let neg_log = -(self.event_intensity(i).ln());
        let (a_slot, a) = if i == self.first_scored {
            (START_SLOT, self.seq.window_start)
        } else {
            (event_slot(i - 1), self.seq.events[i - 1].time)
        };
        let mut term = neg_log + self.compensator_slice(a_slot, a, event_slot(i), ev.time);
        if i + 1 == self.seq.events.len() {
            let end = self.cache.end_slot();
            term = term + self.compensator_slice(event_slot(i), ev.time, end, self.seq.horizon);
        }
        term
    }
}

impl DynamicHawkesModel {
    fn pass_f64<'a>(
        &'a self,
        seq: &'a EventSequence,
    ) -> LikelihoodPass<'a, f64, impl Fn(f64) -> f64> {
        let (mu, alpha, beta) = self.naturals();
        let dynamics = match &self.dynamics {
            Dynamics::Mixture(mix) => DynamicsView::Mixture(mix.view_f64()),
            Dynamics::Analytic(a) => DynamicsView::Analytic(a),
        };
        LikelihoodPass {
            model: self,
            seq,
            mu,
            alpha,
            beta,
            dynamics,
            cache: TransformCache::new(self.num_marks, seq.events.len()),
            lift: |c: f64| c,
            first_scored: seq.events.len() - seq.num_scored(),
        }
    }

    /// Tape-recording pass; also returns the parameter leaves in the order
    /// of [`Trainable::raw_params`].
    fn pass_on_tape<'a, 't>(
        &'a self,
        seq: &'a EventSequence,
        tape: &'t Tape,
    ) -> (
        LikelihoodPass<'a, Var<'t>, impl Fn(f64) -> Var<'t> + use<'a, 't>>,
        Vec<Var<'t>>,
    ) {
        let mut leaves = Vec::new();
        let mut rate = |raw: &f64| {
            let leaf = tape.leaf(*raw);
            leaves.push(leaf);
            leaf.softplus()
        };
        let mu: Vec<_> = self.mu_raw.iter().map(&mut rate).collect();
        let alpha: Vec<_> = self.alpha_raw.iter().map(&mut rate).collect();
        let beta: Vec<_> = self.beta_raw.iter().map(&mut rate).collect();
        let dynamics = match &self.dynamics {
            Dynamics::Mixture(mix) => {
                let (view, dyn_leaves) = mix.view_on_tape(tape);
                leaves.extend(dyn_leaves);
                DynamicsView::Mixture(view)
            }
            Dynamics::Analytic(a) => DynamicsView::Analytic(a),
        };
        let pass = LikelihoodPass {
            model: self,
            seq,
            mu,
            alpha,
            beta,
            dynamics,
            cache: TransformCache::new(self.num_marks, seq.events.len()),
            lift: move |c: f64| tape.constant(c),
            first_scored: seq.events.len() - seq.num_scored(),
        };
        (pass, leaves)
    }
}

// ---------------------------------------------------------------------
// PointProcess implementation
// ---------------------------------------------------------------------

impl PointProcess for DynamicHawkesModel {
    fn num_marks(&self) -> usize {
        self.num_marks
    }

    fn intensities(&self, q: IntensityQuery<'_>) -> Vec<f64> {
        let (mu, alpha, beta) = self.naturals();
        let m_count = self.num_marks;
        let mut out = Vec::with_capacity(m_count);
        for m in 0..m_count {
            let (big_t, speed) = self.dynamics.antideriv_and_value_f64(m, q.time);
            let mut excitation = 0.0;
            for ev in q.history.iter().filter(|e| e.time <= q.time) {
                let (big_j, _) = self.dynamics.antideriv_and_value_f64(m, ev.time);
                excitation += value_generic(
                    self.kernel,
                    alpha[m * m_count + ev.mark],
                    beta[self.beta_index(m, ev.mark)],
                    big_t - big_j,
                );
            }
            out.push(mu[m] + speed * excitation);
        }
        out
    }

    fn intensity_bound(&self, events: &[Event], from: f64, to: f64) -> f64 {
        let sources = events.partition_point(|e| e.time <= from);
        let m_count = self.num_marks;
        let mu = self.mu();
        let mut bound = 0.0;
        for m in 0..m_count {
            let speed_max = self.dynamics.max_value_on(m, from, to);
            let (big_from, _) = self.dynamics.antideriv_and_value_f64(m, from);
            let mut excitation = 0.0;
            for ev in &events[..sources] {
                let (big_j, _) = self.dynamics.antideriv_and_value_f64(m, ev.time);
                excitation += kernel_sup_after(
                    self.kernel,
                    self.kernel_params(m, ev.mark),
                    big_from - big_j,
                );
            }
            bound += mu[m] + speed_max * excitation;
        }
        bound
    }

    fn compensators(&self, events: &[Event], from: f64, to: f64) -> Result<Vec<f64>> {
        if !(to >= from) {
            return Err(Error::InvalidParameter(format!(
                "compensator interval must have from <= to, got [{from}, {to}]"
            )));
        }
        if let Some(bad) = events.iter().find(|e| e.mark >= self.num_marks) {
            return Err(Error::Mismatch(format!(
                "event mark {} exceeds the model's {} marks",
                bad.mark, self.num_marks
            )));
        }
        let (mu, alpha, beta) = self.naturals();
        let sources = events.partition_point(|e| e.time <= from);
        let m_count = self.num_marks;
        let mut out = Vec::with_capacity(m_count);
        for m in 0..m_count {
            let (big_a, _) = self.dynamics.antideriv_and_value_f64(m, from);
            let (big_b, _) = self.dynamics.antideriv_and_value_f64(m, to);
            let mut acc = mu[m] * (to - from);
            for ev in &events[..sources] {
                let (big_j, _) = self.dynamics.antideriv_and_value_f64(m, ev.time);
                acc += integral_generic(
                    self.kernel,
                    alpha[m * m_count + ev.mark],
                    beta[self.beta_index(m, ev.mark)],
                    big_a - big_j,
                    big_b - big_j,
                );
            }
            out.push(acc);
        }
        Ok(out)
    }

    fn nll(&self, seq: &EventSequence) -> Result<NllReport> {
        self.check_marks(seq.num_marks())?;
        if seq.num_scored() == 0 {
            return compensator_only_report(self, seq);
        }
        let mut pass = self.pass_f64(seq);
        let first = pass.first_scored;
        let terms: Vec<f64> = (first..seq.events.len()).map(|i| pass.event_term(i)).collect();
        NllReport::from_terms(terms)
    }

    fn branching_ratio(&self) -> Option<f64> {
        let mass = self.kernel_mass_matrix().ok()?;
        Some(spectral_radius(&mass, self.num_marks))
    }
}

// ---------------------------------------------------------------------
// Trainable implementation
// ---------------------------------------------------------------------

impl Trainable for DynamicHawkesModel {
    fn raw_params(&self) -> Vec<f64> {
        let mut raw = Vec::with_capacity(self.num_raw());
        raw.extend_from_slice(&self.mu_raw);
        raw.extend_from_slice(&self.alpha_raw);
        raw.extend_from_slice(&self.beta_raw);
        if let Dynamics::Mixture(mix) = &self.dynamics {
            mix.flatten_raw(&mut raw);
        }
        raw
    }

    fn set_raw_params(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.num_raw() {
            return Err(Error::Mismatch(format!(
                "expected {} raw parameters, got {}",
                self.num_raw(),
                raw.len()
            )));
        }
        let mut offset = 0;
        let take = |n: usize, offset: &mut usize| -> Vec<f64> {
            let slice = raw[*offset..*offset + n].to_vec();
            *offset += n;
            slice
        };
        self.mu_raw = take(self.mu_raw.len(), &mut offset);
        self.alpha_raw = take(self.alpha_raw.len(), &mut offset);
        self.beta_raw = take(self.beta_raw.len(), &mut offset);
        if let Dynamics::Mixture(mix) = &mut self.dynamics {
            mix.read_raw(raw, &mut offset);
        }
        debug_assert_eq!(offset, raw.len());
        Ok(())
    }

    fn num_raw(&self) -> usize {
        self.mu_raw.len()
            + self.alpha_raw.len()
            + self.beta_raw.len()
            + self.dynamics.num_trainable()
    }

    fn batch_loss_grad(&self, seq: &EventSequence, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check_marks(seq.num_marks())?;
        if batch.is_empty() {
            return Err(Error::EmptyInput("empty training batch".into()));
        }
        let first_scored = seq.events.len() - seq.num_scored();
        if batch.iter().any(|&i| i < first_scored || i >= seq.events.len()) {
            return Err(Error::Mismatch(
                "batch indices must point at scored events".into(),
            ));
        }
        let tape = Tape::new();
        let (mut pass, leaves) = self.pass_on_tape(seq, &tape);
        let mut sum: Option<Var<'_>> = None;
        for &i in batch {
            let term = pass.event_term(i);
            sum = Some(match sum {
                Some(s) => s + term,
                None => term,
            });
        }
        let loss = sum.expect("non-empty batch").mul_const(1.0 / batch.len() as f64);
        if !loss.value().is_finite() {
            return Err(Error::NonFinite {
                context: "batch loss".into(),
            });
        }
        let grad = tape.gradient(loss);
        let g: Vec<f64> = leaves.iter().map(|&leaf| grad.wrt(leaf)).collect();
        Ok((loss.value(), g))
    }
}
