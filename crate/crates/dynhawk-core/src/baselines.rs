//! Classical point-process baselines: homogeneous Poisson, self-exciting
//! with untransformed time, a lognormal-profile count-scaled process, and
//! a self-correcting process.
//!
//! Each baseline implements [`PointProcess`] and [`Trainable`] with its own
//! independent likelihood assembly. In particular the classical
//! self-exciting model below works directly on raw time differences — it
//! deliberately shares nothing with the transform-based assembly in
//! [`crate::model`] beyond the kernel primitives, so the two provide
//! independent routes to the same numbers when the learned dynamics reduce
//! to the identity (tests pin that agreement to 1e-10).

use crate::autodiff::{softplus, softplus_inv, Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::events::{Event, EventSequence};
use crate::kernels::{
    integral_generic, kernel_mass, kernel_sup_after, value_generic, KernelParams, KernelSpec,
};
use crate::model::{compensator_only_report, IntensityQuery, NllReport, PointProcess};
use crate::training::Trainable;
use serde::{Deserialize, Serialize};

/// Intensity floor applied inside log terms (only) by models whose
/// intensity can be structurally zero.
pub const LOG_FLOOR: f64 = 1e-10;

// ---------------------------------------------------------------------
// Shared per-event term walk
// ---------------------------------------------------------------------

/// The window tiling shared by every likelihood here: scored event i owns
/// the slice from the previous event (clamped to the window start) to
/// itself, and the last event also owns the tail out to the horizon.
/// `log_intensity(i)` is the log intensity of event i's own dimension;
/// `slice(a, b, k)` is the total compensator over `(a, b]` where the first
/// `k` events (those with time <= a) form the frozen history.
fn windowed_term<S: Scalar>(
    seq: &EventSequence,
    first_scored: usize,
    i: usize,
    log_intensity: &mut impl FnMut(usize) -> S,
    slice: &mut impl FnMut(f64, f64, usize) -> S,
) -> S {
    let ti = seq.events[i].time;
    let a = if i == first_scored {
        seq.window_start
    } else {
        seq.events[i - 1].time
    };
    let k = seq.events.partition_point(|e| e.time <= a);
    let mut term = -log_intensity(i) + slice(a, ti, k);
    if i + 1 == seq.events.len() {
        let k_tail = seq.events.partition_point(|e| e.time <= ti);
        term = term + slice(ti, seq.horizon, k_tail);
    }
    term
}

fn check_marks(model_marks: usize, found: usize) -> Result<()> {
    if found != model_marks {
        return Err(Error::Mismatch(format!(
            "sequence has {found} marks but the model has {model_marks}"
        )));
    }
    Ok(())
}

fn check_batch(seq: &EventSequence, batch: &[usize]) -> Result<usize> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty training batch".into()));
    }
    let first_scored = seq.events.len() - seq.num_scored();
    if batch
        .iter()
        .any(|&i| i < first_scored || i >= seq.events.len())
    {
        return Err(Error::Mismatch(
            "batch indices must point at scored events".into(),
        ));
    }
    Ok(first_scored)
}

fn finite_loss(loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: "batch loss".into(),
        })
    }
}

// ---------------------------------------------------------------------
// Homogeneous Poisson
// ---------------------------------------------------------------------

/// Constant intensity per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousPoissonModel {
    /// Raw rates; rate = softplus(raw).
    pub rate_raw: Vec<f64>,
}

impl HomogeneousPoissonModel {
    pub fn from_rates(rates: &[f64]) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::InvalidParameter(
                "Poisson rates must be positive and non-empty".into(),
            ));
        }
        Ok(HomogeneousPoissonModel {
            rate_raw: rates.iter().map(|&r| softplus_inv(r)).collect(),
        })
    }

    /// Closed-form maximum likelihood estimate: scored count over window
    /// span per dimension (with a small floor so empty dimensions stay
    /// valid).
    pub fn mle(seq: &EventSequence) -> Result<Self> {
        let span = seq.horizon - seq.window_start;
        let rates: Vec<f64> = seq
            .counts_per_mark()
            .iter()
            .map(|&c| (c as f64 / span).max(1e-8))
            .collect();
        Self::from_rates(&rates)
    }

    pub fn rates(&self) -> Vec<f64> {
        self.rate_raw.iter().map(|&r| softplus(r)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate_raw.is_empty() || self.rate_raw.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidParameter(
                "rates must be finite and non-empty".into(),
            ));
        }
        Ok(())
    }
}

impl PointProcess for HomogeneousPoissonModel {
    fn num_marks(&self) -> usize {
        self.rate_raw.len()
    }

    fn intensities(&self, _q: IntensityQuery<'_>) -> Vec<f64> {
        self.rates()
    }

    fn intensity_bound(&self, _events: &[Event], _from: f64, _to: f64) -> f64 {
        self.rates().iter().sum()
    }

    fn compensators(&self, events: &[Event], from: f64, to: f64) -> Result<Vec<f64>> {
        check_marks(
            self.num_marks(),
            events.iter().map(|e| e.mark + 1).max().unwrap_or(0).max(self.num_marks()),
        )?;
        if !(to >= from) {
            return Err(Error::InvalidParameter(format!(
                "compensator interval must have from <= to, got [{from}, {to}]"
            )));
        }
        Ok(self.rates().iter().map(|r| r * (to - from)).collect())
    }

    fn nll(&self, seq: &EventSequence) -> Result<NllReport> {
        check_marks(self.num_marks(), seq.num_marks())?;
        if seq.num_scored() == 0 {
            return compensator_only_report(self, seq);
        }
        let rates = self.rates();
        let first = seq.events.len() - seq.num_scored();
        let mut log_int = |i: usize| rates[seq.events[i].mark].ln();
        let mut slice = |a: f64, b: f64, _k: usize| rates.iter().sum::<f64>() * (b - a);
        let terms: Vec<f64> = (first..seq.events.len())
            .map(|i| windowed_term(seq, first, i, &mut log_int, &mut slice))
            .collect();
        NllReport::from_terms(terms)
    }
}

impl Trainable for HomogeneousPoissonModel {
    fn raw_params(&self) -> Vec<f64> {
        self.rate_raw.clone()
    }

    fn set_raw_params(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.rate_raw.len() {
            return Err(Error::Mismatch("raw parameter length mismatch".into()));
        }
        self.rate_raw.copy_from_slice(raw);
        Ok(())
    }

    fn num_raw(&self) -> usize {
        self.rate_raw.len()
    }

    fn batch_loss_grad(&self, seq: &EventSequence, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        check_marks(self.num_marks(), seq.num_marks())?;
        let first = check_batch(seq, batch)?;
        let tape = Tape::new();
        let leaves: Vec<Var<'_>> = self.rate_raw.iter().map(|&r| tape.leaf(r)).collect();
        let rates: Vec<Var<'_>> = leaves.iter().map(|l| l.softplus()).collect();
        let mut log_int = |i: usize| rates[seq.events[i].mark].ln();
        let mut slice = |a: f64, b: f64, _k: usize| {
            let mut sum = rates[0];
            for r in &rates[1..] {
                sum = sum + *r;
            }
            sum.mul_const(b - a)
        };
        let mut total: Option<Var<'_>> = None;
        for &i in batch {
            let term = windowed_term(seq, first, i, &mut log_int, &mut slice);
            total = Some(match total {
                Some(t) => t + term,
                None => term,
            });
        }
        let loss = total.expect("non-empty batch").mul_const(1.0 / batch.len() as f64);
        finite_loss(loss.value())?;
        let grad = tape.gradient(loss);
        Ok((loss.value(), leaves.iter().map(|&l| grad.wrt(l)).collect()))
    }
}

// ---------------------------------------------------------------------
// Classical self-exciting process (untransformed time)
// ---------------------------------------------------------------------

/// Self-exciting process whose kernels act on raw time differences:
/// `lambda_m(t) = mu_m + sum_{t_j < t} g_{m, m_j}(t - t_j)`. This is the
/// dynamics-modulated model with the identity time transform, implemented
/// independently as a likelihood cross-check and comparison baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesModel {
    pub num_marks: usize,
    pub kernel: KernelSpec,
    pub mu_raw: Vec<f64>,
    /// Target-major M x M raw amplitudes.
    #[serde(rename = "A_raw")]
    pub alpha_raw: Vec<f64>,
    /// Length M (per target) or M x M when `beta_full`.
    pub beta_raw: Vec<f64>,
    pub beta_full: bool,
}

impl HawkesModel {
    pub fn from_rates(
        kernel: KernelSpec,
        mu: &[f64],
        alpha: &[f64],
        beta: &[f64],
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
        let model = HawkesModel {
            num_marks: m,
            kernel,
            mu_raw: inv(mu)?,
            alpha_raw: inv(alpha)?,
            beta_raw: inv(beta)?,
            beta_full: m > 1 && beta.len() == m * m,
        };
        model.validate()?;
        Ok(model)
    }

    /// Same data-driven starting heuristics as the dynamics-modulated
    /// model: half the empirical rate as background, inverse mean gap as
    /// decay, row kernel mass near 0.3.
    pub fn init_from_data(seq: &EventSequence, kernel: KernelSpec) -> Result<Self> {
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
        let pair_mass = 0.3 / m as f64;
        let alpha = match kernel {
            KernelSpec::Exponential => pair_mass * beta,
            KernelSpec::Rayleigh => 2.0 * pair_mass * beta,
            KernelSpec::PowerLaw { exponent } => {
                (exponent * pair_mass).powf(1.0 / (1.0 - exponent))
            }
        };
        Self::from_rates(kernel, &mu, &vec![alpha; m * m], &vec![beta; m])
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let m = self.num_marks;
        if m == 0 || self.mu_raw.len() != m || self.alpha_raw.len() != m * m {
            return Err(Error::InvalidParameter(
                "baseline parameter lengths do not match the mark count".into(),
            ));
        }
        let expect = if self.beta_full { m * m } else { m };
        if self.beta_raw.len() != expect {
            return Err(Error::InvalidParameter(
                "decay parameter length mismatch".into(),
            ));
        }
        Ok(())
    }

    pub fn mu(&self) -> Vec<f64> {
        self.mu_raw.iter().map(|&r| softplus(r)).collect()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.alpha_raw.iter().map(|&r| softplus(r)).collect()
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta_raw.iter().map(|&r| softplus(r)).collect()
    }

    fn beta_index(&self, target: usize, source: usize) -> usize {
        if self.beta_full {
            target * self.num_marks + source
        } else {
            target
        }
    }

    pub fn kernel_params(&self, target: usize, source: usize) -> KernelParams {
        KernelParams {
            alpha: softplus(self.alpha_raw[target * self.num_marks + source]),
            beta: softplus(self.beta_raw[self.beta_index(target, source)]),
        }
    }

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

    /// Per-event likelihood terms over arbitrary scalars; the whole
    /// baseline likelihood lives here.
    fn terms_generic<S: Scalar>(
        &self,
        seq: &EventSequence,
        batch: &[usize],
        mu: &[S],
        alpha: &[S],
        beta: &[S],
        lift: &impl Fn(f64) -> S,
    ) -> Vec<S> {
        let m_count = self.num_marks;
        let first = seq.events.len() - seq.num_scored();
        let pair = |t: usize, s: usize| (alpha[t * m_count + s], beta[self.beta_index(t, s)]);
        let mut log_int = |i: usize| {
            let ev = seq.events[i];
            let mut excitation: Option<S> = None;
            for j in 0..i {
                let src = seq.events[j];
                let (a, b) = pair(ev.mark, src.mark);
                let g = value_generic(self.kernel, a, b, lift(ev.time - src.time));
                excitation = Some(match excitation {
                    Some(e) => e + g,
                    None => g,
                });
            }
            match excitation {
                Some(e) => (mu[ev.mark] + e).ln(),
                None => mu[ev.mark].ln(),
            }
        };
        let mut slice = |a: f64, b: f64, k: usize| {
            let mut total: Option<S> = None;
            for m in 0..m_count {
                let mut acc = mu[m].mul_const(b - a);
                for src in &seq.events[..k] {
                    let (al, be) = pair(m, src.mark);
                    acc = acc
                        + integral_generic(
                            self.kernel,
                            al,
                            be,
                            lift(a - src.time),
                            lift(b - src.time),
                        );
                }
                total = Some(match total {
                    Some(t) => t + acc,
                    None => acc,
                });
            }
            total.expect("at least one mark")
        };
        batch
            .iter()
            .map(|&i| windowed_term(seq, first, i, &mut log_int, &mut slice))
            .collect()
    }
}

impl PointProcess for HawkesModel {
    fn num_marks(&self) -> usize {
        self.num_marks
    }

    fn intensities(&self, q: IntensityQuery<'_>) -> Vec<f64> {
        let mu = self.mu();
        let mut out = Vec::with_capacity(self.num_marks);
        for m in 0..self.num_marks {
            let mut lam = mu[m];
            for ev in q.history.iter().filter(|e| e.time <= q.time) {
                let p = self.kernel_params(m, ev.mark);
                lam += value_generic(self.kernel, p.alpha, p.beta, q.time - ev.time);
            }
            out.push(lam);
        }
        out
    }

    fn intensity_bound(&self, events: &[Event], from: f64, _to: f64) -> f64 {
        let sources = events.partition_point(|e| e.time <= from);
        let mu = self.mu();
        let mut bound = 0.0;
        for m in 0..self.num_marks {
            let mut acc = mu[m];
            for ev in &events[..sources] {
                acc += kernel_sup_after(self.kernel, self.kernel_params(m, ev.mark), from - ev.time);
            }
            bound += acc;
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
        let sources = events.partition_point(|e| e.time <= from);
        let mu = self.mu();
        let mut out = Vec::with_capacity(self.num_marks);
        for m in 0..self.num_marks {
            let mut acc = mu[m] * (to - from);
            for ev in &events[..sources] {
                let p = self.kernel_params(m, ev.mark);
                acc += integral_generic(self.kernel, p.alpha, p.beta, from - ev.time, to - ev.time);
            }
            out.push(acc);
        }
        Ok(out)
    }

    fn nll(&self, seq: &EventSequence) -> Result<NllReport> {
        check_marks(self.num_marks, seq.num_marks())?;
        if seq.num_scored() == 0 {
            return compensator_only_report(self, seq);
        }
        let first = seq.events.len() - seq.num_scored();
        let all: Vec<usize> = (first..seq.events.len()).collect();
        let terms = self.terms_generic(
            seq,
            &all,
            &self.mu(),
            &self.alpha(),
            &self.beta(),
            &|c| c,
        );
        NllReport::from_terms(terms)
    }

    fn branching_ratio(&self) -> Option<f64> {
        let mass = self.kernel_mass_matrix().ok()?;
        Some(crate::model::spectral_radius(&mass, self.num_marks))
    }
}

impl Trainable for HawkesModel {
    fn raw_params(&self) -> Vec<f64> {
        let mut raw = Vec::with_capacity(self.num_raw());
        raw.extend_from_slice(&self.mu_raw);
        raw.extend_from_slice(&self.alpha_raw);
        raw.extend_from_slice(&self.beta_raw);
        raw
    }

    fn set_raw_params(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.num_raw() {
            return Err(Error::Mismatch("raw parameter length mismatch".into()));
        }
        let (mu, rest) = raw.split_at(self.mu_raw.len());
        let (alpha, beta) = rest.split_at(self.alpha_raw.len());
        self.mu_raw.copy_from_slice(mu);
        self.alpha_raw.copy_from_slice(alpha);
        self.beta_raw.copy_from_slice(beta);
        Ok(())
    }

    fn num_raw(&self) -> usize {
        self.mu_raw.len() + self.alpha_raw.len() + self.beta_raw.len()
    }

    fn batch_loss_grad(&self, seq: &EventSequence, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        check_marks(self.num_marks, seq.num_marks())?;
        check_batch(seq, batch)?;
        let tape = Tape::new();
        let mut leaves = Vec::with_capacity(self.num_raw());
        let mut rate = |raw: &f64| {
            let leaf = tape.leaf(*raw);
            leaves.push(leaf);
            leaf.softplus()
        };
        let mu: Vec<_> = self.mu_raw.iter().map(&mut rate).collect();
        let alpha: Vec<_> = self.alpha_raw.iter().map(&mut rate).collect();
        let beta: Vec<_> = self.beta_raw.iter().map(&mut rate).collect();
        let terms = self.terms_generic(seq, batch, &mu, &alpha, &beta, &|c| tape.constant(c));
        let mut total = terms[0];
        for t in &terms[1..] {
            total = total + *t;
        }
        let loss = total.mul_const(1.0 / batch.len() as f64);
        finite_loss(loss.value())?;
        let grad = tape.gradient(loss);
        Ok((loss.value(), leaves.iter().map(|&l| grad.wrt(l)).collect()))
    }
}

// ---------------------------------------------------------------------
// Count-scaled lognormal-profile process
// ---------------------------------------------------------------------

/// Intensity proportional to the number of past own-dimension events,
/// shaped by a lognormal time profile:
///
/// ```text
/// lambda_m(t) = pdf_lognormal(t; location_m, spread_m) * N_m(t)
/// ```
///
/// where N_m(t) counts strictly earlier events of dimension m. The
/// intensity is structurally zero before the first event, so log terms are
/// clipped at [`LOG_FLOOR`] and the clip count is reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactivePointProcess {
    /// Location of ln t per dimension (unconstrained).
    pub location: Vec<f64>,
    /// Raw spread of ln t per dimension; spread = softplus(raw) > 0.
    pub spread_raw: Vec<f64>,
}

impl ReactivePointProcess {
    pub fn new(location: &[f64], spread: &[f64]) -> Result<Self> {
        if location.is_empty() || location.len() != spread.len() {
            return Err(Error::InvalidParameter(
                "location/spread lengths must match and be non-empty".into(),
            ));
        }
        if spread.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("spreads must be > 0".into()));
        }
        Ok(ReactivePointProcess {
            location: location.to_vec(),
            spread_raw: spread.iter().map(|&s| softplus_inv(s)).collect(),
        })
    }

    /// Moment-match ln t of each dimension's scored events.
    pub fn init_from_data(seq: &EventSequence) -> Result<Self> {
        let m = seq.num_marks();
        let mut location = vec![(seq.horizon.max(2.0) / 2.0).ln(); m];
        let mut spread = vec![1.0f64; m];
        for mark in 0..m {
            let logs: Vec<f64> = seq
                .events
                .iter()
                .filter(|e| e.mark == mark && e.time > 0.0)
                .map(|e| e.time.ln())
                .collect();
            if logs.len() >= 2 {
                let mean = logs.iter().sum::<f64>() / logs.len() as f64;
                let var =
                    logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / logs.len() as f64;
                location[mark] = mean;
                spread[mark] = var.sqrt().max(0.1);
            }
        }
        Self::new(&location, &spread)
    }

    pub fn spreads(&self) -> Vec<f64> {
        self.spread_raw.iter().map(|&r| softplus(r)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.location.is_empty() || self.location.len() != self.spread_raw.len() {
            return Err(Error::InvalidParameter(
                "location/spread lengths must match and be non-empty".into(),
            ));
        }
        Ok(())
    }

    /// Lognormal density in t (the time profile), plain values.
    fn profile(&self, m: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let spread = softplus(self.spread_raw[m]);
        let z = (t.ln() - self.location[m]) / spread;
        (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * spread * t)
    }

    /// Lognormal CDF in t, plain values.
    fn profile_cdf(&self, m: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let spread = softplus(self.spread_raw[m]);
        let z = (t.ln() - self.location[m]) / spread;
        0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
    }

    /// Own-dimension count of strictly earlier events among the first `k`.
    fn count_before<'a>(events: impl Iterator<Item = &'a Event>, mark: usize, t: f64) -> usize {
        events.filter(|e| e.mark == mark && e.time < t).count()
    }
}

impl PointProcess for ReactivePointProcess {
    fn num_marks(&self) -> usize {
        self.location.len()
    }

    fn intensities(&self, q: IntensityQuery<'_>) -> Vec<f64> {
        (0..self.num_marks())
            .map(|m| {
                let n = Self::count_before(
                    q.history.iter().filter(|e| e.time <= q.time),
                    m,
                    q.time,
                );
                self.profile(m, q.time) * n as f64
            })
            .collect()
    }

    fn intensity_bound(&self, events: &[Event], from: f64, to: f64) -> f64 {
        let k = events.partition_point(|e| e.time <= from);
        let mut bound = 0.0;
        for m in 0..self.num_marks() {
            let n = events[..k].iter().filter(|e| e.mark == m).count();
            if n == 0 {
                continue;
            }
            // Unimodal profile: check the mode if it lies in the window.
            let spread = softplus(self.spread_raw[m]);
            let mode = (self.location[m] - spread * spread).exp();
            let mut sup = self.profile(m, from).max(self.profile(m, to));
            if mode > from && mode < to {
                sup = sup.max(self.profile(m, mode));
            }
            bound += sup * n as f64;
        }
        bound
    }

    fn compensators(&self, events: &[Event], from: f64, to: f64) -> Result<Vec<f64>> {
        if !(to >= from) {
            return Err(Error::InvalidParameter(format!(
                "compensator interval must have from <= to, got [{from}, {to}]"
            )));
        }
        let k = events.partition_point(|e| e.time <= from);
        Ok((0..self.num_marks())
            .map(|m| {
                let n = events[..k].iter().filter(|e| e.mark == m).count();
                n as f64 * (self.profile_cdf(m, to) - self.profile_cdf(m, from))
            })
            .collect())
    }

    fn nll(&self, seq: &EventSequence) -> Result<NllReport> {
        check_marks(self.num_marks(), seq.num_marks())?;
        if seq.num_scored() == 0 {
            return compensator_only_report(self, seq);
        }
        let first = seq.events.len() - seq.num_scored();
        let mut floored = 0usize;
        let mut log_int = |i: usize| {
            let ev = seq.events[i];
            let n = Self::count_before(seq.events[..i].iter(), ev.mark, ev.time);
            let lam = self.profile(ev.mark, ev.time) * n as f64;
            if lam < LOG_FLOOR {
                floored += 1;
                LOG_FLOOR.ln()
            } else {
                lam.ln()
            }
        };
        let mut slice = |a: f64, b: f64, k: usize| {
            (0..self.num_marks())
                .map(|m| {
                    let n = seq.events[..k].iter().filter(|e| e.mark == m).count();
                    n as f64 * (self.profile_cdf(m, b) - self.profile_cdf(m, a))
                })
                .sum::<f64>()
        };
        let terms: Vec<f64> = (first..seq.events.len())
            .map(|i| windowed_term(seq, first, i, &mut log_int, &mut slice))
            .collect();
        NllReport::from_terms_with_floors(terms, floored)
    }
}

impl Trainable for ReactivePointProcess {
    fn raw_params(&self) -> Vec<f64> {
        let mut raw = self.location.clone();
        raw.extend_from_slice(&self.spread_raw);
        raw
    }

    fn set_raw_params(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.num_raw() {
            return Err(Error::Mismatch("raw parameter length mismatch".into()));
        }
        let (loc, spread) = raw.split_at(self.location.len());
        self.location.copy_from_slice(loc);
        self.spread_raw.copy_from_slice(spread);
        Ok(())
    }

    fn num_raw(&self) -> usize {
        2 * self.location.len()
    }

    fn batch_loss_grad(&self, seq: &EventSequence, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        check_marks(self.num_marks(), seq.num_marks())?;
        let first = check_batch(seq, batch)?;
        let tape = Tape::new();
        let loc_leaves: Vec<Var<'_>> = self.location.iter().map(|&v| tape.leaf(v)).collect();
        let spread_leaves: Vec<Var<'_>> = self.spread_raw.iter().map(|&v| tape.leaf(v)).collect();
        let spreads: Vec<Var<'_>> = spread_leaves.iter().map(|l| l.softplus()).collect();
        let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();

        // log profile(t) = -z^2/2 - ln(sqrt(2 pi) * spread * t)
        let log_profile = |m: usize, t: f64| -> Var<'_> {
            let z = (loc_leaves[m].mul_const(-1.0).add_const(t.ln())) / spreads[m];
            let penalty = (spreads[m].mul_const(sqrt_2pi * t)).ln();
            -(z * z).mul_const(0.5) - penalty
        };
        let cdf = |m: usize, t: f64| -> Var<'_> {
            if t <= 0.0 {
                tape.constant(0.0)
            } else {
                let z = (loc_leaves[m].mul_const(-1.0).add_const(t.ln())) / spreads[m];
                z.mul_const(1.0 / std::f64::consts::SQRT_2)
                    .erf()
                    .add_const(1.0)
                    .mul_const(0.5)
            }
        };

        let mut log_int = |i: usize| -> Var<'_> {
            let ev = seq.events[i];
            let n = Self::count_before(seq.events[..i].iter(), ev.mark, ev.time);
            let plain = self.profile(ev.mark, ev.time) * n as f64;
            if plain < LOG_FLOOR || ev.time <= 0.0 {
                // Clipped terms are constants: no gradient flows from them.
                tape.constant(LOG_FLOOR.ln())
            } else {
                log_profile(ev.mark, ev.time).add_const((n as f64).ln())
            }
        };
        let mut slice = |a: f64, b: f64, k: usize| -> Var<'_> {
            let mut total: Option<Var<'_>> = None;
            for m in 0..self.num_marks() {
                let n = seq.events[..k].iter().filter(|e| e.mark == m).count();
                if n == 0 {
                    continue;
                }
                let inc = (cdf(m, b) - cdf(m, a)).mul_const(n as f64);
                total = Some(match total {
                    Some(t) => t + inc,
                    None => inc,
                });
            }
            total.unwrap_or_else(|| tape.constant(0.0))
        };

        let mut total: Option<Var<'_>> = None;
        for &i in batch {
            let term = windowed_term(seq, first, i, &mut log_int, &mut slice);
            total = Some(match total {
                Some(t) => t + term,
                None => term,
            });
        }
        let loss = total.expect("non-empty batch").mul_const(1.0 / batch.len() as f64);
        finite_loss(loss.value())?;
        let grad = tape.gradient(loss);
        let mut g: Vec<f64> = loc_leaves.iter().map(|&l| grad.wrt(l)).collect();
        g.extend(spread_leaves.iter().map(|&l| grad.wrt(l)));
        Ok((loss.value(), g))
    }
}

// ---------------------------------------------------------------------
// Self-correcting process
// ---------------------------------------------------------------------

/// Self-correcting process per dimension:
///
/// ```text
/// lambda_m(t) = exp(log_rate_m + drift_m * (t - reset_m * N_m(t)))
/// ```
///
/// with N_m counting strictly earlier own-dimension events: the intensity
/// grows exponentially with time and drops by a factor exp(-drift * reset)
/// at each own event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfCorrectingModel {
    /// Log intensity intercept per dimension (unconstrained).
    pub log_rate: Vec<f64>,
    /// Raw drift; drift = softplus(raw) > 0.
    pub drift_raw: Vec<f64>,
    /// Raw reset size; reset = softplus(raw) > 0.
    pub reset_raw: Vec<f64>,
}

impl SelfCorrectingModel {
    pub fn new(log_rate: &[f64], drift: &[f64], reset: &[f64]) -> Result<Self> {
        let m = log_rate.len();
        if m == 0 || drift.len() != m || reset.len() != m {
            return Err(Error::InvalidParameter(
                "parameter vectors must share a non-zero length".into(),
            ));
        }
        if drift.iter().chain(reset).any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter(
                "drift and reset must be > 0".into(),
            ));
        }
        Ok(SelfCorrectingModel {
            log_rate: log_rate.to_vec(),
            drift_raw: drift.iter().map(|&v| softplus_inv(v)).collect(),
            reset_raw: reset.iter().map(|&v| softplus_inv(v)).collect(),
        })
    }

    /// Heuristic start: intercept at the empirical log rate, drift at the
    /// inverse mean gap, reset at the mean gap (so drift * reset is near 1
    /// and the process hovers around its empirical rate).
    pub fn init_from_data(seq: &EventSequence) -> Result<Self> {
        let m = seq.num_marks();
        let span = seq.horizon - seq.window_start;
        let rate: Vec<f64> = seq
            .counts_per_mark()
            .iter()
            .map(|&c| ((c.max(1)) as f64 / span).ln())
            .collect();
        let mean_gap = (span / seq.num_scored().max(1) as f64).max(1e-6);
        Self::new(&rate, &vec![1.0 / mean_gap; m], &vec![mean_gap; m])
    }

    pub fn drifts(&self) -> Vec<f64> {
        self.drift_raw.iter().map(|&r| softplus(r)).collect()
    }

    pub fn resets(&self) -> Vec<f64> {
        self.reset_raw.iter().map(|&r| softplus(r)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.log_rate.len();
        if m == 0 || self.drift_raw.len() != m || self.reset_raw.len() != m {
            return Err(Error::InvalidParameter(
                "parameter vectors must share a non-zero length".into(),
            ));
        }
        Ok(())
    }

    fn log_intensity_plain(&self, m: usize, t: f64, n: usize) -> f64 {
        self.log_rate[m]
            + softplus(self.drift_raw[m]) * (t - softplus(self.reset_raw[m]) * n as f64)
    }
}

impl PointProcess for SelfCorrectingModel {
    fn num_marks(&self) -> usize {
        self.log_rate.len()
    }

    fn intensities(&self, q: IntensityQuery<'_>) -> Vec<f64> {
        (0..self.num_marks())
            .map(|m| {
                let n = q
                    .history
                    .iter()
                    .filter(|e| e.mark == m && e.time < q.time)
                    .count();
                self.log_intensity_plain(m, q.time, n).exp()
            })
            .collect()
    }

    fn intensity_bound(&self, events: &[Event], from: f64, to: f64) -> f64 {
        // Between events the intensity rises, so the right endpoint is the
        // supremum of each dimension.
        let k = events.partition_point(|e| e.time <= from);
        (0..self.num_marks())
            .map(|m| {
                let n = events[..k].iter().filter(|e| e.mark == m).count();
                self.log_intensity_plain(m, to, n).exp()
            })
            .sum()
    }

    fn compensators(&self, events: &[Event], from: f64, to: f64) -> Result<Vec<f64>> {
        if !(to >= from) {
            return Err(Error::InvalidParameter(format!(
                "compensator interval must have from <= to, got [{from}, {to}]"
            )));
        }
        let k = events.partition_point(|e| e.time <= from);
        Ok((0..self.num_marks())
            .map(|m| {
                let n = events[..k].iter().filter(|e| e.mark == m).count();
                let drift = softplus(self.drift_raw[m]);
                // int_a^b exp(c + drift t) dt, written with expm1 so short
                // or early intervals do not lose precision.
                self.log_intensity_plain(m, from, n).exp() * (drift * (to - from)).exp_m1()
                    / drift
            })
            .collect())
    }

    fn nll(&self, seq: &EventSequence) -> Result<NllReport> {
        check_marks(self.num_marks(), seq.num_marks())?;
        if seq.num_scored() == 0 {
            return compensator_only_report(self, seq);
        }
        let first = seq.events.len() - seq.num_scored();
        let mut log_int = |i: usize| {
            let ev = seq.events[i];
            let n = seq.events[..i]
                .iter()
                .filter(|e| e.mark == ev.mark && e.time < ev.time)
                .count();
            self.log_intensity_plain(ev.mark, ev.time, n)
        };
        let mut slice = |a: f64, b: f64, k: usize| {
            (0..self.num_marks())
                .map(|m| {
                    let n = seq.events[..k].iter().filter(|e| e.mark == m).count();
                    let drift = softplus(self.drift_raw[m]);
                    self.log_intensity_plain(m, a, n).exp() * (drift * (b - a)).exp_m1() / drift
                })
                .sum::<f64>()
        };
        let terms: Vec<f64> = (first..seq.events.len())
            .map(|i| windowed_term(seq, first, i, &mut log_int, &mut slice))
            .collect();
        NllReport::from_terms(terms)
    }
}

impl Trainable for SelfCorrectingModel {
    fn raw_params(&self) -> Vec<f64> {
        let mut raw = self.log_rate.clone();
        raw.extend_from_slice(&self.drift_raw);
        raw.extend_from_slice(&self.reset_raw);
        raw
    }

    fn set_raw_params(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.num_raw() {
            return Err(Error::Mismatch("raw parameter length mismatch".into()));
        }
        let m = self.log_rate.len();
        self.log_rate.copy_from_slice(&raw[..m]);
        self.drift_raw.copy_from_slice(&raw[m..2 * m]);
        self.reset_raw.copy_from_slice(&raw[2 * m..]);
        Ok(())
    }

    fn num_raw(&self) -> usize {
        3 * self.log_rate.len()
    }

    fn batch_loss_grad(&self, seq: &EventSequence, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        check_marks(self.num_marks(), seq.num_marks())?;
        let first = check_batch(seq, batch)?;
        let tape = Tape::new();
        let rate_leaves: Vec<Var<'_>> = self.log_rate.iter().map(|&v| tape.leaf(v)).collect();
        let drift_leaves: Vec<Var<'_>> = self.drift_raw.iter().map(|&v| tape.leaf(v)).collect();
        let reset_leaves: Vec<Var<'_>> = self.reset_raw.iter().map(|&v| tape.leaf(v)).collect();
        let drifts: Vec<Var<'_>> = drift_leaves.iter().map(|l| l.softplus()).collect();
        let resets: Vec<Var<'_>> = reset_leaves.iter().map(|l| l.softplus()).collect();

        let log_lam = |m: usize, t: f64, n: usize| -> Var<'_> {
            let inside = resets[m].mul_const(-(n as f64)).add_const(t);
            rate_leaves[m] + drifts[m] * inside
        };
        let mut log_int = |i: usize| {
            let ev = seq.events[i];
            let n = seq.events[..i]
                .iter()
                .filter(|e| e.mark == ev.mark && e.time < ev.time)
                .count();
            log_lam(ev.mark, ev.time, n)
        };
        let mut slice = |a: f64, b: f64, k: usize| {
            let mut total: Option<Var<'_>> = None;
            for m in 0..self.num_marks() {
                let n = seq.events[..k].iter().filter(|e| e.mark == m).count();
                let inc = log_lam(m, a, n).exp() * (drifts[m].mul_const(b - a)).expm1() / drifts[m];
                total = Some(match total {
                    Some(t) => t + inc,
                    None => inc,
                });
            }
            total.expect("at least one mark")
        };

        let mut total: Option<Var<'_>> = None;
        for &i in batch {
            let term = windowed_term(seq, first, i, &mut log_int, &mut slice);
            total = Some(match total {
                Some(t) => t + term,
                None => term,
            });
        }
        let loss = total.expect("non-empty batch").mul_const(1.0 / batch.len() as f64);
        finite_loss(loss.value())?;
        let grad = tape.gradient(loss);
        let mut g: Vec<f64> = rate_leaves.iter().map(|&l| grad.wrt(l)).collect();
        g.extend(drift_leaves.iter().map(|&l| grad.wrt(l)));
        g.extend(reset_leaves.iter().map(|&l| grad.wrt(l)));
        Ok((loss.value(), g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AnalyticDynamics, AnalyticForm, Dynamics};
    use crate::model::DynamicHawkesModel;
    use approx::assert_relative_eq;

    fn seq(times_marks: &[(f64, usize)], labels: &[&str], horizon: f64) -> EventSequence {
        EventSequence::new(
            times_marks
                .iter()
                .map(|&(time, mark)| Event { time, mark })
                .collect(),
            labels.iter().map(|s| s.to_string()).collect(),
            horizon,
        )
        .unwrap()
    }

    // ---- homogeneous Poisson ------------------------------------------

    #[test]
    fn poisson_nll_matches_hand_value() {
        let model = HomogeneousPoissonModel::from_rates(&[2.0]).unwrap();
        let s = seq(&[(0.5, 0), (1.7, 0)], &["e"], 3.0);
        let report = model.nll(&s).unwrap();
        assert_relative_eq!(report.total, 4.613_705_638_880_109, max_relative = 1e-12);
    }

    #[test]
    fn poisson_mle_recovers_the_empirical_rate() {
        let s = seq(&[(0.5, 0), (1.0, 1), (1.7, 0), (2.0, 0)], &["a", "b"], 4.0);
        let model = HomogeneousPoissonModel::mle(&s).unwrap();
        let rates = model.rates();
        assert_relative_eq!(rates[0], 3.0 / 4.0, max_relative = 1e-10);
        assert_relative_eq!(rates[1], 1.0 / 4.0, max_relative = 1e-10);
    }

    #[test]
    fn poisson_gradient_matches_finite_differences() {
        let model = HomogeneousPoissonModel::from_rates(&[1.3, 0.4]).unwrap();
        let s = seq(&[(0.5, 0), (1.0, 1), (1.7, 0)], &["a", "b"], 3.0);
        let batch = vec![0, 1, 2];
        let (_, grad) = model.batch_loss_grad(&s, &batch).unwrap();
        let raw = model.raw_params();
        for k in 0..raw.len() {
            let h = 1e-6;
            let mut up = model.clone();
            let mut dn = model.clone();
            let mut raw_up = raw.clone();
            raw_up[k] += h;
            up.set_raw_params(&raw_up).unwrap();
            let mut raw_dn = raw.clone();
            raw_dn[k] -= h;
            dn.set_raw_params(&raw_dn).unwrap();
            let fd = (up.batch_loss_grad(&s, &batch).unwrap().0
                - dn.batch_loss_grad(&s, &batch).unwrap().0)
                / (2.0 * h);
            assert_relative_eq!(grad[k], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    // ---- classical self-exciting ----------------------------------------

    fn hawkes_fixture() -> (HawkesModel, EventSequence) {
        let model = HawkesModel::from_rates(
            KernelSpec::Exponential,
            &[0.3, 0.5],
            &[0.8, 0.2, 0.4, 0.6],
            &[1.2, 0.9],
        )
        .unwrap();
        let s = seq(
            &[(0.4, 0), (0.9, 1), (1.5, 0), (1.7, 0), (2.2, 1)],
            &["a", "b"],
            2.5,
        );
        (model, s)
    }

    #[test]
    fn hawkes_nll_matches_frozen_value() {
        let (model, s) = hawkes_fixture();
        let report = model.nll(&s).unwrap();
        assert_relative_eq!(report.total, 6.825_809_152_471_818, max_relative = 1e-12);
        assert_eq!(report.floored_log_terms, 0);
    }

    #[test]
    fn hawkes_intensity_matches_hand_value() {
        let model =
            HawkesModel::from_rates(KernelSpec::Exponential, &[0.1], &[0.5], &[1.0]).unwrap();
        let history = [Event { time: 0.0, mark: 0 }];
        let lam = model.intensities(IntensityQuery {
            history: &history,
            time: 1.0,
        });
        assert_relative_eq!(lam[0], 0.283_939_720_585_721_14, max_relative = 1e-12);
    }

    #[test]
    fn identity_transform_reduction_agrees_with_the_independent_route() {
        // The modulated model with constant unit speed must equal the
        // classical baseline computed by completely separate code.
        let (baseline, s) = hawkes_fixture();
        let modulated = DynamicHawkesModel::from_rates(
            KernelSpec::Exponential,
            &[0.3, 0.5],
            &[0.8, 0.2, 0.4, 0.6],
            &[1.2, 0.9],
            Dynamics::Analytic(
                AnalyticDynamics::new(AnalyticForm::Constant { value: 1.0 }).unwrap(),
            ),
        )
        .unwrap();
        let a = baseline.nll(&s).unwrap();
        let b = modulated.nll(&s).unwrap();
        assert_relative_eq!(a.total, b.total, max_relative = 1e-10);
        for (x, y) in a.event_terms.iter().zip(&b.event_terms) {
            assert_relative_eq!(x, y, max_relative = 1e-10);
        }
        // Intensities and predictions agree too.
        for &t in &[0.45, 1.0, 1.65, 2.4] {
            let k = s.events.partition_point(|e| e.time <= t);
            let qa = baseline.intensities(IntensityQuery { history: &s.events[..k], time: t });
            let qb = modulated.intensities(IntensityQuery { history: &s.events[..k], time: t });
            for (x, y) in qa.iter().zip(&qb) {
                assert_relative_eq!(x, y, max_relative = 1e-10);
            }
        }
        let pa = baseline.predict_counts(&s, &[0.0, 1.0, 2.5]).unwrap();
        let pb = modulated.predict_counts(&s, &[0.0, 1.0, 2.5]).unwrap();
        for (ra, rb) in pa.iter().zip(&pb) {
            for (x, y) in ra.iter().zip(rb) {
                assert_relative_eq!(x, y, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn hawkes_batch_partition_reproduces_the_full_likelihood() {
        let (model, s) = hawkes_fixture();
        let full = model.nll(&s).unwrap();
        let mut sum = 0.0;
        for batch in [vec![0usize, 1], vec![2], vec![3, 4]] {
            let (mean, _) = model.batch_loss_grad(&s, &batch).unwrap();
            sum += mean * batch.len() as f64;
        }
        assert_relative_eq!(sum, full.total, max_relative = 1e-12);
    }

    #[test]
    fn hawkes_gradient_matches_finite_differences() {
        let (model, s) = hawkes_fixture();
        let batch: Vec<usize> = (0..5).collect();
        let (_, grad) = model.batch_loss_grad(&s, &batch).unwrap();
        let raw = model.raw_params();
        for k in 0..raw.len() {
            let h = 1e-6 * raw[k].abs().max(1.0);
            let mut up = model.clone();
            let mut dn = model.clone();
            let mut r = raw.clone();
            r[k] += h;
            up.set_raw_params(&r).unwrap();
            r[k] -= 2.0 * h;
            dn.set_raw_params(&r).unwrap();
            let fd = (up.batch_loss_grad(&s, &batch).unwrap().0
                - dn.batch_loss_grad(&s, &batch).unwrap().0)
                / (2.0 * h);
            assert_relative_eq!(grad[k], fd, max_relative = 1e-4, epsilon = 1e-8);
        }
    }

    #[test]
    fn hawkes_intensity_bound_dominates() {
        let (model, s) = hawkes_fixture();
        let bound = model.intensity_bound(&s.events, 2.2, 2.5);
        for k in 0..50 {
            let t = 2.2 + 0.3 * k as f64 / 49.0;
            let total: f64 = model
                .intensities(IntensityQuery { history: &s.events, time: t })
                .iter()
                .sum();
            assert!(total <= bound + 1e-12);
        }
    }

    // ---- count-scaled lognormal profile ---------------------------------

    fn reactive_fixture() -> (ReactivePointProcess, EventSequence) {
        let model = ReactivePointProcess::new(&[0.2], &[0.9]).unwrap();
        let s = seq(&[(0.5, 0), (1.3, 0), (2.0, 0)], &["e"], 2.5);
        (model, s)
    }

    #[test]
    fn reactive_nll_matches_frozen_value_and_counts_the_floor() {
        let (model, s) = reactive_fixture();
        let report = model.nll(&s).unwrap();
        assert_relative_eq!(report.total, 26.032_477_321_869_11, max_relative = 1e-12);
        // The first event sees zero prior events, so its intensity is
        // structurally zero and the log term is clipped.
        assert_eq!(report.floored_log_terms, 1);
    }

    #[test]
    fn reactive_intensity_matches_frozen_value() {
        let (model, s) = reactive_fixture();
        let lam = model.intensities(IntensityQuery {
            history: &s.events,
            time: 1.3,
        });
        assert_relative_eq!(lam[0], 0.340_158_672_844_508_3, max_relative = 1e-12);
    }

    #[test]
    fn reactive_gradient_matches_finite_differences() {
        let (model, s) = reactive_fixture();
        let batch = vec![0, 1, 2];
        let (_, grad) = model.batch_loss_grad(&s, &batch).unwrap();
        let raw = model.raw_params();
        for k in 0..raw.len() {
            let h = 1e-6;
            let mut up = model.clone();
            let mut dn = model.clone();
            let mut r = raw.clone();
            r[k] += h;
            up.set_raw_params(&r).unwrap();
            r[k] -= 2.0 * h;
            dn.set_raw_params(&r).unwrap();
            let fd = (up.batch_loss_grad(&s, &batch).unwrap().0
                - dn.batch_loss_grad(&s, &batch).unwrap().0)
                / (2.0 * h);
            assert_relative_eq!(grad[k], fd, max_relative = 1e-4, epsilon = 1e-8);
        }
    }

    #[test]
    fn reactive_bound_dominates_and_compensator_is_count_scaled() {
        let (model, s) = reactive_fixture();
        let bound = model.intensity_bound(&s.events, 0.6, 2.4);
        for k in 0..60 {
            let t = 0.6 + 1.8 * k as f64 / 59.0;
            let hist = s.events.partition_point(|e| e.time <= 0.6);
            let lam: f64 = model
                .intensities(IntensityQuery { history: &s.events[..hist], time: t })
                .iter()
                .sum();
            assert!(lam <= bound + 1e-12);
        }
        // With no earlier events the compensator vanishes.
        let c = model.compensators(&s.events, 0.1, 0.4).unwrap();
        assert_eq!(c[0], 0.0);
    }

    // ---- self-correcting -------------------------------------------------

    fn correcting_fixture() -> (SelfCorrectingModel, EventSequence) {
        let model = SelfCorrectingModel::new(&[0.3], &[0.7], &[0.4]).unwrap();
        let s = seq(&[(0.6, 0), (1.1, 0), (2.3, 0)], &["e"], 3.0);
        (model, s)
    }

    #[test]
    fn self_correcting_nll_matches_frozen_value() {
        let (model, s) = correcting_fixture();
        let report = model.nll(&s).unwrap();
        assert_relative_eq!(report.total, 4.841_199_559_606_329, max_relative = 1e-12);
    }

    #[test]
    fn self_correcting_unit_parameters_give_unit_initial_intensity() {
        let model = SelfCorrectingModel::new(&[0.0], &[1.0], &[1.0]).unwrap();
        let lam = model.intensities(IntensityQuery { history: &[], time: 0.0 });
        assert_relative_eq!(lam[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn self_correcting_gradient_matches_finite_differences() {
        let (model, s) = correcting_fixture();
        let batch = vec![0, 1, 2];
        let (_, grad) = model.batch_loss_grad(&s, &batch).unwrap();
        let raw = model.raw_params();
        for k in 0..raw.len() {
            let h = 1e-6;
            let mut up = model.clone();
            let mut dn = model.clone();
            let mut r = raw.clone();
            r[k] += h;
            up.set_raw_params(&r).unwrap();
            r[k] -= 2.0 * h;
            dn.set_raw_params(&r).unwrap();
            let fd = (up.batch_loss_grad(&s, &batch).unwrap().0
                - dn.batch_loss_grad(&s, &batch).unwrap().0)
                / (2.0 * h);
            assert_relative_eq!(grad[k], fd, max_relative = 1e-4, epsilon = 1e-8);
        }
    }

    #[test]
    fn self_correcting_batch_partition_reproduces_the_full_likelihood() {
        let (model, s) = correcting_fixture();
        let full = model.nll(&s).unwrap();
        let mut sum = 0.0;
        for batch in [vec![0usize], vec![1, 2]] {
            let (mean, _) = model.batch_loss_grad(&s, &batch).unwrap();
            sum += mean * batch.len() as f64;
        }
        assert_relative_eq!(sum, full.total, max_relative = 1e-12);
    }

    #[test]
    fn self_correcting_bound_is_the_right_endpoint() {
        let (model, s) = correcting_fixture();
        let bound = model.intensity_bound(&s.events, 1.2, 2.0);
        let k = s.events.partition_point(|e| e.time <= 1.2);
        for step in 0..40 {
            let t = 1.2 + 0.8 * step as f64 / 39.0;
            let lam: f64 = model
                .intensities(IntensityQuery { history: &s.events[..k], time: t })
                .iter()
                .sum();
            assert!(lam <= bound + 1e-12);
        }
    }

    // ---- shared behaviours ------------------------------------------------

    #[test]
    fn baselines_serialize_and_deserialize() {
        let (hawkes, _) = hawkes_fixture();
        let json = serde_json::to_string(&hawkes).unwrap();
        let back: HawkesModel = serde_json::from_str(&json).unwrap();
        assert_eq!(hawkes, back);

        let (reactive, _) = reactive_fixture();
        let json = serde_json::to_string(&reactive).unwrap();
        let back: ReactivePointProcess = serde_json::from_str(&json).unwrap();
        assert_eq!(reactive, back);
    }

    #[test]
    fn init_from_data_builds_valid_models() {
        let s = seq(
            &[(0.4, 0), (0.9, 1), (1.5, 0), (1.7, 0), (2.2, 1)],
            &["a", "b"],
            2.5,
        );
        let hawkes = HawkesModel::init_from_data(&s, KernelSpec::power_law()).unwrap();
        assert!(hawkes.nll(&s).unwrap().total.is_finite());
        let reactive = ReactivePointProcess::init_from_data(&s).unwrap();
        assert!(reactive.nll(&s).unwrap().total.is_finite());
        let correcting = SelfCorrectingModel::init_from_data(&s).unwrap();
        assert!(correcting.nll(&s).unwrap().total.is_finite());
    }
}
