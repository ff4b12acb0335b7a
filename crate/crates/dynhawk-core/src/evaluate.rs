//! Held-out scoring and goodness-of-fit diagnostics.
//!
//! Three instruments, all conditioning on true history:
//! - test NLL: the exact likelihood machinery restricted to a window;
//! - count MAPE: per dimension, |sum of predicted - sum of observed| /
//!   sum of observed over a regular interval grid, where each interval's
//!   prediction is the compensator increment given the real events up to
//!   the interval start;
//! - time-rescaling residuals: compensator increments between consecutive
//!   events of one dimension are Exp(1) draws when the model is right, so
//!   a Kolmogorov–Smirnov test against Exp(1) flags misfit.

use crate::error::{Error, Result};
use crate::events::{grid_boundaries, slice_counts, EventSequence};
use crate::model::{NllReport, PointProcess};
use serde::{Deserialize, Serialize};

/// Everything scored on one held-out window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub test_nll: f64,
    /// `test_nll / num_test_events`; absent when the window has no events.
    pub per_event_nll: Option<f64>,
    pub num_test_events: usize,
    /// Count error per dimension; `None` marks dimensions excluded for
    /// having no observed events.
    pub mape_per_dim: Vec<Option<f64>>,
    /// Mean over included dimensions.
    pub mape_mean: Option<f64>,
    /// Population standard deviation over included dimensions.
    pub mape_stddev: Option<f64>,
    pub interval_width: f64,
    pub ks: Vec<KsResult>,
}

/// Width-and-count summary of the count-error metric.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapeReport {
    pub per_dim: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub stddev: Option<f64>,
    pub interval_width: f64,
    pub num_intervals: usize,
}

/// Kolmogorov–Smirnov comparison of one dimension's rescaled inter-event
/// gaps against Exp(1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KsResult {
    pub mark: usize,
    pub num_residuals: usize,
    /// Raw KS statistic; `None` when there are too few residuals to test.
    pub statistic: Option<f64>,
    /// Asymptotic p-value with the finite-sample correction applied.
    pub p_value: Option<f64>,
}

/// Minimum residual count before the KS test is meaningful.
pub const KS_MIN_RESIDUALS: usize = 10;

impl KsResult {
    /// True when the dimension passes at significance `level`; `None` if
    /// there were too few residuals to test.
    pub fn passes(&self, level: f64) -> Option<bool> {
        self.p_value.map(|p| p > level)
    }

    pub fn is_insufficient(&self) -> bool {
        self.statistic.is_none()
    }
}

/// Exact likelihood restricted to the window `[from, to)`, conditioning on
/// every earlier event.
pub fn test_nll<P: PointProcess + ?Sized>(
    process: &P,
    seq: &EventSequence,
    from: f64,
    to: f64,
) -> Result<NllReport> {
    process.nll(&seq.windowed(from, to)?)
}

/// Count-total error per dimension over `[seq.window_start, seq.horizon)`
/// tiled with intervals of `width` (the last may be shorter). Each
/// interval's prediction conditions on the true events up to its start;
/// numerator and denominator sum over intervals before dividing.
pub fn mape<P: PointProcess + ?Sized>(
    process: &P,
    seq: &EventSequence,
    width: f64,
) -> Result<MapeReport> {
    if process.num_marks() != seq.num_marks() {
        return Err(Error::Mismatch(format!(
            "sequence has {} marks but the model has {}",
            seq.num_marks(),
            process.num_marks()
        )));
    }
    let boundaries = grid_boundaries(seq.window_start, seq.horizon, width)?;
    let grid = slice_counts(seq, seq.window_start, seq.horizon, width)?;
    let m = seq.num_marks();
    let mut predicted = vec![0.0f64; m];
    for w in boundaries.windows(2) {
        let inc = process.compensators(&seq.events, w[0], w[1])?;
        for (p, i) in predicted.iter_mut().zip(&inc) {
            *p += i;
        }
    }
    let observed = grid.totals();
    let per_dim: Vec<Option<f64>> = (0..m)
        .map(|k| {
            if observed[k] == 0 {
                log::warn!("dimension {k} has no observed events; excluded from the count error");
                None
            } else {
                Some((predicted[k] - observed[k] as f64).abs() / observed[k] as f64)
            }
        })
        .collect();
    let included: Vec<f64> = per_dim.iter().flatten().copied().collect();
    let (mean, stddev) = if included.is_empty() {
        (None, None)
    } else {
        let mean = included.iter().sum::<f64>() / included.len() as f64;
        let var = included.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / included.len() as f64;
        (Some(mean), Some(var.sqrt()))
    };
    Ok(MapeReport {
        per_dim,
        mean,
        stddev,
        interval_width: width,
        num_intervals: grid.num_intervals(),
    })
}

/// Per-dimension rescaled inter-event gaps: the compensator increment of
/// dimension m between consecutive dimension-m events in the scored
/// window (the first gap starts at the window start). Increments
/// accumulate over the global inter-event pieces so the conditioning
/// history is always current.
pub fn rescaled_gaps<P: PointProcess + ?Sized>(
    process: &P,
    seq: &EventSequence,
) -> Result<Vec<Vec<f64>>> {
    let m = process.num_marks();
    if m != seq.num_marks() {
        return Err(Error::Mismatch(format!(
            "sequence has {} marks but the model has {}",
            seq.num_marks(),
            m
        )));
    }
    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut acc = vec![0.0f64; m];
    let mut prev = seq.window_start;
    let first = seq.events.partition_point(|e| e.time < seq.window_start);
    for i in first..seq.events.len() {
        let t = seq.events[i].time;
        if t > prev {
            let inc = process.compensators(&seq.events[..i], prev, t)?;
            for (a, v) in acc.iter_mut().zip(&inc) {
                *a += v;
            }
            prev = t;
        }
        let mark = seq.events[i].mark;
        gaps[mark].push(acc[mark]);
        acc[mark] = 0.0;
    }
    Ok(gaps)
}

/// KS tests of each dimension's rescaled gaps against Exp(1).
pub fn residual_diagnostics<P: PointProcess + ?Sized>(
    process: &P,
    seq: &EventSequence,
) -> Result<Vec<KsResult>> {
    let gaps = rescaled_gaps(process, seq)?;
    Ok(gaps
        .into_iter()
        .enumerate()
        .map(|(mark, g)| {
            if g.len() < KS_MIN_RESIDUALS {
                KsResult {
                    mark,
                    num_residuals: g.len(),
                    statistic: None,
                    p_value: None,
                }
            } else {
                let d = ks_statistic_exp1(&g);
                let n = g.len() as f64;
                // Finite-sample correction before the asymptotic tail.
                let z = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
                KsResult {
                    mark,
                    num_residuals: g.len(),
                    statistic: Some(d),
                    p_value: Some(kolmogorov_sf(z)),
                }
            }
        })
        .collect())
}

/// One-sample KS statistic of `sample` against the Exp(1) CDF.
pub fn ks_statistic_exp1(sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = 1.0 - (-x).exp();
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Survival function of the Kolmogorov distribution,
/// `P(K > z) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 z^2)`.
pub fn kolmogorov_sf(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * z * z).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Full held-out report over the sequence's own scored window.
pub fn evaluate<P: PointProcess + ?Sized>(
    process: &P,
    seq: &EventSequence,
    interval_width: f64,
) -> Result<EvaluationReport> {
    let nll = process.nll(seq)?;
    let count_error = mape(process, seq, interval_width)?;
    let ks = residual_diagnostics(process, seq)?;
    Ok(EvaluationReport {
        test_nll: nll.total,
        per_event_nll: nll.per_event,
        num_test_events: nll.num_events,
        mape_per_dim: count_error.per_dim,
        mape_mean: count_error.mean,
        mape_stddev: count_error.stddev,
        interval_width,
        ks,
    })
}
