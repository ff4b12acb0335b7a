//! Exact sampling of point processes by thinning.
//!
//! Works for any [`PointProcess`]: candidate times are drawn from a
//! homogeneous process at an upper bound of the total intensity over a
//! short lookahead window, then accepted with probability λ(t)/bound and
//! assigned a dimension proportionally to the per-dimension intensities.
//! Bounds are recomputed after every accepted event and at window edges,
//! so the dominating process is always valid.

use crate::error::{Error, Result};
use crate::events::{Event, EventSequence};
use crate::model::{IntensityQuery, PointProcess};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Controls for one simulation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    /// Events are generated on `[0, horizon)`.
    pub horizon: f64,
    /// Seed for the deterministic generator; same seed, same sequence.
    pub seed: u64,
    /// Hard cap on generated events; hitting it is an error, since it
    /// usually means the process is unstable.
    pub max_events: usize,
    /// Length of each dominating window. Shorter windows give tighter
    /// bounds (fewer rejected candidates) at the cost of recomputing them
    /// more often. Defaults to horizon / 64.
    pub lookahead: Option<f64>,
    /// Dimension labels for the produced sequence; defaults to mark_0,
    /// mark_1, ...
    pub labels: Option<Vec<String>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 100.0,
            seed: 42,
            max_events: 1_000_000,
            lookahead: None,
            labels: None,
        }
    }
}

/// Draw one event sequence from `process` on `[0, config.horizon)`.
pub fn simulate<P: PointProcess + ?Sized>(process: &P, config: &SimConfig) -> Result<EventSequence> {
    if !(config.horizon > 0.0) || !config.horizon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "simulation horizon must be positive and finite, got {}",
            config.horizon
        )));
    }
    let m = process.num_marks();
    if let Some(labels) = &config.labels {
        if labels.len() != m {
            return Err(Error::Mismatch(format!(
                "{} labels provided for {m} dimensions",
                labels.len()
            )));
        }
    }
    if let Some(ratio) = process.branching_ratio() {
        if ratio >= 1.0 {
            log::warn!(
                "branching ratio {ratio:.4} >= 1: the process is unstable and \
                 simulation may hit the event cap"
            );
        }
    }

    let lookahead = config
        .lookahead
        .unwrap_or(config.horizon / 64.0)
        .max(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut events: Vec<Event> = Vec::new();
    let mut t = 0.0f64;
    // Total candidate budget, so a badly loose bound fails loudly instead
    // of spinning forever.
    let mut draws_left = config.max_events.saturating_mul(200).saturating_add(10_000);

    while t < config.horizon {
        let window_end = (t + lookahead).min(config.horizon);
        let bound = process.intensity_bound(&events, t, window_end);
        if !bound.is_finite() || bound < 0.0 {
            return Err(Error::Simulation(format!(
                "intensity bound {bound} at t = {t} is not usable for thinning"
            )));
        }
        if bound == 0.0 {
            t = window_end;
            continue;
        }
        if draws_left == 0 {
            return Err(Error::Simulation(
                "candidate budget exhausted; the intensity bound is far above \
                 the realized intensity"
                    .into(),
            ));
        }
        draws_left -= 1;
        let u: f64 = rng.gen();
        let delta = -(1.0 - u).ln() / bound;
        if t + delta > window_end {
            t = window_end;
            continue;
        }
        t += delta;
        let lambda = process.intensities(IntensityQuery {
            history: &events,
            time: t,
        });
        let total: f64 = lambda.iter().sum();
        if !total.is_finite() || total < 0.0 {
            return Err(Error::Simulation(format!(
                "intensity {total} at t = {t} is not usable for thinning"
            )));
        }
        if rng.gen::<f64>() * bound < total {
            let mut target = rng.gen::<f64>() * total;
            let mut mark = m - 1;
            for (k, &l) in lambda.iter().enumerate() {
                if target < l {
                    mark = k;
                    break;
                }
                target -= l;
            }
            events.push(Event { time: t, mark });
            if events.len() >= config.max_events {
                let ratio = process
                    .branching_ratio()
                    .map(|r| format!(" (branching ratio {r:.4})"))
                    .unwrap_or_default();
                return Err(Error::Simulation(format!(
                    "event cap {} reached at t = {t:.4} of horizon {}; the \
                     process may be unstable{ratio}",
                    config.max_events, config.horizon
                )));
            }
        }
    }

    let labels = config.labels.clone().unwrap_or_else(|| {
        (0..m).map(|k| format!("mark_{k}")).collect()
    });
    EventSequence::new(events, labels, config.horizon)
}
