//! Model persistence: one JSON envelope for every model family.
//!
//! The envelope is `{model_type, params, meta}`: `model_type` selects the
//! family, `params` holds that family's raw parameters verbatim, and
//! `meta` records what is needed to interpret them — dimension labels,
//! the time scaling applied at load, and the architecture summary.
//! Round trips are byte-identical: floats are parsed exactly and written
//! back with a shortest-round-trip formatter.

use crate::baselines::{
    HawkesModel, HomogeneousPoissonModel, ReactivePointProcess, SelfCorrectingModel,
};
use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::events::{Event, EventSequence};
use crate::kernels::KernelSpec;
use crate::model::{DynamicHawkesModel, IntensityQuery, NllReport, PointProcess};
use crate::training::Trainable;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// A model of any supported family, tagged for dispatch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", content = "params", rename_all = "snake_case")]
pub enum AnyModel {
    DynamicHawkes(DynamicHawkesModel),
    Hawkes(HawkesModel),
    Poisson(HomogeneousPoissonModel),
    Reactive(ReactivePointProcess),
    SelfCorrecting(SelfCorrectingModel),
}

impl AnyModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            AnyModel::DynamicHawkes(m) => m.validate(),
            AnyModel::Hawkes(m) => m.validate(),
            AnyModel::Poisson(m) => m.validate(),
            AnyModel::Reactive(m) => m.validate(),
            AnyModel::SelfCorrecting(m) => m.validate(),
        }
    }

    /// Short name matching the serialized discriminator.
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::DynamicHawkes(_) => "dynamic_hawkes",
            AnyModel::Hawkes(_) => "hawkes",
            AnyModel::Poisson(_) => "poisson",
            AnyModel::Reactive(_) => "reactive",
            AnyModel::SelfCorrecting(_) => "self_correcting",
        }
    }

    pub fn as_process(&self) -> &dyn PointProcess {
        match self {
            AnyModel::DynamicHawkes(m) => m,
            AnyModel::Hawkes(m) => m,
            AnyModel::Poisson(m) => m,
            AnyModel::Reactive(m) => m,
            AnyModel::SelfCorrecting(m) => m,
        }
    }

    /// The modulated model, when this is one; families without a learned
    /// time transform return `None`.
    pub fn dynamic(&self) -> Option<&DynamicHawkesModel> {
        match self {
            AnyModel::DynamicHawkes(m) => Some(m),
            _ => None,
        }
    }
}

impl PointProcess for AnyModel {
    fn num_marks(&self) -> usize {
        self.as_process().num_marks()
    }

    fn intensities(&self, q: IntensityQuery<'_>) -> Vec<f64> {
        self.as_process().intensities(q)
    }

    fn intensity_bound(&self, events: &[Event], from: f64, to: f64) -> f64 {
        self.as_process().intensity_bound(events, from, to)
    }

    fn compensators(&self, events: &[Event], from: f64, to: f64) -> Result<Vec<f64>> {
        self.as_process().compensators(events, from, to)
    }

    fn nll(&self, seq: &EventSequence) -> Result<NllReport> {
        self.as_process().nll(seq)
    }

    fn branching_ratio(&self) -> Option<f64> {
        self.as_process().branching_ratio()
    }
}

impl Trainable for AnyModel {
    fn raw_params(&self) -> Vec<f64> {
        match self {
            AnyModel::DynamicHawkes(m) => m.raw_params(),
            AnyModel::Hawkes(m) => m.raw_params(),
            AnyModel::Poisson(m) => m.raw_params(),
            AnyModel::Reactive(m) => m.raw_params(),
            AnyModel::SelfCorrecting(m) => m.raw_params(),
        }
    }

    fn set_raw_params(&mut self, raw: &[f64]) -> Result<()> {
        match self {
            AnyModel::DynamicHawkes(m) => m.set_raw_params(raw),
            AnyModel::Hawkes(m) => m.set_raw_params(raw),
            AnyModel::Poisson(m) => m.set_raw_params(raw),
            AnyModel::Reactive(m) => m.set_raw_params(raw),
            AnyModel::SelfCorrecting(m) => m.set_raw_params(raw),
        }
    }

    fn num_raw(&self) -> usize {
        match self {
            AnyModel::DynamicHawkes(m) => m.num_raw(),
            AnyModel::Hawkes(m) => m.num_raw(),
            AnyModel::Poisson(m) => m.num_raw(),
            AnyModel::Reactive(m) => m.num_raw(),
            AnyModel::SelfCorrecting(m) => m.num_raw(),
        }
    }

    fn batch_loss_grad(&self, seq: &EventSequence, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        match self {
            AnyModel::DynamicHawkes(m) => m.batch_loss_grad(seq, batch),
            AnyModel::Hawkes(m) => m.batch_loss_grad(seq, batch),
            AnyModel::Poisson(m) => m.batch_loss_grad(seq, batch),
            AnyModel::Reactive(m) => m.batch_loss_grad(seq, batch),
            AnyModel::SelfCorrecting(m) => m.batch_loss_grad(seq, batch),
        }
    }
}

/// Context needed to interpret the raw parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Kernel family, for excitation models.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kernel: Option<KernelSpec>,
    /// Mixture components per dimension, for learned dynamics.
    #[serde(rename = "C", skip_serializing_if = "Option::is_none", default)]
    pub components: Option<usize>,
    /// Hidden layers per component network.
    #[serde(rename = "L", skip_serializing_if = "Option::is_none", default)]
    pub layers: Option<usize>,
    /// Width of each hidden layer.
    #[serde(rename = "H", skip_serializing_if = "Option::is_none", default)]
    pub hidden: Option<usize>,
    /// Number of dimensions.
    #[serde(rename = "M")]
    pub num_marks: usize,
    /// Multiplier that was applied to raw input times before fitting.
    pub time_scale: f64,
    /// Original time unit, free-form.
    #[serde(default)]
    pub time_unit: String,
    /// Dimension labels in index order.
    pub mark_manifest: Vec<String>,
}

/// A model plus its interpretation context; the unit of persistence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(flatten)]
    pub model: AnyModel,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// Bundle a model with the data context it was fitted on.
    pub fn new(model: AnyModel, seq: &EventSequence) -> Result<Self> {
        let meta = CheckpointMeta {
            kernel: match &model {
                AnyModel::DynamicHawkes(m) => Some(m.kernel),
                AnyModel::Hawkes(m) => Some(m.kernel),
                _ => None,
            },
            components: mixture_of(&model).map(|mix| mix.components),
            layers: mixture_of(&model).map(|mix| mix.num_layers),
            hidden: mixture_of(&model).map(|mix| mix.hidden),
            num_marks: model.num_marks(),
            time_scale: seq.time_scale,
            time_unit: seq.time_unit.clone(),
            mark_manifest: seq.mark_labels.clone(),
        };
        let checkpoint = Checkpoint { model, meta };
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.meta.num_marks != self.model.num_marks() {
            return Err(Error::Checkpoint(format!(
                "meta says {} dimensions but the parameters have {}",
                self.meta.num_marks,
                self.model.num_marks()
            )));
        }
        if self.meta.mark_manifest.len() != self.meta.num_marks {
            return Err(Error::Checkpoint(format!(
                "manifest has {} labels for {} dimensions",
                self.meta.mark_manifest.len(),
                self.meta.num_marks
            )));
        }
        if !(self.meta.time_scale > 0.0) || !self.meta.time_scale.is_finite() {
            return Err(Error::Checkpoint(format!(
                "time scale must be positive and finite, got {}",
                self.meta.time_scale
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let checkpoint: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        checkpoint.validate()?;
        Ok(checkpoint)
    }
}

fn mixture_of(model: &AnyModel) -> Option<&crate::dynamics::MixtureIntegralDynamics> {
    match model {
        AnyModel::DynamicHawkes(m) => match &m.dynamics {
            Dynamics::Mixture(mix) => Some(mix),
            Dynamics::Analytic(_) => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::MixtureIntegralDynamics;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_sequence() -> EventSequence {
        EventSequence::new(
            vec![
                Event { time: 0.4, mark: 0 },
                Event { time: 0.9, mark: 1 },
                Event { time: 1.5, mark: 0 },
            ],
            vec!["a".into(), "b".into()],
            2.5,
        )
        .unwrap()
    }

    fn mixture_model() -> DynamicHawkesModel {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dynamics = MixtureIntegralDynamics::init(2, 3, 2, 8, 1.0, &mut rng).unwrap();
        DynamicHawkesModel::from_rates(
            KernelSpec::Exponential,
            &[0.3, 0.5],
            &[0.8, 0.2, 0.4, 0.6],
            &[1.2, 0.9],
            Dynamics::Mixture(dynamics),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let checkpoint =
            Checkpoint::new(AnyModel::DynamicHawkes(mixture_model()), &sample_sequence()).unwrap();
        checkpoint.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, checkpoint);
        loaded.save(&path).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn every_family_round_trips_with_its_discriminator() {
        let seq = sample_sequence();
        let single = EventSequence::new(
            vec![Event { time: 0.5, mark: 0 }],
            vec!["e".into()],
            2.0,
        )
        .unwrap();
        let cases: Vec<(AnyModel, &EventSequence, &str)> = vec![
            (
                AnyModel::Hawkes(
                    HawkesModel::from_rates(
                        KernelSpec::Exponential,
                        &[0.3, 0.5],
                        &[0.8, 0.2, 0.4, 0.6],
                        &[1.2, 0.9],
                    )
                    .unwrap(),
                ),
                &seq,
                "\"model_type\": \"hawkes\"",
            ),
            (
                AnyModel::Poisson(HomogeneousPoissonModel::from_rates(&[2.0]).unwrap()),
                &single,
                "\"model_type\": \"poisson\"",
            ),
            (
                AnyModel::Reactive(ReactivePointProcess::new(&[0.2], &[0.9]).unwrap()),
                &single,
                "\"model_type\": \"reactive\"",
            ),
            (
                AnyModel::SelfCorrecting(
                    SelfCorrectingModel::new(&[0.3], &[0.7], &[0.4]).unwrap(),
                ),
                &single,
                "\"model_type\": \"self_correcting\"",
            ),
        ];
        for (model, data, tag) in cases {
            let checkpoint = Checkpoint::new(model, data).unwrap();
            let json = serde_json::to_string_pretty(&checkpoint).unwrap();
            assert!(json.contains(tag), "missing {tag} in {json}");
            let back: Checkpoint = serde_json::from_str(&json).unwrap();
            assert_eq!(back, checkpoint);
        }
    }

    #[test]
    fn meta_summarizes_the_architecture() {
        let checkpoint =
            Checkpoint::new(AnyModel::DynamicHawkes(mixture_model()), &sample_sequence()).unwrap();
        assert_eq!(checkpoint.meta.components, Some(3));
        assert_eq!(checkpoint.meta.layers, Some(2));
        assert_eq!(checkpoint.meta.hidden, Some(8));
        assert_eq!(checkpoint.meta.num_marks, 2);
        assert_eq!(checkpoint.meta.kernel, Some(KernelSpec::Exponential));

        let flat = Checkpoint::new(
            AnyModel::Poisson(HomogeneousPoissonModel::from_rates(&[1.0, 1.0]).unwrap()),
            &sample_sequence(),
        )
        .unwrap();
        assert_eq!(flat.meta.components, None);
        assert_eq!(flat.meta.kernel, None);
        let json = serde_json::to_string(&flat).unwrap();
        assert!(!json.contains("\"C\""));
    }

    #[test]
    fn mismatched_manifest_is_rejected() {
        let mut checkpoint = Checkpoint::new(
            AnyModel::Poisson(HomogeneousPoissonModel::from_rates(&[1.0, 1.0]).unwrap()),
            &sample_sequence(),
        )
        .unwrap();
        checkpoint.meta.mark_manifest.pop();
        assert!(matches!(
            checkpoint.validate(),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn loading_garbage_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{\"model_type\": \"unknown\"}").unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(Error::Checkpoint(_))
        ));
        assert!(matches!(
            Checkpoint::load(&dir.path().join("missing.json")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn wrapped_model_scores_like_the_inner_one() {
        let seq = sample_sequence();
        let inner = mixture_model();
        let wrapped = AnyModel::DynamicHawkes(inner.clone());
        let a = inner.nll(&seq).unwrap();
        let b = wrapped.nll(&seq).unwrap();
        assert_relative_eq!(a.total, b.total, max_relative = 1e-15);
        assert_eq!(wrapped.num_raw(), inner.num_raw());
        assert_eq!(wrapped.kind(), "dynamic_hawkes");
    }
}
