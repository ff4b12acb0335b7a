//! Shared fixtures for the benchmark suite: a simulated two-dimensional
//! excitation dataset and models of each family sized like a typical
//! desk-scale experiment.

use dynhawk_core::baselines::HawkesModel;
use dynhawk_core::dynamics::{Dynamics, MixtureIntegralDynamics};
use dynhawk_core::events::EventSequence;
use dynhawk_core::kernels::KernelSpec;
use dynhawk_core::model::DynamicHawkesModel;
use dynhawk_core::simulate::{simulate, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn classical_model() -> HawkesModel {
    HawkesModel::from_rates(
        KernelSpec::Exponential,
        &[0.4, 0.3],
        &[0.4, 0.1, 0.2, 0.3],
        &[1.2, 1.0],
    )
    .unwrap()
}

/// About 450 events over a 300-unit window.
pub fn dataset() -> EventSequence {
    simulate(
        &classical_model(),
        &SimConfig {
            horizon: 300.0,
            seed: 9,
            ..Default::default()
        },
    )
    .unwrap()
}

pub fn modulated_model(seq: &EventSequence) -> DynamicHawkesModel {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let dynamics =
        MixtureIntegralDynamics::init(seq.num_marks(), 2, 2, 8, seq.horizon, &mut rng).unwrap();
    DynamicHawkesModel::init_from_data(seq, KernelSpec::power_law(), Dynamics::Mixture(dynamics))
        .unwrap()
}
