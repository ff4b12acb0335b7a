//! Statistical sanity of held-out scoring: across many simulation seeds,
//! the generating model should usually beat a flat-rate model on its own
//! held-out data.

use dynhawk_core::baselines::{HawkesModel, HomogeneousPoissonModel};
use dynhawk_core::evaluate::test_nll;
use dynhawk_core::kernels::KernelSpec;
use dynhawk_core::simulate::{simulate, SimConfig};

#[test]
fn true_model_beats_flat_rates_on_most_seeds() {
    let truth = HawkesModel::from_rates(KernelSpec::Exponential, &[0.4], &[1.2], &[2.0]).unwrap();
    let mut wins = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let data = simulate(
            &truth,
            &SimConfig {
                horizon: 250.0,
                seed: 1000 + seed,
                ..Default::default()
            },
        )
        .unwrap();
        let split = 200.0;
        let train = data.windowed(0.0, split).unwrap();
        let flat = HomogeneousPoissonModel::mle(&train).unwrap();
        let a = test_nll(&truth, &data, split, data.horizon).unwrap().total;
        let b = test_nll(&flat, &data, split, data.horizon).unwrap().total;
        if a < b {
            wins += 1;
        }
    }
    assert!(
        wins * 2 > seeds,
        "generating model won only {wins} of {seeds} held-out comparisons"
    );
}
