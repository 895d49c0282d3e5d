use rcvae_core::model::{Ablation, LayerSite};
use rcvae_core::trainer::gradcheck::{max_relative_error, toy_problem};

const STEP: f64 = 1e-6;
const DENOM_FLOOR: f64 = 1e-3;
const TOLERANCE: f64 = 1e-5;

#[test]
fn gradients_match_central_differences() {
    for seed in 0..20 {
        let layers = 2 + (seed as usize % 3);
        let problem = toy_problem(seed, layers).unwrap();
        let err = max_relative_error(&problem, &Ablation::NONE, STEP, DENOM_FLOOR).unwrap();
        assert!(err < TOLERANCE, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn gradients_match_under_ablation() {
    for (seed, ab) in [
        (100, Ablation::zero_condition()),
        (101, Ablation::skip(LayerSite::Encoder(2))),
        (102, Ablation::skip(LayerSite::Decoder(1))),
        (103, Ablation::skip(LayerSite::Decoder(2))),
    ] {
        let problem = toy_problem(seed, 3).unwrap();
        let err = max_relative_error(&problem, &ab, STEP, DENOM_FLOOR).unwrap();
        assert!(err < TOLERANCE, "{ab:?}: relative error {err:e}");
    }
}
