//! Seed sweeps on the unnormalized cubic toy (n = 20, x in [-4, 4], noise sd 3).

use bvmreg::data::{synthetic, Dataset, NormalizationMeta};
use bvmreg::ensemble::{dataset_loss, train_ensemble, train_member, TrainSchedule};
use bvmreg::losses::LossSpec;
use bvmreg::nn::{Architecture, HeadActivation, Mlp, OptimizerConfig};
use bvmreg::numerics::Rng;

fn cubic(seed: u64) -> Dataset<f64> {
    synthetic::toy_cubic(20, -4.0, 4.0, 3.0, &mut Rng::new(seed)).unwrap()
}

fn arch() -> Architecture {
    Architecture::new(1, vec![100], 2, HeadActivation::MeanSoftplus)
}

fn schedule(epochs: usize) -> TrainSchedule {
    TrainSchedule {
        epochs,
        batch_size: 20,
        optimizer: OptimizerConfig::adamw(5e-3),
    }
}

#[test]
fn bvm_training_lowers_the_loss_over_twenty_seeds() {
    let spec = LossSpec::bvm(1.0);
    let mut lowered = 0;
    for seed in 0..20 {
        let data = cubic(seed);
        let model = Mlp::init(arch(), &mut Rng::new(1000 + seed)).unwrap();
        let before = dataset_loss(&model, &data, &spec).unwrap();
        let trained = train_member(model, &data, &spec, &schedule(300), &mut Rng::new(2000 + seed)).unwrap();
        let after = dataset_loss(&trained.model, &data, &spec).unwrap();
        lowered += usize::from(after < before);
    }
    assert!(lowered >= 19, "loss lowered on {lowered}/20 seeds");
}

#[test]
fn origin_mean_lies_within_three_sigma() {
    let spec = LossSpec::bvm(1.0);
    let norm = NormalizationMeta::identity(1);
    let mut inside = 0;
    for seed in 0..20 {
        let data = cubic(seed);
        let e = train_ensemble(5, &arch(), &data, &spec, &schedule(1000), &Rng::new(3000 + seed), true).unwrap();
        let p = e.predict(&[0.0], &norm).unwrap();
        inside += usize::from(p.mu.abs() < 3.0 * p.sigma());
    }
    assert!(inside >= 18, "|mu*(0)| < 3 sigma*(0) on {inside}/20 seeds");
}
