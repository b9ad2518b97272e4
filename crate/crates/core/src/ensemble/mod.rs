//! Independently trained networks merged as a uniform Gaussian mixture.

mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormalizationMeta};
use crate::error::{Error, Result};
use crate::losses::{LossSpec, VARIANCE_FLOOR};
use crate::nn::{Architecture, Mlp, ModelCheckpoint};
use crate::numerics::Rng;
use crate::scalar::Scalar;

pub use train::{dataset_loss, train_member, TrainSchedule, TrainedMember};

/// Predictive mean and variance for one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction<T> {
    pub mu: T,
    pub sigma2: T,
}

impl<T: Scalar> GaussianPrediction<T> {
    pub fn new(mu: T, sigma2: T) -> Self {
        Self { mu, sigma2 }
    }

    pub fn sigma(&self) -> T {
        self.sigma2.sqrt()
    }

    /// Reads a network output: `[μ]` or `[μ, σ²]`. Single-output networks
    /// are assigned the variance floor.
    pub fn from_outputs(out: &[T]) -> Self {
        Self {
            mu: out[0],
            sigma2: out.get(1).copied().unwrap_or(T::lit(VARIANCE_FLOOR)),
        }
    }
}

/// Moments of the uniform mixture of `preds`:
/// `μ* = mean μₖ` and `σ²* = mean(σ²ₖ + μₖ²) − μ*²`.
///
/// The variance is evaluated in the equivalent centred form
/// `mean σ²ₖ + mean (μₖ − μ*)²`, which cannot cancel below the mean member
/// variance.
pub fn aggregate<T: Scalar>(preds: &[GaussianPrediction<T>]) -> Result<GaussianPrediction<T>> {
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    if let Some(p) = preds.iter().find(|p| !(p.sigma2 > T::zero()) || !p.sigma2.is_finite()) {
        return Err(Error::NonPositiveVariance(p.sigma2.as_f64()));
    }
    let k = T::lit(preds.len() as f64);
    let mu = preds.iter().map(|p| p.mu).sum::<T>() / k;
    let within = preds.iter().map(|p| p.sigma2).sum::<T>() / k;
    let between = preds.iter().map(|p| (p.mu - mu) * (p.mu - mu)).sum::<T>() / k;
    Ok(GaussianPrediction {
        mu,
        sigma2: within + between,
    })
}

/// K trained networks sharing one architecture and training criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel<T> {
    pub members: Vec<Mlp<T>>,
    pub loss: LossSpec,
    pub master_seed: u64,
    pub member_seeds: Vec<u64>,
}

/// Member `k` initializes from `rng.child(k).child(0)` and shuffles from
/// `rng.child(k).child(1)`, so results do not depend on `parallel`.
pub fn train_ensemble<T: Scalar>(
    k: usize,
    arch: &Architecture,
    data: &Dataset<T>,
    spec: &LossSpec,
    schedule: &TrainSchedule,
    rng: &Rng,
    parallel: bool,
) -> Result<EnsembleModel<T>> {
    if k == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one member".into()));
    }
    let member_seeds: Vec<u64> = (0..k as u64).map(|i| rng.child_seed(i)).collect();
    let run = |(i, &seed): (usize, &u64)| -> Result<Mlp<T>> {
        let stream = Rng::new(seed);
        let model = Mlp::init(arch.clone(), &mut stream.child(0))?;
        train_member(model, data, spec, schedule, &mut stream.child(1))
            .map(|m| m.model)
            .map_err(|e| Error::Member {
                index: i,
                source: Box::new(e),
            })
    };
    let members: Result<Vec<_>> = if parallel {
        member_seeds.par_iter().enumerate().map(run).collect()
    } else {
        member_seeds.iter().enumerate().map(run).collect()
    };
    Ok(EnsembleModel {
        members: members?,
        loss: *spec,
        master_seed: rng.seed(),
        member_seeds,
    })
}

impl<T: Scalar> EnsembleModel<T> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Per-member predictions for an already scaled input.
    pub fn member_predictions(&self, x: &[T]) -> Result<Vec<GaussianPrediction<T>>> {
        self.members
            .iter()
            .map(|m| m.predict(x).map(|o| GaussianPrediction::from_outputs(&o)))
            .collect()
    }

    /// Mixture prediction in the scaled target space.
    pub fn predict_normalized(&self, x: &[T]) -> Result<GaussianPrediction<T>> {
        aggregate(&self.member_predictions(x)?)
    }

    /// Mixture prediction for a standardized input, mapped back to original
    /// target units (`μ·range + min`, `σ²·range²`).
    pub fn predict(&self, x: &[T], norm: &NormalizationMeta) -> Result<GaussianPrediction<T>> {
        let p = self.predict_normalized(x)?;
        let (mu, sigma2) = norm.denormalize_gaussian(p.mu, p.sigma2);
        Ok(GaussianPrediction { mu, sigma2 })
    }

    /// [`EnsembleModel::predict`] for every row of a scaled dataset.
    pub fn predict_dataset(&self, data: &Dataset<T>, norm: &NormalizationMeta) -> Result<Vec<GaussianPrediction<T>>> {
        data.rows().map(|x| self.predict(x, norm)).collect()
    }
}

/// Serializable ensemble: member checkpoints, scaling and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCheckpoint {
    pub version: u32,
    pub master_seed: u64,
    pub member_seeds: Vec<u64>,
    pub normalization: NormalizationMeta,
    pub members: Vec<ModelCheckpoint>,
}

impl EnsembleCheckpoint {
    pub fn capture<T: Scalar>(model: &EnsembleModel<T>, norm: &NormalizationMeta) -> Self {
        Self {
            version: crate::nn::CHECKPOINT_VERSION,
            master_seed: model.master_seed,
            member_seeds: model.member_seeds.clone(),
            normalization: norm.clone(),
            members: model
                .members
                .iter()
                .map(|m| ModelCheckpoint::capture(m, model.loss))
                .collect(),
        }
    }

    pub fn restore<T: Scalar>(&self) -> Result<(EnsembleModel<T>, NormalizationMeta)> {
        let first = self
            .members
            .first()
            .ok_or_else(|| Error::Checkpoint("ensemble checkpoint has no members".into()))?;
        if self
            .members
            .iter()
            .any(|m| m.loss != first.loss || m.architecture != first.architecture)
        {
            return Err(Error::Checkpoint("members disagree on architecture or loss".into()));
        }
        let members = self.members.iter().map(|m| m.restore()).collect::<Result<_>>()?;
        Ok((
            EnsembleModel {
                members,
                loss: first.loss,
                master_seed: self.master_seed,
                member_seeds: self.member_seeds.clone(),
            },
            self.normalization.clone(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;
    use crate::nn::{HeadActivation, OptimizerConfig};

    fn gp(mu: f64, sigma2: f64) -> GaussianPrediction<f64> {
        GaussianPrediction::new(mu, sigma2)
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[gp(0.3, 0.2)]).unwrap(), gp(0.3, 0.2));
        assert_eq!(aggregate(&[gp(0.0, 1.0), gp(2.0, 1.0)]).unwrap(), gp(1.0, 2.0));
        assert!(matches!(aggregate::<f64>(&[]), Err(Error::EmptyPredictions)));
        assert!(aggregate(&[gp(0.0, 0.0)]).is_err());
    }

    #[test]
    fn aggregate_matches_raw_moment_form() {
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let preds: Vec<_> = (0..5)
                .map(|_| gp(rng.uniform_in(-3.0, 3.0), rng.uniform_in(0.01, 2.0)))
                .collect();
            let a = aggregate(&preds).unwrap();
            let raw = preds.iter().map(|p| p.sigma2 + p.mu * p.mu).sum::<f64>() / 5.0 - a.mu * a.mu;
            assert!((a.sigma2 - raw).abs() < 1e-12);
        }
    }

    #[test]
    fn denormalization_scales_variance_by_range_squared() {
        let mut norm = NormalizationMeta::identity(1);
        norm.target_max = 10.0;
        let (mu, s2) = norm.denormalize_gaussian(0.5_f64, 0.01);
        assert!((mu - 5.0).abs() < 1e-15 && (s2 - 1.0).abs() < 1e-12);
    }

    fn toy_setup() -> (Dataset<f64>, Architecture, TrainSchedule) {
        let raw = synthetic::heteroscedastic::<f64>(64, &mut Rng::new(1)).unwrap();
        let norm = NormalizationMeta::fit(&raw).unwrap();
        let data = norm.apply(&raw).unwrap();
        let arch = Architecture::new(data.dim(), vec![8], 2, HeadActivation::Sigmoid);
        let sched = TrainSchedule {
            epochs: 3,
            batch_size: 10,
            optimizer: OptimizerConfig::adamw(1e-2),
        };
        (data, arch, sched)
    }

    #[test]
    fn ensemble_training_is_deterministic_and_diverse() {
        let (data, arch, sched) = toy_setup();
        let spec = LossSpec::bvm(0.01);
        let a = train_ensemble(3, &arch, &data, &spec, &sched, &Rng::new(9), false).unwrap();
        let b = train_ensemble(3, &arch, &data, &spec, &sched, &Rng::new(9), true).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.members[0], a.members[1]);
        let single = train_ensemble(1, &arch, &data, &spec, &sched, &Rng::new(9), false).unwrap();
        assert_eq!(single.members[0], a.members[0]);
        let p = single.predict_normalized(data.row(0)).unwrap();
        let direct = GaussianPrediction::from_outputs(&single.members[0].predict(data.row(0)).unwrap());
        assert_eq!(p, direct);
    }

    #[test]
    fn mse_training_reduces_loss() {
        let (data, _, mut sched) = toy_setup();
        sched.epochs = 30;
        let arch = Architecture::new(data.dim(), vec![16], 1, HeadActivation::Sigmoid);
        let spec = LossSpec::mse();
        let model = Mlp::init(arch, &mut Rng::new(2)).unwrap();
        let before = dataset_loss(&model, &data, &spec).unwrap();
        let trained = train_member(model, &data, &spec, &sched, &mut Rng::new(3)).unwrap();
        let after = dataset_loss(&trained.model, &data, &spec).unwrap();
        assert!(after < before, "{after} !< {before}");
        assert_eq!(trained.epoch_losses.len(), 30);
    }

    #[test]
    fn wrong_output_width_is_rejected() {
        let (data, arch, sched) = toy_setup();
        let model = Mlp::init(arch, &mut Rng::new(2)).unwrap();
        assert!(train_member(model, &data, &LossSpec::mse(), &sched, &mut Rng::new(3)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (data, arch, sched) = toy_setup();
        let e = train_ensemble(2, &arch, &data, &LossSpec::nll(), &sched, &Rng::new(4), false).unwrap();
        let norm = NormalizationMeta::identity(data.dim());
        let text = serde_json::to_string(&EnsembleCheckpoint::capture(&e, &norm)).unwrap();
        let back: EnsembleCheckpoint = serde_json::from_str(&text).unwrap();
        let (e2, n2) = back.restore::<f64>().unwrap();
        assert_eq!(e2, e);
        assert_eq!(n2, norm);
    }
}
