use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec, PerSampleEval};
use crate::nn::{Mlp, OptimizerConfig, OptimizerState, StepOutcome};
use crate::numerics::Rng;
use crate::scalar::Scalar;

/// Epoch loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl TrainSchedule {
    /// 40 epochs of AdamW at 3e-4 on batches of 32.
    pub fn standard() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            optimizer: OptimizerConfig::adamw(3e-4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(format!(
                "epochs and batch size must be positive (got {}, {})",
                self.epochs, self.batch_size
            )));
        }
        self.optimizer.validate()
    }
}

/// Per-sample evaluation of `spec` on one network output vector.
fn eval_outputs<T: Scalar>(spec: &LossSpec, out: &[T], t: T) -> Result<PerSampleEval<T>> {
    match spec.kind {
        LossKind::Mse => spec.per_sample(t, out[0], T::one()),
        _ => spec.per_sample(t, out[0], out[1]),
    }
}

fn check_output_dim<T: Scalar>(model: &Mlp<T>, spec: &LossSpec) -> Result<()> {
    let want = spec.kind.output_dim();
    let got = model.architecture().output_dim;
    if got != want {
        return Err(Error::InvalidArchitecture(format!(
            "{} loss needs {want} outputs, model has {got}",
            spec.kind.as_str()
        )));
    }
    Ok(())
}

/// Mean loss of `model` over all of `data`.
pub fn dataset_loss<T: Scalar>(model: &Mlp<T>, data: &Dataset<T>, spec: &LossSpec) -> Result<T> {
    check_output_dim(model, spec)?;
    let mut total = T::zero();
    for i in 0..data.len() {
        let out = model.predict(data.row(i))?;
        total += eval_outputs(spec, &out, data.target(i))?.value;
    }
    Ok(total / T::lit(data.len() as f64))
}

/// A trained network with its per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainedMember<T> {
    pub model: Mlp<T>,
    pub epoch_losses: Vec<T>,
    pub skipped_steps: usize,
}

/// Mini-batch training of one network.
///
/// Rows are reshuffled from `rng` every epoch; the last short batch is kept.
/// A non-finite batch loss aborts with the epoch, batch and parameter norm.
pub fn train_member<T: Scalar>(
    mut model: Mlp<T>,
    data: &Dataset<T>,
    spec: &LossSpec,
    schedule: &TrainSchedule,
    rng: &mut Rng,
) -> Result<TrainedMember<T>> {
    spec.validate()?;
    schedule.validate()?;
    check_output_dim(&model, spec)?;
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n_out = model.architecture().output_dim;
    let mut opt = OptimizerState::new(schedule.optimizer, model.param_count())?;
    let mut grads = vec![T::zero(); model.param_count()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(schedule.epochs);
    let mut skipped = 0;
    for epoch in 0..schedule.epochs {
        rng.shuffle(&mut order);
        let mut epoch_total = T::zero();
        for (b, batch) in order.chunks(schedule.batch_size).enumerate() {
            grads.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::lit(batch.len() as f64);
            let mut batch_total = T::zero();
            for &i in batch {
                let (out, cache) = model.forward(data.row(i))?;
                let e = eval_outputs(spec, &out, data.target(i))?;
                batch_total += e.value;
                let mut d_out = vec![e.d_mu * scale];
                if n_out == 2 {
                    d_out.push(e.d_sigma2(out[1]) * scale);
                }
                model.backward_accumulate(&cache, &d_out, &mut grads)?;
            }
            if !batch_total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    param_norm: model.l2_norm().as_f64(),
                });
            }
            epoch_total += batch_total;
            if opt.step(model.params_mut(), &grads)? == StepOutcome::SkippedNonFinite {
                skipped += 1;
            }
        }
        epoch_losses.push(epoch_total / T::lit(data.len() as f64));
    }
    if skipped > 0 {
        log::warn!("{skipped} optimizer steps skipped for non-finite gradients");
    }
    Ok(TrainedMember {
        model,
        epoch_losses,
        skipped_steps: skipped,
    })
}
