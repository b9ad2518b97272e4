//! Small fully connected networks with hand-written backpropagation, and
//! the Adam family of optimizers.

mod mlp;
mod optim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::scalar::Scalar;

pub use mlp::{Architecture, ForwardCache, HeadActivation, Mlp};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState, StepOutcome};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializable snapshot of one trained network. Parameters are stored as
/// f64 whatever the working precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub architecture: Architecture,
    pub loss: LossSpec,
    pub params: Vec<f64>,
}

impl ModelCheckpoint {
    pub fn capture<T: Scalar>(model: &Mlp<T>, loss: LossSpec) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            architecture: model.architecture().clone(),
            loss,
            params: model.params().iter().map(|p| p.as_f64()).collect(),
        }
    }

    pub fn restore<T: Scalar>(&self) -> Result<Mlp<T>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        Mlp::from_params(
            self.architecture.clone(),
            self.params.iter().map(|&p| T::lit(p)).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn arch(d: usize, hidden: Vec<usize>, out: usize) -> Architecture {
        Architecture::new(d, hidden, out, HeadActivation::Sigmoid)
    }

    #[test]
    fn parameter_count() {
        assert_eq!(arch(13, vec![50], 2).param_count(), 802);
        let m = Mlp::<f64>::init(arch(13, vec![50], 2), &mut Rng::new(0)).unwrap();
        assert_eq!(m.param_count(), 802);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let m = Mlp::<f64>::init(arch(1, vec![100], 2), &mut Rng::new(42)).unwrap();
        assert!(m.params().iter().all(|p| p.abs() <= 1.0));
        let bound = 1.0 / 100f64.sqrt();
        // second layer starts after 100 weights + 100 biases
        assert!(m.params()[200..].iter().all(|p| p.abs() <= bound));
        let again = Mlp::<f64>::init(arch(1, vec![100], 2), &mut Rng::new(42)).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn zero_sized_layers_are_rejected() {
        assert!(Mlp::<f64>::init(arch(0, vec![4], 2), &mut Rng::new(0)).is_err());
        assert!(Mlp::<f64>::init(arch(3, vec![4, 0], 2), &mut Rng::new(0)).is_err());
        assert!(Mlp::<f64>::init(arch(3, vec![4], 3), &mut Rng::new(0)).is_err());
    }

    #[test]
    fn zero_model_outputs_one_half() {
        let m = Mlp::<f64>::zeros(arch(3, vec![5], 2)).unwrap();
        assert_eq!(m.predict(&[0.3, -1.0, 2.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn single_affine_layer() {
        let a = Architecture::new(1, vec![], 1, HeadActivation::Identity);
        let m = Mlp::from_params(a, vec![2.0_f64, 1.0]).unwrap();
        assert_eq!(m.predict(&[3.0]).unwrap(), vec![7.0]);
        assert!(matches!(
            m.predict(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn linear_squared_loss_gradient() {
        let a = Architecture::new(1, vec![], 1, HeadActivation::Identity);
        let m = Mlp::from_params(a, vec![1.0_f64, 0.0]).unwrap();
        let (y, cache) = m.forward(&[1.0]).unwrap();
        // L = (y − 0)², dL/dy = 2y
        let g = m.backward(&cache, &[2.0 * y[0]]).unwrap();
        assert_eq!(g, vec![2.0, 2.0]);
        let z = m.backward(&cache, &[0.0]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(m.backward(&cache, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn variance_is_floored() {
        let a = arch(1, vec![], 2);
        // bias −40 drives the variance sigmoid to ~4e−18
        let m = Mlp::from_params(a, vec![0.0_f64, 0.0, 0.0, -40.0]).unwrap();
        let (y, cache) = m.forward(&[1.0]).unwrap();
        assert_eq!(y[1], crate::losses::VARIANCE_FLOOR);
        let g = m.backward(&cache, &[0.0, 1.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_adamw_step() {
        let mut cfg = OptimizerConfig::adamw(1e-3);
        cfg.weight_decay = 0.0;
        let mut st = OptimizerState::<f64>::new(cfg, 1).unwrap();
        let mut p = [0.5];
        st.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] - (0.5 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut cfg = OptimizerConfig::adamw(1e-2);
        cfg.weight_decay = 0.0;
        let mut st = OptimizerState::<f64>::new(cfg, 3).unwrap();
        let mut p = [0.1, -2.0, 3.0];
        for _ in 0..10 {
            st.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, [0.1, -2.0, 3.0]);
    }

    #[test]
    fn decoupled_decay_shrinks_parameters() {
        let mut st = OptimizerState::<f64>::new(OptimizerConfig::adamw(0.1), 1).unwrap();
        let mut p = [2.0];
        st.step(&mut p, &[0.0]).unwrap();
        assert!((p[0] - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let mut st = OptimizerState::<f64>::new(OptimizerConfig::adamw(1e-3), 2).unwrap();
        let mut p = [1.0, 1.0];
        let out = st.step(&mut p, &[f64::NAN, 0.0]).unwrap();
        assert_eq!(out, StepOutcome::SkippedNonFinite);
        assert_eq!(p, [1.0, 1.0]);
        assert_eq!(st.steps(), 0);
        assert!(st.step(&mut p, &[0.0]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Mlp::<f64>::init(arch(4, vec![6, 3], 2), &mut Rng::new(9)).unwrap();
        let ck = ModelCheckpoint::capture(&m, LossSpec::bvm(0.01));
        let text = serde_json::to_string(&ck).unwrap();
        let back: ModelCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.restore::<f64>().unwrap(), m);
        assert_eq!(back.loss, LossSpec::bvm(0.01));
    }
}
