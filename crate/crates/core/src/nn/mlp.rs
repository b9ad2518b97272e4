use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::VARIANCE_FLOOR;
use crate::numerics::Rng;
use crate::scalar::Scalar;

/// Activation applied to the last affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadActivation {
    /// Raw affine outputs.
    Identity,
    /// Sigmoid on every output. With two outputs the second is a variance
    /// and is floored at [`VARIANCE_FLOOR`].
    Sigmoid,
    /// Identity mean and, with two outputs, a softplus variance floored at
    /// [`VARIANCE_FLOOR`]. For targets left in their original units.
    MeanSoftplus,
}

/// Shape of a fully connected ReLU network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub head: HeadActivation,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, head: HeadActivation) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "layer sizes must be positive: {} -> {:?} -> {}",
                self.input_dim, self.hidden, self.output_dim
            )));
        }
        if self.head != HeadActivation::Identity && self.output_dim > 2 {
            return Err(Error::InvalidArchitecture(format!(
                "{:?} head supports one or two outputs, got {}",
                self.head, self.output_dim
            )));
        }
        Ok(())
    }

    /// Layer widths including input and output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

fn layout(arch: &Architecture) -> Vec<Layer> {
    let mut offset = 0;
    arch.widths()
        .windows(2)
        .map(|p| {
            let l = Layer {
                fan_in: p[0],
                fan_out: p[1],
                weights: offset,
                bias: offset + p[0] * p[1],
            };
            offset += p[0] * p[1] + p[1];
            l
        })
        .collect()
}

/// Multilayer perceptron with ReLU hidden layers.
///
/// All parameters live in one flat vector: for each layer the row-major
/// `fan_out × fan_in` weight matrix followed by the bias. Gradients use the
/// same layout, which keeps the optimizer a plain loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    arch: Architecture,
    layers: Vec<Layer>,
    params: Vec<T>,
}

/// Intermediates of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input of each layer; entry 0 is the network input.
    inputs: Vec<Vec<T>>,
    /// Pre-activation outputs of the last layer.
    raw: Vec<T>,
}

impl<T> ForwardCache<T> {
    pub fn raw_outputs(&self) -> &[T] {
        &self.raw
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Scalar> Mlp<T> {
    /// Every weight and bias drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn init(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let layers = layout(&arch);
        let mut params = Vec::with_capacity(arch.param_count());
        for l in &layers {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for _ in 0..(l.fan_in * l.fan_out + l.fan_out) {
                params.push(T::lit(rng.uniform_in(-bound, bound)));
            }
        }
        Ok(Self { arch, layers, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::DimensionMismatch {
                expected: arch.param_count(),
                got: params.len(),
            });
        }
        Ok(Self {
            layers: layout(&arch),
            arch,
            params,
        })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        let n = arch.param_count();
        Self::from_params(arch, vec![T::zero(); n])
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Weight `(row, col)` of layer `layer`.
    pub fn weight(&self, layer: usize, row: usize, col: usize) -> T {
        let l = &self.layers[layer];
        self.params[l.weights + row * l.fan_in + col]
    }

    pub fn l2_norm(&self) -> T {
        self.params.iter().map(|&p| p * p).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn head(&self, raw: &[T]) -> Vec<T> {
        let floor = T::lit(VARIANCE_FLOOR);
        raw.iter()
            .enumerate()
            .map(|(j, &o)| match self.arch.head {
                HeadActivation::Identity => o,
                HeadActivation::Sigmoid if j == 1 => sigmoid(o).max(floor),
                HeadActivation::Sigmoid => sigmoid(o),
                HeadActivation::MeanSoftplus if j == 1 => softplus(o).max(floor),
                HeadActivation::MeanSoftplus => o,
            })
            .collect()
    }

    fn head_derivative(&self, j: usize, o: T) -> T {
        let floor = T::lit(VARIANCE_FLOOR);
        match self.arch.head {
            HeadActivation::Identity => T::one(),
            HeadActivation::Sigmoid => {
                let s = sigmoid(o);
                if j == 1 && s < floor {
                    T::zero()
                } else {
                    s * (T::one() - s)
                }
            }
            HeadActivation::MeanSoftplus if j == 1 => {
                if softplus(o) < floor {
                    T::zero()
                } else {
                    sigmoid(o)
                }
            }
            HeadActivation::MeanSoftplus => T::one(),
        }
    }

    /// Post-activation outputs and the cache needed for backpropagation.
    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, ForwardCache<T>)> {
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                got: x.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let w = &self.params[l.weights..l.bias];
            let b = &self.params[l.bias..l.bias + l.fan_out];
            let mut z = b.to_vec();
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &w[i * l.fan_in..(i + 1) * l.fan_in];
                *zi += row.iter().zip(&a).map(|(&wij, &aj)| wij * aj).sum::<T>();
            }
            if k < last {
                for zi in z.iter_mut() {
                    *zi = zi.max(T::zero());
                }
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        let out = self.head(&a);
        Ok((out, ForwardCache { inputs, raw: a }))
    }

    /// Outputs only.
    pub fn predict(&self, x: &[T]) -> Result<Vec<T>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Parameter gradient of a scalar loss whose gradient with respect to the
    /// post-activation outputs is `d_outputs`.
    pub fn backward(&self, cache: &ForwardCache<T>, d_outputs: &[T]) -> Result<Vec<T>> {
        let mut grads = vec![T::zero(); self.params.len()];
        self.backward_accumulate(cache, d_outputs, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but adds into `grads`.
    pub fn backward_accumulate(&self, cache: &ForwardCache<T>, d_outputs: &[T], grads: &mut [T]) -> Result<()> {
        if d_outputs.len() != self.arch.output_dim
            || cache.raw.len() != self.arch.output_dim
            || cache.inputs.len() != self.layers.len()
        {
            return Err(Error::ShapeMismatch(format!(
                "backward got {} output gradients and a cache for {} layers; model has {} outputs and {} layers",
                d_outputs.len(),
                cache.inputs.len(),
                self.arch.output_dim,
                self.layers.len()
            )));
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let mut delta: Vec<T> = d_outputs
            .iter()
            .zip(&cache.raw)
            .enumerate()
            .map(|(j, (&d, &o))| d * self.head_derivative(j, o))
            .collect();
        for k in (0..self.layers.len()).rev() {
            let l = self.layers[k];
            let a = &cache.inputs[k];
            for i in 0..l.fan_out {
                let di = delta[i];
                grads[l.bias + i] += di;
                let row = &mut grads[l.weights + i * l.fan_in..l.weights + (i + 1) * l.fan_in];
                for (g, &aj) in row.iter_mut().zip(a) {
                    *g += di * aj;
                }
            }
            if k == 0 {
                break;
            }
            let w = &self.params[l.weights..l.bias];
            let mut prev = vec![T::zero(); l.fan_in];
            for (i, &di) in delta.iter().enumerate() {
                if di == T::zero() {
                    continue;
                }
                let row = &w[i * l.fan_in..(i + 1) * l.fan_in];
                for (p, &wij) in prev.iter_mut().zip(row) {
                    *p += di * wij;
                }
            }
            // ReLU: the cached input of layer k is the activation of layer k−1
            for (p, &aj) in prev.iter_mut().zip(a) {
                if aj <= T::zero() {
                    *p = T::zero();
                }
            }
            delta = prev;
        }
        Ok(())
    }
}
