use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Activation, Matrix, Params};
use crate::error::{shape_err, Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// One affine layer followed by an activation. `weight` is `[out × in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.nrows()
    }
}

/// Multi-layer perceptron parameters.
///
/// Each instance carries an identity that changes whenever its parameters
/// are borrowed mutably, so a [`ForwardCache`] taken before an update is
/// rejected by [`Mlp::backward`].
#[derive(Debug, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    #[serde(skip, default = "fresh_id")]
    version: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            version: fresh_id(),
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`Mlp::forward`]: per layer, the layer input and
/// the pre-activation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.nrows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients mirroring an [`Mlp`]'s layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &MlpGrads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return shape_err("MlpGrads::accumulate", self.layers.len(), other.layers.len());
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weight.raw_dim() != b.weight.raw_dim() {
                return shape_err(
                    "MlpGrads::accumulate",
                    format!("{:?}", a.weight.dim()),
                    format!("{:?}", b.weight.dim()),
                );
            }
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
        Ok(())
    }

    /// Adds the L2 penalty gradient `strength · w` for every parameter.
    pub fn add_weight_decay(&mut self, params: &Mlp, strength: f64) {
        if strength == 0.0 {
            return;
        }
        for (g, l) in self.layers.iter_mut().zip(&params.layers) {
            g.weight.scaled_add(strength, &l.weight);
            g.bias.scaled_add(strength, &l.bias);
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|&v| v == 0.0))
    }
}

impl Params for MlpGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

impl Mlp {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    ///
    /// `widths` lists every layer boundary, input first; hidden layers use
    /// `hidden` and the last layer uses `output`.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Input(format!(
                "an MLP needs at least two positive widths, got {widths:?}"
            )));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..=limit));
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation: if i == last { output } else { hidden },
                }
            })
            .collect();
        Ok(Self {
            layers,
            version: fresh_id(),
        })
    }

    /// Builds a network from explicit layers, checking that widths chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Input("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_width() {
                return shape_err("Mlp::from_layers bias", l.output_width(), l.bias.len());
            }
            if i > 0 && layers[i - 1].output_width() != l.input_width() {
                return shape_err(
                    "Mlp::from_layers chain",
                    layers[i - 1].output_width(),
                    l.input_width(),
                );
            }
        }
        Ok(Self {
            layers,
            version: fresh_id(),
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version = fresh_id();
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Sum of squares of every parameter.
    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .map(|v| v * v)
            .sum()
    }

    /// SHA-256 over layer shapes, activation tags and the exact bit patterns
    /// of every parameter.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            h.update((l.weight.nrows() as u64).to_le_bytes());
            h.update((l.weight.ncols() as u64).to_le_bytes());
            h.update(format!("{:?}", l.activation).as_bytes());
            for v in l.weight.iter().chain(l.bias.iter()) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Outputs only, without a cache.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.to_owned();
        for l in &self.layers {
            let mut z = x.dot(&l.weight.t());
            z += &l.bias;
            z.mapv_inplace(|v| l.activation.eval(v));
            x = z;
        }
        Ok(x)
    }

    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = batch.to_owned();
        for l in &self.layers {
            let mut z = x.dot(&l.weight.t());
            z += &l.bias;
            let a = z.mapv(|v| l.activation.eval(v));
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        Ok((
            x,
            ForwardCache {
                version: self.version,
                inputs,
                pre,
            },
        ))
    }

    /// Gradients of a scalar loss given `output_grad = dL/d(outputs)`.
    ///
    /// Returns the parameter gradients and `dL/d(batch)`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<(MlpGrads, Matrix)> {
        if cache.version != self.version {
            return Err(Error::StaleCache(
                "parameters changed (or differ) since the forward pass".into(),
            ));
        }
        if cache.pre.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "cache has {} layers, network has {}",
                cache.pre.len(),
                self.layers.len()
            )));
        }
        let rows = cache.batch_size();
        if output_grad.dim() != (rows, self.output_width()) {
            return shape_err(
                "Mlp::backward output_grad",
                format!("({rows}, {})", self.output_width()),
                format!("{:?}", output_grad.dim()),
            );
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[i];
            Zip::from(&mut delta)
                .and(z)
                .for_each(|d, &zv| *d *= l.activation.derivative(zv));
            // `dot` may pick column-major output; optimizers need row-major.
            let weight = delta.t().dot(&cache.inputs[i]).as_standard_layout().into_owned();
            let bias = delta.sum_axis(Axis(0));
            let next = delta.dot(&l.weight);
            grads.push(LayerGrads { weight, bias });
            delta = next;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.ncols() != self.input_width() {
            return shape_err("Mlp input width", self.input_width(), batch.ncols());
        }
        Ok(())
    }
}

impl Params for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.version = fresh_id();
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use ndarray::array;

    fn identity_layer(n: usize, act: Activation) -> Layer {
        Layer {
            weight: Array2::eye(n),
            bias: Array1::zeros(n),
            activation: act,
        }
    }

    #[test]
    fn identity_and_relu_layers() {
        let net = Mlp::from_layers(vec![identity_layer(2, Activation::Identity)]).unwrap();
        let x = array![[-1.0, 2.0], [3.5, -0.25]];
        let (y, cache) = net.forward(&x).unwrap();
        assert_eq!(y, x);
        let g = array![[0.3, -0.7], [1.0, 2.0]];
        let (_, gx) = net.backward(&cache, &g).unwrap();
        assert_eq!(gx, g);

        let relu = Mlp::from_layers(vec![identity_layer(2, Activation::Relu)]).unwrap();
        assert_eq!(relu.predict(&array![[-1.0, 2.0]]).unwrap(), array![[0.0, 2.0]]);
    }

    #[test]
    fn shape_errors() {
        let mut rng = stream(1, Purpose::EncoderInit);
        let net = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(net.forward(&Array2::zeros((2, 5))), Err(Error::Shape { .. })));
        let (_, cache) = net.forward(&Array2::zeros((2, 3))).unwrap();
        assert!(matches!(
            net.backward(&cache, &Array2::zeros((2, 3))),
            Err(Error::Shape { .. })
        ));
        assert!(Mlp::from_layers(vec![
            identity_layer(2, Activation::Relu),
            identity_layer(3, Activation::Relu)
        ])
        .is_err());
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = stream(1, Purpose::EncoderInit);
        let mut net = Mlp::new(&[3, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let (_, cache) = net.forward(&Array2::ones((1, 3))).unwrap();
        net.tensors_mut()[0][0] += 1.0;
        assert!(matches!(
            net.backward(&cache, &Array2::ones((1, 2))),
            Err(Error::StaleCache(_))
        ));
        let other = net.clone();
        let (_, cache) = net.forward(&Array2::ones((1, 3))).unwrap();
        assert!(matches!(
            other.backward(&cache, &Array2::ones((1, 2))),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = stream(3, Purpose::EncoderInit);
        let net = Mlp::new(&[4, 5, 3], Activation::Softplus, Activation::Sigmoid, &mut rng).unwrap();
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let (_, cache) = net.forward(&x).unwrap();
        let (g, gx) = net.backward(&cache, &Array2::zeros((6, 3))).unwrap();
        assert!(g.is_all_zero());
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Mlp::new(&[10, 6], Activation::Relu, Activation::Identity, &mut stream(5, Purpose::EncoderInit)).unwrap();
        let b = Mlp::new(&[10, 6], Activation::Relu, Activation::Identity, &mut stream(5, Purpose::EncoderInit)).unwrap();
        assert_eq!(a.digest(), b.digest());
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= limit));
    }
}
