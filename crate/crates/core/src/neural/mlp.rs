use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer sizes of a perceptron. Every layer but the last is followed by a
/// ReLU; the last is affine only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_size: usize,
    pub layer_output_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(input_size: usize, layer_output_sizes: Vec<usize>) -> Result<Self> {
        let spec = Self { input_size, layer_output_sizes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_output_sizes.is_empty() {
            return Err(Error::InvalidConfig("an MLP needs at least one layer".into()));
        }
        if self.input_size == 0 || self.layer_output_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "MLP sizes must be positive, got input {} and layers {:?}",
                self.input_size, self.layer_output_sizes
            )));
        }
        Ok(())
    }

    pub fn output_size(&self) -> usize {
        *self.layer_output_sizes.last().expect("validated")
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut fan_in = self.input_size;
        self.layer_output_sizes
            .iter()
            .map(|&out| {
                let shape = (fan_in, out);
                fan_in = out;
                shape
            })
            .collect()
    }
}

/// Affine layer `y = x W + b`, with `W` stored `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    /// Bumped whenever parameters are handed out for mutation.
    version: u64,
}

/// Networks are equal when their weights are; the mutation counter is
/// bookkeeping.
impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input of every layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of every hidden layer.
    pre_activations: Vec<Array2<f64>>,
    version: u64,
}

impl Mlp {
    /// Uniform initialization in `±sqrt(6 / fan_in)`, zero biases.
    pub fn new(spec: &MlpSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / fan_in as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        rng.random_range(-limit..limit)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, version: 0 })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("an MLP needs at least one layer".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weights.ncols() {
                return Err(Error::DimensionMismatch { expected: layer.weights.ncols(), got: layer.bias.len() });
            }
            if k > 0 && layers[k - 1].weights.ncols() != layer.weights.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: layers[k - 1].weights.ncols(),
                    got: layer.weights.nrows(),
                });
            }
        }
        Ok(Self { layers, version: 0 })
    }

    /// Same architecture, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Dense { weights: Array2::zeros(l.weights.raw_dim()), bias: Array1::zeros(l.bias.len()) })
            .collect();
        Self { layers, version: 0 }
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            input_size: self.input_size(),
            layer_output_sizes: self.layers.iter().map(|l| l.bias.len()).collect(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("non-empty").bias.len()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weights then bias of every layer, in order.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [l.weights.as_slice().expect("standard layout"), l.bias.as_slice().expect("standard layout")]
            })
            .collect()
    }

    /// Mutable view in [`Mlp::params`] order. Invalidates earlier caches.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_size() {
            return Err(Error::DimensionMismatch { expected: self.input_size(), got: cols });
        }
        Ok(())
    }

    /// Forward pass over a batch (one example per row).
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.weights) + &layer.bias;
            inputs.push(x);
            if k == last {
                let cache = MlpCache { inputs, pre_activations, version: self.version };
                return Ok((z, cache));
            }
            x = z.mapv(relu);
            pre_activations.push(z);
        }
        unreachable!("at least one layer")
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            x = x.dot(&layer.weights) + &layer.bias;
            if k < last {
                x.mapv_inplace(relu);
            }
        }
        Ok(x)
    }

    /// Single-vector forward pass.
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(self.predict(x)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of every parameter and of the input, given the gradient of
    /// the loss with respect to the output. The returned [`Mlp`] holds the
    /// parameter gradients.
    pub fn backward(&self, cache: &MlpCache, upstream: ArrayView2<f64>) -> Result<(Mlp, Array2<f64>)> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "cache from parameter version {} used with version {}",
                cache.version, self.version
            )));
        }
        let rows = cache.inputs[0].nrows();
        if upstream.dim() != (rows, self.output_size()) {
            return Err(Error::DimensionMismatch {
                expected: rows * self.output_size(),
                got: upstream.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for k in (0..self.layers.len()).rev() {
            if k < self.layers.len() - 1 {
                delta.zip_mut_with(&cache.pre_activations[k], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let weights = cache.inputs[k].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.layers[k].weights.t());
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok((Mlp { layers: grads, version: 0 }, delta))
    }
}

/// Keeps NaN so that bad inputs surface in the loss.
fn relu(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn net(layers: Vec<(Array2<f64>, Array1<f64>)>) -> Mlp {
        Mlp::from_layers(layers.into_iter().map(|(weights, bias)| Dense { weights, bias }).collect()).unwrap()
    }

    #[test]
    fn affine_single_layer() {
        let m = net(vec![(array![[1.0], [1.0]], array![0.0])]);
        assert_eq!(m.predict_one(&[2.0, 3.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn hidden_relu_clamps() {
        let m = net(vec![(array![[1.0], [-1.0]], array![0.0]), (array![[1.0]], array![0.0])]);
        let (out, cache) = m.forward(array![[1.0, 2.0]].view()).unwrap();
        assert_eq!(cache.pre_activations[0], array![[-1.0]]);
        assert_eq!(out, array![[0.0]]);
    }

    #[test]
    fn linear_layer_gradient_under_mae() {
        let m = net(vec![(array![[0.5], [-0.25]], array![0.1])]);
        let x = array![[2.0, 4.0]];
        let target = 1.0;
        let (pred, cache) = m.forward(x.view()).unwrap();
        let sign = (pred[[0, 0]] - target).signum();
        let (g, dx) = m.backward(&cache, array![[sign]].view()).unwrap();
        assert_eq!(g.layers[0].weights, array![[sign * 2.0], [sign * 4.0]]);
        assert_eq!(g.layers[0].bias, array![sign]);
        assert_eq!(dx, array![[sign * 0.5, sign * -0.25]]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mlp::new(&MlpSpec::new(4, vec![5, 3]).unwrap(), &mut rng).unwrap();
        let (_, cache) = m.forward(Array2::ones((2, 4)).view()).unwrap();
        let (g, dx) = m.backward(&cache, Array2::zeros((2, 3)).view()).unwrap();
        assert!(g.params().iter().all(|p| p.iter().all(|v| *v == 0.0)));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = Mlp::new(&MlpSpec::new(2, vec![2]).unwrap(), &mut rng).unwrap();
        let (_, cache) = m.forward(Array2::ones((1, 2)).view()).unwrap();
        m.params_mut()[1][0] += 1.0;
        assert!(matches!(m.backward(&cache, Array2::ones((1, 2)).view()), Err(Error::StaleCache(_))));
    }

    #[test]
    fn init_bounds_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = MlpSpec::new(634, vec![625, 625, 625]).unwrap();
        let m = Mlp::new(&spec, &mut rng).unwrap();
        assert_eq!(m.spec(), spec);
        let limit = (6.0f64 / 634.0).sqrt();
        assert!(m.layers[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(m.layers.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        assert_eq!(m.num_parameters(), 634 * 625 + 625 + 2 * (625 * 625 + 625));
        assert!(MlpSpec::new(3, vec![]).is_err());
        assert!(MlpSpec::new(3, vec![4, 0]).is_err());
        assert!(m.predict(Array2::zeros((1, 633)).view()).is_err());
    }
}
