use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Layer sizes of a ReLU network with a sigmoid output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    /// Spec for an envelope length `n` over `bins` STFT bins.
    pub fn for_context(bins: usize, n: usize, hidden: Vec<usize>) -> Self {
        Self {
            input_dim: bins * n,
            hidden,
            output_dim: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend(&self.hidden);
        d.push(self.output_dim);
        d
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape (inputs, outputs).
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

/// Activations kept from a forward pass: the input followed by every layer output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache always holds the input")
    }
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter());
        out.extend(l.bias.iter());
    }
    out
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    /// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng(seed);
        let layers = spec
            .dims()
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-limit..=limit)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    /// All-zero weights and biases.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .dims()
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.spec.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.param_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Batched forward pass over rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.ncols(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&l.weights);
            z += &l.bias;
            if i == last {
                z.mapv_inplace(sigmoid);
            } else {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Gains for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(self.forward_batch(x)?.output().row(0).to_vec())
    }

    /// Reverse-mode gradients of `sum over rows of upstream . output`,
    /// i.e. parameter gradients summed over the batch.
    pub fn backward_batch(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<Gradients> {
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                got: upstream.len(),
            });
        }
        let mut delta = &upstream * &out.mapv(|g| g * (1.0 - g));
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &cache.activations[i];
            let weights = input.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Layer { weights, bias });
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                back.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::invalid(e.to_string()))?;
        let cache = self.forward_batch(x)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).map_err(|e| Error::invalid(e.to_string()))?;
        self.backward_batch(&cache, up)
    }

    /// `params -= lr * grads`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.scaled_add(-lr, &g.weights);
            l.bias.scaled_add(-lr, &g.bias);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{finite_difference, relative_error};

    fn tiny() -> Mlp {
        Mlp::new(
            MlpSpec {
                input_dim: 2,
                hidden: vec![3],
                output_dim: 2,
            },
            7,
        )
        .unwrap()
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let m = Mlp::zeros(MlpSpec::for_context(5, 4, vec![8, 8])).unwrap();
        assert_eq!(m.forward(&[0.3; 20]).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn outputs_stay_inside_unit_interval() {
        let spec = MlpSpec {
            input_dim: 6,
            hidden: vec![5],
            output_dim: 3,
        };
        let mut rng = seed::rng(1);
        for s in 0..10_000 {
            let m = Mlp::new(spec.clone(), s).unwrap();
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!(m.forward(&x).unwrap().iter().all(|g| *g > 0.0 && *g < 1.0));
        }
    }

    #[test]
    fn single_hidden_unit_by_hand() {
        let mut m = Mlp::zeros(MlpSpec {
            input_dim: 2,
            hidden: vec![1],
            output_dim: 1,
        })
        .unwrap();
        // h = relu(0.5*1 - 0.25*2 + 0.1) = 0.1; out = sigmoid(2*0.1 - 0.3) = sigmoid(-0.1)
        m.set_params(&[0.5, -0.25, 0.1, 2.0, -0.3]).unwrap();
        let g = m.forward(&[1.0, 2.0]).unwrap()[0];
        let expected = 1.0 / (1.0 + 0.1f64.exp());
        assert!((g - expected).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = tiny();
        let x = [0.7, -0.4];
        let up = [0.3, -1.1];
        let analytic = m.backward(&x, &up).unwrap().flatten();
        let numeric = finite_difference(&m.params(), 1e-6, |p| {
            let mut probe = m.clone();
            probe.set_params(p)?;
            let out = probe.forward(&x)?;
            Ok(out[0] * up[0] + out[1] * up[1])
        })
        .unwrap();
        assert!(relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = tiny();
        let g = m.backward(&[0.2, 0.9], &[0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn active_relu_region_matches_linear_model_gradient() {
        // one hidden unit, all-positive weights and inputs: output = sigmoid(v * (w.x + c) + d)
        let mut m = Mlp::zeros(MlpSpec {
            input_dim: 2,
            hidden: vec![1],
            output_dim: 1,
        })
        .unwrap();
        let (w, c, v, d) = ([0.4, 0.6], 0.2, 1.5, -0.5);
        m.set_params(&[w[0], w[1], c, v, d]).unwrap();
        let x = [1.0, 2.0];
        let h = w[0] * x[0] + w[1] * x[1] + c;
        let y = 1.0 / (1.0 + (-(v * h + d)).exp());
        let s = y * (1.0 - y);
        let expected = [s * v * x[0], s * v * x[1], s * v, s * h, s];
        let got = m.backward(&x, &[1.0]).unwrap().flatten();
        assert!(got.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn batch_gradients_sum_rows() {
        let m = tiny();
        let x = Array2::from_shape_vec((2, 2), vec![0.1, 0.5, -0.3, 0.8]).unwrap();
        let up = Array2::from_shape_vec((2, 2), vec![1.0, -0.5, 0.2, 0.4]).unwrap();
        let batch = m.backward_batch(&m.forward_batch(x.view()).unwrap(), up.view()).unwrap().flatten();
        let a = m.backward(&[0.1, 0.5], &[1.0, -0.5]).unwrap().flatten();
        let b = m.backward(&[-0.3, 0.8], &[0.2, 0.4]).unwrap().flatten();
        for ((s, x), y) in batch.iter().zip(a).zip(b) {
            assert!((s - (x + y)).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_errors() {
        let m = tiny();
        assert!(m.forward(&[1.0; 3]).is_err());
        assert!(m.backward(&[1.0; 2], &[1.0; 3]).is_err());
        assert!(m.clone().set_params(&[0.0; 4]).is_err());
    }
}
