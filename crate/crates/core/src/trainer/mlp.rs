use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LogitBatch;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidConfig(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    /// Empty for a linear model.
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

/// Fully connected layer, `out = input . weights + bias` with `weights` stored
/// `(fan_in, fan_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense { weights: Array2::zeros(self.weights.raw_dim()), bias: Array1::zeros(self.bias.raw_dim()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    activation: Activation,
    layers: Vec<Dense>,
}

/// Layer inputs and pre-activations kept from a forward pass for backprop.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

/// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
pub fn init_model(config: &MlpConfig) -> Result<Mlp> {
    let mut dims = vec![config.input_dim];
    dims.extend(&config.hidden_dims);
    dims.push(config.output_dim);
    if dims.contains(&0) {
        return Err(Error::InvalidConfig(format!("layer sizes {dims:?} must all be >= 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Dense {
                weights: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(Mlp { activation: config.activation, layers })
}

impl Mlp {
    pub fn from_layers(activation: Activation, layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("a model needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.ncols() != l.bias.len() {
                return Err(Error::InvalidConfig(format!("layer {k}: bias does not match weight columns")));
            }
            if k > 0 && layers[k - 1].weights.ncols() != l.weights.nrows() {
                return Err(Error::InvalidConfig(format!("layer {k}: input width does not match previous layer")));
            }
        }
        Ok(Mlp { activation, layers })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights (row-major) then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::InvalidInput(format!(
                "{} parameters given, model has {}",
                params.len(),
                self.parameter_count()
            )));
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "feature width {} does not match model input {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn activate(&self, z: &Array2<f64>) -> Array2<f64> {
        match self.activation {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
        }
    }

    /// Raw output scores, not validated for finiteness.
    pub fn forward_raw(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<LogitBatch> {
        LogitBatch::new(self.forward_raw(x)?)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            cache.inputs.push(a);
            if k == last {
                return Ok((z, cache));
            }
            a = self.activate(&z);
            cache.pre_activations.push(z);
        }
        unreachable!("model has at least one layer")
    }

    /// Parameter gradients given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Array2<f64>) -> Vec<Dense> {
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let mut delta = grad_output.clone();
        for k in (0..self.layers.len()).rev() {
            grads[k].weights = cache.inputs[k].t().dot(&delta);
            grads[k].bias = delta.sum_axis(Axis(0));
            if k == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.layers[k].weights.t());
            let z = &cache.pre_activations[k - 1];
            match self.activation {
                Activation::Relu => Zip::from(&mut upstream).and(z).for_each(|g, &v| {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }),
                Activation::Tanh => Zip::from(&mut upstream).and(z).for_each(|g, &v| {
                    let t = v.tanh();
                    *g *= 1.0 - t * t;
                }),
            }
            delta = upstream;
        }
        grads
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn to_json(&self) -> Result<String> {
        let record = CheckpointRecord {
            format_version: CHECKPOINT_FORMAT_VERSION,
            activation: self.activation,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    input_dim: l.weights.nrows(),
                    output_dim: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let record: CheckpointRecord = serde_json::from_str(s)?;
        if record.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "checkpoint format version {} is not supported (expected {})",
                record.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        let layers = record
            .layers
            .into_iter()
            .map(|l| {
                let weights = Array2::from_shape_vec((l.input_dim, l.output_dim), l.weights)
                    .map_err(|e| Error::InvalidInput(format!("checkpoint layer: {e}")))?;
                Ok(Dense { weights, bias: Array1::from(l.bias) })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(record.activation, layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mlp::from_json(&s)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointRecord {
    format_version: u32,
    activation: Activation,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    input_dim: usize,
    output_dim: usize,
    /// Row-major `(input_dim, output_dim)`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg(hidden: Vec<usize>) -> MlpConfig {
        MlpConfig { input_dim: 8, hidden_dims: hidden, output_dim: 4, activation: Activation::Relu, init_seed: 42 }
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(init_model(&cfg(vec![16])).unwrap(), init_model(&cfg(vec![16])).unwrap());
        let other = MlpConfig { init_seed: 43, ..cfg(vec![16]) };
        assert_ne!(init_model(&other).unwrap(), init_model(&cfg(vec![16])).unwrap());
    }

    #[test]
    fn shapes_and_counts() {
        let linear = init_model(&cfg(vec![])).unwrap();
        assert_eq!(linear.layers().len(), 1);
        assert_eq!(linear.parameter_count(), 8 * 4 + 4);
        let m = init_model(&cfg(vec![16])).unwrap();
        assert_eq!(m.parameter_count(), 212);
        assert!(init_model(&cfg(vec![0])).is_err());
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(m.layers()[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(m.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn forward_examples() {
        let mut m = init_model(&cfg(vec![5])).unwrap();
        let zeros = vec![0.0; m.parameter_count()];
        m.set_parameters(&zeros).unwrap();
        let x = Array2::from_elem((3, 8), 0.7);
        assert!(m.forward(x.view()).unwrap().values().iter().all(|&v| v == 0.0));

        let layer = Dense { weights: array![[1.0, 2.0], [3.0, -4.0]], bias: array![0.0, 0.0] };
        let lin = Mlp::from_layers(Activation::Relu, vec![layer]).unwrap();
        let out = lin.forward(array![[1.0, 1.0]].view()).unwrap();
        assert_eq!(out.values(), &array![[4.0, -2.0]]);

        assert!(lin.forward(array![[1.0, 1.0, 1.0]].view()).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = init_model(&MlpConfig { activation: Activation::Tanh, ..cfg(vec![3, 2]) }).unwrap();
        let back = Mlp::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bumped = m.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(Mlp::from_json(&bumped).is_err());
    }
}
