//! Classifier abstraction used by ODIN, plus a small fully connected
//! reference network with a hand-written backward pass.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::softmax::temperature_softmax;
use crate::error::{Error, Result};
use crate::tensor_io::{self, ActivationSet, LayerActivations};

/// Negative log of the temperature-scaled softmax probability of
/// `class_index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetLoss {
    pub class_index: usize,
    pub tau: f64,
}

impl TargetLoss {
    pub fn new(class_index: usize, tau: f64) -> Self {
        Self { class_index, tau }
    }

    pub fn value(&self, logits: &[f64]) -> f64 {
        -temperature_softmax(logits, self.tau)[self.class_index].ln()
    }
}

/// A classifier that can report logits, input gradients and named
/// intermediate activations.
pub trait DifferentiableClassifier: Sync {
    fn input_dim(&self) -> usize;

    fn class_count(&self) -> usize;

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Gradient of `loss` with respect to the input `x`.
    fn input_gradient(&self, x: &[f64], loss: &TargetLoss) -> Result<Vec<f64>>;

    /// Activations of every exposed layer, in network order.
    fn named_activations(&self, x: &[f64]) -> Result<Vec<(String, Vec<f64>)>>;
}

/// Fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if inputs == 0 || outputs == 0 || weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::Shape(format!(
                "dense layer {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite network parameter".to_owned()));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// `W^T * upstream`.
    fn backprop(&self, upstream: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.inputs];
        for (o, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (g, w) in grad.iter_mut().zip(row) {
                *g += w * u;
            }
        }
        grad
    }
}

pub const MAX_LAYERS: usize = 4;
pub const SOFTMAX_LAYER: &str = "softmax";

/// Rectifier MLP with at most [`MAX_LAYERS`] dense layers. Hidden layers use
/// ReLU; the last layer outputs logits. Activations are exposed as
/// `dense_0 .. dense_{L-1}` (post-activation) followed by `softmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceNet {
    layers: Vec<Dense>,
}

/// Output of [`ReferenceNet::forward_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward {
    pub logits: Vec<f64>,
    pub activations: Vec<(String, Vec<f64>)>,
    pub input_gradient: Vec<f64>,
}

pub fn dense_layer_name(index: usize) -> String {
    format!("dense_{index}")
}

impl ReferenceNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() || layers.len() > MAX_LAYERS {
            return Err(Error::InvalidArgument(format!(
                "reference net needs 1..={MAX_LAYERS} layers, got {}",
                layers.len()
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape(format!(
                    "layer with {} outputs feeds layer with {} inputs",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    /// He-initialised weights and small biases drawn from `rng`. Parameters
    /// are rounded to `f32` so the net survives a store round trip exactly.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least input and output sizes".to_owned(),
            ));
        }
        let bias_dist = Normal::new(0.0, 0.1).expect("valid normal");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let std = (2.0 / inputs as f64).sqrt();
                let wdist = Normal::new(0.0, std).expect("valid normal");
                let weights = (0..inputs * outputs)
                    .map(|_| f64::from(wdist.sample(rng) as f32))
                    .collect();
                let bias = (0..outputs)
                    .map(|_| f64::from(bias_dist.sample(rng) as f32))
                    .collect();
                Dense::new(inputs, outputs, weights, bias)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    /// Single layer with identity weights: logits equal the input.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self::new(vec![Dense::new(dim, dim, weights, vec![0.0; dim])?])
    }

    /// All weights and biases zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        let layers = sizes
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], vec![0.0; w[0] * w[1]], vec![0.0; w[1]]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layer_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.layers.len()).map(dense_layer_name).collect();
        names.push(SOFTMAX_LAYER.to_owned());
        names
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        let d = self.layers[0].inputs;
        if x.len() != d {
            return Err(Error::Shape(format!("input has {} components, network expects {d}", x.len())));
        }
        Ok(())
    }

    /// Post-activation outputs of every dense layer; the last is the logits.
    fn layer_outputs(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = outputs.last().map_or(x, Vec::as_slice);
            let mut z = layer.apply(input);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            outputs.push(z);
        }
        outputs
    }

    /// Forward pass caching every layer, then the gradient of `loss` with
    /// respect to the input by the chain rule.
    pub fn forward_backward(&self, x: &[f64], loss: &TargetLoss) -> Result<ForwardBackward> {
        self.check_input(x)?;
        let outputs = self.layer_outputs(x);
        let logits = outputs.last().expect("at least one layer").clone();
        if loss.class_index >= logits.len() {
            return Err(Error::Shape(format!(
                "class index {} out of range for {} classes",
                loss.class_index,
                logits.len()
            )));
        }
        if !(loss.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", loss.tau)));
        }

        // d(-log p_c)/d logits = (p - onehot(c)) / tau
        let probs = temperature_softmax(&logits, loss.tau);
        let mut upstream: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (p - if i == loss.class_index { 1.0 } else { 0.0 }) / loss.tau)
            .collect();
        for i in (0..self.layers.len()).rev() {
            let grad_in = self.layers[i].backprop(&upstream);
            upstream = if i > 0 {
                // ReLU of layer i-1: gradient passes only where the output was positive
                grad_in
                    .into_iter()
                    .zip(&outputs[i - 1])
                    .map(|(g, &a)| if a > 0.0 { g } else { 0.0 })
                    .collect()
            } else {
                grad_in
            };
        }

        let mut activations: Vec<(String, Vec<f64>)> = outputs
            .into_iter()
            .enumerate()
            .map(|(i, a)| (dense_layer_name(i), a))
            .collect();
        activations.push((SOFTMAX_LAYER.to_owned(), temperature_softmax(&logits, 1.0)));
        Ok(ForwardBackward {
            logits,
            activations,
            input_gradient: upstream,
        })
    }

    /// Stores the parameters as one activation set per dense layer, with a
    /// `weight` matrix (`outputs x inputs`) and a `bias` column.
    pub fn to_activation_sets(&self) -> Result<Vec<ActivationSet>> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let weight = LayerActivations::new(
                    "weight",
                    l.outputs,
                    l.inputs,
                    l.weights.iter().map(|&v| v as f32).collect(),
                )?;
                let bias =
                    LayerActivations::new("bias", l.outputs, 1, l.bias.iter().map(|&v| v as f32).collect())?;
                let ids = (0..l.outputs).map(|o| format!("unit_{o}")).collect();
                ActivationSet::new(dense_layer_name(i), ids, vec![weight, bias])
            })
            .collect()
    }

    pub fn from_activation_sets(sets: &[ActivationSet]) -> Result<Self> {
        let layers = sets
            .iter()
            .map(|set| {
                let w = set.layer("weight")?;
                let b = set.layer("bias")?;
                Dense::new(
                    w.cols(),
                    w.rows(),
                    w.values().iter().map(|&v| f64::from(v)).collect(),
                    b.values().iter().map(|&v| f64::from(v)).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn save(&self, directory: &Path) -> Result<()> {
        tensor_io::write_activation_sets(&self.to_activation_sets()?, directory)?;
        Ok(())
    }

    pub fn load(directory: &Path) -> Result<Self> {
        Self::from_activation_sets(&tensor_io::read_activation_sets(directory)?)
    }
}

impl DifferentiableClassifier for ReferenceNet {
    fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn class_count(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.layer_outputs(x).pop().expect("at least one layer"))
    }

    fn input_gradient(&self, x: &[f64], loss: &TargetLoss) -> Result<Vec<f64>> {
        Ok(self.forward_backward(x, loss)?.input_gradient)
    }

    fn named_activations(&self, x: &[f64]) -> Result<Vec<(String, Vec<f64>)>> {
        self.check_input(x)?;
        let outputs = self.layer_outputs(x);
        let probs = temperature_softmax(outputs.last().expect("at least one layer"), 1.0);
        let mut named: Vec<(String, Vec<f64>)> = outputs
            .into_iter()
            .enumerate()
            .map(|(i, a)| (dense_layer_name(i), a))
            .collect();
        named.push((SOFTMAX_LAYER.to_owned(), probs));
        Ok(named)
    }
}

/// Forward and backward pass of `net` for the standard (`tau = 1`) loss of
/// `class_index`.
pub fn reference_net_forward_backward(
    net: &ReferenceNet,
    x: &[f64],
    class_index: usize,
) -> Result<ForwardBackward> {
    net.forward_backward(x, &TargetLoss::new(class_index, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_net_softmaxes_its_input() {
        let net = ReferenceNet::identity(3).unwrap();
        let x = [0.2, -1.0, 3.0];
        let fb = reference_net_forward_backward(&net, &x, 0).unwrap();
        assert_eq!(fb.logits, x);
        let (name, probs) = fb.activations.last().unwrap();
        assert_eq!(name, "softmax");
        assert_eq!(probs, &temperature_softmax(&x, 1.0));
    }

    #[test]
    fn zero_net_is_uniform_with_zero_gradient() {
        let net = ReferenceNet::zeros(&[5, 4, 3]).unwrap();
        let fb = reference_net_forward_backward(&net, &[0.3; 5], 2).unwrap();
        let probs = &fb.activations.last().unwrap().1;
        assert!(probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert!(fb.input_gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn layer_names_are_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ReferenceNet::random(&[4, 8, 6, 3], &mut rng).unwrap();
        assert_eq!(net.layer_names(), ["dense_0", "dense_1", "dense_2", "softmax"]);
        let named = net.named_activations(&[0.1; 4]).unwrap();
        let names: Vec<_> = named.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["dense_0", "dense_1", "dense_2", "softmax"]);
        assert!((named[3].1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_checks() {
        let net = ReferenceNet::identity(2).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(reference_net_forward_backward(&net, &[1.0, 2.0], 5).is_err());
        assert!(ReferenceNet::zeros(&[2, 3, 3, 3, 3, 3]).is_err());
        let a = Dense::new(2, 3, vec![0.0; 6], vec![0.0; 3]).unwrap();
        let b = Dense::new(2, 2, vec![0.0; 4], vec![0.0; 2]).unwrap();
        assert!(ReferenceNet::new(vec![a, b]).is_err());
    }

    #[test]
    fn store_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ReferenceNet::random(&[6, 5, 2], &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        net.save(dir.path()).unwrap();
        assert_eq!(ReferenceNet::load(dir.path()).unwrap(), net);
    }
}
