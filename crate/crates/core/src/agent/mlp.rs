//! Fully connected Q-network with ReLU hidden layers and a linear head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense layer, weights stored row-major as `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.gen_range(-bound..=bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let biases = (0..outputs).map(|_| draw()).collect();
        Dense {
            inputs,
            outputs,
            weights,
            biases,
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b
        }));
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Multi-layer perceptron mapping a normalized observation to one Q-value
/// per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

/// Per-layer parameter gradients, same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    fn zeros_like(net: &QNetwork) -> Self {
        Gradients {
            layers: net.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    /// `activations[0]` is the input; `activations[k]` the output of layer k-1
    /// after its nonlinearity.
    activations: Vec<Vec<f64>>,
}

impl QNetwork {
    /// `input -> hidden[0] -> ... -> output` with seeded fan-in uniform init.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        if sizes.contains(&0) {
            return Err(Error::Config(format!("layer sizes must be positive, got {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| Dense::uniform(w[0], w[1], rng)).collect();
        Ok(QNetwork { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Contract(format!("layer {i} has inconsistent parameter lengths")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Contract(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(QNetwork { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// `[input, hidden..., output]`.
    pub fn shape(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Q-values for one observation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(&activations[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(out);
        }
        Trace { activations }
    }

    /// Loss `mean_k (Q(s_k, a_k) - y_k)^2` and its gradient with respect to
    /// every parameter.
    pub fn mse_gradients(&self, states: &[&[f64]], actions: &[usize], targets: &[f64]) -> Result<(f64, Gradients)> {
        let batch = states.len();
        if batch == 0 || actions.len() != batch || targets.len() != batch {
            return Err(Error::Contract(format!(
                "batch lengths disagree: {} states, {} actions, {} targets",
                batch,
                actions.len(),
                targets.len()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let scale = 2.0 / batch as f64;
        let last = self.layers.len() - 1;
        let mut delta = Vec::new();
        let mut prev_delta = Vec::new();

        for ((&x, &a), &y) in states.iter().zip(actions).zip(targets) {
            self.check_input(x)?;
            if a >= self.output_dim() {
                return Err(Error::Contract(format!("action {a} out of range")));
            }
            let trace = self.forward_trace(x);
            let err = trace.activations[last + 1][a] - y;
            loss += err * err;

            // Only the chosen action's output carries error.
            delta.clear();
            delta.resize(self.layers[last].outputs, 0.0);
            delta[a] = scale * err;

            for li in (0..=last).rev() {
                let layer = &self.layers[li];
                let input = &trace.activations[li];
                let g = &mut grads.layers[li];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(gw, v)| *gw += d * v);
                }
                if li == 0 {
                    break;
                }
                prev_delta.clear();
                prev_delta.resize(layer.inputs, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    prev_delta.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
                // ReLU derivative of the layer below, read off its activation.
                prev_delta
                    .iter_mut()
                    .zip(input)
                    .for_each(|(p, &act)| {
                        if act <= 0.0 {
                            *p = 0.0
                        }
                    });
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
        Ok((loss / batch as f64, grads))
    }

    /// Mean squared error without gradients.
    pub fn mse(&self, states: &[&[f64]], actions: &[usize], targets: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for ((&x, &a), &y) in states.iter().zip(actions).zip(targets) {
            let q = self.forward(x)?;
            let err = q[a] - y;
            total += err * err;
        }
        Ok(total / states.len().max(1) as f64)
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|p| *p = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Copies every parameter from `online`.
    pub fn sync_from(&mut self, online: &QNetwork) -> Result<()> {
        if self.shape() != online.shape() {
            return Err(Error::Contract(format!(
                "cannot sync network of shape {:?} from {:?}",
                self.shape(),
                online.shape()
            )));
        }
        self.layers.clone_from(&online.layers);
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
