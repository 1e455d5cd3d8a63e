use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::LayerSpec;
use super::ops::{Loss, Target};
use super::{NnError, Tensor};

/// A validated layer stack with its parameters stored as one flat list of
/// tensors (weights then bias for each parametrised layer, in layer order).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Tensor>,
    ranges: Vec<Range<usize>>,
    seed: u64,
}

/// Every intermediate tensor of one forward pass: `values[0]` is the input
/// and `values[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Activations {
    pub values: Vec<Tensor>,
}

impl Activations {
    pub fn output(&self) -> &Tensor {
        self.values.last().expect("activations always hold the input")
    }
}

/// Loss value and gradients of one backward pass. `params` mirrors
/// [`Network::params`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

fn validate(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>, NnError> {
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(NnError::InvalidShape(format!("bad input shape {input_shape:?}")));
    }
    if let Some(i) = layers
        .iter()
        .position(|l| matches!(l, LayerSpec::Softmax))
        .filter(|&i| i + 1 != layers.len())
    {
        return Err(NnError::InvalidConfig(format!(
            "softmax must be the final layer (found at layer {i})"
        )));
    }
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input_shape.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        current = layer
            .output_shape(&current)
            .map_err(|reason| NnError::ShapeMismatch {
                layer: format!("{i} ({})", layer.name()),
                reason,
            })?;
        shapes.push(current.clone());
    }
    Ok(shapes)
}

fn param_ranges(layers: &[LayerSpec]) -> Vec<Range<usize>> {
    let mut start = 0;
    layers
        .iter()
        .map(|l| {
            let n = l.param_shapes().len();
            let r = start..start + n;
            start += n;
            r
        })
        .collect()
}

/// `true` when the next non-structural layer after `i` is a ReLU.
fn feeds_relu(layers: &[LayerSpec], i: usize) -> bool {
    layers[i + 1..]
        .iter()
        .find(|l| !matches!(l, LayerSpec::Flatten | LayerSpec::MaxPool2d { .. }))
        .is_some_and(|l| matches!(l, LayerSpec::Relu))
}

impl Network {
    /// Builds the stack and draws initial weights from `seed`.
    ///
    /// Weights are uniform in `±sqrt(6 / fan_in)` for layers feeding a ReLU
    /// and `±sqrt(3 / fan_in)` otherwise; biases start at zero.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let shapes = validate(input_shape, &layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            let pshapes = layer.param_shapes();
            if pshapes.is_empty() {
                continue;
            }
            let gain = if feeds_relu(&layers, i) { 6.0 } else { 3.0 };
            let limit = (gain / layer.fan_in() as f64).sqrt();
            let weights: Vec<f64> = (0..pshapes[0].iter().product::<usize>())
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            params.push(Tensor::from_raw(pshapes[0].clone(), weights));
            params.push(Tensor::zeros(&pshapes[1]));
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            ranges: param_ranges(&layers),
            layers,
            shapes,
            params,
            seed,
        })
    }

    /// Assembles a network from explicit parameters.
    pub fn from_parts(
        input_shape: &[usize],
        layers: Vec<LayerSpec>,
        params: Vec<Tensor>,
        seed: u64,
    ) -> Result<Self, NnError> {
        let shapes = validate(input_shape, &layers)?;
        let expected: Vec<Vec<usize>> = layers.iter().flat_map(|l| l.param_shapes()).collect();
        if expected.len() != params.len() {
            return Err(NnError::InvalidShape(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (k, (e, p)) in expected.iter().zip(&params).enumerate() {
            if e.as_slice() != p.shape() {
                return Err(NnError::InvalidShape(format!(
                    "parameter {k}: expected {e:?}, got {:?}",
                    p.shape()
                )));
            }
            if !p.is_finite() {
                return Err(NnError::NonFinite("parameters"));
            }
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            ranges: param_ranges(&layers),
            layers,
            shapes,
            params,
            seed,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map_or(&self.input_shape, Vec::as_slice)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn layer_params(&self, layer: usize) -> &[Tensor] {
        &self.params[self.ranges[layer].clone()]
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Activations, NnError> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                layer: "input".into(),
                reason: format!("expected {:?}, got {:?}", self.input_shape, input.shape()),
            });
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(self.layer_params(i), &values[i], &self.shapes[i]);
            values.push(next);
        }
        Ok(Activations { values })
    }

    /// Output of the final layer only.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward(input)?.values.pop().expect("non-empty"))
    }

    pub fn loss(&self, input: &Tensor, target: &Target, loss: Loss) -> Result<f64, NnError> {
        loss.value(&self.predict(input)?, target)
    }

    /// Backpropagates `loss` from a matching forward pass.
    ///
    /// With a softmax head and cross-entropy loss the gradient entering the
    /// logits is computed directly as `probs - onehot(target)`.
    pub fn backward(
        &self,
        acts: &Activations,
        target: &Target,
        loss: Loss,
    ) -> Result<Gradients, NnError> {
        self.check_activations(acts)?;
        let output = acts.output();
        if let Target::Class(c) = target {
            if *c >= output.len() {
                return Err(NnError::IndexOutOfRange {
                    index: *c,
                    len: output.len(),
                });
            }
        }
        let loss_value = loss.value(output, target)?;

        let fused = loss == Loss::CrossEntropy && matches!(self.layers.last(), Some(LayerSpec::Softmax));
        let (mut grad, mut upto) = if fused {
            let c = target.class().expect("checked by loss.value");
            let mut g = output.clone();
            g.data_mut()[c] -= 1.0;
            (g, self.layers.len() - 1)
        } else {
            (loss.output_gradient(output, target)?, self.layers.len())
        };

        let mut param_grads: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        while upto > 0 {
            let i = upto - 1;
            let (gx, gp) = self.layers[i].backward(
                self.layer_params(i),
                &acts.values[i],
                &acts.values[i + 1],
                &grad,
            );
            for (slot, g) in self.ranges[i].clone().zip(gp) {
                param_grads[slot] = g;
            }
            grad = gx;
            upto -= 1;
        }
        Ok(Gradients {
            loss: loss_value,
            params: param_grads,
            input: grad,
        })
    }

    fn check_activations(&self, acts: &Activations) -> Result<(), NnError> {
        if acts.values.len() != self.layers.len() + 1
            || acts.values[0].shape() != self.input_shape.as_slice()
            || acts
                .values
                .iter()
                .skip(1)
                .zip(&self.shapes)
                .any(|(a, s)| a.shape() != s.as_slice())
        {
            return Err(NnError::StaleActivations);
        }
        Ok(())
    }
}
