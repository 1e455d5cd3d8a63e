//! Central-difference gradient verification.
//!
//! ReLU and max-pool are only piecewise differentiable. A parameter whose
//! perturbation moves any ReLU input across zero or changes a pooling winner
//! is skipped and counted in [`GradCheckReport::skipped`].

use super::layer::{pool_argmax, LayerSpec};
use super::network::{Activations, Network};
use super::ops::{Loss, Target};
use super::{NnError, Tensor};

/// Pre-activations closer to zero than this are treated as sitting on a kink.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Signs of every ReLU input and the winner of every pooling window.
fn kink_pattern(net: &Network, acts: &Activations) -> Vec<usize> {
    let mut pattern = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        let x = &acts.values[i];
        match *layer {
            LayerSpec::Relu => pattern.extend(x.data().iter().map(|&v| usize::from(v > 0.0))),
            LayerSpec::MaxPool2d { size } => {
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                for ch in 0..c {
                    for oy in 0..h / size {
                        for ox in 0..w / size {
                            pattern.push(pool_argmax(x.data(), ch, h, w, oy, ox, size));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    pattern
}

/// Smallest distance from zero of any ReLU input, or the smallest gap between
/// the two largest values of any pooling window. `INFINITY` when the network
/// has neither.
pub fn min_kink_distance(net: &Network, input: &Tensor) -> Result<f64, NnError> {
    let acts = net.forward(input)?;
    let mut min = f64::INFINITY;
    for (i, layer) in net.layers().iter().enumerate() {
        let x = &acts.values[i];
        match *layer {
            LayerSpec::Relu => {
                for &v in x.data() {
                    min = min.min(v.abs());
                }
            }
            LayerSpec::MaxPool2d { size } => {
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                for ch in 0..c {
                    for oy in 0..h / size {
                        for ox in 0..w / size {
                            let mut vals: Vec<f64> = (0..size * size)
                                .map(|k| {
                                    let (dy, dx) = (k / size, k % size);
                                    x.data()[ch * h * w + (oy * size + dy) * w + ox * size + dx]
                                })
                                .collect();
                            vals.sort_by(|a, b| b.total_cmp(a));
                            if vals.len() > 1 {
                                min = min.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(min)
}

/// Compares backpropagated parameter gradients with central differences of
/// step `epsilon`. Costs two forward passes per parameter.
pub fn grad_check(
    net: &Network,
    input: &Tensor,
    target: &Target,
    loss: Loss,
    epsilon: f64,
) -> Result<GradCheckReport, NnError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(NnError::InvalidEpsilon(epsilon));
    }
    let acts = net.forward(input)?;
    let analytic = net.backward(&acts, target, loss)?;
    let base_pattern = kink_pattern(net, &acts);

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for t in 0..probe.params().len() {
        for k in 0..probe.params()[t].len() {
            let original = probe.params()[t].data()[k];

            probe.params_mut()[t].data_mut()[k] = original + epsilon;
            let plus_acts = probe.forward(input)?;
            let plus = loss.value(plus_acts.output(), target)?;
            let plus_pattern = kink_pattern(&probe, &plus_acts);

            probe.params_mut()[t].data_mut()[k] = original - epsilon;
            let minus_acts = probe.forward(input)?;
            let minus = loss.value(minus_acts.output(), target)?;
            let minus_pattern = kink_pattern(&probe, &minus_acts);

            probe.params_mut()[t].data_mut()[k] = original;

            if plus_pattern != base_pattern || minus_pattern != base_pattern {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.params[t].data()[k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.max_relative_error = report.max_relative_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
