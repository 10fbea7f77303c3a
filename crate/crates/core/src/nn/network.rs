use rand::Rng;

use crate::error::{ensure, Result};

use super::arch::{Layer, NetworkArch, WeightShape};
use super::ops::{self, ConvGeom};
use super::tensor::{Tensor2, Tensor4};

/// Weight tensor of one conv or FC layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Conv(Tensor4),
    Fc(Tensor2),
}

impl Weights {
    pub fn zeros(shape: WeightShape) -> Self {
        match shape {
            WeightShape::Conv {
                filters,
                channels,
                kernel,
            } => Weights::Conv(Tensor4::zeros([filters, channels, kernel, kernel])),
            WeightShape::Fc { outputs, inputs } => Weights::Fc(Tensor2::zeros([outputs, inputs])),
        }
    }

    pub fn shape(&self) -> WeightShape {
        match self {
            Weights::Conv(t) => {
                let [filters, channels, kernel, _] = t.shape();
                WeightShape::Conv {
                    filters,
                    channels,
                    kernel,
                }
            }
            Weights::Fc(t) => {
                let [outputs, inputs] = t.shape();
                WeightShape::Fc { outputs, inputs }
            }
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Weights::Conv(t) => t.as_slice(),
            Weights::Fc(t) => t.as_slice(),
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            Weights::Conv(t) => t.as_mut_slice(),
            Weights::Fc(t) => t.as_mut_slice(),
        }
    }

    pub fn len(&self) -> usize {
        self.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weights and bias of one conv or FC layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Weights,
    pub bias: Vec<f64>,
}

/// Parameters of every weighted layer of a [`NetworkArch`], in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<LayerParams>,
}

impl Params {
    pub fn zeros(arch: &NetworkArch) -> Self {
        Self {
            layers: arch
                .weight_shapes()
                .into_iter()
                .map(|s| LayerParams {
                    weights: Weights::zeros(s),
                    bias: vec![0.0; s.outputs()],
                })
                .collect(),
        }
    }

    /// He-uniform weights, zero biases.
    pub fn init<R: Rng>(arch: &NetworkArch, rng: &mut R) -> Self {
        let mut params = Self::zeros(arch);
        for layer in &mut params.layers {
            let bound = (6.0 / layer.weights.shape().fan_in() as f64).sqrt();
            for w in layer.weights.as_mut_slice() {
                *w = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    pub fn check_against(&self, arch: &NetworkArch) -> Result<()> {
        let shapes = arch.weight_shapes();
        ensure!(
            shapes.len() == self.layers.len(),
            Shape,
            "architecture has {} weighted layers, parameters have {}",
            shapes.len(),
            self.layers.len()
        );
        for (i, (s, l)) in shapes.iter().zip(&self.layers).enumerate() {
            ensure!(
                *s == l.weights.shape() && l.bias.len() == s.outputs(),
                Shape,
                "layer {i}: parameters {:?} do not match architecture {s:?}",
                l.weights.shape()
            );
        }
        Ok(())
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }
}

/// Saved state for the backward pass of one layer.
pub(crate) enum Cache {
    Conv {
        cols: Vec<f64>,
        geom: ConvGeom,
    },
    Relu {
        out: Vec<f64>,
    },
    Pool {
        argmax: Vec<usize>,
        input_len: usize,
    },
    Fc {
        input: Vec<f64>,
    },
}

/// Runs the network on a batch of flattened inputs and returns the logits.
pub fn forward(
    arch: &NetworkArch,
    params: &Params,
    input: &[f64],
    batch: usize,
) -> Result<Vec<f64>> {
    params.check_against(arch)?;
    ensure!(
        input.len() == batch * arch.input_len(),
        Shape,
        "input holds {} values, batch of {batch} needs {}",
        input.len(),
        batch * arch.input_len()
    );
    Ok(forward_unchecked(arch, params, input, batch, None))
}

pub(crate) fn forward_unchecked(
    arch: &NetworkArch,
    params: &Params,
    input: &[f64],
    batch: usize,
    mut caches: Option<&mut Vec<Cache>>,
) -> Vec<f64> {
    let mut act = input.to_vec();
    let mut shape = arch.input();
    let mut weighted = 0;
    for layer in arch.layers() {
        match *layer {
            Layer::Conv {
                filters,
                channels,
                kernel,
                stride,
                input_size,
            } => {
                let geom = ConvGeom {
                    batch,
                    channels,
                    size: input_size,
                    filters,
                    kernel,
                    stride,
                    out: (input_size - kernel) / stride + 1,
                };
                let p = &params.layers[weighted];
                let mut cols = Vec::new();
                act = ops::conv_forward_raw(&act, p.weights.as_slice(), &p.bias, &geom, &mut cols);
                shape = [filters, geom.out, geom.out];
                weighted += 1;
                if let Some(c) = caches.as_deref_mut() {
                    c.push(Cache::Conv { cols, geom });
                }
            }
            Layer::Pool { window, stride } => {
                let input_len = act.len();
                let (out, argmax) =
                    ops::maxpool_forward_raw(&act, batch * shape[0], shape[1], window, stride);
                let size = (shape[1] - window) / stride + 1;
                shape = [shape[0], size, size];
                act = out;
                if let Some(c) = caches.as_deref_mut() {
                    c.push(Cache::Pool { argmax, input_len });
                }
            }
            Layer::Relu => {
                for v in &mut act {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                if let Some(c) = caches.as_deref_mut() {
                    c.push(Cache::Relu { out: act.clone() });
                }
            }
            Layer::Fc { outputs, inputs } => {
                let p = &params.layers[weighted];
                let out = ops::fc_forward_raw(
                    &act,
                    batch,
                    p.weights.as_slice(),
                    outputs,
                    inputs,
                    &p.bias,
                );
                shape = [outputs, 1, 1];
                weighted += 1;
                let input = std::mem::replace(&mut act, out);
                if let Some(c) = caches.as_deref_mut() {
                    c.push(Cache::Fc { input });
                }
            }
        }
    }
    act
}

fn backward(
    arch: &NetworkArch,
    params: &Params,
    caches: Vec<Cache>,
    dlogits: Vec<f64>,
    batch: usize,
) -> Params {
    let mut grads = Params::zeros(arch);
    let mut grad = dlogits;
    let mut weighted = params.layers.len();
    let layers = arch.layers();
    for (i, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
        // The first layer never needs an input gradient.
        let need_input = i > 0;
        match (layer, cache) {
            (Layer::Conv { .. }, Cache::Conv { cols, geom }) => {
                weighted -= 1;
                let p = &params.layers[weighted];
                let g = &mut grads.layers[weighted];
                let mut dinput = if need_input {
                    vec![0.0; geom.batch * geom.channels * geom.size * geom.size]
                } else {
                    Vec::new()
                };
                ops::conv_backward_raw(
                    &grad,
                    &cols,
                    p.weights.as_slice(),
                    &geom,
                    g.weights.as_mut_slice(),
                    &mut g.bias,
                    need_input.then_some(dinput.as_mut_slice()),
                );
                grad = dinput;
            }
            (Layer::Relu, Cache::Relu { out }) => {
                for (g, o) in grad.iter_mut().zip(&out) {
                    if *o <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            (Layer::Pool { .. }, Cache::Pool { argmax, input_len }) => {
                let mut dinput = vec![0.0; input_len];
                ops::maxpool_backward_raw(&grad, &argmax, &mut dinput);
                grad = dinput;
            }
            (&Layer::Fc { outputs, inputs }, Cache::Fc { input }) => {
                weighted -= 1;
                let p = &params.layers[weighted];
                let g = &mut grads.layers[weighted];
                let mut dinput = if need_input {
                    vec![0.0; batch * inputs]
                } else {
                    Vec::new()
                };
                ops::fc_backward_raw(
                    &grad,
                    &input,
                    batch,
                    p.weights.as_slice(),
                    outputs,
                    inputs,
                    g.weights.as_mut_slice(),
                    &mut g.bias,
                    need_input.then_some(dinput.as_mut_slice()),
                );
                grad = dinput;
            }
            _ => unreachable!("cache order follows layer order"),
        }
    }
    grads
}

/// Mean softmax cross-entropy of a labelled batch and its gradient with
/// respect to every weight and bias.
pub fn loss_and_backward(
    arch: &NetworkArch,
    params: &Params,
    images: &[f64],
    labels: &[u8],
) -> Result<(f64, Params)> {
    params.check_against(arch)?;
    let batch = labels.len();
    ensure!(batch > 0, InvalidInput, "empty batch");
    ensure!(
        images.len() == batch * arch.input_len(),
        Shape,
        "batch of {batch} needs {} input values, got {}",
        batch * arch.input_len(),
        images.len()
    );
    let classes = arch.classes();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(crate::Error::InvalidInput(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(loss_and_backward_unchecked(arch, params, images, labels))
}

pub(crate) fn loss_and_backward_unchecked(
    arch: &NetworkArch,
    params: &Params,
    images: &[f64],
    labels: &[u8],
) -> (f64, Params) {
    let batch = labels.len();
    let mut caches = Vec::with_capacity(arch.layers().len());
    let logits = forward_unchecked(arch, params, images, batch, Some(&mut caches));
    let (loss, dlogits) = ops::softmax_cross_entropy(&logits, labels, arch.classes());
    let grads = backward(arch, params, caches, dlogits, batch);
    (loss, grads)
}

/// Mean loss without gradients.
pub(crate) fn loss_unchecked(
    arch: &NetworkArch,
    params: &Params,
    images: &[f64],
    labels: &[u8],
) -> f64 {
    let logits = forward_unchecked(arch, params, images, labels.len(), None);
    ops::softmax_cross_entropy(&logits, labels, arch.classes()).0
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicated_sample_keeps_mean_loss() {
        let arch = NetworkArch::lenet();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = Params::init(&arch, &mut rng);
        let img: Vec<f64> = (0..784).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (single, _) = loss_and_backward(&arch, &params, &img, &[4]).unwrap();
        let doubled: Vec<f64> = img.iter().chain(&img).copied().collect();
        let (pair, _) = loss_and_backward(&arch, &params, &doubled, &[4, 4]).unwrap();
        assert!((single - pair).abs() < 1e-12);
    }

    #[test]
    fn zero_params_give_uniform_loss() {
        let arch = NetworkArch::lenet();
        let params = Params::zeros(&arch);
        let (loss, _) = loss_and_backward(&arch, &params, &vec![0.3; 784], &[7]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_label() {
        let arch = NetworkArch::lenet();
        let params = Params::zeros(&arch);
        assert!(loss_and_backward(&arch, &params, &vec![0.0; 784], &[10]).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let arch = NetworkArch::lenet();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = Params::init(&arch, &mut rng);
        let img: Vec<f64> = (0..784 * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let a = forward(&arch, &params, &img, 3).unwrap();
        let b = forward(&arch, &params, &img, 3).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
