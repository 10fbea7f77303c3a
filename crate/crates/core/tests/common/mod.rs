//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use evoprune::genome::{apply_masks, propagate_masks};
use evoprune::nn::{loss_and_backward, Layer, NetworkArch, Params, WeightShape};
use evoprune::Genome;
use rand::Rng;

/// `EVOPRUNE_MNIST_DIR`, else `data/mnist` at the workspace root.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("EVOPRUNE_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn mnist_available() -> bool {
    evoprune::mnist::load_dir(mnist_dir()).is_ok()
}

/// conv(2@3×3) → relu → pool → conv(3@3×3) → relu → pool → fc(8) → relu → fc(10) on 10×10 input.
pub fn tiny_arch() -> NetworkArch {
    NetworkArch::new(
        [1, 10, 10],
        vec![
            Layer::Conv {
                filters: 2,
                channels: 1,
                kernel: 3,
                stride: 1,
                input_size: 10,
            },
            Layer::Relu,
            Layer::Pool {
                window: 2,
                stride: 2,
            },
            Layer::Conv {
                filters: 3,
                channels: 2,
                kernel: 3,
                stride: 1,
                input_size: 4,
            },
            Layer::Relu,
            Layer::Pool {
                window: 2,
                stride: 2,
            },
            Layer::Fc {
                outputs: 8,
                inputs: 3,
            },
            Layer::Relu,
            Layer::Fc {
                outputs: 10,
                inputs: 8,
            },
        ],
    )
    .unwrap()
}

/// conv(4@3×3) → relu → pool → conv(5@3×3) → relu → pool → fc(6) → relu → fc(10) on 14×14 input.
pub fn small_arch() -> NetworkArch {
    NetworkArch::new(
        [1, 14, 14],
        vec![
            Layer::Conv {
                filters: 4,
                channels: 1,
                kernel: 3,
                stride: 1,
                input_size: 14,
            },
            Layer::Relu,
            Layer::Pool {
                window: 2,
                stride: 2,
            },
            Layer::Conv {
                filters: 5,
                channels: 4,
                kernel: 3,
                stride: 1,
                input_size: 6,
            },
            Layer::Relu,
            Layer::Pool {
                window: 2,
                stride: 2,
            },
            Layer::Fc {
                outputs: 6,
                inputs: 20,
            },
            Layer::Relu,
            Layer::Fc {
                outputs: 10,
                inputs: 6,
            },
        ],
    )
    .unwrap()
}

/// Random params with nonzero biases, so ReLUs sit away from their kinks.
pub fn random_params<R: Rng>(arch: &NetworkArch, rng: &mut R) -> Params {
    let mut p = Params::init(arch, rng);
    for layer in &mut p.layers {
        for b in &mut layer.bias {
            *b = rng.gen_range(-0.1..0.1);
        }
    }
    p
}

/// Relative error with a floor on the denominator for entries that are
/// zero in both gradients.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Largest relative error between backprop and central differences at
/// `eps`, over every weight and bias of every layer. Returns
/// `(layer, worst error)` pairs.
pub fn gradient_check<R: Rng>(
    arch: &NetworkArch,
    batch: usize,
    eps: f64,
    rng: &mut R,
) -> Vec<(usize, f64)> {
    let params = random_params(arch, rng);
    let images: Vec<f64> = (0..batch * arch.input_len())
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    let labels: Vec<u8> = (0..batch).map(|i| (i % arch.classes()) as u8).collect();
    let (_, grads) = loss_and_backward(arch, &params, &images, &labels).unwrap();
    let loss_at = |p: &Params| loss_and_backward(arch, p, &images, &labels).unwrap().0;

    let mut worst = Vec::new();
    for l in 0..params.layers.len() {
        let mut max_err: f64 = 0.0;
        let n_w = params.layers[l].weights.len();
        for i in 0..n_w {
            let mut plus = params.clone();
            plus.layers[l].weights.as_mut_slice()[i] += eps;
            let mut minus = params.clone();
            minus.layers[l].weights.as_mut_slice()[i] -= eps;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            max_err = max_err.max(relative_error(
                grads.layers[l].weights.as_slice()[i],
                numeric,
            ));
        }
        for i in 0..params.layers[l].bias.len() {
            let mut plus = params.clone();
            plus.layers[l].bias[i] += eps;
            let mut minus = params.clone();
            minus.layers[l].bias[i] -= eps;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            max_err = max_err.max(relative_error(grads.layers[l].bias[i], numeric));
        }
        worst.push((l, max_err));
    }
    worst
}

/// Counts multiply-accumulates by visiting every output position of every
/// conv filter and every FC output, adding one per alive weight touched.
pub fn brute_force_macs(g: &Genome) -> u64 {
    let mut total = 0u64;
    let mut weighted = 0;
    for layer in g.arch().layers() {
        match *layer {
            Layer::Conv {
                filters,
                channels,
                kernel,
                stride,
                input_size,
            } => {
                let mask = &g.masks()[weighted];
                let out = (input_size - kernel) / stride + 1;
                for f in 0..filters {
                    for _oy in 0..out {
                        for _ox in 0..out {
                            for c in 0..channels {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let idx = ((f * channels + c) * kernel + ky) * kernel + kx;
                                        if mask[idx] {
                                            total += 1;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                weighted += 1;
            }
            Layer::Fc { outputs, inputs } => {
                let mask = &g.masks()[weighted];
                for o in 0..outputs {
                    for i in 0..inputs {
                        if mask[o * inputs + i] {
                            total += 1;
                        }
                    }
                }
                weighted += 1;
            }
            Layer::Relu | Layer::Pool { .. } => {}
        }
    }
    total
}

/// A genome on `arch` with random filter kills, random kernel-slice kills and
/// random FC connection kills, made consistent by propagation.
pub fn random_genome<R: Rng>(arch: &Arc<NetworkArch>, rng: &mut R) -> Genome {
    let params = Params::init(arch, rng);
    let filter_rate = rng.gen_range(0.0..0.6);
    let slice_rate = rng.gen_range(0.0..0.3);
    let fc_rate = rng.gen_range(0.0..1.0);
    let masks = arch
        .weight_shapes()
        .iter()
        .map(|shape| match *shape {
            WeightShape::Conv {
                filters,
                channels,
                kernel,
            } => {
                let k2 = kernel * kernel;
                let mut m = vec![true; filters * channels * k2];
                for f in 0..filters {
                    let dead_filter = rng.gen_bool(filter_rate);
                    for c in 0..channels {
                        if dead_filter || rng.gen_bool(slice_rate) {
                            let start = (f * channels + c) * k2;
                            m[start..start + k2].fill(false);
                        }
                    }
                }
                m
            }
            WeightShape::Fc { outputs, inputs } => (0..outputs * inputs)
                .map(|_| !rng.gen_bool(fc_rate))
                .collect(),
        })
        .collect();
    apply_masks(&propagate_masks(
        &Genome::from_parts(arch.clone(), params, masks).unwrap(),
    ))
}
