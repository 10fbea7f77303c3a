//! Structural compaction of a masked network.
//!
//! Output units (filters, neurons) whose results no alive downstream weight
//! reads are dropped, together with input units no kept unit reads. The
//! compacted network computes exactly the same logits as `params ⊙ masks`
//! while skipping pruned filters and channels.

use super::arch::{Layer, NetworkArch, WeightShape};
use super::network::{LayerParams, Params, Weights};
use super::tensor::{Tensor2, Tensor4};

pub(crate) struct Compacted {
    pub arch: NetworkArch,
    pub params: Params,
    pub masks: Vec<Vec<bool>>,
    keep: Vec<Keep>,
}

struct Keep {
    outputs: Vec<usize>,
    /// Kept input units: channels for conv, channel blocks for FC.
    units: Vec<usize>,
    /// Input positions per unit (1 for conv channels, H·W for flattened FC inputs).
    unit_width: usize,
}

/// Whether any weight connecting output `o` to input unit `u` is alive.
fn connected(shape: WeightShape, mask: &[bool], o: usize, u: usize, unit_width: usize) -> bool {
    match shape {
        WeightShape::Conv {
            channels, kernel, ..
        } => {
            let kk = kernel * kernel;
            mask[(o * channels + u) * kk..][..kk].iter().any(|&m| m)
        }
        WeightShape::Fc { inputs, .. } => mask[o * inputs + u * unit_width..][..unit_width]
            .iter()
            .any(|&m| m),
    }
}

pub(crate) fn compact(arch: &NetworkArch, params: &Params, masks: &[Vec<bool>]) -> Compacted {
    let shapes = arch.weight_shapes();
    let in_positions = arch.input_positions();
    let n = shapes.len();
    let mut keep: Vec<Option<Keep>> = (0..n).map(|_| None).collect();
    let mut needed: Vec<usize> = (0..shapes[n - 1].outputs()).collect();
    for l in (0..n).rev() {
        let shape = shapes[l];
        let unit_width = match shape {
            WeightShape::Conv { .. } => 1,
            WeightShape::Fc { .. } => in_positions[l],
        };
        let n_units = match shape {
            WeightShape::Conv { channels, .. } => channels,
            WeightShape::Fc { inputs, .. } => inputs / unit_width,
        };
        let units: Vec<usize> = if l == 0 {
            (0..n_units).collect()
        } else {
            (0..n_units)
                .filter(|&u| {
                    needed
                        .iter()
                        .any(|&o| connected(shape, &masks[l], o, u, unit_width))
                })
                .collect()
        };
        let next_needed = units.clone();
        keep[l] = Some(Keep {
            outputs: std::mem::replace(&mut needed, next_needed),
            units,
            unit_width,
        });
    }
    let keep: Vec<Keep> = keep.into_iter().map(|k| k.expect("filled above")).collect();

    let mut layers = Vec::with_capacity(arch.layers().len());
    let mut w = 0;
    for layer in arch.layers() {
        layers.push(match *layer {
            Layer::Conv {
                kernel,
                stride,
                input_size,
                ..
            } => {
                let k = &keep[w];
                w += 1;
                Layer::Conv {
                    filters: k.outputs.len(),
                    channels: k.units.len(),
                    kernel,
                    stride,
                    input_size,
                }
            }
            Layer::Fc { .. } => {
                let k = &keep[w];
                w += 1;
                Layer::Fc {
                    outputs: k.outputs.len(),
                    inputs: k.units.len() * k.unit_width,
                }
            }
            other => other,
        });
    }
    let carch =
        NetworkArch::new(arch.input(), layers).expect("compaction preserves shape composition");

    let mut cparams = Vec::with_capacity(n);
    let mut cmasks = Vec::with_capacity(n);
    for (l, k) in keep.iter().enumerate() {
        let src = params.layers[l].weights.as_slice();
        let mask = &masks[l];
        let mut wv = Vec::new();
        let mut mv = Vec::new();
        for_each_kept(shapes[l], k, |orig| {
            wv.push(if mask[orig] { src[orig] } else { 0.0 });
            mv.push(mask[orig]);
        });
        let weights = match shapes[l] {
            WeightShape::Conv { kernel, .. } => Weights::Conv(Tensor4::from_raw(
                [k.outputs.len(), k.units.len(), kernel, kernel],
                wv,
            )),
            WeightShape::Fc { .. } => Weights::Fc(Tensor2::from_raw(
                [k.outputs.len(), k.units.len() * k.unit_width],
                wv,
            )),
        };
        let bias = k
            .outputs
            .iter()
            .map(|&o| params.layers[l].bias[o])
            .collect();
        cparams.push(LayerParams { weights, bias });
        cmasks.push(mv);
    }
    Compacted {
        arch: carch,
        params: Params { layers: cparams },
        masks: cmasks,
        keep,
    }
}

/// Visits original flat weight indices of the kept sub-tensor in compact row-major order.
fn for_each_kept(shape: WeightShape, k: &Keep, mut f: impl FnMut(usize)) {
    match shape {
        WeightShape::Conv {
            channels, kernel, ..
        } => {
            let kk = kernel * kernel;
            for &o in &k.outputs {
                for &c in &k.units {
                    let base = (o * channels + c) * kk;
                    (base..base + kk).for_each(&mut f);
                }
            }
        }
        WeightShape::Fc { inputs, .. } => {
            for &o in &k.outputs {
                for &u in &k.units {
                    let base = o * inputs + u * k.unit_width;
                    (base..base + k.unit_width).for_each(&mut f);
                }
            }
        }
    }
}

impl Compacted {
    /// Writes trained compact parameters back into a full-size copy of `original`.
    /// Masked entries of the result are zero.
    pub fn scatter(&self, original: &Params, masks: &[Vec<bool>], trained: &Params) -> Params {
        let mut out = original.clone();
        for (l, k) in self.keep.iter().enumerate() {
            let shape = out.layers[l].weights.shape();
            let dst = out.layers[l].weights.as_mut_slice();
            let src = trained.layers[l].weights.as_slice();
            let mut i = 0;
            for_each_kept(shape, k, |orig| {
                dst[orig] = src[i];
                i += 1;
            });
            for (d, m) in dst.iter_mut().zip(&masks[l]) {
                if !m {
                    *d = 0.0;
                }
            }
            for (ci, &o) in k.outputs.iter().enumerate() {
                out.layers[l].bias[o] = trained.layers[l].bias[ci];
            }
        }
        out
    }
}
