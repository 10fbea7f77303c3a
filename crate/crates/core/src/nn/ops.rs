//! Layer kernels. Activations are batched `(batch, channels, height, width)`
//! buffers; convolution runs as im2col followed by one GEMM per batch.

use crate::error::{ensure, Result};

use super::tensor::{Tensor2, Tensor4};

/// `C (m×n) = A (m×k) · B (k×n)`, optionally accumulating into `C`.
///
/// `a_t` / `b_t` mean the operand is stored transposed (`k×m`, `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major (or transposed) buffers whose lengths were checked.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub channels: usize,
    pub size: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out: usize,
}

impl ConvGeom {
    pub fn positions(&self) -> usize {
        self.out * self.out
    }

    pub fn patch(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols_len(&self) -> usize {
        self.patch() * self.batch * self.positions()
    }
}

/// Unfolds `input` into a `(C·k·k) × (batch·H_out·W_out)` matrix.
pub(crate) fn im2col(input: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let (k, s, out, size) = (g.kernel, g.stride, g.out, g.size);
    let pos = g.positions();
    let width = g.batch * pos;
    for c in 0..g.channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst_row = &mut cols[row * width..(row + 1) * width];
                for b in 0..g.batch {
                    let plane = &input[(b * g.channels + c) * size * size..][..size * size];
                    let dst = &mut dst_row[b * pos..(b + 1) * pos];
                    for oy in 0..out {
                        let src = &plane[(oy * s + ky) * size + kx..];
                        let dst = &mut dst[oy * out..(oy + 1) * out];
                        if s == 1 {
                            dst.copy_from_slice(&src[..out]);
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d = src[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, dinput: &mut [f64]) {
    let (k, s, out, size) = (g.kernel, g.stride, g.out, g.size);
    let pos = g.positions();
    let width = g.batch * pos;
    dinput.fill(0.0);
    for c in 0..g.channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src_row = &cols[row * width..(row + 1) * width];
                for b in 0..g.batch {
                    let plane = &mut dinput[(b * g.channels + c) * size * size..][..size * size];
                    let src = &src_row[b * pos..(b + 1) * pos];
                    for oy in 0..out {
                        let base = (oy * s + ky) * size + kx;
                        for ox in 0..out {
                            plane[base + ox * s] += src[oy * out + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Batched convolution. Leaves the unfolded input in `cols` for the backward pass.
pub(crate) fn conv_forward_raw(
    input: &[f64],
    weights: &[f64],
    bias: &[f64],
    g: &ConvGeom,
    cols: &mut Vec<f64>,
) -> Vec<f64> {
    let pos = g.positions();
    let width = g.batch * pos;
    cols.clear();
    cols.resize(g.cols_len(), 0.0);
    im2col(input, g, cols);
    let mut tmp = vec![0.0; g.filters * width];
    gemm(
        g.filters,
        g.patch(),
        width,
        weights,
        false,
        cols,
        false,
        &mut tmp,
        false,
    );
    let mut out = vec![0.0; g.batch * g.filters * pos];
    for f in 0..g.filters {
        let b_f = bias[f];
        for b in 0..g.batch {
            let src = &tmp[f * width + b * pos..][..pos];
            let dst = &mut out[(b * g.filters + f) * pos..][..pos];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + b_f;
            }
        }
    }
    out
}

/// Gradients of a batched convolution. `dout` is `(batch, F, H_out·W_out)`.
/// Weight and bias gradients are accumulated; the input gradient is
/// written to `dinput` when requested.
pub(crate) fn conv_backward_raw(
    dout: &[f64],
    cols: &[f64],
    weights: &[f64],
    g: &ConvGeom,
    dweights: &mut [f64],
    dbias: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let pos = g.positions();
    let width = g.batch * pos;
    let mut dmat = vec![0.0; g.filters * width];
    for b in 0..g.batch {
        for f in 0..g.filters {
            let src = &dout[(b * g.filters + f) * pos..][..pos];
            dmat[f * width + b * pos..][..pos].copy_from_slice(src);
        }
    }
    for f in 0..g.filters {
        dbias[f] += dmat[f * width..(f + 1) * width].iter().sum::<f64>();
    }
    gemm(
        g.filters,
        width,
        g.patch(),
        &dmat,
        false,
        cols,
        true,
        dweights,
        true,
    );
    if let Some(dinput) = dinput {
        let mut dcols = vec![0.0; g.cols_len()];
        gemm(
            g.patch(),
            g.filters,
            width,
            weights,
            true,
            &dmat,
            false,
            &mut dcols,
            false,
        );
        col2im(&dcols, g, dinput);
    }
}

/// Max pooling over `(batch·C)` planes; returns outputs and the flat input
/// index of each maximum. Ties go to the first index in row-major order.
pub(crate) fn maxpool_forward_raw(
    input: &[f64],
    planes: usize,
    size: usize,
    window: usize,
    stride: usize,
) -> (Vec<f64>, Vec<usize>) {
    let out = (size - window) / stride + 1;
    let mut values = Vec::with_capacity(planes * out * out);
    let mut argmax = Vec::with_capacity(planes * out * out);
    for p in 0..planes {
        let base = p * size * size;
        for oy in 0..out {
            for ox in 0..out {
                let mut best = base + oy * stride * size + ox * stride;
                let mut best_v = input[best];
                for wy in 0..window {
                    for wx in 0..window {
                        let idx = base + (oy * stride + wy) * size + ox * stride + wx;
                        if input[idx] > best_v {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                }
                values.push(best_v);
                argmax.push(best);
            }
        }
    }
    (values, argmax)
}

pub(crate) fn maxpool_backward_raw(dout: &[f64], argmax: &[usize], dinput: &mut [f64]) {
    dinput.fill(0.0);
    for (d, &i) in dout.iter().zip(argmax) {
        dinput[i] += d;
    }
}

/// `out (batch×O) = input (batch×I) · Wᵀ + bias`.
pub(crate) fn fc_forward_raw(
    input: &[f64],
    batch: usize,
    weights: &[f64],
    outputs: usize,
    inputs: usize,
    bias: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; batch * outputs];
    for row in out.chunks_exact_mut(outputs.max(1)).take(batch) {
        row.copy_from_slice(&bias[..outputs]);
    }
    gemm(
        batch, inputs, outputs, input, false, weights, true, &mut out, true,
    );
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn fc_backward_raw(
    dout: &[f64],
    input: &[f64],
    batch: usize,
    weights: &[f64],
    outputs: usize,
    inputs: usize,
    dweights: &mut [f64],
    dbias: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    for row in dout.chunks_exact(outputs.max(1)).take(batch) {
        for (db, d) in dbias.iter_mut().zip(row) {
            *db += d;
        }
    }
    gemm(
        outputs, batch, inputs, dout, true, input, false, dweights, true,
    );
    if let Some(dinput) = dinput {
        gemm(
            batch, outputs, inputs, dout, false, weights, false, dinput, false,
        );
    }
}

/// Mean softmax cross-entropy over a batch of logits and its gradient.
pub(crate) fn softmax_cross_entropy(
    logits: &[f64],
    labels: &[u8],
    classes: usize,
) -> (f64, Vec<f64>) {
    let batch = labels.len();
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = max + sum.ln();
        loss += log_sum - row[label as usize];
        let g = &mut grad[b * classes..(b + 1) * classes];
        for (gi, v) in g.iter_mut().zip(row) {
            *gi = (v - log_sum).exp() / batch as f64;
        }
        g[label as usize] -= 1.0 / batch as f64;
    }
    (loss / batch as f64, grad)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Valid convolution of a `(N, C, H, W)` activation batch with `(F, C, k, k)` weights.
pub fn conv2d_forward(
    input: &Tensor4,
    weights: &Tensor4,
    bias: &[f64],
    stride: usize,
) -> Result<Tensor4> {
    let [n, c, h, w] = input.shape();
    let [f, wc, kh, kw] = weights.shape();
    ensure!(
        c == wc,
        Shape,
        "input has {c} channels, weights expect {wc}"
    );
    ensure!(
        h == w && kh == kw,
        Shape,
        "only square inputs and kernels are supported"
    );
    ensure!(kh <= h, Shape, "kernel {kh} larger than input {h}");
    ensure!(
        stride >= 1 && (h - kh) % stride == 0,
        Shape,
        "stride {stride} does not tile input {h} with kernel {kh}"
    );
    ensure!(
        bias.len() == f,
        Shape,
        "bias length {} for {f} filters",
        bias.len()
    );
    let g = ConvGeom {
        batch: n,
        channels: c,
        size: h,
        filters: f,
        kernel: kh,
        stride,
        out: (h - kh) / stride + 1,
    };
    let mut cols = Vec::new();
    let out = conv_forward_raw(input.as_slice(), weights.as_slice(), bias, &g, &mut cols);
    Ok(Tensor4::from_raw([n, f, g.out, g.out], out))
}

/// Max pooling; also returns the flat input index of each selected maximum.
pub fn maxpool_forward(
    input: &Tensor4,
    window: usize,
    stride: usize,
) -> Result<(Tensor4, Vec<usize>)> {
    let [n, c, h, w] = input.shape();
    ensure!(h == w, Shape, "only square inputs are supported");
    ensure!(
        window >= 1 && stride >= 1 && window <= h,
        Shape,
        "window {window} invalid for size {h}"
    );
    ensure!(
        (h - window).is_multiple_of(stride),
        Shape,
        "window {window} stride {stride} does not divide size {h}"
    );
    let out = (h - window) / stride + 1;
    let (values, argmax) = maxpool_forward_raw(input.as_slice(), n * c, h, window, stride);
    Ok((Tensor4::from_raw([n, c, out, out], values), argmax))
}

pub fn fc_forward(input: &[f64], weights: &Tensor2, bias: &[f64]) -> Result<Vec<f64>> {
    let [o, i] = weights.shape();
    ensure!(
        input.len() == i,
        Shape,
        "input length {} but weights expect {i}",
        input.len()
    );
    ensure!(
        bias.len() == o,
        Shape,
        "bias length {} for {o} outputs",
        bias.len()
    );
    Ok(fc_forward_raw(input, 1, weights.as_slice(), o, i, bias))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn conv_of_ones_sums_kernel() {
        let input = Tensor4::new([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let weights = Tensor4::new([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv2d_forward(&input, &weights, &[0.0], 1).unwrap();
        assert_eq!(out.shape(), [1, 1, 1, 1]);
        assert_eq!(out.as_slice(), &[9.0]);
    }

    #[test]
    fn conv_output_shape_lenet_first_layer() {
        let input = Tensor4::zeros([1, 1, 28, 28]);
        let weights = Tensor4::zeros([20, 1, 5, 5]);
        let out = conv2d_forward(&input, &weights, &[0.0; 20], 1).unwrap();
        assert_eq!(out.shape(), [1, 20, 24, 24]);
    }

    #[test]
    fn conv_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, c, size, f, k, stride) in
            &[(1, 2, 4, 3, 2, 1), (2, 3, 7, 4, 3, 2), (3, 1, 6, 2, 1, 1)]
        {
            let input =
                Tensor4::new([n, c, size, size], random(&mut rng, n * c * size * size)).unwrap();
            let weights = Tensor4::new([f, c, k, k], random(&mut rng, f * c * k * k)).unwrap();
            let bias = random(&mut rng, f);
            let out = conv2d_forward(&input, &weights, &bias, stride).unwrap();
            let o = (size - k) / stride + 1;
            for b in 0..n {
                for fi in 0..f {
                    for y in 0..o {
                        for x in 0..o {
                            let mut acc = bias[fi];
                            for ci in 0..c {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        acc += input.get(b, ci, y * stride + ky, x * stride + kx)
                                            * weights.get(fi, ci, ky, kx);
                                    }
                                }
                            }
                            assert!((out.get(b, fi, y, x) - acc).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor4::zeros([1, 2, 4, 4]);
        let weights = Tensor4::zeros([1, 3, 2, 2]);
        assert!(conv2d_forward(&input, &weights, &[0.0], 1).is_err());
    }

    #[test]
    fn conv_rejects_untiled_stride() {
        let input = Tensor4::zeros([1, 1, 6, 6]);
        let weights = Tensor4::zeros([1, 1, 3, 3]);
        assert!(conv2d_forward(&input, &weights, &[0.0], 2).is_err());
    }

    #[test]
    fn pool_picks_max() {
        let input = Tensor4::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, idx) = maxpool_forward(&input, 2, 2).unwrap();
        assert_eq!(out.as_slice(), &[4.0]);
        assert_eq!(idx, vec![3]);
    }

    #[test]
    fn pool_constant_input_ties_to_first() {
        let input = Tensor4::new([1, 1, 4, 4], vec![0.5; 16]).unwrap();
        let (out, idx) = maxpool_forward(&input, 2, 2).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.5));
        assert_eq!(idx, vec![0, 2, 8, 10]);
    }

    #[test]
    fn pool_halves_lenet_maps() {
        let input = Tensor4::zeros([1, 20, 24, 24]);
        let (out, _) = maxpool_forward(&input, 2, 2).unwrap();
        assert_eq!(out.shape(), [1, 20, 12, 12]);
    }

    #[test]
    fn pool_rejects_indivisible() {
        assert!(maxpool_forward(&Tensor4::zeros([1, 1, 5, 5]), 2, 2).is_err());
    }

    #[test]
    fn fc_identity_and_zero() {
        let eye = Tensor2::new([2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            fc_forward(&[3.0, 5.0], &eye, &[0.0, 0.0]).unwrap(),
            vec![3.0, 5.0]
        );
        let zero = Tensor2::zeros([3, 2]);
        assert_eq!(
            fc_forward(&[3.0, 5.0], &zero, &[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn fc_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = Tensor2::new([4, 6], random(&mut rng, 24)).unwrap();
        let x = random(&mut rng, 6);
        let b = random(&mut rng, 4);
        let out = fc_forward(&x, &w, &b).unwrap();
        for o in 0..4 {
            let mut acc = b[o];
            for i in 0..6 {
                acc += w.get(o, i) * x[i];
            }
            assert!((out[o] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn fc_rejects_length_mismatch() {
        assert!(fc_forward(&[1.0; 3], &Tensor2::zeros([2, 4]), &[0.0; 2]).is_err());
    }

    #[test]
    fn uniform_logits_give_ln10() {
        let (loss, _) = softmax_cross_entropy(&[0.25; 10], &[3], 10);
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits: Vec<f64> = (0..10).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let sum: f64 = softmax(&logits).iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ConvGeom {
            batch: 2,
            channels: 3,
            size: 7,
            filters: 1,
            kernel: 3,
            stride: 2,
            out: 3,
        };
        let x = random(&mut rng, 2 * 3 * 49);
        let y = random(&mut rng, g.cols_len());
        let mut cols = vec![0.0; g.cols_len()];
        im2col(&x, &g, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
