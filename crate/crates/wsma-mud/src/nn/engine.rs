//! Forward and backward passes.
//!
//! `forward` never mutates the parameters: in train mode the per-layer
//! batch statistics land in the returned cache and the caller folds them
//! into the running statistics with [`apply_bn_updates`]. That keeps the
//! pass pure, which the finite-difference gradient check relies on.

use super::loss::{loss_for_head, output_gradient};
use super::params::{Gradients, LayerParams, NetworkParameters};
use super::{Head, LayerKind, NetworkSpec, Shape};
use crate::error::{Error, Result};

/// Epsilon inside the batch-norm variance normalizer.
pub const BN_EPSILON: f64 = 1e-5;
/// Momentum of the exponential moving average over batch statistics.
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
enum LayerCache {
    /// The layer's input (fully-connected, ReLU, convolution).
    Input(Vec<f64>),
    BatchNorm {
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_mean: Vec<f64>,
        batch_var: Vec<f64>,
    },
    None,
}

/// Output of a forward pass plus everything backward needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Head outputs, `batch x n_label` row-major.
    pub outputs: Vec<f64>,
    pub batch: usize,
    mode: Mode,
    caches: Vec<LayerCache>,
    n_label: usize,
}

impl ForwardPass {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n_label(&self) -> usize {
        self.n_label
    }

    /// Output row for sample `b`.
    pub fn output_row(&self, b: usize) -> &[f64] {
        &self.outputs[b * self.n_label..(b + 1) * self.n_label]
    }
}

/// Run the network on a batch (`batch` concatenated samples).
pub fn forward(
    spec: &NetworkSpec,
    params: &NetworkParameters,
    input: &[f64],
    batch: usize,
    mode: Mode,
) -> Result<ForwardPass> {
    let shapes = spec.shape_chain()?;
    if batch == 0 {
        return Err(Error::EmptyInput("forward batch"));
    }
    if input.len() != batch * shapes[0].size() {
        return Err(Error::DimensionMismatch {
            context: "forward input",
            expected: format!("{} values", batch * shapes[0].size()),
            got: format!("{}", input.len()),
        });
    }
    let has_bn = spec
        .layers()
        .iter()
        .any(|l| matches!(l, LayerKind::BatchNorm));
    if mode == Mode::Train && has_bn && batch < 2 {
        return Err(Error::BatchTooSmall);
    }
    if params.layers().len() != spec.layers().len() {
        return Err(Error::CacheMismatch(
            "parameter layout does not match the spec".into(),
        ));
    }

    let mut cur = input.to_vec();
    let mut caches = Vec::with_capacity(spec.layers().len());
    for (i, (layer, lp)) in spec.layers().iter().zip(params.layers()).enumerate() {
        let in_shape = shapes[i];
        let (next, cache) = match (layer, lp) {
            (
                LayerKind::FullyConnected { .. },
                LayerParams::FullyConnected {
                    weights,
                    bias,
                    inputs,
                    units,
                },
            ) => {
                let mut out = vec![0.0; batch * units];
                matmul(&cur, weights, batch, *inputs, *units, &mut out);
                for row in out.chunks_exact_mut(*units) {
                    for (o, b) in row.iter_mut().zip(bias) {
                        *o += b;
                    }
                }
                (out, LayerCache::Input(std::mem::take(&mut cur)))
            }
            (
                LayerKind::BatchNorm,
                LayerParams::BatchNorm {
                    scale,
                    shift,
                    running_mean,
                    running_var,
                },
            ) => batch_norm_forward(
                std::mem::take(&mut cur),
                in_shape.features(),
                scale,
                shift,
                running_mean,
                running_var,
                mode,
            ),
            (LayerKind::Relu, LayerParams::Stateless) => {
                let out = cur.iter().map(|&x| x.max(0.0)).collect();
                (out, LayerCache::Input(std::mem::take(&mut cur)))
            }
            (
                LayerKind::Conv2d { .. },
                LayerParams::Conv2d {
                    weights,
                    bias,
                    filters,
                    kernel_h,
                    kernel_w,
                    in_channels,
                },
            ) => {
                let Shape::Grid {
                    height,
                    width,
                    channels,
                } = in_shape
                else {
                    unreachable!("validated spec");
                };
                debug_assert_eq!(channels, *in_channels);
                let out = conv_forward(
                    &cur, batch, height, width, channels, weights, bias, *filters, *kernel_h,
                    *kernel_w,
                );
                (out, LayerCache::Input(std::mem::take(&mut cur)))
            }
            (LayerKind::Flatten, LayerParams::Stateless) => {
                // Per-sample data is already contiguous.
                (std::mem::take(&mut cur), LayerCache::None)
            }
            _ => {
                return Err(Error::CacheMismatch(format!(
                    "layer {i}: parameter block does not match the layer kind"
                )))
            }
        };
        cur = next;
        caches.push(cache);
    }

    let n_label = shapes.last().unwrap().size();
    apply_head(spec.head(), &mut cur, n_label);
    Ok(ForwardPass {
        outputs: cur,
        batch,
        mode,
        caches,
        n_label,
    })
}

/// Fold the batch statistics recorded by a train-mode forward into the
/// running statistics: `running <- momentum * running + (1 - momentum) *
/// batch`.
pub fn apply_bn_updates(params: &mut NetworkParameters, fwd: &ForwardPass, momentum: f64) {
    for (lp, cache) in params.layers_mut().iter_mut().zip(&fwd.caches) {
        if let (
            LayerParams::BatchNorm {
                running_mean,
                running_var,
                ..
            },
            LayerCache::BatchNorm {
                batch_mean,
                batch_var,
                ..
            },
        ) = (lp, cache)
        {
            for (r, b) in running_mean.iter_mut().zip(batch_mean) {
                *r = momentum * *r + (1.0 - momentum) * b;
            }
            for (r, b) in running_var.iter_mut().zip(batch_var) {
                *r = momentum * *r + (1.0 - momentum) * b;
            }
        }
    }
}

/// Gradient of the batch-mean loss with respect to every trainable
/// parameter. Needs the cache of a train-mode [`forward`] on the same
/// batch; the labels select the head's paired loss.
pub fn backward(
    spec: &NetworkSpec,
    params: &NetworkParameters,
    fwd: &ForwardPass,
    labels: &[u8],
) -> Result<Gradients> {
    if fwd.mode != Mode::Train {
        return Err(Error::CacheMismatch(
            "backward needs a train-mode forward cache".into(),
        ));
    }
    if fwd.caches.len() != spec.layers().len() {
        return Err(Error::CacheMismatch(
            "cache depth does not match the spec".into(),
        ));
    }
    if labels.len() != fwd.batch * fwd.n_label {
        return Err(Error::LabelLength {
            expected: fwd.batch * fwd.n_label,
            got: labels.len(),
        });
    }
    let shapes = spec.shape_chain()?;
    let batch = fwd.batch;
    let n_label = fwd.n_label;
    let mut grads = NetworkParameters::zeros_like(spec);

    // Loss gradient at the head output, then through the head to the final
    // pre-activation.
    let gout = output_gradient(spec.head(), labels, &fwd.outputs, batch);
    let mut dcur: Vec<f64> = match spec.head() {
        Head::Softmax => {
            let mut d = vec![0.0; gout.len()];
            for b in 0..batch {
                let row = &fwd.outputs[b * n_label..(b + 1) * n_label];
                let grow = &gout[b * n_label..(b + 1) * n_label];
                let weighted: f64 = row.iter().zip(grow).map(|(p, g)| p * g).sum();
                for j in 0..n_label {
                    d[b * n_label + j] = row[j] * (grow[j] - weighted);
                }
            }
            d
        }
        Head::Sigmoid => fwd
            .outputs
            .iter()
            .zip(&gout)
            .map(|(&p, &g)| g * p * (1.0 - p))
            .collect(),
    };

    for i in (0..spec.layers().len()).rev() {
        let layer = spec.layers()[i];
        let lp = &params.layers()[i];
        let cache = &fwd.caches[i];
        let gp = &mut grads.layers_mut()[i];
        dcur = match (layer, lp, cache, gp) {
            (
                LayerKind::FullyConnected { .. },
                LayerParams::FullyConnected {
                    weights,
                    inputs,
                    units,
                    ..
                },
                LayerCache::Input(x),
                LayerParams::FullyConnected {
                    weights: dw,
                    bias: db,
                    ..
                },
            ) => {
                matmul_at_b(x, &dcur, batch, *inputs, *units, dw);
                for row in dcur.chunks_exact(*units) {
                    for (d, g) in db.iter_mut().zip(row) {
                        *d += g;
                    }
                }
                let mut dx = vec![0.0; batch * inputs];
                matmul_a_bt(&dcur, weights, batch, *units, *inputs, &mut dx);
                dx
            }
            (
                LayerKind::BatchNorm,
                LayerParams::BatchNorm { scale, .. },
                LayerCache::BatchNorm { x_hat, inv_std, .. },
                LayerParams::BatchNorm {
                    scale: dscale,
                    shift: dshift,
                    ..
                },
            ) => {
                let features = scale.len();
                let positions = x_hat.len() / features;
                let n = positions as f64;
                // First pass: per-feature reductions.
                for (xrow, drow) in x_hat
                    .chunks_exact(features)
                    .zip(dcur.chunks_exact(features))
                {
                    for f in 0..features {
                        dshift[f] += drow[f];
                        dscale[f] += drow[f] * xrow[f];
                    }
                }
                // Second pass: input gradient through the batch statistics.
                let mut dx = vec![0.0; dcur.len()];
                for ((xrow, drow), orow) in x_hat
                    .chunks_exact(features)
                    .zip(dcur.chunks_exact(features))
                    .zip(dx.chunks_exact_mut(features))
                {
                    for f in 0..features {
                        orow[f] = scale[f]
                            * inv_std[f]
                            * (drow[f] - dshift[f] / n - xrow[f] * dscale[f] / n);
                    }
                }
                dx
            }
            (LayerKind::Relu, LayerParams::Stateless, LayerCache::Input(x), _) => dcur
                .iter()
                .zip(x)
                .map(|(&g, &xv)| if xv > 0.0 { g } else { 0.0 })
                .collect(),
            (
                LayerKind::Conv2d { .. },
                LayerParams::Conv2d {
                    weights,
                    filters,
                    kernel_h,
                    kernel_w,
                    in_channels,
                    ..
                },
                LayerCache::Input(x),
                LayerParams::Conv2d {
                    weights: dw,
                    bias: db,
                    ..
                },
            ) => {
                let Shape::Grid {
                    height,
                    width,
                    channels,
                } = shapes[i]
                else {
                    unreachable!("validated spec");
                };
                debug_assert_eq!(channels, *in_channels);
                conv_backward(
                    x, &dcur, batch, height, width, channels, weights, *filters, *kernel_h,
                    *kernel_w, dw, db,
                )
            }
            (LayerKind::Flatten, LayerParams::Stateless, LayerCache::None, _) => dcur,
            _ => {
                return Err(Error::CacheMismatch(format!(
                    "layer {i}: cache does not match the layer kind"
                )))
            }
        };
    }
    Ok(grads)
}

/// Central-difference gradients of the head loss, as an independent check
/// of [`backward`]. Runs one forward per parameter perturbation, so keep it
/// to small verification networks.
pub fn finite_difference_gradients(
    spec: &NetworkSpec,
    params: &NetworkParameters,
    input: &[f64],
    batch: usize,
    labels: &[u8],
    step: f64,
) -> Result<Gradients> {
    let n_label = spec.output_len();
    let loss_at = |p: &NetworkParameters| -> Result<f64> {
        let fwd = forward(spec, p, input, batch, Mode::Train)?;
        Ok(loss_for_head(spec.head(), labels, &fwd.outputs, batch, n_label))
    };
    let mut grads = NetworkParameters::zeros_like(spec);
    let tensor_count = params.trainable_tensors().len();
    for t in 0..tensor_count {
        let len = params.trainable_tensors()[t].len();
        for e in 0..len {
            let mut plus = params.clone();
            plus.trainable_tensors_mut()[t][e] += step;
            let mut minus = params.clone();
            minus.trainable_tensors_mut()[t][e] -= step;
            let g = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * step);
            grads.trainable_tensors_mut()[t][e] = g;
        }
    }
    Ok(grads)
}

fn apply_head(head: Head, data: &mut [f64], n_label: usize) {
    match head {
        Head::Softmax => {
            for row in data.chunks_exact_mut(n_label) {
                // Max subtraction for overflow safety; the result is
                // mathematically unchanged.
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
        Head::Sigmoid => {
            for v in data.iter_mut() {
                *v = 1.0 / (1.0 + (-*v).exp());
            }
        }
    }
}

fn batch_norm_forward(
    x: Vec<f64>,
    features: usize,
    scale: &[f64],
    shift: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    mode: Mode,
) -> (Vec<f64>, LayerCache) {
    match mode {
        Mode::Infer => {
            let mut gain = vec![0.0; features];
            let mut offset = vec![0.0; features];
            for f in 0..features {
                gain[f] = scale[f] / (running_var[f] + BN_EPSILON).sqrt();
                offset[f] = shift[f] - gain[f] * running_mean[f];
            }
            let mut out = vec![0.0; x.len()];
            for (orow, xrow) in out
                .chunks_exact_mut(features)
                .zip(x.chunks_exact(features))
            {
                for f in 0..features {
                    orow[f] = gain[f] * xrow[f] + offset[f];
                }
            }
            (out, LayerCache::None)
        }
        Mode::Train => {
            let positions = x.len() / features;
            let n = positions as f64;
            let mut mean = vec![0.0; features];
            for row in x.chunks_exact(features) {
                for f in 0..features {
                    mean[f] += row[f];
                }
            }
            for m in mean.iter_mut() {
                *m /= n;
            }
            let mut var = vec![0.0; features];
            for row in x.chunks_exact(features) {
                for f in 0..features {
                    let d = row[f] - mean[f];
                    var[f] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v /= n;
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            let mut x_hat = vec![0.0; x.len()];
            let mut out = vec![0.0; x.len()];
            for ((xrow, hrow), orow) in x
                .chunks_exact(features)
                .zip(x_hat.chunks_exact_mut(features))
                .zip(out.chunks_exact_mut(features))
            {
                for f in 0..features {
                    let h = (xrow[f] - mean[f]) * inv_std[f];
                    hrow[f] = h;
                    orow[f] = scale[f] * h + shift[f];
                }
            }
            (
                out,
                LayerCache::BatchNorm {
                    x_hat,
                    inv_std,
                    batch_mean: mean,
                    batch_var: var,
                },
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    batch: usize,
    ih: usize,
    iw: usize,
    ic: usize,
    weights: &[f64],
    bias: &[f64],
    filters: usize,
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let oh = ih - kh + 1;
    let ow = iw - kw + 1;
    let in_sample = ih * iw * ic;
    let out_sample = oh * ow * filters;
    let krow = kw * ic;
    let mut out = vec![0.0; batch * out_sample];
    for b in 0..batch {
        let xs = &x[b * in_sample..(b + 1) * in_sample];
        let os = &mut out[b * out_sample..(b + 1) * out_sample];
        for oi in 0..oh {
            for oj in 0..ow {
                let obase = (oi * ow + oj) * filters;
                for f in 0..filters {
                    let mut acc = bias[f];
                    for di in 0..kh {
                        let xoff = ((oi + di) * iw + oj) * ic;
                        let woff = (f * kh + di) * krow;
                        acc += dot(&xs[xoff..xoff + krow], &weights[woff..woff + krow]);
                    }
                    os[obase + f] = acc;
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    dy: &[f64],
    batch: usize,
    ih: usize,
    iw: usize,
    ic: usize,
    weights: &[f64],
    filters: usize,
    kh: usize,
    kw: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let oh = ih - kh + 1;
    let ow = iw - kw + 1;
    let in_sample = ih * iw * ic;
    let out_sample = oh * ow * filters;
    let krow = kw * ic;
    let mut dx = vec![0.0; batch * in_sample];
    for b in 0..batch {
        let xs = &x[b * in_sample..(b + 1) * in_sample];
        let dxs = &mut dx[b * in_sample..(b + 1) * in_sample];
        let dys = &dy[b * out_sample..(b + 1) * out_sample];
        for oi in 0..oh {
            for oj in 0..ow {
                let obase = (oi * ow + oj) * filters;
                for f in 0..filters {
                    let g = dys[obase + f];
                    if g == 0.0 {
                        continue;
                    }
                    db[f] += g;
                    for di in 0..kh {
                        let xoff = ((oi + di) * iw + oj) * ic;
                        let woff = (f * kh + di) * krow;
                        let xrow = &xs[xoff..xoff + krow];
                        let wrow = &weights[woff..woff + krow];
                        let dwrow = &mut dw[woff..woff + krow];
                        let dxrow = &mut dxs[xoff..xoff + krow];
                        for t in 0..krow {
                            dwrow[t] += g * xrow[t];
                            dxrow[t] += g * wrow[t];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// `C(m x n) = A(m x k) * B(k x n)`, all row-major.
fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    c.fill(0.0);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
}

/// `C(m x n) += A^T B` for `A(rows x m)`, `B(rows x n)`.
fn matmul_at_b(a: &[f64], b: &[f64], rows: usize, m: usize, n: usize, c: &mut [f64]) {
    for r in 0..rows {
        let arow = &a[r * m..(r + 1) * m];
        let brow = &b[r * n..(r + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `C(m x n) = A(m x k) * B^T` for `B(n x k)`.
fn matmul_a_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            *cv = dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// Four-accumulator dot product (fixed summation order, so results are
/// reproducible run to run).
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let a4 = a.chunks_exact(4);
    let b4 = b.chunks_exact(4);
    let mut tail = 0.0;
    for (x, y) in a4.remainder().iter().zip(b4.remainder()) {
        tail += x * y;
    }
    for (x, y) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
