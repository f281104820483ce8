//! Trainable parameters (and gradient containers of the same layout).

use serde::{Deserialize, Serialize};

use super::{LayerKind, NetworkSpec, Shape};
use crate::numerics::RandomStream;

/// Per-layer parameter block, aligned with the spec's layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerParams {
    FullyConnected {
        /// `inputs x units`, row-major.
        weights: Vec<f64>,
        bias: Vec<f64>,
        inputs: usize,
        units: usize,
    },
    BatchNorm {
        scale: Vec<f64>,
        shift: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    Conv2d {
        /// `filters x kernel_h x kernel_w x in_channels`, row-major.
        weights: Vec<f64>,
        bias: Vec<f64>,
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
    },
    Stateless,
}

/// All parameters of a network. Also reused as the gradient container:
/// [`NetworkParameters::zeros_like`] allocates the same layout filled with
/// zeros, and gradients for batch-norm running statistics stay zero (the
/// optimizer never touches them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParameters {
    layers: Vec<LayerParams>,
}

/// Gradient container; same layout as the parameters.
pub type Gradients = NetworkParameters;

enum Fill<'a> {
    /// He initialization: weights ~ N(0, 2 / fan_in), biases zero, batch
    /// norm at identity with running stats (0, 1).
    He(&'a mut RandomStream),
    Zeros,
}

impl NetworkParameters {
    pub fn init(spec: &NetworkSpec, stream: &mut RandomStream) -> Self {
        Self::build(spec, Fill::He(stream))
    }

    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        Self::build(spec, Fill::Zeros)
    }

    fn build(spec: &NetworkSpec, mut fill: Fill) -> Self {
        let shapes = spec.shape_chain().expect("spec validated at construction");
        let layers = spec
            .layers()
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let in_shape = shapes[i];
                match *layer {
                    LayerKind::FullyConnected { units } => {
                        let inputs = in_shape.size();
                        LayerParams::FullyConnected {
                            weights: draw_weights(&mut fill, inputs * units, inputs),
                            bias: vec![0.0; units],
                            inputs,
                            units,
                        }
                    }
                    LayerKind::BatchNorm => {
                        let f = in_shape.features();
                        let (scale, var) = match fill {
                            Fill::He(_) => (1.0, 1.0),
                            Fill::Zeros => (0.0, 0.0),
                        };
                        LayerParams::BatchNorm {
                            scale: vec![scale; f],
                            shift: vec![0.0; f],
                            running_mean: vec![0.0; f],
                            running_var: vec![var; f],
                        }
                    }
                    LayerKind::Conv2d {
                        filters,
                        kernel_h,
                        kernel_w,
                    } => {
                        let in_channels = match in_shape {
                            Shape::Grid { channels, .. } => channels,
                            Shape::Flat { .. } => unreachable!("validated spec"),
                        };
                        let fan_in = kernel_h * kernel_w * in_channels;
                        LayerParams::Conv2d {
                            weights: draw_weights(&mut fill, filters * fan_in, fan_in),
                            bias: vec![0.0; filters],
                            filters,
                            kernel_h,
                            kernel_w,
                            in_channels,
                        }
                    }
                    LayerKind::Relu | LayerKind::Flatten => LayerParams::Stateless,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    /// Trainable tensors in a fixed traversal order (weights then bias per
    /// FC/conv layer, scale then shift per batch-norm layer). Running
    /// statistics are not trainable and are skipped.
    pub fn trainable_tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::FullyConnected { weights, bias, .. }
                | LayerParams::Conv2d { weights, bias, .. } => {
                    out.push(weights.as_slice());
                    out.push(bias.as_slice());
                }
                LayerParams::BatchNorm { scale, shift, .. } => {
                    out.push(scale.as_slice());
                    out.push(shift.as_slice());
                }
                LayerParams::Stateless => {}
            }
        }
        out
    }

    /// Mutable variant of [`NetworkParameters::trainable_tensors`], same
    /// order.
    pub fn trainable_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::FullyConnected { weights, bias, .. }
                | LayerParams::Conv2d { weights, bias, .. } => {
                    out.push(weights.as_mut_slice());
                    out.push(bias.as_mut_slice());
                }
                LayerParams::BatchNorm { scale, shift, .. } => {
                    out.push(scale.as_mut_slice());
                    out.push(shift.as_mut_slice());
                }
                LayerParams::Stateless => {}
            }
        }
        out
    }

    /// Total trainable scalar count.
    pub fn num_trainable(&self) -> usize {
        self.trainable_tensors().iter().map(|t| t.len()).sum()
    }
}

fn draw_weights(fill: &mut Fill, count: usize, fan_in: usize) -> Vec<f64> {
    match fill {
        Fill::He(stream) => {
            let std = (2.0 / fan_in as f64).sqrt();
            (0..count).map(|_| std * stream.standard_normal()).collect()
        }
        Fill::Zeros => vec![0.0; count],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_fcnn_spec_with_widths, Head};

    fn tiny_spec() -> NetworkSpec {
        build_fcnn_spec_with_widths(&[201], 16, 36, Head::Softmax).unwrap()
    }

    #[test]
    fn shapes_follow_spec() {
        let spec = tiny_spec();
        let p = NetworkParameters::init(&spec, &mut RandomStream::new(1));
        match &p.layers()[0] {
            LayerParams::FullyConnected {
                weights,
                bias,
                inputs,
                units,
            } => {
                assert_eq!((*inputs, *units), (36, 201));
                assert_eq!(weights.len(), 36 * 201);
                assert_eq!(bias, &vec![0.0; 201]);
            }
            other => panic!("unexpected layer {other:?}"),
        }
        match &p.layers()[1] {
            LayerParams::BatchNorm {
                scale,
                shift,
                running_mean,
                running_var,
            } => {
                assert_eq!(scale, &vec![1.0; 201]);
                assert_eq!(shift, &vec![0.0; 201]);
                assert_eq!(running_mean, &vec![0.0; 201]);
                assert_eq!(running_var, &vec![1.0; 201]);
            }
            other => panic!("unexpected layer {other:?}"),
        }
    }

    #[test]
    fn init_is_deterministic() {
        let spec = tiny_spec();
        let a = NetworkParameters::init(&spec, &mut RandomStream::new(7));
        let b = NetworkParameters::init(&spec, &mut RandomStream::new(7));
        assert_eq!(a, b);
    }

    #[test]
    fn weight_variance_tracks_fan_in() {
        let spec = build_fcnn_spec_with_widths(&[256], 16, 64, Head::Softmax).unwrap();
        let p = NetworkParameters::init(&spec, &mut RandomStream::new(9));
        let LayerParams::FullyConnected { weights, .. } = &p.layers()[0] else {
            panic!("expected fully-connected layer");
        };
        assert!(weights.len() >= 10_000);
        let var = weights.iter().map(|w| w * w).sum::<f64>() / weights.len() as f64;
        let want = 2.0 / 64.0;
        assert!(
            (var - want).abs() < 0.1 * want,
            "variance {var}, expected about {want}"
        );
    }

    #[test]
    fn gradient_container_matches_traversal() {
        let spec = tiny_spec();
        let mut p = NetworkParameters::init(&spec, &mut RandomStream::new(2));
        let g = NetworkParameters::zeros_like(&spec);
        let pt = p.trainable_tensors_mut();
        let gt = g.trainable_tensors();
        assert_eq!(pt.len(), gt.len());
        for (a, b) in pt.iter().zip(&gt) {
            assert_eq!(a.len(), b.len());
            assert!(b.iter().all(|&x| x == 0.0));
        }
    }
}
