//! From-scratch feed-forward engine: fully-connected and 2D-convolutional
//! layers, batch normalization, ReLU, softmax/sigmoid heads, the two
//! cross-entropy losses (base-2 logs), analytic backpropagation and an
//! adaptive-moment optimizer.
//!
//! Data layout is always `f64`, batch-major: a batch is the concatenation
//! of per-sample buffers. Grid-shaped samples are stored height x width x
//! channels, row-major with channels last.

mod adam;
mod engine;
mod loss;
mod params;

pub use adam::AdamState;
pub use engine::{
    apply_bn_updates, backward, finite_difference_gradients, forward, ForwardPass, Mode,
    BN_EPSILON, BN_MOMENTUM,
};
pub use loss::{
    binary_cross_entropy, categorical_cross_entropy, loss_for_head, PROB_CLAMP,
};
pub use params::{Gradients, LayerParams, NetworkParameters};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logical shape of the data between layers (per sample).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Flat { len: usize },
    Grid { height: usize, width: usize, channels: usize },
}

impl Shape {
    /// Scalar count per sample.
    pub fn size(&self) -> usize {
        match *self {
            Shape::Flat { len } => len,
            Shape::Grid {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }

    /// The axis batch normalization normalizes over: features for flat
    /// data, channels for grid data.
    pub fn features(&self) -> usize {
        match *self {
            Shape::Flat { len } => len,
            Shape::Grid { channels, .. } => channels,
        }
    }
}

/// One layer of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    FullyConnected { units: usize },
    BatchNorm,
    Relu,
    /// 2D convolution, stride 1, valid padding (no zeros added), filters
    /// spanning all input channels.
    Conv2d {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
    },
    Flatten,
}

/// Output activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    Sigmoid,
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Head::Softmax => write!(f, "softmax"),
            Head::Sigmoid => write!(f, "sigmoid"),
        }
    }
}

/// Shorthand for one convolutional stage of a default stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
}

/// Validated layer topology. Construction (and [`NetworkSpec::validate`]
/// after deserializing) checks that consecutive shapes are consistent and
/// that the data ends in a flat vector for the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    input: Shape,
    layers: Vec<LayerKind>,
    head: Head,
}

impl NetworkSpec {
    pub fn new(input: Shape, layers: Vec<LayerKind>, head: Head) -> Result<Self> {
        let spec = Self {
            input,
            layers,
            head,
        };
        spec.shape_chain()?;
        Ok(spec)
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn layers(&self) -> &[LayerKind] {
        &self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    /// Re-run the construction checks (used after deserializing).
    pub fn validate(&self) -> Result<()> {
        self.shape_chain().map(|_| ())
    }

    /// Per-layer output shapes; entry 0 is the input shape, entry i+1 the
    /// output of layer i.
    pub fn shape_chain(&self) -> Result<Vec<Shape>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input);
        for (idx, layer) in self.layers.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            let next = match *layer {
                LayerKind::FullyConnected { units } => {
                    if units == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {idx}: fully-connected layer with zero units"
                        )));
                    }
                    match cur {
                        Shape::Flat { .. } => Shape::Flat { len: units },
                        Shape::Grid { .. } => {
                            return Err(Error::InvalidSpec(format!(
                                "layer {idx}: fully-connected layer needs flat input \
                                 (insert a flatten layer)"
                            )))
                        }
                    }
                }
                LayerKind::BatchNorm | LayerKind::Relu => cur,
                LayerKind::Conv2d {
                    filters,
                    kernel_h,
                    kernel_w,
                } => match cur {
                    Shape::Grid {
                        height,
                        width,
                        channels,
                    } => {
                        if filters == 0 || kernel_h == 0 || kernel_w == 0 {
                            return Err(Error::InvalidSpec(format!(
                                "layer {idx}: degenerate convolution parameters"
                            )));
                        }
                        if kernel_h > height || kernel_w > width {
                            return Err(Error::ShapeUnderflow {
                                layer: idx,
                                detail: format!(
                                    "({kernel_h},{kernel_w}) kernel on a \
                                     {height}x{width}x{channels} input under valid padding"
                                ),
                            });
                        }
                        Shape::Grid {
                            height: height - kernel_h + 1,
                            width: width - kernel_w + 1,
                            channels: filters,
                        }
                    }
                    Shape::Flat { .. } => {
                        return Err(Error::InvalidSpec(format!(
                            "layer {idx}: convolution needs grid input"
                        )))
                    }
                },
                LayerKind::Flatten => Shape::Flat { len: cur.size() },
            };
            shapes.push(next);
        }
        match shapes.last() {
            Some(Shape::Flat { len }) if *len > 0 => Ok(shapes),
            _ => Err(Error::InvalidSpec(
                "network must end in a non-empty flat vector".into(),
            )),
        }
    }

    /// Length of the head output. Panics only on a spec that bypassed
    /// validation.
    pub fn output_len(&self) -> usize {
        self.shape_chain()
            .expect("spec validated at construction")
            .last()
            .unwrap()
            .size()
    }
}

/// Hidden fully-connected widths for the supported user counts.
pub fn fcnn_hidden_widths(users: usize) -> Result<Vec<usize>> {
    match users {
        2 => Ok(vec![201, 351, 263]),
        4 => Ok(vec![201, 351, 651, 573, 341, 263]),
        _ => Err(Error::UnsupportedUserCount {
            users,
            context: "fully-connected architecture (use an explicit width list)",
        }),
    }
}

/// Fully-connected classifier: `FC(w), BN, ReLU` per hidden width, then
/// `FC(n_label)` and the head.
pub fn build_fcnn_spec_with_widths(
    hidden: &[usize],
    n_label: usize,
    input_len: usize,
    head: Head,
) -> Result<NetworkSpec> {
    let mut layers = Vec::with_capacity(hidden.len() * 3 + 1);
    for &w in hidden {
        layers.push(LayerKind::FullyConnected { units: w });
        layers.push(LayerKind::BatchNorm);
        layers.push(LayerKind::Relu);
    }
    layers.push(LayerKind::FullyConnected { units: n_label });
    NetworkSpec::new(Shape::Flat { len: input_len }, layers, head)
}

/// Fully-connected classifier with the per-user-count default widths.
pub fn build_fcnn_spec(
    users: usize,
    n_label: usize,
    input_len: usize,
    head: Head,
) -> Result<NetworkSpec> {
    build_fcnn_spec_with_widths(&fcnn_hidden_widths(users)?, n_label, input_len, head)
}

/// Default convolutional stacks for the supported user counts.
///
/// Two users: two 65-filter (2,2) layers then two 37-filter (1,2) layers.
/// The input is only K+1+K columns wide and every width-2 kernel removes a
/// column under valid padding, so deeper stacks of these filters do not fit
/// (the builder rejects them with a shape underflow). Four users: four
/// 193-filter (2,2) layers then four 64-filter (1,2) layers, which exactly
/// consumes the 9-column input.
pub fn default_cnn_stack(users: usize) -> Result<Vec<ConvSpec>> {
    let stage = |filters, kernel_h, kernel_w, count: usize| {
        std::iter::repeat(ConvSpec {
            filters,
            kernel_h,
            kernel_w,
        })
        .take(count)
    };
    match users {
        2 => Ok(stage(65, 2, 2, 2).chain(stage(37, 1, 2, 2)).collect()),
        4 => Ok(stage(193, 2, 2, 4).chain(stage(64, 1, 2, 4)).collect()),
        _ => Err(Error::UnsupportedUserCount {
            users,
            context: "convolutional architecture (use an explicit stack)",
        }),
    }
}

/// Convolutional classifier: `conv, BN, ReLU` per stage, then flatten,
/// `FC(n_label)` and the head. The shape chain is validated against the
/// given input; a kernel that does not fit yields a shape-underflow error.
pub fn build_cnn_spec_with_stack(
    stack: &[ConvSpec],
    n_label: usize,
    input: Shape,
    head: Head,
) -> Result<NetworkSpec> {
    let mut layers = Vec::with_capacity(stack.len() * 3 + 2);
    for conv in stack {
        layers.push(LayerKind::Conv2d {
            filters: conv.filters,
            kernel_h: conv.kernel_h,
            kernel_w: conv.kernel_w,
        });
        layers.push(LayerKind::BatchNorm);
        layers.push(LayerKind::Relu);
    }
    layers.push(LayerKind::Flatten);
    layers.push(LayerKind::FullyConnected { units: n_label });
    NetworkSpec::new(input, layers, head)
}

/// Convolutional classifier with the per-user-count default stack.
pub fn build_cnn_spec(
    users: usize,
    n_label: usize,
    input: Shape,
    head: Head,
) -> Result<NetworkSpec> {
    build_cnn_spec_with_stack(&default_cnn_stack(users)?, n_label, input, head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fcnn_spec_for_two_users() {
        let spec = build_fcnn_spec(2, 16, 36, Head::Softmax).unwrap();
        // Three hidden blocks of (FC, BN, ReLU), then the output FC.
        assert_eq!(spec.layers().len(), 10);
        assert_eq!(spec.output_len(), 16);
        let widths: Vec<usize> = spec
            .layers()
            .iter()
            .filter_map(|l| match l {
                LayerKind::FullyConnected { units } => Some(*units),
                _ => None,
            })
            .collect();
        assert_eq!(widths, vec![201, 351, 263, 16]);
    }

    #[test]
    fn fcnn_spec_for_four_users() {
        let spec = build_fcnn_spec(4, 256, 60, Head::Softmax).unwrap();
        let widths: Vec<usize> = spec
            .layers()
            .iter()
            .filter_map(|l| match l {
                LayerKind::FullyConnected { units } => Some(*units),
                _ => None,
            })
            .collect();
        assert_eq!(widths, vec![201, 351, 651, 573, 341, 263, 256]);
    }

    #[test]
    fn fcnn_sigmoid_output_width() {
        let spec = build_fcnn_spec(2, 4, 36, Head::Sigmoid).unwrap();
        assert_eq!(spec.output_len(), 4);
    }

    #[test]
    fn fcnn_rejects_unsupported_users() {
        assert!(build_fcnn_spec(3, 64, 36, Head::Softmax).is_err());
        // Explicit widths still work for other user counts.
        assert!(build_fcnn_spec_with_widths(&[32, 16], 64, 36, Head::Softmax).is_ok());
    }

    #[test]
    fn valid_padding_shape_arithmetic() {
        let spec = NetworkSpec::new(
            Shape::Grid {
                height: 12,
                width: 5,
                channels: 1,
            },
            vec![LayerKind::Conv2d {
                filters: 3,
                kernel_h: 2,
                kernel_w: 2,
            }],
            Head::Softmax,
        );
        // Ends in a grid: construction fails on the missing flatten.
        assert!(spec.is_err());

        let spec = NetworkSpec::new(
            Shape::Grid {
                height: 12,
                width: 5,
                channels: 1,
            },
            vec![
                LayerKind::Conv2d {
                    filters: 3,
                    kernel_h: 2,
                    kernel_w: 2,
                },
                LayerKind::Flatten,
            ],
            Head::Softmax,
        )
        .unwrap();
        let shapes = spec.shape_chain().unwrap();
        assert_eq!(
            shapes[1],
            Shape::Grid {
                height: 11,
                width: 4,
                channels: 3
            }
        );
        assert_eq!(shapes[2], Shape::Flat { len: 11 * 4 * 3 });
    }

    #[test]
    fn default_cnn_stack_for_two_users_fits_with_sequences() {
        // 2*L*Nr = 12 rows, K+1+K = 5 columns.
        let input = Shape::Grid {
            height: 12,
            width: 5,
            channels: 1,
        };
        let spec = build_cnn_spec(2, 16, input, Head::Softmax).unwrap();
        let shapes = spec.shape_chain().unwrap();
        // (12,5) -> (11,4) -> (10,3) -> (10,2) -> (10,1) -> flatten 370.
        assert_eq!(
            shapes[shapes.len() - 3],
            Shape::Grid {
                height: 10,
                width: 1,
                channels: 37
            }
        );
        assert_eq!(spec.output_len(), 16);
    }

    #[test]
    fn seven_stage_stack_for_two_users_underflows() {
        // Two (2,2) stages plus five (1,2) stages need seven width
        // reductions; a 5-column input runs out after four.
        let mut stack = vec![
            ConvSpec {
                filters: 65,
                kernel_h: 2,
                kernel_w: 2,
            };
            2
        ];
        stack.extend(vec![
            ConvSpec {
                filters: 37,
                kernel_h: 1,
                kernel_w: 2,
            };
            5
        ]);
        let input = Shape::Grid {
            height: 12,
            width: 5,
            channels: 1,
        };
        let err = build_cnn_spec_with_stack(&stack, 16, input, Head::Softmax).unwrap_err();
        assert!(matches!(err, Error::ShapeUnderflow { .. }), "{err}");
        // Narrower still without the sequence columns.
        let input = Shape::Grid {
            height: 12,
            width: 3,
            channels: 1,
        };
        assert!(build_cnn_spec(2, 16, input, Head::Softmax).is_err());
    }

    #[test]
    fn default_cnn_stack_for_four_users_consumes_input() {
        // 2*L*Nr = 12 rows, K+1+K = 9 columns.
        let input = Shape::Grid {
            height: 12,
            width: 9,
            channels: 1,
        };
        let spec = build_cnn_spec(4, 256, input, Head::Softmax).unwrap();
        let shapes = spec.shape_chain().unwrap();
        // Four (2,2) stages: (12,9) -> (8,5); four (1,2) stages: (8,5) -> (8,1).
        assert_eq!(
            shapes[shapes.len() - 3],
            Shape::Grid {
                height: 8,
                width: 1,
                channels: 64
            }
        );
        assert_eq!(spec.output_len(), 256);
    }

    #[test]
    fn spec_round_trips_through_serde() {
        let spec = build_fcnn_spec(2, 16, 36, Head::Softmax).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back, spec);
    }
}
