use crate::error::{ensure, Error, Result};

/// One stage of a feed-forward network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Valid (unpadded) square convolution over a square input.
    Conv {
        filters: usize,
        channels: usize,
        kernel: usize,
        stride: usize,
        input_size: usize,
    },
    /// Max pooling with a square window.
    Pool {
        window: usize,
        stride: usize,
    },
    Relu,
    /// Fully connected; flattens `(C, H, W)` inputs in row-major order.
    Fc {
        outputs: usize,
        inputs: usize,
    },
}

impl Layer {
    pub fn is_weighted(&self) -> bool {
        matches!(self, Layer::Conv { .. } | Layer::Fc { .. })
    }
}

/// Shape of one weighted layer's parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightShape {
    Conv {
        filters: usize,
        channels: usize,
        kernel: usize,
    },
    Fc {
        outputs: usize,
        inputs: usize,
    },
}

impl WeightShape {
    pub fn len(&self) -> usize {
        match *self {
            WeightShape::Conv {
                filters,
                channels,
                kernel,
            } => filters * channels * kernel * kernel,
            WeightShape::Fc { outputs, inputs } => outputs * inputs,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of output units (filters or neurons), which is also the bias length.
    pub fn outputs(&self) -> usize {
        match *self {
            WeightShape::Conv { filters, .. } => filters,
            WeightShape::Fc { outputs, .. } => outputs,
        }
    }

    /// Number of weights feeding one output unit.
    pub fn fan_in(&self) -> usize {
        match *self {
            WeightShape::Conv {
                channels, kernel, ..
            } => channels * kernel * kernel,
            WeightShape::Fc { inputs, .. } => inputs,
        }
    }
}

/// Static description of a network: input shape plus an ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkArch {
    input: [usize; 3],
    layers: Vec<Layer>,
}

impl NetworkArch {
    pub fn new(input: [usize; 3], layers: Vec<Layer>) -> Result<Self> {
        let arch = Self { input, layers };
        arch.validate()?;
        Ok(arch)
    }

    /// The LeNet variant used throughout: two 5×5 convs with 2×2 pooling,
    /// then a 500-unit hidden layer and a 10-way classifier.
    pub fn lenet() -> Self {
        Self::new(
            [1, 28, 28],
            vec![
                Layer::Conv {
                    filters: 20,
                    channels: 1,
                    kernel: 5,
                    stride: 1,
                    input_size: 28,
                },
                Layer::Relu,
                Layer::Pool {
                    window: 2,
                    stride: 2,
                },
                Layer::Conv {
                    filters: 50,
                    channels: 20,
                    kernel: 5,
                    stride: 1,
                    input_size: 12,
                },
                Layer::Relu,
                Layer::Pool {
                    window: 2,
                    stride: 2,
                },
                Layer::Fc {
                    outputs: 500,
                    inputs: 800,
                },
                Layer::Relu,
                Layer::Fc {
                    outputs: 10,
                    inputs: 500,
                },
            ],
        )
        .expect("lenet architecture is consistent")
    }

    pub fn input(&self) -> [usize; 3] {
        self.input
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Fc { outputs, .. }) => *outputs,
            _ => unreachable!("validated architecture ends in a classifier"),
        }
    }

    /// Activation shape `(C, H, W)` after every layer; index 0 is the input.
    pub fn activation_shapes(&self) -> Vec<[usize; 3]> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input;
        shapes.push(cur);
        for layer in &self.layers {
            cur = match *layer {
                Layer::Conv {
                    filters,
                    kernel,
                    stride,
                    ..
                } => {
                    let out = (cur[1] - kernel) / stride + 1;
                    [filters, out, out]
                }
                Layer::Pool { window, stride } => {
                    let out = (cur[1] - window) / stride + 1;
                    [cur[0], out, out]
                }
                Layer::Relu => cur,
                Layer::Fc { outputs, .. } => [outputs, 1, 1],
            };
            shapes.push(cur);
        }
        shapes
    }

    /// Indices into `layers()` of the conv and FC layers, in order.
    pub fn weighted_layer_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_weighted())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn weight_shapes(&self) -> Vec<WeightShape> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                Layer::Conv {
                    filters,
                    channels,
                    kernel,
                    ..
                } => Some(WeightShape::Conv {
                    filters,
                    channels,
                    kernel,
                }),
                Layer::Fc { outputs, inputs } => Some(WeightShape::Fc { outputs, inputs }),
                _ => None,
            })
            .collect()
    }

    /// Output spatial size `H_out·W_out` of each weighted layer (1 for FC).
    pub fn output_positions(&self) -> Vec<usize> {
        let shapes = self.activation_shapes();
        self.weighted_layer_indices()
            .into_iter()
            .map(|i| shapes[i + 1][1] * shapes[i + 1][2])
            .collect()
    }

    /// Spatial size `H·W` of the activation each weighted layer consumes.
    pub fn input_positions(&self) -> Vec<usize> {
        let shapes = self.activation_shapes();
        self.weighted_layer_indices()
            .into_iter()
            .map(|i| shapes[i][1] * shapes[i][2])
            .collect()
    }

    fn validate(&self) -> Result<()> {
        ensure!(
            self.input.iter().all(|&d| d > 0),
            Shape,
            "input shape {:?} has a zero dimension",
            self.input
        );
        ensure!(
            self.input[1] == self.input[2],
            Shape,
            "only square inputs are supported, got {:?}",
            self.input
        );
        ensure!(
            matches!(self.layers.last(), Some(Layer::Fc { outputs, .. }) if *outputs > 0),
            Shape,
            "network must end in a fully connected classifier"
        );
        let mut cur = self.input;
        let mut flattened = false;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                Layer::Conv {
                    filters,
                    channels,
                    kernel,
                    stride,
                    input_size,
                } => {
                    ensure!(
                        !flattened,
                        Shape,
                        "layer {i}: conv after a fully connected layer"
                    );
                    ensure!(
                        channels == cur[0] && input_size == cur[1],
                        Shape,
                        "layer {i}: conv expects {channels}×{input_size}×{input_size}, receives {cur:?}"
                    );
                    ensure!(
                        kernel >= 1 && stride >= 1 && kernel <= input_size,
                        Shape,
                        "layer {i}: kernel {kernel} / stride {stride} invalid for input size {input_size}"
                    );
                    ensure!(
                        (input_size - kernel) % stride == 0,
                        Shape,
                        "layer {i}: stride {stride} does not tile input {input_size} with kernel {kernel}"
                    );
                    let out = (input_size - kernel) / stride + 1;
                    [filters, out, out]
                }
                Layer::Pool { window, stride } => {
                    ensure!(
                        !flattened,
                        Shape,
                        "layer {i}: pool after a fully connected layer"
                    );
                    ensure!(
                        window >= 1 && stride >= 1 && window <= cur[1],
                        Shape,
                        "layer {i}: pool window {window} invalid for size {}",
                        cur[1]
                    );
                    ensure!(
                        (cur[1] - window).is_multiple_of(stride),
                        Shape,
                        "layer {i}: pool window {window} stride {stride} does not divide size {}",
                        cur[1]
                    );
                    let out = (cur[1] - window) / stride + 1;
                    [cur[0], out, out]
                }
                Layer::Relu => cur,
                Layer::Fc { outputs, inputs } => {
                    let flat = cur.iter().product::<usize>();
                    ensure!(
                        inputs == flat,
                        Shape,
                        "layer {i}: fc expects {inputs} inputs, receives {flat}"
                    );
                    flattened = true;
                    [outputs, 1, 1]
                }
            };
        }
        Ok(())
    }

    /// Checks that `other` has the same layer structure and shapes.
    pub fn ensure_same(&self, other: &NetworkArch) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "genomes were built for different architectures".into(),
            ))
        }
    }
}
