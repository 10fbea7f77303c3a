use crate::error::{ensure, Result};

/// Dense 4-D tensor in row-major `(filters, channels, height, width)` order.
///
/// Used both for conv weights and for batched activations, where the leading
/// axis is the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let len = shape.iter().product::<usize>();
        ensure!(
            data.len() == len,
            Shape,
            "tensor of shape {shape:?} needs {len} values, got {}",
            data.len()
        );
        ensure!(
            data.iter().all(|v| v.is_finite()),
            InvalidInput,
            "tensor contains non-finite values"
        );
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Builds a tensor from values produced by this crate's own kernels.
    pub(crate) fn from_raw(shape: [usize; 4], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let [_, c, h, w] = self.shape;
        ((i * c + j) * h + k) * w + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.index(i, j, k, l)]
    }
}

/// Dense 2-D tensor in row-major `(outputs, inputs)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn new(shape: [usize; 2], data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == shape[0] * shape[1],
            Shape,
            "tensor of shape {shape:?} needs {} values, got {}",
            shape[0] * shape[1],
            data.len()
        );
        ensure!(
            data.iter().all(|v| v.is_finite()),
            InvalidInput,
            "tensor contains non-finite values"
        );
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 2]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape[0] * shape[1]],
        }
    }

    pub(crate) fn from_raw(shape: [usize; 2], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape[0] * shape[1]);
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, o: usize, i: usize) -> f64 {
        self.data[o * self.shape[1] + i]
    }
}
