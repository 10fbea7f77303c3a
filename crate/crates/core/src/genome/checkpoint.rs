//! Binary genome checkpoints.
//!
//! Layout (all integers little-endian u32):
//!
//! ```text
//! "EVOPRUNE" | version | input C, H, W | layer count
//! per layer: tag u8 (0 conv, 1 pool, 2 relu, 3 fc) then its dims
//!            conv: filters channels kernel stride input_size
//!            pool: window stride
//!            fc:   outputs inputs
//! per weighted layer: weights (f64 LE) | bias (f64 LE) | mask (one byte 0/1 per weight)
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::{Layer, LayerParams, NetworkArch, Params, Tensor2, Tensor4, WeightShape, Weights};

use super::Genome;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EVOPRUNE";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(g: &Genome, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let arch = g.arch();
    let mut buf = Vec::with_capacity(g.weight_count() * 9 + 256);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let put = |buf: &mut Vec<u8>, v: usize| buf.extend_from_slice(&(v as u32).to_le_bytes());
    put(&mut buf, CHECKPOINT_VERSION as usize);
    for d in arch.input() {
        put(&mut buf, d);
    }
    put(&mut buf, arch.layers().len());
    for layer in arch.layers() {
        match *layer {
            Layer::Conv {
                filters,
                channels,
                kernel,
                stride,
                input_size,
            } => {
                buf.push(0);
                for v in [filters, channels, kernel, stride, input_size] {
                    put(&mut buf, v);
                }
            }
            Layer::Pool { window, stride } => {
                buf.push(1);
                put(&mut buf, window);
                put(&mut buf, stride);
            }
            Layer::Relu => buf.push(2),
            Layer::Fc { outputs, inputs } => {
                buf.push(3);
                put(&mut buf, outputs);
                put(&mut buf, inputs);
            }
        }
    }
    for (layer, mask) in g.params().layers.iter().zip(g.masks()) {
        for w in layer.weights.as_slice() {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.bias {
            buf.extend_from_slice(&b.to_le_bytes());
        }
        buf.extend(mask.iter().map(|&m| u8::from(m)));
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptLength {
                path: self.path.to_path_buf(),
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n.checked_mul(8).ok_or_else(|| self.corrupt())?)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn corrupt(&self) -> Error {
        Error::CorruptLength {
            path: self.path.to_path_buf(),
            expected: u64::MAX,
            actual: self.bytes.len() as u64,
        }
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Genome> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let magic = r.take(8).map_err(|_| Error::BadCheckpointMagic {
        path: path.to_path_buf(),
        found: bytes.clone(),
    })?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadCheckpointMagic {
            path: path.to_path_buf(),
            found: magic.to_vec(),
        });
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let input = [r.u32()?, r.u32()?, r.u32()?];
    let n_layers = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        layers.push(match r.u8()? {
            0 => Layer::Conv {
                filters: r.u32()?,
                channels: r.u32()?,
                kernel: r.u32()?,
                stride: r.u32()?,
                input_size: r.u32()?,
            },
            1 => Layer::Pool {
                window: r.u32()?,
                stride: r.u32()?,
            },
            2 => Layer::Relu,
            3 => Layer::Fc {
                outputs: r.u32()?,
                inputs: r.u32()?,
            },
            tag => {
                return Err(Error::InvalidInput(format!(
                    "{}: unknown layer tag {tag}",
                    path.display()
                )))
            }
        });
    }
    let arch = Arc::new(NetworkArch::new(input, layers)?);

    let mut params = Vec::new();
    let mut masks = Vec::new();
    for shape in arch.weight_shapes() {
        let weights = r.f64s(shape.len())?;
        let bias = r.f64s(shape.outputs())?;
        let mask_bytes = r.take(shape.len())?;
        if let Some(bad) = mask_bytes.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidInput(format!(
                "{}: mask byte {bad} is not 0 or 1",
                path.display()
            )));
        }
        let weights = match shape {
            WeightShape::Conv {
                filters,
                channels,
                kernel,
            } => Weights::Conv(Tensor4::new([filters, channels, kernel, kernel], weights)?),
            WeightShape::Fc { outputs, inputs } => {
                Weights::Fc(Tensor2::new([outputs, inputs], weights)?)
            }
        };
        params.push(LayerParams { weights, bias });
        masks.push(mask_bytes.iter().map(|&b| b == 1).collect());
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptLength {
            path: path.to_path_buf(),
            expected: r.pos as u64,
            actual: bytes.len() as u64,
        });
    }
    Genome::from_parts(arch, Params { layers: params }, masks)
}
