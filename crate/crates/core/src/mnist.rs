//! MNIST in the IDX distribution format.
//!
//! Images: magic `0x00000803`, count, rows, cols (big-endian u32), then one
//! unsigned byte per pixel. Labels: magic `0x00000801`, count, then one byte
//! per label.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_LEN: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Labelled 28×28 single-channel images with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        ensure!(
            images.len().is_multiple_of(IMAGE_LEN),
            Shape,
            "image buffer of {} values is not a whole number of {IMAGE_LEN}-pixel images",
            images.len()
        );
        if images.len() / IMAGE_LEN != labels.len() {
            return Err(Error::CountMismatch {
                images: images.len() / IMAGE_LEN,
                labels: labels.len(),
            });
        }
        ensure!(
            labels.iter().all(|&l| (l as usize) < CLASSES),
            InvalidInput,
            "label out of range 0..{CLASSES}"
        );
        ensure!(
            images.iter().all(|p| (0.0..=1.0).contains(p)),
            InvalidInput,
            "pixel outside [0, 1]"
        );
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// All images, concatenated row-major.
    pub fn images(&self) -> &[f64] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * IMAGE_LEN);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Dataset {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// The first `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n * IMAGE_LEN].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Copies the images and labels at `indices` into caller buffers.
    pub(crate) fn gather(&self, indices: &[usize], images: &mut Vec<f64>, labels: &mut Vec<u8>) {
        images.clear();
        labels.clear();
        for &i in indices {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn header(bytes: &[u8], path: &Path, words: usize, magic: u32) -> Result<Vec<u32>> {
    if bytes.len() < 4 * words {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: 4 * words as u64,
            actual: bytes.len() as u64,
        });
    }
    let fields: Vec<u32> = bytes[..4 * words]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if fields[0] != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found: fields[0],
        });
    }
    Ok(fields)
}

fn payload<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8]> {
    let expected = (offset + len) as u64;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::CorruptLength {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    Ok(&bytes[offset..])
}

/// Parses an IDX image file and its label file into a [`Dataset`].
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let image_bytes = read_file(images_path)?;
    let h = header(&image_bytes, images_path, 4, IMAGE_MAGIC)?;
    let (count, rows, cols) = (h[1] as usize, h[2] as usize, h[3] as usize);
    ensure!(
        rows == IMAGE_SIDE && cols == IMAGE_SIDE,
        InvalidInput,
        "{}: images are {rows}×{cols}, expected {IMAGE_SIDE}×{IMAGE_SIDE}",
        images_path.display()
    );
    let pixels = payload(&image_bytes, images_path, 16, count * IMAGE_LEN)?;

    let label_bytes = read_file(labels_path)?;
    let h = header(&label_bytes, labels_path, 2, LABEL_MAGIC)?;
    let label_count = h[1] as usize;
    let labels = payload(&label_bytes, labels_path, 8, label_count)?;

    if count != label_count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    if let Some(pos) = labels.iter().position(|&l| l as usize >= CLASSES) {
        return Err(Error::InvalidInput(format!(
            "{}: label {} at index {pos} out of range",
            labels_path.display(),
            labels[pos]
        )));
    }
    Ok(Dataset {
        images: pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        labels: labels.to_vec(),
    })
}

/// Loads the canonical training and test files from one directory.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train = load_idx(dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS))?;
    let test = load_idx(dir.join(TEST_IMAGES), dir.join(TEST_LABELS))?;
    Ok((train, test))
}

/// How to carve a validation set out of the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub validation_size: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            validation_size: 1000,
            seed: 0,
        }
    }
}

/// Seeded shuffle, then the first `validation_size` shuffled samples form
/// the validation set and the rest (in original order) the fit set.
pub fn split(train: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    ensure!(
        spec.validation_size < train.len(),
        InvalidInput,
        "validation size {} must be smaller than the dataset ({} samples)",
        spec.validation_size,
        train.len()
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut validation: Vec<usize> = order[..spec.validation_size].to_vec();
    let mut fit: Vec<usize> = order[spec.validation_size..].to_vec();
    validation.sort_unstable();
    fit.sort_unstable();
    Ok((train.subset(&fit), train.subset(&validation)))
}
