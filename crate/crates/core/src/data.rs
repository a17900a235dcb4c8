//! Classical data ingestion: IDX files, pooling, binarization, the binary
//! qubit encoding and synthetic datasets.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Binarization threshold used when none is given.
pub const DEFAULT_THRESHOLD: u16 = 128;

/// A classical bit string; entry `i` is the bit placed on site `i`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitVector(Vec<u8>);

impl BitVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidInput(format!("bit {pos} is not 0/1")));
        }
        Ok(BitVector(bits))
    }

    pub fn zeros(n: usize) -> Self {
        BitVector(vec![0; n])
    }

    pub fn one_hot(n: usize, i: usize) -> Self {
        let mut v = vec![0; n];
        v[i] = 1;
        BitVector(v)
    }

    /// Bits of `index` with site 0 as the least significant bit.
    pub fn from_index(index: usize, n: usize) -> Self {
        BitVector((0..n).map(|i| ((index >> i) & 1) as u8).collect())
    }

    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as usize) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, b: u8) {
        self.0[i] = b & 1;
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .enumerate()
            .map(|(i, c)| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Parse {
                    offset: i,
                    msg: format!("unexpected character {other:?} in bit string"),
                }),
            })
            .collect::<Result<Vec<u8>>>()
            .map(BitVector)
    }
}

/// A nonempty set of equal-length bit vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<BitVector>,
    n: usize,
}

impl Dataset {
    pub fn new(samples: Vec<BitVector>) -> Result<Self> {
        let n = samples
            .first()
            .map(BitVector::len)
            .ok_or_else(|| Error::InvalidInput("dataset is empty".into()))?;
        if let Some(i) = samples.iter().position(|s| s.len() != n) {
            return Err(Error::Shape(format!(
                "sample {i} has length {} but expected {n}",
                samples[i].len()
            )));
        }
        Ok(Dataset { samples, n })
    }

    pub fn samples(&self) -> &[BitVector] {
        &self.samples
    }

    pub fn feature_length(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Empirical distribution as (sample, frequency) pairs in sorted order.
    pub fn empirical(&self) -> Vec<(BitVector, f64)> {
        let mut counts = std::collections::BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.clone()).or_insert(0usize) += 1;
        }
        let total = self.samples.len() as f64;
        counts
            .into_iter()
            .map(|(k, v)| (k, v as f64 / total))
            .collect()
    }

    /// Shannon entropy (nats) of the empirical distribution; the floor of
    /// the negative log-likelihood of any model on this data.
    pub fn entropy(&self) -> f64 {
        self.empirical()
            .iter()
            .map(|(_, p)| -p * p.ln())
            .sum()
    }

    /// Parses the text format: one `0`/`1` string per line, `#` comments.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        let mut offset = 0;
        for line in text.lines() {
            let content = line.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                let bv = content.parse::<BitVector>().map_err(|e| match e {
                    Error::Parse { offset: o, msg } => Error::Parse {
                        offset: offset + line.find(content).unwrap_or(0) + o,
                        msg,
                    },
                    other => other,
                })?;
                samples.push(bv);
            }
            offset += line.len() + 1;
        }
        Dataset::new(samples)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {} samples, {} bits\n", self.len(), self.n);
        for s in &self.samples {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }
}

/// Embeds one bit as the real 2-vector `(δ_{0,b}, δ_{1,b})`.
pub fn embed_bit(b: u8) -> [f64; 2] {
    if b == 0 {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    }
}

/// A greyscale image with row-major pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        GrayImage {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.pixels[r * self.width + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    Images(Vec<GrayImage>),
    Labels(Vec<u8>),
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset,
            msg: "truncated header".into(),
        })
}

/// Decodes an IDX image (`0x00000803`) or label (`0x00000801`) payload.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = read_u32(bytes, 0)?;
    match magic {
        IDX_IMAGE_MAGIC => {
            let count = read_u32(bytes, 4)? as usize;
            let rows = read_u32(bytes, 8)? as usize;
            let cols = read_u32(bytes, 12)? as usize;
            let px = rows * cols;
            let need = 16 + count * px;
            if bytes.len() < need {
                return Err(Error::Parse {
                    offset: bytes.len(),
                    msg: format!("payload truncated: expected {need} bytes"),
                });
            }
            let images = (0..count)
                .map(|i| {
                    let start = 16 + i * px;
                    GrayImage::new(rows, cols, bytes[start..start + px].to_vec())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(IdxData::Images(images))
        }
        IDX_LABEL_MAGIC => {
            let count = read_u32(bytes, 4)? as usize;
            let need = 8 + count;
            if bytes.len() < need {
                return Err(Error::Parse {
                    offset: bytes.len(),
                    msg: format!("payload truncated: expected {need} bytes"),
                });
            }
            Ok(IdxData::Labels(bytes[8..need].to_vec()))
        }
        other => Err(Error::Parse {
            offset: 0,
            msg: format!("bad magic 0x{other:08x}"),
        }),
    }
}

pub fn serialize_idx_images(images: &[GrayImage]) -> Result<Vec<u8>> {
    let (rows, cols) = images
        .first()
        .map(|i| (i.height, i.width))
        .unwrap_or((0, 0));
    if images.iter().any(|i| i.height != rows || i.width != cols) {
        return Err(Error::Shape("images differ in size".into()));
    }
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        out.extend_from_slice(&img.pixels);
    }
    Ok(out)
}

pub fn serialize_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Non-overlapping 2×2 max filter.
pub fn max_pool_2x2(img: &GrayImage) -> Result<GrayImage> {
    if img.height % 2 != 0 || img.width % 2 != 0 {
        return Err(Error::Shape(format!(
            "max pooling needs even dimensions, got {}x{}",
            img.height, img.width
        )));
    }
    let (h, w) = (img.height / 2, img.width / 2);
    let mut pixels = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let m = [
                img.get(2 * r, 2 * c),
                img.get(2 * r, 2 * c + 1),
                img.get(2 * r + 1, 2 * c),
                img.get(2 * r + 1, 2 * c + 1),
            ]
            .into_iter()
            .max()
            .unwrap_or(0);
            pixels.push(m);
        }
    }
    GrayImage::new(h, w, pixels)
}

/// Row-major binarization: bit = 1 iff pixel ≥ threshold.
pub fn binarize(img: &GrayImage, threshold: u16) -> BitVector {
    BitVector(
        img.pixels
            .iter()
            .map(|&p| u8::from(p as u16 >= threshold))
            .collect(),
    )
}

/// Pool twice then binarize: 28×28 greyscale → 49 bits.
pub fn preprocess_mnist(img: &GrayImage, threshold: u16) -> Result<BitVector> {
    let pooled = max_pool_2x2(&max_pool_2x2(img)?)?;
    Ok(binarize(&pooled, threshold))
}

/// `counts[i]` copies of the one-hot vector with its 1 at position `i`.
pub fn one_hot_dataset(counts: &[usize]) -> Result<Dataset> {
    if counts.iter().sum::<usize>() == 0 {
        return Err(Error::InvalidParameter("one-hot counts sum to zero".into()));
    }
    let n = counts.len();
    let samples = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(BitVector::one_hot(n, i), c))
        .collect();
    Dataset::new(samples)
}

/// Inserts a constant 0 at index `k` of every sample.
pub fn pad_with_zero(ds: &Dataset, k: usize) -> Result<Dataset> {
    if k > ds.feature_length() {
        return Err(Error::Index(format!(
            "pad position {k} beyond length {}",
            ds.feature_length()
        )));
    }
    let samples = ds
        .samples()
        .iter()
        .map(|s| {
            let mut bits = s.bits().to_vec();
            bits.insert(k, 0);
            BitVector(bits)
        })
        .collect();
    Dataset::new(samples)
}

/// Procedurally drawn 28×28 handwritten-style digits.
///
/// Stand-in for MNIST when the official files are unavailable. Each digit is
/// a set of thick strokes with per-sample jitter; pixel values fall off
/// linearly with distance to the nearest stroke.
pub mod synthetic {
    use super::*;

    type Stroke = &'static [(f64, f64)];

    // polylines in a unit box, x to the right, y down
    fn strokes(digit: u8) -> &'static [Stroke] {
        match digit {
            0 => &[&[
                (0.5, 0.0),
                (0.85, 0.2),
                (0.9, 0.6),
                (0.6, 1.0),
                (0.3, 0.95),
                (0.1, 0.6),
                (0.15, 0.2),
                (0.5, 0.0),
            ]],
            1 => &[&[(0.35, 0.2), (0.55, 0.0), (0.55, 1.0)]],
            2 => &[&[
                (0.1, 0.2),
                (0.45, 0.0),
                (0.85, 0.2),
                (0.8, 0.45),
                (0.1, 1.0),
                (0.9, 1.0),
            ]],
            3 => &[
                &[(0.1, 0.05), (0.8, 0.05), (0.4, 0.45), (0.85, 0.7), (0.5, 1.0), (0.1, 0.9)],
            ],
            4 => &[&[(0.65, 1.0), (0.65, 0.0), (0.1, 0.65), (0.9, 0.65)]],
            5 => &[&[
                (0.85, 0.0),
                (0.2, 0.0),
                (0.15, 0.45),
                (0.7, 0.45),
                (0.85, 0.75),
                (0.55, 1.0),
                (0.1, 0.9),
            ]],
            6 => &[&[
                (0.75, 0.0),
                (0.25, 0.4),
                (0.15, 0.8),
                (0.5, 1.0),
                (0.85, 0.75),
                (0.5, 0.5),
                (0.2, 0.7),
            ]],
            7 => &[&[(0.1, 0.0), (0.9, 0.0), (0.35, 1.0)]],
            8 => &[&[
                (0.5, 0.5),
                (0.15, 0.25),
                (0.5, 0.0),
                (0.85, 0.25),
                (0.5, 0.5),
                (0.15, 0.75),
                (0.5, 1.0),
                (0.85, 0.75),
                (0.5, 0.5),
            ]],
            _ => &[&[
                (0.8, 0.35),
                (0.5, 0.5),
                (0.15, 0.3),
                (0.5, 0.0),
                (0.8, 0.35),
                (0.7, 1.0),
            ]],
        }
    }

    fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
        };
        let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
        ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
    }

    /// Renders one digit; `rng` drives placement, size, slant and stroke width.
    pub fn render_digit<R: Rng>(digit: u8, rng: &mut R) -> GrayImage {
        let scale_x = rng.random_range(11.0..15.0);
        let scale_y = rng.random_range(17.0..20.0);
        let off_x = rng.random_range(6.0..10.0);
        let off_y = rng.random_range(3.0..6.0);
        let slant = rng.random_range(-0.25..0.25);
        let width = rng.random_range(1.3..2.1);
        let map = |(x, y): (f64, f64)| {
            (
                off_x + scale_x * x + slant * scale_y * (0.5 - y),
                off_y + scale_y * y,
            )
        };
        let mut pixels = vec![0u8; 28 * 28];
        for r in 0..28 {
            for c in 0..28 {
                let p = (c as f64 + 0.5, r as f64 + 0.5);
                let mut d = f64::INFINITY;
                for stroke in strokes(digit) {
                    for w in stroke.windows(2) {
                        d = d.min(segment_distance(p, map(w[0]), map(w[1])));
                    }
                }
                let v = (1.0 - (d - width) / 1.5).clamp(0.0, 1.0);
                pixels[r * 28 + c] = (255.0 * v).round() as u8;
            }
        }
        GrayImage {
            height: 28,
            width: 28,
            pixels,
        }
    }

    /// Labels of the first ten images of the official MNIST training split.
    pub const MNIST_FIRST_TEN_LABELS: [u8; 10] = [5, 0, 4, 1, 9, 2, 1, 3, 1, 4];

    /// Renders `labels` as images whose pooled, binarized 7×7 patterns are
    /// pairwise distinct.
    pub fn digit_images(labels: &[u8], seed: u64) -> Vec<GrayImage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::with_capacity(labels.len());
        let mut seen = std::collections::HashSet::new();
        for &label in labels {
            loop {
                let img = render_digit(label, &mut rng);
                let bits = preprocess_mnist(&img, DEFAULT_THRESHOLD).expect("28x28 pools");
                if seen.insert(bits) {
                    images.push(img);
                    break;
                }
            }
        }
        images
    }
}
