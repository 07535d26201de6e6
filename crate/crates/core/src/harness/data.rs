//! Labelled image sets and the synthetic shapes generator.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cli::idx::IdxImages;
use crate::numerics::Tensor;
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Images stored `h × w × c`, values in `[0, 1]` for IDX data.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(height: usize, width: usize, channels: usize, num_classes: usize, images: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::invalid("labels", format!("{} images but {} labels", images.len(), labels.len())));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        if let Some(img) = images.iter().find(|t| t.shape() != [height, width, channels]) {
            return Err(Error::invalid("images", format!("image shape {:?}, expected {:?}", img.shape(), [height, width, channels])));
        }
        Ok(Self {
            height,
            width,
            channels,
            num_classes,
            images,
            labels,
        })
    }

    /// IDX digits scaled to `[0, 1]`; the class count is one past the largest label.
    pub fn from_idx(images: &IdxImages, labels: &[u8]) -> Result<Self> {
        let imgs = (0..images.count)
            .map(|i| {
                let data = images.image(i).iter().map(|&b| b as f64 / 255.0).collect();
                Tensor::new(vec![images.rows, images.cols, 1], data).map_err(Error::from)
            })
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(images.rows, images.cols, 1, classes, imgs, labels)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.empty_like()
        }
    }

    fn empty_like(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            num_classes: self.num_classes,
            images: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// First `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// SHA-256 over the dimensions, labels and pixel bits.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for d in [self.height, self.width, self.channels, self.num_classes, self.len()] {
            h.update((d as u64).to_le_bytes());
        }
        for (img, &label) in self.images.iter().zip(&self.labels) {
            h.update((label as u64).to_le_bytes());
            for v in img.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Settings of the shapes generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapesConfig {
    pub size: usize,
    pub classes: usize,
    pub count: usize,
    /// In `[0, 1]`: 0 draws each shape inside a single small region, 1
    /// stretches it across most of the image so that no small group of
    /// patches determines the class.
    pub context: f64,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    /// Small blobs scattered as distractors.
    pub distractors: usize,
    pub seed: u64,
}

impl Default for ShapesConfig {
    fn default() -> Self {
        Self {
            size: 16,
            classes: 4,
            count: 800,
            context: 0.8,
            noise: 0.15,
            distractors: 2,
            seed: 0,
        }
    }
}

pub const MAX_SHAPE_CLASSES: usize = 5;

impl ShapesConfig {
    pub fn validate_settings(&self) -> Result<()> {
        if self.classes == 0 || self.classes > MAX_SHAPE_CLASSES {
            return Err(Error::invalid("classes", format!("must be in 1..={MAX_SHAPE_CLASSES}")));
        }
        if self.size < 4 {
            return Err(Error::invalid("size", "must be at least 4"));
        }
        if !(0.0..=1.0).contains(&self.context) {
            return Err(Error::invalid("context", "must be in [0,1]"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise", "must be non-negative"));
        }
        Ok(())
    }
}

/// Outline intensity of shape `class` at offset `(dx, dy)` from its centre.
fn shape_intensity(class: usize, dx: f64, dy: f64, r: f64, t: f64) -> f64 {
    let edge = |d: f64| (1.0 - d.abs() / t).clamp(0.0, 1.0);
    match class {
        // square
        0 => edge(dx.abs().max(dy.abs()) - r),
        // circle
        1 => edge((dx * dx + dy * dy).sqrt() - r),
        // diamond
        2 => edge((dx.abs() + dy.abs()) / std::f64::consts::SQRT_2 - r / std::f64::consts::SQRT_2),
        // plus
        3 => {
            let h = if dx.abs() <= r { edge(dy) } else { 0.0 };
            let v = if dy.abs() <= r { edge(dx) } else { 0.0 };
            h.max(v)
        }
        // x
        _ => {
            if dx.abs() > r || dy.abs() > r {
                0.0
            } else {
                edge((dx - dy) / std::f64::consts::SQRT_2).max(edge((dx + dy) / std::f64::consts::SQRT_2))
            }
        }
    }
}

/// Single-channel images of outlined shapes; the label is the shape.
pub fn synthetic_shapes(cfg: &ShapesConfig) -> Result<Dataset> {
    cfg.validate_settings()?;
    let n = cfg.size as f64;
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::invalid("noise", e.to_string()))?;
    let root = StreamRng::new(cfg.seed);
    let mut images = Vec::with_capacity(cfg.count);
    let mut labels = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut rng = root.fork(i as u64);
        let label = rng.below(cfg.classes);
        // radius between a local shape and one spanning the image
        let lo = 0.12 * n;
        let hi = 0.42 * n;
        let base = lo + (hi - lo) * cfg.context;
        let r = base * (0.85 + 0.3 * rng.uniform());
        let margin = r + 1.0;
        let span = (n - 2.0 * margin).max(0.0);
        let (cx, cy) = (margin + span * rng.uniform(), margin + span * rng.uniform());
        let amp = 0.7 + 0.3 * rng.uniform();
        let thickness = 1.0;
        let blobs: Vec<(f64, f64, f64)> = (0..cfg.distractors)
            .map(|_| (n * rng.uniform(), n * rng.uniform(), 0.4 + 0.4 * rng.uniform()))
            .collect();
        let mut data = Vec::with_capacity(cfg.size * cfg.size);
        for y in 0..cfg.size {
            for x in 0..cfg.size {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut v = amp * shape_intensity(label, px - cx, py - cy, r, thickness);
                for &(bx, by, ba) in &blobs {
                    let d2 = (px - bx).powi(2) + (py - by).powi(2);
                    v = v.max(ba * (-d2 / 1.5).exp());
                }
                v += noise.sample(&mut rng);
                data.push(v);
            }
        }
        images.push(Tensor::new(vec![cfg.size, cfg.size, 1], data)?);
        labels.push(label);
    }
    Dataset::new(cfg.size, cfg.size, 1, cfg.classes, images, labels)
}

/// Two classes separated by mean brightness of the left and right halves.
pub fn separable_halves(size: usize, count: usize, seed: u64) -> Result<Dataset> {
    let root = StreamRng::new(seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = root.fork(i as u64);
        let label = i % 2;
        let data = (0..size * size)
            .map(|p| {
                let left = p % size < size / 2;
                let bright = (left && label == 0) || (!left && label == 1);
                (if bright { 0.7 } else { 0.3 }) + 0.2 * (rng.uniform() - 0.5)
            })
            .collect();
        images.push(Tensor::new(vec![size, size, 1], data)?);
        labels.push(label);
    }
    Dataset::new(size, size, 1, 2, images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_deterministic_and_balanced() {
        let cfg = ShapesConfig {
            count: 400,
            ..ShapesConfig::default()
        };
        let a = synthetic_shapes(&cfg).unwrap();
        assert_eq!(a, synthetic_shapes(&cfg).unwrap());
        assert_eq!(a.checksum(), synthetic_shapes(&cfg).unwrap().checksum());
        let mut counts = [0usize; 4];
        a.labels.iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c > 70), "{counts:?}");
        let other = synthetic_shapes(&ShapesConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.checksum(), other.checksum());
    }

    #[test]
    fn shapes_draw_ink() {
        let cfg = ShapesConfig {
            count: 20,
            noise: 0.0,
            distractors: 0,
            ..ShapesConfig::default()
        };
        let d = synthetic_shapes(&cfg).unwrap();
        for img in &d.images {
            let ink = img.data().iter().filter(|&&v| v > 0.3).count();
            assert!(ink >= 8, "{ink}");
        }
    }

    #[test]
    fn rejects_bad_labels_and_settings() {
        let img = Tensor::zeros(&[2, 2, 1]);
        assert!(matches!(Dataset::new(2, 2, 1, 2, vec![img], vec![2]), Err(Error::LabelOutOfRange { label: 2, classes: 2 })));
        assert!(synthetic_shapes(&ShapesConfig {
            classes: 9,
            ..ShapesConfig::default()
        })
        .is_err());
    }

    #[test]
    fn idx_conversion_scales_pixels() {
        let idx = IdxImages {
            count: 1,
            rows: 1,
            cols: 2,
            pixels: vec![0, 255],
        };
        let d = Dataset::from_idx(&idx, &[3]).unwrap();
        assert_eq!(d.images[0].data(), &[0.0, 1.0]);
        assert_eq!(d.num_classes, 4);
    }
}
