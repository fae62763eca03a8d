//! In-memory datasets, downscaling, class filtering and synthetic fixtures.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream;

/// Row-major image, channels interleaved per pixel, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width * channels {
            return Err(Error::Dimension {
                expected: height * width * channels,
                found: pixels.len(),
            });
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invariant("pixel values must lie in [0, 1]".into()));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Image {
            height,
            width,
            channels: 1,
            pixels: vec![value; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Dimension {
                expected: images.len(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Index {
                index: bad,
                len: class_count,
            });
        }
        if let Some(first) = images.first() {
            let shape = (first.height, first.width, first.channels);
            if images.iter().any(|im| (im.height, im.width, im.channels) != shape) {
                return Err(Error::Invariant("images differ in shape".into()));
            }
        }
        Ok(Dataset {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(height, width, channels)` of the images, if any.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(|im| (im.height, im.width, im.channels))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut images = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Index { index: i, len: self.len() });
            }
            images.push(self.images[i].clone());
            labels.push(self.labels[i]);
        }
        Dataset::new(images, labels, self.class_count)
    }

    pub fn map_images<F>(&self, f: F) -> Result<Dataset>
    where
        F: Fn(&Image) -> Result<Image>,
    {
        let images = self.images.iter().map(f).collect::<Result<Vec<_>>>()?;
        Dataset::new(images, self.labels.clone(), self.class_count)
    }
}

/// Area-weighted average pooling to `out_h × out_w`. Every output pixel is
/// the mean of the input region it covers, fractional overlaps included.
pub fn downscale(image: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Size("downscale target must be non-empty".into()));
    }
    if out_h > image.height || out_w > image.width {
        return Err(Error::Size(format!(
            "cannot downscale {}x{} to {out_h}x{out_w}",
            image.height, image.width
        )));
    }
    let rows = overlap_weights(image.height, out_h);
    let cols = overlap_weights(image.width, out_w);
    let c = image.channels;
    let mut out = vec![0.0; out_h * out_w * c];
    for (oi, rw) in rows.iter().enumerate() {
        for (oj, cw) in cols.iter().enumerate() {
            for &(i, wi) in rw {
                for &(j, wj) in cw {
                    for ch in 0..c {
                        out[(oi * out_w + oj) * c + ch] += wi * wj * image.get(i, j, ch);
                    }
                }
            }
        }
    }
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Image::new(out_h, out_w, c, out)
}

/// For each output cell, the input indices it overlaps and their weights
/// (summing to one).
fn overlap_weights(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let (lo, hi) = (o as f64 * ratio, (o + 1) as f64 * ratio);
            let mut w = Vec::new();
            let mut i = libm::floor(lo) as usize;
            while (i as f64) < hi && i < input {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((i, overlap / ratio));
                }
                i += 1;
            }
            w
        })
        .collect()
}

/// Grows the image to `height × width` by replicating its border, keeping
/// it centred (odd leftovers go to the bottom and right).
pub fn pad_edge(image: &Image, height: usize, width: usize) -> Result<Image> {
    if height < image.height || width < image.width {
        return Err(Error::Size("padding target is smaller than the image".into()));
    }
    let top = (height - image.height) / 2;
    let left = (width - image.width) / 2;
    let c = image.channels;
    let mut out = Vec::with_capacity(height * width * c);
    for r in 0..height {
        let sr = r.saturating_sub(top).min(image.height - 1);
        for col in 0..width {
            let sc = col.saturating_sub(left).min(image.width - 1);
            for ch in 0..c {
                out.push(image.get(sr, sc, ch));
            }
        }
    }
    Image::new(height, width, c, out)
}

/// Edge-replicates to the next multiple of the target size, then pools by
/// whole blocks. 28×28 → 8×8 goes through 32×32 and 4×4 blocks.
pub fn downscale_padded(image: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Size("downscale target must be non-empty".into()));
    }
    let h = image.height.div_ceil(out_h) * out_h;
    let w = image.width.div_ceil(out_w) * out_w;
    downscale(&pad_edge(image, h, w)?, out_h, out_w)
}

/// Keeps the listed classes, relabelled `0..keep.len()` in the given order.
/// Sample order is preserved.
pub fn filter_classes(ds: &Dataset, keep: &[usize]) -> Result<Dataset> {
    if keep.is_empty() {
        return Err(Error::Empty("no classes requested".into()));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (im, &l) in ds.images.iter().zip(&ds.labels) {
        if let Some(pos) = keep.iter().position(|&k| k == l) {
            images.push(im.clone());
            labels.push(pos);
        }
    }
    if images.is_empty() {
        return Err(Error::Empty(format!("no samples of classes {keep:?}")));
    }
    Dataset::new(images, labels, keep.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Unit-variance blobs at `(±3, 0)`: six standard deviations apart.
    TwoGaussians,
    /// Four blobs at `(±2, ±2)`; the label is the XOR of the coordinate signs.
    XorBlobs,
    /// Noisy circles of radius 1 and 3.
    Rings,
}

/// Side of the rendered synthetic images.
pub const SYNTHETIC_SIDE: usize = 8;

/// Samples 2-D points with balanced labels and renders each as an 8×8 image
/// whose pixels are affine in the point, so any linear boundary in the plane
/// stays linear in pixel space.
pub fn synthetic(kind: SyntheticKind, count: usize, seed: u64) -> Result<Dataset> {
    if count < 2 {
        return Err(Error::Size("synthetic datasets need at least two samples".into()));
    }
    let mut rng = stream(seed, 0xda7a);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let mut gauss = || -> f64 { rng.sample(StandardNormal) };
        let (u, v, label) = match kind {
            SyntheticKind::TwoGaussians => {
                let label = i % 2;
                let cx = if label == 0 { -3.0 } else { 3.0 };
                (cx + gauss(), gauss(), label)
            }
            SyntheticKind::XorBlobs => {
                let quadrant = i % 4;
                let sx = if quadrant & 1 == 0 { -2.0 } else { 2.0 };
                let sy = if quadrant & 2 == 0 { -2.0 } else { 2.0 };
                let label = usize::from((sx > 0.0) != (sy > 0.0));
                (sx + 0.5 * gauss(), sy + 0.5 * gauss(), label)
            }
            SyntheticKind::Rings => {
                let label = i % 2;
                let r = if label == 0 { 1.0 } else { 3.0 } + 0.2 * gauss();
                let phi = rng.random_range(0.0..2.0 * PI);
                (r * libm::cos(phi), r * libm::sin(phi), label)
            }
        };
        images.push(render_point(u, v));
        labels.push(label);
    }
    Dataset::new(images, labels, 2)
}

/// `clamp(0.5 + 0.06 (u·a(col) + v·b(row)))` with `a`, `b` ramps in `[−1, 1]`.
pub fn render_point(u: f64, v: f64) -> Image {
    let side = SYNTHETIC_SIDE;
    let ramp = |k: usize| 2.0 * k as f64 / (side - 1) as f64 - 1.0;
    let mut pixels = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            pixels.push((0.5 + 0.06 * (u * ramp(c) + v * ramp(r))).clamp(0.0, 1.0));
        }
    }
    Image {
        height: side,
        width: side,
        channels: 1,
        pixels,
    }
}
