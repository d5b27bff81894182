//! Change detection on a homogeneous pair: difference image with an Otsu
//! threshold, and a one-class SVM over per-pixel difference features.

mod ocsvm;
mod otsu;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_pnm, save_pnm, Image};

pub use ocsvm::{default_gamma, ocsvm_train, OcsvmModel, OcsvmParams, TrainDiagnostics};
pub use otsu::{between_class_scores, gray_histogram, otsu_bin, otsu_threshold};

/// Binary decision raster; `true` marks change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeMap {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl ChangeMap {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Shape(format!(
                "change map {height}x{width} needs {} entries, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(ChangeMap { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        ChangeMap {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn changed_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> ChangeMap {
        ChangeMap {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Gray image with 1.0 for change and 0.0 elsewhere.
    pub fn to_image(&self) -> Image {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Image::new(self.height, self.width, 1, data).expect("binary image is valid")
    }

    /// Reads a gray mask; samples of at least one half are set.
    pub fn from_image(img: &Image) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::InvalidImage("change maps are single-channel".into()));
        }
        let bits = img.data().iter().map(|&v| v >= 0.5).collect();
        ChangeMap::new(img.height(), img.width(), bits)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ChangeMap::from_image(&load_pnm(path)?)
    }

    /// Writes a PGM with values 0 and 255.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_pnm(&self.to_image(), path)
    }
}

/// Per-pixel Euclidean distance across channels divided by `sqrt(C)`.
pub fn difference_image(a: &Image, b: &Image) -> Result<Image> {
    a.expect_same_dims(b)?;
    let c = a.channels();
    let norm = (c as f64).sqrt();
    let data = a
        .data()
        .chunks_exact(c)
        .zip(b.data().chunks_exact(c))
        .map(|(p, q)| {
            let d2: f64 = p.iter().zip(q).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
            (d2.sqrt() / norm) as f32
        })
        .collect();
    Image::from_clamped(a.height(), a.width(), 1, data)
}

/// Row-major matrix with one `dim`-dimensional row per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix { dim: self.dim, data }
    }
}

/// Per pixel: `|opt - t2|` for each channel, then the mean over the
/// `(2r+1)^2` neighbourhood (edge-replicated) of the channel-averaged
/// absolute difference. `dim = C + 1`.
pub fn pixel_features(opt: &Image, t2: &Image, radius: usize) -> Result<FeatureMatrix> {
    opt.expect_same_dims(t2)?;
    let (h, w, c) = (opt.height(), opt.width(), opt.channels());
    let abs: Vec<f64> = opt
        .data()
        .iter()
        .zip(t2.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .collect();
    let mean_abs: Vec<f64> = abs.chunks_exact(c).map(|p| p.iter().sum::<f64>() / c as f64).collect();
    let r = radius as isize;
    let window = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let dim = c + 1;
    let mut data = Vec::with_capacity(h * w * dim);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(&abs[(y * w + x) * c..][..c]);
            let mut acc = 0.0;
            for dy in -r..=r {
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    acc += mean_abs[sy * w + sx];
                }
            }
            data.push(acc / window);
        }
    }
    Ok(FeatureMatrix { dim, data })
}

/// Pixels used to fit the one-class model.
///
/// With a mask, every set pixel is a candidate. Without one, the half of the
/// pixels with the smallest difference values is used. Candidates are then
/// thinned with a uniform stride to at most `max_samples`.
pub fn training_indices(diff: &Image, unchanged_mask: Option<&ChangeMap>, max_samples: usize) -> Result<Vec<usize>> {
    if diff.channels() != 1 {
        return Err(Error::InvalidImage("difference image must be single-channel".into()));
    }
    let candidates: Vec<usize> = match unchanged_mask {
        Some(mask) => {
            if mask.height() != diff.height() || mask.width() != diff.width() {
                return Err(Error::Shape("training mask does not match the image pair".into()));
            }
            (0..mask.bits().len()).filter(|&i| mask.bits()[i]).collect()
        }
        None => {
            let mut order: Vec<usize> = (0..diff.pixel_count()).collect();
            order.sort_by(|&a, &b| diff.data()[a].total_cmp(&diff.data()[b]).then(a.cmp(&b)));
            order.truncate(diff.pixel_count().div_ceil(2));
            order.sort_unstable();
            order
        }
    };
    if candidates.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two training pixels, got {}",
            candidates.len()
        )));
    }
    let max_samples = max_samples.max(2);
    if candidates.len() <= max_samples {
        return Ok(candidates);
    }
    Ok((0..max_samples)
        .map(|i| candidates[i * candidates.len() / max_samples])
        .collect())
}

/// Marks a pixel as change iff its decision value is negative.
pub fn ocsvm_detect(model: &OcsvmModel, opt: &Image, t2: &Image, radius: usize) -> Result<ChangeMap> {
    let features = pixel_features(opt, t2, radius)?;
    if features.dim != model.dim() {
        return Err(Error::Shape(format!(
            "model expects {}-dimensional features, pair gives {}",
            model.dim(),
            features.dim
        )));
    }
    let bits = (0..features.rows()).map(|i| model.decision(features.row(i)) < 0.0).collect();
    ChangeMap::new(opt.height(), opt.width(), bits)
}
