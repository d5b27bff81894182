//! Content vectors and Gram-matrix style features.
//!
//! Gram matrices are normalized by `1 / (C * M)` (channels times spatial
//! positions) so the five pooling scales contribute on a comparable scale.
//! Content vectors are left unnormalized.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::vggnet::{forward, ActivationCache, ContentLayer, PoolingMode, VggWeights};

/// A pre-activation map flattened channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentFeatures<T = f32> {
    pub layer: usize,
    pub shape: (usize, usize, usize),
    pub values: Vec<T>,
}

impl<T: Scalar> ContentFeatures<T> {
    pub fn from_cache(cache: &ActivationCache<T>, layer: usize) -> Self {
        let t = cache.pre_activation(layer);
        ContentFeatures {
            layer,
            shape: t.shape(),
            values: t.data().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Squared Euclidean distance, accumulated in `f64`.
    pub fn distance_sq(&self, other: &ContentFeatures<T>) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "content {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(squared_distance(&self.values, &other.values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T = f32> {
    pub channels: usize,
    /// Row-major `channels x channels`.
    pub values: Vec<T>,
}

impl<T: Scalar> GramMatrix<T> {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        self.values[a * self.channels + b]
    }

    pub fn distance_sq(&self, other: &GramMatrix<T>) -> Result<f64> {
        if self.channels != other.channels {
            return Err(Error::Shape(format!(
                "gram {} vs {} channels",
                self.channels, other.channels
            )));
        }
        Ok(squared_distance(&self.values, &other.values))
    }
}

/// Gram matrices of every pooling output, shallowest first.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleFeatures<T = f32> {
    pub blocks: Vec<GramMatrix<T>>,
}

impl<T: Scalar> StyleFeatures<T> {
    pub fn from_cache(cache: &ActivationCache<T>) -> Self {
        StyleFeatures {
            blocks: cache.pool_outputs().map(gram).collect(),
        }
    }

    /// The concatenation of all blocks.
    pub fn flat(&self) -> impl Iterator<Item = T> + '_ {
        self.blocks.iter().flat_map(|b| b.values.iter().copied())
    }

    /// Sum of the per-block squared distances (equal block weights).
    pub fn distance_sq(&self, other: &StyleFeatures<T>) -> Result<f64> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::Shape("style features have different block counts".into()));
        }
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.distance_sq(b))
            .sum()
    }
}

fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum()
}

/// `G[a, b] = sum_{y,x} F[a,y,x] F[b,y,x] / (C * H * W)`.
pub fn gram<T: Scalar>(map: &Tensor<T>) -> GramMatrix<T> {
    let (c, h, w) = map.shape();
    let m = h * w;
    let mut values = vec![T::zero(); c * c];
    let norm = T::from_f64_lossy(1.0 / (c * m) as f64);
    T::gemm(
        c,
        m,
        c,
        norm,
        map.data(),
        (m as isize, 1),
        map.data(),
        (1, m as isize),
        T::zero(),
        &mut values,
        (c as isize, 1),
    );
    // exact symmetry regardless of the GEMM's accumulation order
    for a in 0..c {
        for b in a + 1..c {
            values[b * c + a] = values[a * c + b];
        }
    }
    GramMatrix { channels: c, values }
}

/// Gradient of `sum_{a,b} (G(F) - target)^2` with respect to `F`:
/// `4 / (C * M) * (G - target) F`.
pub fn gram_loss_grad<T: Scalar>(map: &Tensor<T>, current: &GramMatrix<T>, target: &GramMatrix<T>) -> Result<Tensor<T>> {
    let (c, h, w) = map.shape();
    if current.channels != c || target.channels != c {
        return Err(Error::Shape(format!(
            "gram gradient: map has {c} channels, grams have {} and {}",
            current.channels, target.channels
        )));
    }
    let m = h * w;
    let diff: Vec<T> = current.values.iter().zip(&target.values).map(|(&a, &b)| a - b).collect();
    let mut grad = Tensor::zeros(c, h, w);
    T::gemm(
        c,
        c,
        m,
        T::from_f64_lossy(4.0 / (c * m) as f64),
        &diff,
        (c as isize, 1),
        map.data(),
        (m as isize, 1),
        T::zero(),
        grad.data_mut(),
        (m as isize, 1),
    );
    Ok(grad)
}

pub fn extract_content<T: Scalar>(
    weights: &VggWeights<T>,
    image: &Tensor<T>,
    layer: ContentLayer,
    mode: PoolingMode,
) -> Result<ContentFeatures<T>> {
    let index = weights.topology().content_index(layer)?;
    let cache = forward(weights, image, mode)?;
    Ok(ContentFeatures::from_cache(&cache, index))
}

pub fn extract_style<T: Scalar>(weights: &VggWeights<T>, image: &Tensor<T>, mode: PoolingMode) -> Result<StyleFeatures<T>> {
    let cache = forward(weights, image, mode)?;
    Ok(StyleFeatures::from_cache(&cache))
}
