use crate::error::{Error, Result};
use crate::features::{gram, gram_loss_grad, ContentFeatures, StyleFeatures};
use crate::tensor::{Scalar, Tensor};
use crate::vggnet::{backward_to_input, forward, ActivationCache, ContentLayer, ContentSeed, PoolingMode, VggWeights};

/// Content target (from the SAR image) and style target (from the optical
/// image) for one filter bank.
#[derive(Debug, Clone)]
pub struct Targets<T = f32> {
    pub content: ContentFeatures<T>,
    pub style: StyleFeatures<T>,
}

impl<T: Scalar> Targets<T> {
    pub fn extract(
        weights: &VggWeights<T>,
        content_source: &Tensor<T>,
        style_source: &Tensor<T>,
        layer: ContentLayer,
        mode: PoolingMode,
    ) -> Result<Self> {
        let index = weights.topology().content_index(layer)?;
        let cache = forward(weights, content_source, mode)?;
        let content = ContentFeatures::from_cache(&cache, index);
        let style = if content_source == style_source {
            StyleFeatures::from_cache(&cache)
        } else {
            StyleFeatures::from_cache(&forward(weights, style_source, mode)?)
        };
        Ok(Targets { content, style })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    /// `lambda_c * content_term + (1 - lambda_c) * style_term`
    pub loss: f64,
    /// `|C(I) - C_target|^2`
    pub content_term: f64,
    /// `|S(I) - S_target|^2` summed over all Gram blocks
    pub style_term: f64,
}

#[derive(Debug, Clone)]
pub struct LossEval<T = f32> {
    pub terms: LossTerms,
    pub grad: Tensor<T>,
}

fn check_targets<T: Scalar>(cache: &ActivationCache<T>, targets: &Targets<T>) -> Result<()> {
    let layer = targets.content.layer;
    if layer >= cache.layer_count() || cache.pre_activation(layer).shape() != targets.content.shape {
        return Err(Error::Shape(format!(
            "image does not match the content target {:?}",
            targets.content.shape
        )));
    }
    let blocks: Vec<usize> = targets.style.blocks.iter().map(|b| b.channels).collect();
    let pools: Vec<usize> = cache.pool_outputs().map(|p| p.channels()).collect();
    if blocks != pools {
        return Err(Error::Shape(format!("style target blocks {blocks:?} vs network {pools:?}")));
    }
    Ok(())
}

fn terms<T: Scalar>(cache: &ActivationCache<T>, targets: &Targets<T>, lambda_c: f64) -> LossTerms {
    let content = ContentFeatures::from_cache(cache, targets.content.layer);
    let content_term = content.distance_sq(&targets.content).expect("checked shapes");
    let style_term = StyleFeatures::from_cache(cache)
        .distance_sq(&targets.style)
        .expect("checked shapes");
    LossTerms {
        loss: lambda_c * content_term + (1.0 - lambda_c) * style_term,
        content_term,
        style_term,
    }
}

/// Loss and its exact gradient with respect to the pixels of `image`
/// (one forward pass and one backward pass).
pub fn loss_and_grad<T: Scalar>(
    image: &Tensor<T>,
    targets: &Targets<T>,
    weights: &VggWeights<T>,
    lambda_c: f64,
    mode: PoolingMode,
) -> Result<LossEval<T>> {
    let cache = forward(weights, image, mode)?;
    check_targets(&cache, targets)?;
    let layer = targets.content.layer;

    let pre = cache.pre_activation(layer);
    let mut content_sq = 0.0;
    let two_lambda = T::from_f64_lossy(2.0 * lambda_c);
    let content_grad: Vec<T> = pre
        .data()
        .iter()
        .zip(&targets.content.values)
        .map(|(&a, &b)| {
            let d = a - b;
            let df = d.to_f64_lossy();
            content_sq += df * df;
            two_lambda * d
        })
        .collect();
    let (c, h, w) = pre.shape();
    let content_seed = (lambda_c != 0.0).then(|| ContentSeed {
        layer,
        grad: Tensor::from_vec(c, h, w, content_grad).expect("pre-activation shape"),
    });

    let style_weight = 1.0 - lambda_c;
    let mut style_sq = 0.0;
    let mut style_seeds = Vec::with_capacity(targets.style.blocks.len());
    for (map, target) in cache.pool_outputs().zip(&targets.style.blocks) {
        let current = gram(map);
        style_sq += current.distance_sq(target)?;
        if style_weight != 0.0 {
            let mut g = gram_loss_grad(map, &current, target)?;
            g.scale(T::from_f64_lossy(style_weight));
            style_seeds.push(Some(g));
        } else {
            style_seeds.push(None);
        }
    }

    let grad = backward_to_input(weights, &cache, content_seed.as_ref(), &style_seeds)?;
    Ok(LossEval {
        terms: LossTerms {
            loss: lambda_c * content_sq + style_weight * style_sq,
            content_term: content_sq,
            style_term: style_sq,
        },
        grad,
    })
}

/// Loss terms without the backward pass.
pub fn loss_only<T: Scalar>(
    image: &Tensor<T>,
    targets: &Targets<T>,
    weights: &VggWeights<T>,
    lambda_c: f64,
    mode: PoolingMode,
) -> Result<LossTerms> {
    let cache = forward(weights, image, mode)?;
    check_targets(&cache, targets)?;
    Ok(terms(&cache, targets, lambda_c))
}
