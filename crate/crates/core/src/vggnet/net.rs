use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::conv::{conv2d, conv2d_backward_input};
use super::pool::{pool2x2, pool2x2_backward, Pooled};
use super::{PoolingMode, Topology, VggWeights};

/// Everything one forward pass leaves behind for feature extraction and
/// the backward pass. Never mutated after [`forward`] returns.
#[derive(Debug, Clone)]
pub struct ActivationCache<T> {
    mode: PoolingMode,
    topology: Topology,
    input_shape: (usize, usize, usize),
    pre: Vec<Tensor<T>>,
    pools: Vec<Pooled<T>>,
}

impl<T: Scalar> ActivationCache<T> {
    pub fn mode(&self) -> PoolingMode {
        self.mode
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    /// Convolution output of `layer` before the ReLU.
    pub fn pre_activation(&self, layer: usize) -> &Tensor<T> {
        &self.pre[layer]
    }

    /// ReLU output of `layer`, rebuilt from the cached pre-activation.
    pub fn relu_output(&self, layer: usize) -> Tensor<T> {
        let mut t = self.pre[layer].clone();
        relu_in_place(&mut t);
        t
    }

    pub fn pool_output(&self, stage: usize) -> &Tensor<T> {
        &self.pools[stage].output
    }

    pub fn pool_argmax(&self, stage: usize) -> Option<&[u8]> {
        self.pools[stage].argmax.as_deref()
    }

    pub fn pool_outputs(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.pools.iter().map(|p| &p.output)
    }

    pub fn layer_count(&self) -> usize {
        self.pre.len()
    }
}

/// Gradient injected at the pre-activation output of one convolution.
#[derive(Debug, Clone)]
pub struct ContentSeed<T> {
    pub layer: usize,
    pub grad: Tensor<T>,
}

fn relu_in_place<T: Scalar>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// conv -> ReLU for every layer, with a pooling after the last convolution
/// of each stage.
pub fn forward<T: Scalar>(
    weights: &VggWeights<T>,
    image: &Tensor<T>,
    mode: PoolingMode,
) -> Result<ActivationCache<T>> {
    let topology = weights.topology();
    let (c, h, w) = image.shape();
    if c != topology.input_channels() {
        return Err(Error::Shape(format!(
            "network expects {} input channels, got {c}",
            topology.input_channels()
        )));
    }
    let min = topology.min_input_side();
    if h < min || w < min {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            min,
        });
    }
    let pooled = topology.pooled_layers();
    let mut pre = Vec::with_capacity(weights.layers().len());
    let mut pools = Vec::with_capacity(pooled.len());
    let mut x = image.clone();
    for (i, layer) in weights.layers().iter().enumerate() {
        let y = conv2d(&x, layer)?;
        let mut a = y.clone();
        relu_in_place(&mut a);
        pre.push(y);
        x = if pooled.contains(&i) {
            let p = pool2x2(&a, mode)?;
            let next = p.output.clone();
            pools.push(p);
            next
        } else {
            a
        };
    }
    Ok(ActivationCache {
        mode,
        topology: topology.clone(),
        input_shape: image.shape(),
        pre,
        pools,
    })
}

/// Exact gradient, with respect to the input pixels, of
/// `<content.grad, pre_activation(content.layer)> + sum_s <style[s], pool_output(s)>`.
///
/// `style` has one optional seed per pooling stage; `None` means zero.
pub fn backward_to_input<T: Scalar>(
    weights: &VggWeights<T>,
    cache: &ActivationCache<T>,
    content: Option<&ContentSeed<T>>,
    style: &[Option<Tensor<T>>],
) -> Result<Tensor<T>> {
    let topology = weights.topology();
    if *topology != cache.topology || weights.layers().len() != cache.pre.len() {
        return Err(Error::Shape("activation cache was built for a different network".into()));
    }
    for (layer, pre) in weights.layers().iter().zip(&cache.pre) {
        if layer.out_channels != pre.channels() {
            return Err(Error::Shape("activation cache was built for a different network".into()));
        }
    }
    let pooled = topology.pooled_layers();
    if style.len() != pooled.len() {
        return Err(Error::Shape(format!(
            "expected {} style seeds, got {}",
            pooled.len(),
            style.len()
        )));
    }
    for (s, seed) in style.iter().enumerate() {
        if let Some(g) = seed {
            g.expect_shape(cache.pools[s].output.shape())?;
        }
    }
    if let Some(seed) = content {
        let pre = cache
            .pre
            .get(seed.layer)
            .ok_or_else(|| Error::Shape(format!("no layer {}", seed.layer)))?;
        seed.grad.expect_shape(pre.shape())?;
    }

    // Gradient w.r.t. the input of layer i+1 as seen from above.
    let mut upstream: Option<Tensor<T>> = None;
    for i in (0..cache.pre.len()).rev() {
        let pre = &cache.pre[i];
        // gradient at the ReLU output of layer i
        let mut grad_act = match pooled.iter().position(|&p| p == i) {
            Some(stage) => {
                let mut g_pool = upstream.take();
                if let Some(seed) = &style[stage] {
                    match g_pool.as_mut() {
                        Some(g) => g.add_assign(seed)?,
                        None => g_pool = Some(seed.clone()),
                    }
                }
                match g_pool {
                    Some(g) => Some(pool2x2_backward(
                        &g,
                        cache.pools[stage].argmax.as_deref(),
                        pre.height(),
                        pre.width(),
                    )?),
                    None => None,
                }
            }
            None => upstream.take(),
        };
        if let Some(g) = grad_act.as_mut() {
            for (gv, &pv) in g.data_mut().iter_mut().zip(pre.data()) {
                if pv <= T::zero() {
                    *gv = T::zero();
                }
            }
        }
        if let Some(seed) = content.filter(|s| s.layer == i) {
            match grad_act.as_mut() {
                Some(g) => g.add_assign(&seed.grad)?,
                None => grad_act = Some(seed.grad.clone()),
            }
        }
        upstream = match grad_act {
            Some(g) => Some(conv2d_backward_input(&g, &weights.layers()[i])?),
            None => None,
        };
    }
    let (c, h, w) = cache.input_shape;
    Ok(upstream.unwrap_or_else(|| Tensor::zeros(c, h, w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::vggnet::random_base_weights;

    fn small_topology() -> Topology {
        Topology::custom(3, vec![(1, 4), (2, 5), (1, 6)]).unwrap()
    }

    fn random_weights(topology: Topology, seed: u64, scale: f64) -> VggWeights<f64> {
        let mut rng = RngStream::new(seed);
        let mut w = VggWeights::<f64>::zeros(topology);
        for layer in w.layers_mut() {
            for v in layer.kernel.iter_mut().chain(layer.bias.iter_mut()) {
                *v = rng.next_gaussian(0.0, scale);
            }
        }
        w
    }

    fn random_image(seed: u64, h: usize, w: usize) -> Tensor<f64> {
        let mut rng = RngStream::new(seed);
        Tensor::from_vec(3, h, w, (0..3 * h * w).map(|_| rng.next_f64()).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_activations() {
        let w = VggWeights::<f32>::zeros(Topology::vgg19());
        let img = Tensor::from_vec(3, 32, 32, vec![0.5f32; 3 * 32 * 32]).unwrap();
        let cache = forward(&w, &img, PoolingMode::Max).unwrap();
        for i in 0..16 {
            assert!(cache.pre_activation(i).data().iter().all(|&v| v == 0.0));
        }
        for p in cache.pool_outputs() {
            assert!(p.data().iter().all(|&v| v == 0.0));
        }
        assert_eq!(cache.pool_output(4).shape(), (512, 1, 1));
        assert_eq!(cache.pre_activation(15).shape(), (512, 2, 2));
    }

    #[test]
    fn too_small_input_is_rejected() {
        let w = VggWeights::<f32>::zeros(Topology::vgg19());
        let img = Tensor::<f32>::zeros(3, 31, 64);
        assert!(matches!(
            forward(&w, &img, PoolingMode::Max),
            Err(Error::ImageTooSmall { min: 32, .. })
        ));
        let gray = Tensor::<f32>::zeros(1, 32, 32);
        assert!(forward(&w, &gray, PoolingMode::Max).is_err());
    }

    #[test]
    fn first_layer_is_linear_in_kernel() {
        let w = random_base_weights(5);
        let img = random_image(2, 32, 32).cast::<f32>();
        let base = forward(&w, &img, PoolingMode::Max).unwrap();
        let mut doubled = w.clone();
        for v in &mut doubled.layers_mut()[0].kernel {
            *v *= 2.0;
        }
        let cache = forward(&doubled, &img, PoolingMode::Max).unwrap();
        for (a, b) in base
            .pre_activation(0)
            .data()
            .iter()
            .zip(cache.pre_activation(0).data())
        {
            // biases are zero, so doubling the kernel doubles the output exactly
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let w = random_base_weights(9);
        let img = random_image(3, 32, 40).cast::<f32>();
        let a = forward(&w, &img, PoolingMode::Average).unwrap();
        let b = forward(&w, &img, PoolingMode::Average).unwrap();
        for i in 0..16 {
            assert_eq!(a.pre_activation(i), b.pre_activation(i));
        }
    }

    fn seeds(cache: &ActivationCache<f64>, seed: u64, content_layer: usize) -> (ContentSeed<f64>, Vec<Option<Tensor<f64>>>) {
        let mut rng = RngStream::new(seed);
        let mut rand_like = |t: &Tensor<f64>| {
            let (c, h, w) = t.shape();
            Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.next_gaussian(0.0, 1.0)).collect()).unwrap()
        };
        let content = ContentSeed {
            layer: content_layer,
            grad: rand_like(cache.pre_activation(content_layer)),
        };
        let style = cache.pool_outputs().map(|p| Some(rand_like(p))).collect();
        (content, style)
    }

    fn linear_objective(
        w: &VggWeights<f64>,
        img: &Tensor<f64>,
        mode: PoolingMode,
        content: Option<&ContentSeed<f64>>,
        style: &[Option<Tensor<f64>>],
    ) -> f64 {
        let cache = forward(w, img, mode).unwrap();
        let mut total = 0.0;
        if let Some(c) = content {
            total += c
                .grad
                .data()
                .iter()
                .zip(cache.pre_activation(c.layer).data())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        for (s, seed) in style.iter().enumerate() {
            if let Some(g) = seed {
                total += g.data().iter().zip(cache.pool_output(s).data()).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        total
    }

    fn fd_relative_error(mode: PoolingMode, use_content: bool, use_style: bool) -> f64 {
        let topo = small_topology();
        let w = random_weights(topo.clone(), 21, 0.3);
        let img = random_image(4, 8, 8);
        let cache = forward(&w, &img, mode).unwrap();
        let layer = topo.last_conv_of_stage(2).unwrap();
        let (content, mut style) = seeds(&cache, 33, layer);
        if !use_style {
            style.iter_mut().for_each(|s| *s = None);
        }
        let content = use_content.then_some(&content);
        let g = backward_to_input(&w, &cache, content, &style).unwrap();
        // The objective is piecewise linear; a small step avoids crossing ReLU kinks.
        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..img.data().len() {
            let mut plus = img.clone();
            plus.data_mut()[i] += h;
            let mut minus = img.clone();
            minus.data_mut()[i] -= h;
            let fd = (linear_objective(&w, &plus, mode, content, &style)
                - linear_objective(&w, &minus, mode, content, &style))
                / (2.0 * h);
            num += (g.data()[i] - fd).powi(2);
            den += fd * fd;
        }
        (num / den).sqrt()
    }

    #[test]
    fn finite_differences_agree() {
        for mode in [PoolingMode::Max, PoolingMode::Average] {
            for (c, s) in [(true, false), (false, true), (true, true)] {
                let err = fd_relative_error(mode, c, s);
                assert!(err < 1e-4, "{mode:?} content={c} style={s}: {err}");
            }
        }
    }

    #[test]
    fn zero_seeds_give_zero_gradient() {
        let w = random_weights(small_topology(), 1, 0.3);
        let img = random_image(1, 8, 8);
        let cache = forward(&w, &img, PoolingMode::Max).unwrap();
        let g = backward_to_input(&w, &cache, None, &[None, None, None]).unwrap();
        assert_eq!(g.shape(), (3, 8, 8));
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_additive_in_seeds() {
        let topo = small_topology();
        let w = random_weights(topo.clone(), 2, 0.3);
        let img = random_image(2, 8, 8);
        let cache = forward(&w, &img, PoolingMode::Max).unwrap();
        let layer = topo.last_conv_of_stage(1).unwrap();
        let (ca, sa) = seeds(&cache, 5, layer);
        let (cb, sb) = seeds(&cache, 6, layer);
        let mut csum = ca.clone();
        csum.grad.add_assign(&cb.grad).unwrap();
        let ssum: Vec<_> = sa
            .iter()
            .zip(&sb)
            .map(|(a, b)| {
                let mut t = a.clone().unwrap();
                t.add_assign(b.as_ref().unwrap()).unwrap();
                Some(t)
            })
            .collect();
        let ga = backward_to_input(&w, &cache, Some(&ca), &sa).unwrap();
        let gb = backward_to_input(&w, &cache, Some(&cb), &sb).unwrap();
        let gs = backward_to_input(&w, &cache, Some(&csum), &ssum).unwrap();
        for ((a, b), s) in ga.data().iter().zip(gb.data()).zip(gs.data()) {
            assert!((a + b - s).abs() < 1e-10, "{} vs {}", a + b, s);
        }
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let w = random_weights(small_topology(), 1, 0.3);
        let other = random_weights(Topology::custom(3, vec![(1, 4), (2, 5), (1, 7)]).unwrap(), 1, 0.3);
        let cache = forward(&w, &random_image(1, 8, 8), PoolingMode::Max).unwrap();
        assert!(backward_to_input(&other, &cache, None, &[None, None, None]).is_err());
        assert!(backward_to_input(&w, &cache, None, &[None, None]).is_err());
        let bad = ContentSeed {
            layer: 0,
            grad: Tensor::zeros(4, 2, 2),
        };
        assert!(backward_to_input(&w, &cache, Some(&bad), &[None, None, None]).is_err());
    }
}
