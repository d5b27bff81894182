use crate::rng::{purpose, RngStream};
use crate::tensor::Scalar;

use super::{Topology, VggWeights};

/// Unbiased sample variance `1/(n-1) * sum (w - mean)^2` of one kernel;
/// zero when the layer has fewer than two weights.
pub fn layer_variance(values: &[f32]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Perturbed filter bank for outer iteration `k`:
/// `w_ij + alpha_i * x_ij` with `x_ij ~ N(0, Var(W_i))`.
///
/// Deviates come from the stream keyed by `(seed, k)`, consumed layer by
/// layer in flat kernel order. Biases are copied unchanged.
pub fn randomize_weights(base: &VggWeights<f32>, alpha: &[f64], seed: u64, k: u64) -> VggWeights<f32> {
    assert_eq!(alpha.len(), base.layers().len(), "one alpha per convolution");
    let mut rng = RngStream::derive(&[seed, k, purpose::PERTURBATION]);
    let mut out = base.clone();
    for (layer, &a) in out.layers_mut().iter_mut().zip(alpha) {
        let std = layer_variance(&layer.kernel).sqrt();
        for w in &mut layer.kernel {
            let x = rng.next_gaussian(0.0, std);
            *w = (*w as f64 + a * x) as f32;
        }
    }
    out
}

/// He-initialized stand-in for pre-trained filters: kernels drawn from
/// `N(0, 2 / fan_in)`, biases zero.
pub fn random_base_weights(seed: u64) -> VggWeights<f32> {
    random_weights_for(Topology::vgg19(), seed)
}

pub(crate) fn random_weights_for<T: Scalar>(topology: Topology, seed: u64) -> VggWeights<T> {
    let mut rng = RngStream::derive(&[seed, purpose::BASE_WEIGHTS]);
    let mut w = VggWeights::<T>::zeros(topology);
    for layer in w.layers_mut() {
        let std = (2.0 / layer.fan_in() as f64).sqrt();
        for v in &mut layer.kernel {
            *v = T::from_f64_lossy(rng.next_gaussian(0.0, std));
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_alpha_is_identity() {
        let base = random_base_weights(1);
        assert_eq!(randomize_weights(&base, &[0.0; 16], 4, 1), base);
    }

    #[test]
    fn same_key_same_weights() {
        let base = random_base_weights(1);
        let a = randomize_weights(&base, &[1.0; 16], 4, 2);
        let b = randomize_weights(&base, &[1.0; 16], 4, 2);
        assert_eq!(a, b);
        let c = randomize_weights(&base, &[1.0; 16], 4, 3);
        assert_ne!(a, c);
        // biases untouched
        for (x, y) in a.layers().iter().zip(base.layers()) {
            assert_eq!(x.bias, y.bias);
        }
    }

    #[test]
    fn base_weights_statistics() {
        let w = random_base_weights(10);
        assert_eq!(w, random_base_weights(10));
        let first = &w.layers()[0];
        assert_eq!(first.kernel.len(), 1728);
        let std = layer_variance(&first.kernel).sqrt();
        let want = (2.0f64 / 27.0).sqrt();
        assert!((std / want - 1.0).abs() < 0.1, "{std} vs {want}");
        assert!(w.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn degenerate_layer_has_zero_variance() {
        assert_eq!(layer_variance(&[0.3]), 0.0);
        assert_eq!(layer_variance(&[]), 0.0);
        assert!((layer_variance(&[1.0, 3.0]) - 2.0).abs() < 1e-12);
    }
}
