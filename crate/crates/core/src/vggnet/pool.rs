use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::PoolingMode;

/// Output of a 2x2 / stride-2 pooling.
///
/// For max pooling `argmax` holds, per output element, the row-major
/// position (0..4) of the first maximal element of its window.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Option<Vec<u8>>,
}

/// 2x2, stride-2 pooling; an odd trailing row or column is dropped.
pub fn pool2x2<T: Scalar>(input: &Tensor<T>, mode: PoolingMode) -> Result<Pooled<T>> {
    let (c, h, w) = input.shape();
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!("cannot pool a {h}x{w} map")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    let mut argmax = match mode {
        PoolingMode::Max => Some(vec![0u8; c * oh * ow]),
        PoolingMode::Average => None,
    };
    let quarter = T::from_f64_lossy(0.25);
    let out_data = out.data_mut();
    for ch in 0..c {
        let plane = input.plane(ch);
        for y in 0..oh {
            for x in 0..ow {
                let base = 2 * y * w + 2 * x;
                let window = [plane[base], plane[base + 1], plane[base + w], plane[base + w + 1]];
                let o = (ch * oh + y) * ow + x;
                match argmax.as_mut() {
                    Some(idx) => {
                        let mut best = 0;
                        for (i, &v) in window.iter().enumerate().skip(1) {
                            if v > window[best] {
                                best = i;
                            }
                        }
                        out_data[o] = window[best];
                        idx[o] = best as u8;
                    }
                    None => {
                        out_data[o] = (window[0] + window[1] + window[2] + window[3]) * quarter;
                    }
                }
            }
        }
    }
    Ok(Pooled { output: out, argmax })
}

/// Routes `grad_out` back to the `in_h x in_w` input of a pooling.
pub fn pool2x2_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: Option<&[u8]>,
    in_h: usize,
    in_w: usize,
) -> Result<Tensor<T>> {
    let (c, oh, ow) = grad_out.shape();
    if oh != in_h / 2 || ow != in_w / 2 {
        return Err(Error::Shape(format!(
            "pool gradient {oh}x{ow} does not match input {in_h}x{in_w}"
        )));
    }
    if let Some(idx) = argmax {
        if idx.len() != c * oh * ow {
            return Err(Error::Shape("argmax map does not match pool gradient".into()));
        }
    }
    let mut grad_in = Tensor::zeros(c, in_h, in_w);
    let quarter = T::from_f64_lossy(0.25);
    let g = grad_out.data();
    let gi = grad_in.data_mut();
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let o = (ch * oh + y) * ow + x;
                let base = ch * in_h * in_w + 2 * y * in_w + 2 * x;
                let offsets = [base, base + 1, base + in_w, base + in_w + 1];
                match argmax {
                    Some(idx) => gi[offsets[idx[o] as usize]] = g[o],
                    None => {
                        let v = g[o] * quarter;
                        for off in offsets {
                            gi[off] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> Tensor<f32> {
        Tensor::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn max_and_average_of_one_window() {
        let m = pool2x2(&window(), PoolingMode::Max).unwrap();
        assert_eq!(m.output.data(), &[4.0]);
        assert_eq!(m.argmax.as_deref(), Some(&[3u8][..]));
        let a = pool2x2(&window(), PoolingMode::Average).unwrap();
        assert_eq!(a.output.data(), &[2.5]);
        assert!(a.argmax.is_none());
    }

    #[test]
    fn constants_survive_both_modes() {
        let t = Tensor::from_vec(2, 4, 6, vec![0.375f32; 48]).unwrap();
        for mode in [PoolingMode::Max, PoolingMode::Average] {
            let p = pool2x2(&t, mode).unwrap();
            assert_eq!(p.output.shape(), (2, 2, 3));
            assert!(p.output.data().iter().all(|&v| v == 0.375));
        }
    }

    #[test]
    fn ties_pick_first_and_odd_edges_drop() {
        let t = Tensor::from_vec(1, 3, 3, vec![5.0f32, 5.0, 9.0, 5.0, 5.0, 9.0, 9.0, 9.0, 9.0]).unwrap();
        let p = pool2x2(&t, PoolingMode::Max).unwrap();
        assert_eq!(p.output.data(), &[5.0]);
        assert_eq!(p.argmax.unwrap(), vec![0]);
    }

    #[test]
    fn backward_routes_gradient() {
        let p = pool2x2(&window(), PoolingMode::Max).unwrap();
        let g = Tensor::from_vec(1, 1, 1, vec![2.0f32]).unwrap();
        let gi = pool2x2_backward(&g, p.argmax.as_deref(), 2, 2).unwrap();
        assert_eq!(gi.data(), &[0.0, 0.0, 0.0, 2.0]);
        let gi = pool2x2_backward(&g, None, 3, 3).unwrap();
        assert_eq!(gi.data(), &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn too_small_is_an_error() {
        assert!(pool2x2(&Tensor::<f32>::zeros(1, 1, 4), PoolingMode::Max).is_err());
    }
}
