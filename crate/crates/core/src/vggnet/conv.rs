//! 3x3, stride-1, zero-padded convolution lowered to a single GEMM.
//!
//! The im2col matrix has one row per `(c, dy, dx)` triple in that order,
//! so every output is reduced channel-major, then kernel row-major.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::ConvLayer;

fn im2col<T: Scalar>(input: &Tensor<T>) -> Vec<T> {
    let (c, h, w) = input.shape();
    let hw = h * w;
    let mut col = vec![T::zero(); c * 9 * hw];
    for ch in 0..c {
        let plane = input.plane(ch);
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &mut col[((ch * 3 + dy) * 3 + dx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    // x range where x + dx - 1 is inside [0, w)
                    let x0 = if dx == 0 { 1 } else { 0 };
                    let x1 = if dx == 2 { w.saturating_sub(1) } else { w };
                    for x in x0..x1 {
                        dst[x] = src[x + dx - 1];
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize) -> Tensor<T> {
    let hw = h * w;
    let mut out = Tensor::zeros(c, h, w);
    let data = out.data_mut();
    for ch in 0..c {
        let plane = &mut data[ch * hw..][..hw];
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &col[((ch * 3 + dy) * 3 + dx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    let x0 = if dx == 0 { 1 } else { 0 };
                    let x1 = if dx == 2 { w.saturating_sub(1) } else { w };
                    for x in x0..x1 {
                        dst[x + dx - 1] = dst[x + dx - 1] + src[x];
                    }
                }
            }
        }
    }
    out
}

fn check_input<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<()> {
    if input.channels() != layer.in_channels {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            layer.in_channels,
            input.channels()
        )));
    }
    if layer.kernel.len() != layer.out_channels * layer.in_channels * 9 || layer.bias.len() != layer.out_channels {
        return Err(Error::Shape("kernel/bias length does not match layer shape".into()));
    }
    Ok(())
}

/// `out[o, y, x] = bias[o] + sum_{c, dy, dx} in[c, y+dy-1, x+dx-1] * k[o, c, dy, dx]`
/// with zero outside the input.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    check_input(input, layer)?;
    let (c, h, w) = input.shape();
    let hw = h * w;
    let k = c * 9;
    let col = im2col(input);
    let mut out = vec![T::zero(); layer.out_channels * hw];
    for (o, chunk) in out.chunks_exact_mut(hw).enumerate() {
        chunk.fill(layer.bias[o]);
    }
    T::gemm(
        layer.out_channels,
        k,
        hw,
        T::one(),
        &layer.kernel,
        (k as isize, 1),
        &col,
        (hw as isize, 1),
        T::one(),
        &mut out,
        (hw as isize, 1),
    );
    Tensor::from_vec(layer.out_channels, h, w, out)
}

/// Gradient of `<grad_out, conv2d(input)>` with respect to `input`.
pub fn conv2d_backward_input<T: Scalar>(grad_out: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    if grad_out.channels() != layer.out_channels {
        return Err(Error::Shape(format!(
            "conv backward expects {} gradient channels, got {}",
            layer.out_channels,
            grad_out.channels()
        )));
    }
    let (_, h, w) = grad_out.shape();
    let hw = h * w;
    let k = layer.in_channels * 9;
    let mut col = vec![T::zero(); k * hw];
    // kernel^T: (k x out) view of the (out x k) kernel
    T::gemm(
        k,
        layer.out_channels,
        hw,
        T::one(),
        &layer.kernel,
        (1, k as isize),
        grad_out.data(),
        (hw as isize, 1),
        T::zero(),
        &mut col,
        (hw as isize, 1),
    );
    Ok(col2im(&col, layer.in_channels, h, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn direct_conv(input: &Tensor<f64>, layer: &ConvLayer<f64>) -> Tensor<f64> {
        let (c, h, w) = input.shape();
        let mut out = Tensor::zeros(layer.out_channels, h, w);
        for o in 0..layer.out_channels {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = layer.bias[o];
                    for ch in 0..c {
                        for dy in 0..3 {
                            for dx in 0..3 {
                                let sy = y as isize + dy as isize - 1;
                                let sx = x as isize + dx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += input.get(ch, sy as usize, sx as usize)
                                    * layer.kernel[((o * c + ch) * 3 + dy) * 3 + dx];
                            }
                        }
                    }
                    out.set(o, y, x, acc);
                }
            }
        }
        out
    }

    fn random_layer(rng: &mut RngStream, out: usize, cin: usize) -> ConvLayer<f64> {
        ConvLayer {
            out_channels: out,
            in_channels: cin,
            kernel: (0..out * cin * 9).map(|_| rng.next_gaussian(0.0, 1.0)).collect(),
            bias: (0..out).map(|_| rng.next_gaussian(0.0, 1.0)).collect(),
        }
    }

    fn random_tensor(rng: &mut RngStream, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let mut layer = ConvLayer::<f64>::zeros(1, 1);
        layer.kernel[4] = 1.0;
        let mut rng = RngStream::new(1);
        let input = random_tensor(&mut rng, 1, 4, 5);
        assert_eq!(conv2d(&input, &layer).unwrap(), input);
    }

    #[test]
    fn all_ones_counts_neighbours() {
        let mut layer = ConvLayer::<f32>::zeros(1, 1);
        layer.kernel.fill(1.0);
        let input = Tensor::from_vec(1, 3, 3, vec![1.0f32; 9]).unwrap();
        let out = conv2d(&input, &layer).unwrap();
        assert_eq!(out.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn bias_only() {
        let mut layer = ConvLayer::<f32>::zeros(2, 3);
        layer.bias = vec![0.5, -2.0];
        let input = Tensor::from_vec(3, 2, 2, vec![0.7f32; 12]).unwrap();
        let out = conv2d(&input, &layer).unwrap();
        assert!(out.plane(0).iter().all(|&v| v == 0.5));
        assert!(out.plane(1).iter().all(|&v| v == -2.0));
    }

    #[test]
    fn gemm_path_matches_direct_summation() {
        let mut rng = RngStream::new(7);
        for &(c, o, h, w) in &[(1, 1, 1, 1), (3, 4, 5, 6), (2, 3, 1, 7), (5, 2, 4, 2)] {
            let layer = random_layer(&mut rng, o, c);
            let input = random_tensor(&mut rng, c, h, w);
            let fast = conv2d(&input, &layer).unwrap();
            let slow = direct_conv(&input, &layer);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // <g, conv(x) - b> == <conv_backward(g), x>
        let mut rng = RngStream::new(11);
        let layer = random_layer(&mut rng, 3, 2);
        let x = random_tensor(&mut rng, 2, 4, 5);
        let g = random_tensor(&mut rng, 3, 4, 5);
        let y = conv2d(&x, &layer).unwrap();
        let mut lhs = 0.0;
        for o in 0..3 {
            for (gv, yv) in g.plane(o).iter().zip(y.plane(o)) {
                lhs += gv * (yv - layer.bias[o]);
            }
        }
        let gx = conv2d_backward_input(&g, &layer).unwrap();
        let rhs: f64 = gx.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let layer = ConvLayer::<f32>::zeros(2, 3);
        let input = Tensor::<f32>::zeros(2, 3, 3);
        assert!(conv2d(&input, &layer).is_err());
        assert!(conv2d_backward_input(&Tensor::<f32>::zeros(3, 3, 3), &layer).is_err());
    }
}
