//! Float rasters, binary PNM I/O and resampling.
//!
//! Pixels are stored interleaved (row-major, channel fastest) as `f32` in
//! `[0, 1]`. The only file format is raw PGM (`P5`) / PPM (`P6`) with
//! maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, PnmError, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image, rejecting bad channel counts, wrong lengths and
    /// values outside `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage("empty image".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "{height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("value {v} outside [0, 1]")));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    /// Like [`Image::new`] but clamps every value into `[0, 1]`; NaN maps to 0.
    pub fn from_clamped(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let data = data.into_iter().map(clamp_unit).collect();
        Image::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// The channel values of one pixel.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub(crate) fn expect_same_dims(&self, other: &Image) -> Result<()> {
        if !self.same_dims(other) {
            return Err(Error::Shape(format!(
                "image {}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )));
        }
        Ok(())
    }

    /// Channel-major copy for the network.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut data = vec![T::zero(); h * w * c];
        for ch in 0..c {
            for p in 0..h * w {
                data[ch * h * w + p] = T::from_f64_lossy(self.data[p * c + ch] as f64);
            }
        }
        Tensor::from_vec(c, h, w, data).expect("consistent dimensions")
    }

    /// Image from a channel-major tensor, projecting every value onto `[0, 1]`.
    pub fn from_tensor_clamped<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        let (c, h, w) = t.shape();
        let mut data = vec![0.0f32; h * w * c];
        for ch in 0..c {
            let plane = t.plane(ch);
            for p in 0..h * w {
                data[p * c + ch] = clamp_unit(plane[p].to_f64_lossy() as f32);
            }
        }
        Image::new(h, w, c, data)
    }

    /// Mean absolute difference over all samples.
    pub fn mean_abs_diff(&self, other: &Image) -> Result<f64> {
        self.expect_same_dims(other)?;
        let total: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum();
        Ok(total / self.data.len() as f64)
    }
}

#[inline]
fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Quantizes `[0, 1]` to a byte, rounding half away from zero.
#[inline]
pub fn quantize(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    payload_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PnmError> {
    if bytes.len() < 2 {
        return Err(PnmError::BadHeader("file shorter than the magic number".into()));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(PnmError::BadMagic(String::from_utf8_lossy(other).into_owned())),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each token
        let start_ws = pos;
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if pos == start_ws {
            return Err(PnmError::BadHeader(format!("missing separator before field {i}")));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(PnmError::BadHeader(format!("expected a number for field {i}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| PnmError::BadHeader(format!("number {text} out of range")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(PnmError::BadHeader("missing whitespace after maxval".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(PnmError::UnsupportedMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(PnmError::BadHeader("zero image dimension".into()));
    }
    Ok(Header {
        channels,
        width: width as usize,
        height: height as usize,
        payload_offset: pos,
    })
}

/// Decodes a binary PGM/PPM held in memory.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let header = parse_header(bytes)?;
    let expected = header.width * header.height * header.channels;
    let payload = &bytes[header.payload_offset..];
    if payload.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: payload.len(),
        }
        .into());
    }
    let data = payload[..expected].iter().map(|&b| b as f32 / 255.0).collect();
    Image::new(header.height, header.width, header.channels, data)
}

/// Encodes as `P5` (one channel) or `P6` (three channels).
pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| quantize(v)));
    out
}

pub fn load_pnm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn save_pnm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}

/// Align-corners bilinear resampling: destination index `d` samples source
/// coordinate `d * (src_len - 1) / (dst_len - 1)`. A length-1 source axis is
/// replicated; a length-1 destination axis samples source index 0.
pub fn bilinear_resize(img: &Image, new_h: usize, new_w: usize) -> Result<Image> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::InvalidArgument("resize target must be at least 1x1".into()));
    }
    if new_h == img.height && new_w == img.width {
        return Ok(img.clone());
    }
    let c = img.channels;
    let ys = axis_samples(img.height, new_h);
    let xs = axis_samples(img.width, new_w);
    let mut data = Vec::with_capacity(new_h * new_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p00 = img.get(y0, x0, ch) as f64;
                let p01 = img.get(y0, x1, ch) as f64;
                let p10 = img.get(y1, x0, ch) as f64;
                let p11 = img.get(y1, x1, ch) as f64;
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                data.push((top + (bottom - top) * fy) as f32);
            }
        }
    }
    Image::from_clamped(new_h, new_w, c, data)
}

fn axis_samples(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    (0..dst_len)
        .map(|d| {
            if src_len == 1 || dst_len == 1 {
                return (0, 0, 0.0);
            }
            let pos = d as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64;
            let i0 = (pos.floor() as usize).min(src_len - 1);
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Replicates a single band into R, G and B; three-channel input is returned as is.
pub fn to_rgb(img: &Image) -> Image {
    if img.channels == 3 {
        return img.clone();
    }
    let data = img.data.iter().flat_map(|&v| [v, v, v]).collect();
    Image::new(img.height, img.width, 3, data).expect("replicated image is valid")
}

/// Mean over channels; three-channel images become gray.
pub fn to_gray(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(img.channels)
        .map(|px| px.iter().sum::<f32>() / img.channels as f32)
        .collect();
    Image::from_clamped(img.height, img.width, 1, data).expect("averaged image is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_p5_example() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend([0u8, 255, 128, 64]);
        assert_eq!(bytes.len(), 15);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 2, 1));
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn decode_p6_white() {
        let mut bytes = b"P6\n1 1\n255\n".to_vec();
        bytes.extend([255u8, 255, 255]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(img.pixel(0, 0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn decode_errors_are_distinct() {
        let err = |b: &[u8]| match decode_pnm(b) {
            Err(Error::Pnm(e)) => e,
            other => panic!("unexpected {other:?}"),
        };
        assert!(matches!(err(b"P4 1 1 255\n\0"), PnmError::BadMagic(m) if m == "P4"));
        assert!(matches!(err(b"P5 1 x 255\n\0"), PnmError::BadHeader(_)));
        assert_eq!(err(b"P5 1 1 65535\n\0\0"), PnmError::UnsupportedMaxval(65535));
        assert_eq!(
            err(b"P5 2 2 255\n\0\0"),
            PnmError::Truncated {
                expected: 4,
                found: 2
            }
        );
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n1 1\n255\n".to_vec();
        bytes.push(51);
        assert_eq!(decode_pnm(&bytes).unwrap().data(), &[51.0 / 255.0]);
    }

    #[test]
    fn quantization_rounds_half_away() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(1.4 / 255.0), 1);
    }

    #[test]
    fn three_channel_encodes_as_p6() {
        let img = Image::filled(2, 3, 3, 0.25).unwrap();
        let bytes = encode_pnm(&img);
        assert_eq!(&bytes[..2], b"P6");
        assert_eq!(&bytes[..2], b"P6");
        let gray = Image::filled(2, 3, 1, 0.25).unwrap();
        assert_eq!(&encode_pnm(&gray)[..2], b"P5");
    }

    #[test]
    fn save_and_load_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        let data: Vec<f32> = (0..12).map(|v| (v * 20) as f32 / 255.0).collect();
        let img = Image::new(2, 2, 3, data).unwrap();
        save_pnm(&img, &path).unwrap();
        assert_eq!(load_pnm(&path).unwrap(), img);
        let missing = dir.path().join("nope.pgm");
        let msg = load_pnm(&missing).unwrap_err().to_string();
        assert!(msg.contains("nope.pgm"), "{msg}");
    }

    #[test]
    fn constructor_rejects_out_of_range() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.0, 0.0]).is_err());
        assert!(Image::new(1, 2, 1, vec![0.0]).is_err());
        assert!(Image::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn resize_middle_column() {
        let img = Image::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let out = bilinear_resize(&img, 2, 3).unwrap();
        assert_eq!(out.data(), &[0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn resize_constant_and_identity() {
        let img = Image::filled(3, 5, 3, 0.7).unwrap();
        let out = bilinear_resize(&img, 8, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.7));
        assert_eq!(out.channels(), 3);
        let ramp = Image::new(1, 4, 1, vec![0.0, 0.2, 0.4, 0.6]).unwrap();
        assert_eq!(bilinear_resize(&ramp, 1, 4).unwrap(), ramp);
        // single source row is replicated
        let rows = bilinear_resize(&ramp, 3, 4).unwrap();
        assert_eq!(rows.data()[8..], ramp.data()[..]);
    }

    #[test]
    fn to_rgb_replicates() {
        let g = Image::new(1, 1, 1, vec![0.3]).unwrap();
        assert_eq!(to_rgb(&g).data(), &[0.3, 0.3, 0.3]);
        let g = Image::new(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let rgb = to_rgb(&g);
        for y in 0..2 {
            for x in 0..2 {
                let p = rgb.pixel(y, x);
                assert!(p.iter().all(|&v| v == g.get(y, x, 0)));
            }
        }
        let c = Image::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(to_rgb(&c), c);
    }

    #[test]
    fn tensor_round_trip() {
        let c = Image::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let t = c.to_tensor::<f32>();
        assert_eq!(t.plane(0), &[0.1, 0.4]);
        assert_eq!(Image::from_tensor_clamped(&t).unwrap(), c);
    }

    fn quantized_image() -> impl Strategy<Value = Image> {
        (1usize..6, 1usize..6, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(h, w, c)| {
            proptest::collection::vec(0u8..=255, h * w * c).prop_map(move |bytes| {
                Image::new(h, w, c, bytes.iter().map(|&b| b as f32 / 255.0).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn pnm_round_trip_is_exact(img in quantized_image()) {
            let bytes = encode_pnm(&img);
            let back = decode_pnm(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_pnm(&back), bytes);
        }

        #[test]
        fn resize_stays_in_range(img in quantized_image(), h in 1usize..9, w in 1usize..9) {
            let out = bilinear_resize(&img, h, w).unwrap();
            prop_assert_eq!((out.height(), out.width(), out.channels()), (h, w, img.channels()));
            let lo = img.data().iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            for &v in out.data() {
                prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
            }
        }
    }
}
