//! DHFFW1 weight files.
//!
//! Little-endian layout: the seven bytes `DHFFW1\n`, `u32` layer count (16),
//! then per layer `u32 out, u32 in, u32 kh (3), u32 kw (3)`, the `f32`
//! kernel in `(out, in, kh, kw)` order and `f32 bias[out]`. No padding, no
//! checksum.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result, WeightsError};

use super::{ConvLayer, Topology, VggWeights};

pub const MAGIC: &[u8; 7] = b"DHFFW1\n";

pub fn encode_weights(weights: &VggWeights<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(11 + weights.parameter_count() * 4 + weights.layers().len() * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(weights.layers().len() as u32).to_le_bytes());
    for layer in weights.layers() {
        for v in [layer.out_channels as u32, layer.in_channels as u32, 3, 3] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.kernel.iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8], WeightsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            WeightsError::Truncated(format!("{what} at offset {} needs {n} bytes", self.pos))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightsError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, WeightsError> {
        let len = n.checked_mul(4).ok_or_else(|| WeightsError::Plan(format!("{what} too large")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Decodes a VGG-19 filter bank, checking the magic, version and the
/// sixteen-layer channel plan.
pub fn decode_weights(bytes: &[u8]) -> Result<VggWeights<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(7, "magic").map_err(|_| WeightsError::BadMagic(String::from_utf8_lossy(bytes).chars().take(7).collect()))?;
    if magic != MAGIC {
        let text = String::from_utf8_lossy(magic).into_owned();
        return Err(if magic.starts_with(b"DHFFW") {
            WeightsError::Version(text.trim_end().to_string())
        } else {
            WeightsError::BadMagic(text)
        }
        .into());
    }
    let topology = Topology::vgg19();
    let plan = topology.channel_plan();
    let count = r.u32("layer count")? as usize;
    if count != plan.len() {
        return Err(WeightsError::Plan(format!("expected {} layers, file has {count}", plan.len())).into());
    }
    let mut layers = Vec::with_capacity(count);
    for (i, &(cin, cout)) in plan.iter().enumerate() {
        let out = r.u32("out_channels")? as usize;
        let inc = r.u32("in_channels")? as usize;
        let kh = r.u32("kernel height")?;
        let kw = r.u32("kernel width")?;
        if out != cout || inc != cin || kh != 3 || kw != 3 {
            return Err(WeightsError::Plan(format!(
                "layer {} is {out}x{inc}x{kh}x{kw}, expected {cout}x{cin}x3x3",
                i + 1
            ))
            .into());
        }
        let kernel = r.f32s(out * inc * 9, "kernel")?;
        let bias = r.f32s(out, "bias")?;
        if kernel.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(WeightsError::NonFinite(i + 1).into());
        }
        layers.push(ConvLayer {
            out_channels: out,
            in_channels: inc,
            kernel,
            bias,
        });
    }
    VggWeights::new(topology, layers)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<VggWeights<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

pub fn save_weights(weights: &VggWeights<f32>, path: impl AsRef<Path>) -> Result<()> {
    if *weights.topology() != Topology::vgg19() {
        return Err(WeightsError::Plan("only the VGG-19 plan can be written".into()).into());
    }
    let path = path.as_ref();
    fs::write(path, encode_weights(weights)).map_err(|e| Error::io(path, e))
}
