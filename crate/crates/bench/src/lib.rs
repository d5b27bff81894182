//! Shared fixtures for the criterion benchmarks.

use dhff_core::synthgen::gen_pair;
use dhff_core::{Image, Tensor};

/// Optical image of the synthetic scene used across benchmarks.
pub fn optical(size: usize) -> Image {
    gen_pair(3, size, 0.1).expect("synthetic pair").optical
}

pub fn optical_tensor(size: usize) -> Tensor<f32> {
    optical(size).to_tensor()
}
