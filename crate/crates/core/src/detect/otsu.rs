use crate::error::{Error, Result};
use crate::image::{quantize, Image};

use super::ChangeMap;

/// 256-bin histogram of a gray image; bin = `round(255 v)`.
pub fn gray_histogram(gray: &Image) -> Result<[u64; 256]> {
    if gray.channels() != 1 {
        return Err(Error::InvalidImage("Otsu thresholding needs a single-channel image".into()));
    }
    let mut hist = [0u64; 256];
    for &v in gray.data() {
        hist[quantize(v) as usize] += 1;
    }
    Ok(hist)
}

/// Between-class variance (scaled by `N^2`) for every threshold bin `t`,
/// with class 0 holding bins `<= t`. Empty-class splits score 0.
pub fn between_class_scores(hist: &[u64; 256]) -> [f64; 256] {
    let n: u128 = hist.iter().map(|&h| h as u128).sum();
    let total: u128 = hist.iter().enumerate().map(|(b, &h)| b as u128 * h as u128).sum();
    let mut scores = [0.0; 256];
    let (mut n0, mut s0) = (0u128, 0u128);
    for t in 0..256 {
        n0 += hist[t] as u128;
        s0 += t as u128 * hist[t] as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // N^2 w0 w1 (mu0 - mu1)^2 = (N s0 - n0 S)^2 / (n0 n1), numerator exact.
        let diff = (n * s0) as i128 - (n0 * total) as i128;
        let num = (diff as f64) * (diff as f64);
        scores[t] = num / (n0 as f64 * n1 as f64);
    }
    scores
}

/// Threshold bin maximizing the between-class variance; the lowest bin wins
/// ties. A histogram with a single occupied bin returns that bin.
pub fn otsu_bin(hist: &[u64; 256]) -> usize {
    let scores = between_class_scores(hist);
    let mut best = 0;
    let mut best_score = 0.0;
    for (t, &s) in scores.iter().enumerate() {
        if s > best_score {
            best = t;
            best_score = s;
        }
    }
    if best_score == 0.0 {
        return hist.iter().rposition(|&h| h > 0).unwrap_or(0);
    }
    best
}

/// Returns the threshold `t/255` and the map of pixels whose bin exceeds `t`.
pub fn otsu_threshold(gray: &Image) -> Result<(f32, ChangeMap)> {
    let hist = gray_histogram(gray)?;
    let t = otsu_bin(&hist);
    let bits = gray.data().iter().map(|&v| quantize(v) as usize > t).collect();
    let map = ChangeMap::new(gray.height(), gray.width(), bits)?;
    Ok((t as f32 / 255.0, map))
}
