//! Deterministic synthetic optical/SAR pairs with a known change mask.
//!
//! The pre-event optical image shows a base scene of ground-cover classes.
//! The post-event SAR image shows the same scene plus flooded patches, with
//! multiplicative gamma speckle. The truth mask is the raster of the flooded
//! patches.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::ChangeMap;
use crate::error::{Error, Result};
use crate::image::{save_pnm, Image};
use crate::rng::{purpose, RngStream};

pub const MIN_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class {
    Field,
    Water,
    Vegetation,
    Building,
    /// Standing water after the event; appears only post-event.
    Flooded,
}

impl Class {
    const BASE: [Class; 3] = [Class::Water, Class::Vegetation, Class::Building];

    fn optical_color(self) -> [f64; 3] {
        match self {
            Class::Field => [0.62, 0.55, 0.36],
            Class::Water => [0.10, 0.22, 0.42],
            Class::Vegetation => [0.18, 0.42, 0.16],
            Class::Building => [0.74, 0.73, 0.76],
            Class::Flooded => [0.16, 0.24, 0.34],
        }
    }

    /// Cycles per pixel along (y, x) and amplitude of the optical texture.
    fn texture(self) -> (f64, f64, f64) {
        match self {
            Class::Field => (0.0, 0.11, 0.05),
            Class::Water => (0.03, 0.02, 0.03),
            Class::Vegetation => (0.19, 0.23, 0.08),
            Class::Building => (0.25, 0.0, 0.06),
            Class::Flooded => (0.03, 0.02, 0.03),
        }
    }

    fn sar_mean(self) -> f64 {
        match self {
            Class::Field => 0.42,
            Class::Water => 0.05,
            Class::Vegetation => 0.26,
            Class::Building => 0.72,
            Class::Flooded => 0.06,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShapeKind {
    Rect { y0: usize, x0: usize, h: usize, w: usize },
    Disc { cy: f64, cx: f64, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub class: Class,
}

impl Shape {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        match self.kind {
            ShapeKind::Rect { y0, x0, h, w } => y >= y0 && y < y0 + h && x >= x0 && x < x0 + w,
            ShapeKind::Disc { cy, cx, r } => {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                dy * dy + dx * dx <= r * r
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub size: usize,
    pub base: Vec<Shape>,
    pub changes: Vec<Shape>,
}

fn rects_overlap(a: (usize, usize, usize, usize), b: (usize, usize, usize, usize), gap: usize) -> bool {
    let (ay, ax, ah, aw) = a;
    let (by, bx, bh, bw) = b;
    ay < by + bh + gap && by < ay + ah + gap && ax < bx + bw + gap && bx < ax + aw + gap
}

impl Scene {
    pub fn random(seed: u64, size: usize, change_fraction: f64) -> Result<Scene> {
        if size < MIN_SIZE {
            return Err(Error::InvalidArgument(format!(
                "scene size {size} is below the minimum of {MIN_SIZE} pixels"
            )));
        }
        if !(0.0..=0.5).contains(&change_fraction) {
            return Err(Error::InvalidArgument(format!(
                "change fraction must lie in [0, 0.5], got {change_fraction}"
            )));
        }
        let mut rng = RngStream::derive(&[seed, purpose::SCENE]);
        let s = size as f64;
        let mut base = Vec::new();
        let n_base = 4 + rng.next_below(3) as usize;
        for i in 0..n_base {
            let class = Class::BASE[i % Class::BASE.len()];
            let kind = if rng.next_f64() < 0.5 {
                let h = rng.uniform(0.18 * s, 0.4 * s) as usize;
                let w = rng.uniform(0.18 * s, 0.4 * s) as usize;
                ShapeKind::Rect {
                    y0: rng.next_below((size - h) as u64) as usize,
                    x0: rng.next_below((size - w) as u64) as usize,
                    h,
                    w,
                }
            } else {
                let r = rng.uniform(0.1 * s, 0.2 * s);
                ShapeKind::Disc {
                    cy: rng.uniform(r, s - r),
                    cx: rng.uniform(r, s - r),
                    r,
                }
            };
            base.push(Shape { kind, class });
        }

        let target = (change_fraction * s * s).round() as usize;
        let pre = Scene { size, base: base.clone(), changes: Vec::new() }.class_map(false);
        let dry = |(y0, x0, h, w): (usize, usize, usize, usize)| {
            (y0..y0 + h).all(|y| (x0..x0 + w).all(|x| pre[y * size + x] != Class::Water))
        };
        let mut changes = Vec::new();
        if target > 0 {
            let pieces = if target < 200 { 1 } else { 2 + rng.next_below(2) as usize };
            let mut placed: Vec<(usize, usize, usize, usize)> = Vec::new();
            let mut remaining = target;
            for p in 0..pieces {
                let area = if p + 1 == pieces { remaining } else { target / pieces };
                let mut side_area = area;
                'shrink: loop {
                    for _ in 0..200 {
                        let aspect = rng.uniform(0.6, 1.6);
                        let h = ((side_area as f64 * aspect).sqrt().round() as usize).clamp(1, size);
                        let w = side_area.div_ceil(h).clamp(1, size);
                        if h > size || w > size {
                            continue;
                        }
                        let y0 = rng.next_below((size - h + 1) as u64) as usize;
                        let x0 = rng.next_below((size - w + 1) as u64) as usize;
                        let cand = (y0, x0, h, w);
                        if dry(cand) && placed.iter().all(|&q| !rects_overlap(cand, q, 1)) {
                            placed.push(cand);
                            remaining = remaining.saturating_sub(h * w);
                            break 'shrink;
                        }
                    }
                    side_area = side_area * 3 / 4;
                    if side_area == 0 {
                        break;
                    }
                }
            }
            for (y0, x0, h, w) in placed {
                changes.push(Shape {
                    kind: ShapeKind::Rect { y0, x0, h, w },
                    class: Class::Flooded,
                });
            }
        }
        Ok(Scene { size, base, changes })
    }

    /// Class of every pixel before (`post = false`) or after the event.
    pub fn class_map(&self, post: bool) -> Vec<Class> {
        let n = self.size;
        let mut map = vec![Class::Field; n * n];
        let layers = self.base.iter().chain(if post { self.changes.iter() } else { [].iter() });
        for shape in layers {
            for y in 0..n {
                for x in 0..n {
                    if shape.contains(y, x) {
                        map[y * n + x] = shape.class;
                    }
                }
            }
        }
        map
    }

    pub fn truth(&self) -> ChangeMap {
        let n = self.size;
        let bits = (0..n * n)
            .map(|i| self.changes.iter().any(|s| s.contains(i / n, i % n)))
            .collect();
        ChangeMap::new(n, n, bits).expect("square raster")
    }
}

/// Optical rendering: per-class colour, a low-frequency illumination
/// gradient and a class-specific sinusoidal texture.
pub fn render_optical(scene: &Scene, post: bool, seed: u64) -> Image {
    let n = scene.size;
    let mut rng = RngStream::derive(&[seed, purpose::SCENE, 1]);
    let phase = rng.uniform(0.0, TAU);
    let (gy, gx) = (rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    let classes = scene.class_map(post);
    let mut data = Vec::with_capacity(n * n * 3);
    for y in 0..n {
        for x in 0..n {
            let class = classes[y * n + x];
            let (u, v) = (y as f64 / n as f64 - 0.5, x as f64 / n as f64 - 0.5);
            let shade = 0.06 * (gy * u + gx * v) + 0.03 * (TAU * (u + 0.5 * v) + phase).sin();
            let (fy, fx, amp) = class.texture();
            let tex = amp * (TAU * (fy * y as f64 + fx * x as f64) + phase).sin();
            for c in class.optical_color() {
                data.push((c + shade + tex) as f32);
            }
        }
    }
    Image::from_clamped(n, n, 3, data).expect("rendered optical image")
}

/// SAR intensity: class mean times Gamma(4, 1/4) speckle, clipped to [0, 1].
pub fn render_sar(scene: &Scene, post: bool, seed: u64) -> Image {
    let n = scene.size;
    let mut rng = RngStream::derive(&[seed, purpose::SPECKLE]);
    let data = scene
        .class_map(post)
        .iter()
        .map(|c| (c.sar_mean() * rng.next_gamma_int(4, 0.25)) as f32)
        .collect();
    Image::from_clamped(n, n, 1, data).expect("rendered SAR image")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub optical: Image,
    pub sar: Image,
    pub truth: ChangeMap,
    pub scene: Scene,
}

impl SynthPair {
    /// Writes `opt.ppm`, `sar.pgm` and `truth.pgm` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_pnm(&self.optical, dir.join("opt.ppm"))?;
        save_pnm(&self.sar, dir.join("sar.pgm"))?;
        self.truth.save(dir.join("truth.pgm"))
    }
}

pub fn gen_pair(seed: u64, size: usize, change_fraction: f64) -> Result<SynthPair> {
    let scene = Scene::random(seed, size, change_fraction)?;
    Ok(SynthPair {
        optical: render_optical(&scene, false, seed),
        sar: render_sar(&scene, true, seed),
        truth: scene.truth(),
        scene,
    })
}
