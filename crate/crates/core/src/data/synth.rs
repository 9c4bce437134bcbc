//! Synthetic datasets with known ground truth.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use super::{Dataset, SampleShape};
use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const MAX_GLYPH_CLASSES: usize = 16;
pub const MIN_GLYPH_SIZE: usize = 16;

/// Isotropic unit-variance Gaussian blobs, class-major order.
///
/// With `classes ≤ dim` the centers form a randomly oriented regular simplex
/// with edge `separation`; otherwise they are rejection-sampled to be at
/// least `separation` apart.
pub fn gen_blobs(classes: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidConfig("blobs need at least 2 classes".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidConfig("blobs need dim ≥ 1".into()));
    }
    let mut rng = rng::stream(seed, &[0]);
    let centers = if classes <= dim {
        simplex_centers(classes, dim, separation, &mut rng)
    } else {
        spread_centers(classes, dim, separation, &mut rng)
    };
    let mut samples = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    let mut noise = rng::stream(seed, &[1]);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            samples.extend(center.iter().map(|&m| m + rng::normal(&mut noise)));
            labels.push(c);
        }
    }
    Dataset::new(
        SampleShape::Vector { len: dim },
        samples,
        labels,
        (0..classes).map(|c| format!("blob{c}")).collect(),
        format!("blobs(classes={classes},per_class={per_class},dim={dim},separation={separation},seed={seed})"),
    )
}

fn simplex_centers(k: usize, dim: usize, separation: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    // Orthonormal directions scaled by s/√2 are pairwise s apart.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| rng::normal(rng)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let r = separation / core::f64::consts::SQRT_2;
    basis.into_iter().map(|b| b.into_iter().map(|x| x * r).collect()).collect()
}

fn spread_centers(k: usize, dim: usize, separation: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut half = separation * libm::pow(k as f64, 1.0 / dim as f64);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut attempts = 0;
    while centers.len() < k {
        let c: Vec<f64> = (0..dim).map(|_| rng::uniform(rng, -half, half)).collect();
        if centers
            .iter()
            .all(|o| crate::matrix::squared_distance(o, &c) >= separation * separation)
        {
            centers.push(c);
        }
        attempts += 1;
        if attempts % 1000 == 0 {
            half *= 1.5;
        }
    }
    centers
}

/// Per-sample perturbations of a glyph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphJitter {
    /// Offset of the glyph center, in pixels.
    pub shift: (f64, f64),
    /// Small rotation of the whole arrangement, radians.
    pub twist: f64,
    /// Multiplier on all bump amplitudes.
    pub intensity: f64,
    /// Per-bump radial offsets in pixels (missing entries are zero).
    pub bump_offsets: [f64; 12],
}

impl GlyphJitter {
    pub fn none() -> Self {
        Self {
            shift: (0.0, 0.0),
            twist: 0.0,
            intensity: 1.0,
            bump_offsets: [0.0; 12],
        }
    }

    fn random(size: usize, rng: &mut Rng) -> Self {
        let max_shift = 0.04 * size as f64;
        let mut bump_offsets = [0.0; 12];
        bump_offsets
            .iter_mut()
            .for_each(|o| *o = rng::uniform(rng, -0.4, 0.4) * size as f64 / 32.0);
        Self {
            shift: (rng::uniform(rng, -max_shift, max_shift), rng::uniform(rng, -max_shift, max_shift)),
            twist: rng::uniform(rng, -0.12, 0.12),
            intensity: rng::uniform(rng, 0.8, 1.1),
            bump_offsets,
        }
    }
}

/// Class layout: bump count, ring radius (fraction of size), ring count.
fn glyph_layout(class: usize) -> (usize, f64, usize) {
    let bumps = 3 + class % 4;
    let radius = if (class / 4).is_multiple_of(2) { 0.2 } else { 0.3 };
    let rings = 1 + class / 8;
    (bumps, radius, rings)
}

/// Renders class `class` on a `size×size` grid. The first bump of the outer
/// ring is brighter and sits at angle zero, fixing a nominal orientation.
pub fn render_glyph(class: usize, size: usize, jitter: &GlyphJitter) -> Vec<f64> {
    let (bumps, radius_frac, rings) = glyph_layout(class);
    let s = size as f64;
    let sigma = 0.055 * s;
    let center = ((s - 1.0) / 2.0 + jitter.shift.0, (s - 1.0) / 2.0 + jitter.shift.1);
    let mut spots: Vec<(f64, f64, f64)> = Vec::new();
    let mut k = 0;
    for ring in 0..rings {
        let r = radius_frac * s * if ring == 0 { 1.0 } else { 0.45 };
        let phase = if ring == 0 { 0.0 } else { TAU / (2.0 * bumps as f64) };
        for j in 0..bumps {
            let angle = jitter.twist + phase + TAU * j as f64 / bumps as f64;
            let rr = r + jitter.bump_offsets[k % 12];
            k += 1;
            let amp = if ring == 0 && j == 0 { 1.0 } else { 0.6 };
            spots.push((
                center.0 + rr * libm::cos(angle),
                center.1 - rr * libm::sin(angle),
                amp * jitter.intensity,
            ));
        }
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut grid = alloc::vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            let v: f64 = spots
                .iter()
                .map(|&(bx, by, a)| {
                    let d2 = (x as f64 - bx) * (x as f64 - bx) + (y as f64 - by) * (y as f64 - by);
                    a * libm::exp(-d2 * inv)
                })
                .sum();
            grid[y * size + x] = v.clamp(0.0, 1.0);
        }
    }
    grid
}

/// Glyph images: each class is a distinct arrangement of Gaussian bumps in
/// a fixed nominal orientation, with per-sample jitter. Class-major order.
pub fn gen_glyphs(classes: usize, per_class: usize, size: usize, seed: u64) -> Result<Dataset> {
    if classes == 0 || classes > MAX_GLYPH_CLASSES {
        return Err(Error::InvalidConfig(format!(
            "glyph class count must be in 1..={MAX_GLYPH_CLASSES}"
        )));
    }
    if size < MIN_GLYPH_SIZE {
        return Err(Error::InvalidConfig(format!("glyph size must be at least {MIN_GLYPH_SIZE}")));
    }
    let mut samples = Vec::with_capacity(classes * per_class * size * size);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for i in 0..per_class {
            let mut rng = rng::stream(seed, &[c as u64, i as u64]);
            let jitter = GlyphJitter::random(size, &mut rng);
            samples.extend(render_glyph(c, size, &jitter));
            labels.push(c);
        }
    }
    Dataset::new(
        SampleShape::Grid {
            height: size,
            width: size,
        },
        samples,
        labels,
        (0..classes).map(|c| format!("glyph{c}")).collect(),
        format!("glyphs(classes={classes},per_class={per_class},size={size},seed={seed})"),
    )
}
