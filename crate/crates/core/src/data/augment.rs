use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::TAU;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use super::SampleShape;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Range of the uniform scale factor.
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.25);
/// Standard deviation of additive noise.
pub const NOISE_SIGMA: f64 = 0.05;

/// Subset of {rotation (R), scale (S), Gaussian noise (G)}, applied in the
/// order R → S → G. Serialized by name, e.g. `"R+S+G"` or `"none"`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AugmentOps {
    pub rotate: bool,
    pub scale: bool,
    pub noise: bool,
}

impl AugmentOps {
    pub const NONE: AugmentOps = AugmentOps {
        rotate: false,
        scale: false,
        noise: false,
    };
    pub const ALL: AugmentOps = AugmentOps {
        rotate: true,
        scale: true,
        noise: true,
    };

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }

    /// Parses `"R+S+G"`-style names; `"none"` or `""` is the empty set.
    pub fn parse(text: &str) -> Option<Self> {
        let mut ops = Self::NONE;
        let text = text.trim();
        if text.is_empty() || text.eq_ignore_ascii_case("none") || text == "-" {
            return Some(ops);
        }
        for part in text.split('+') {
            match part.trim() {
                "R" | "r" => ops.rotate = true,
                "S" | "s" => ops.scale = true,
                "G" | "g" => ops.noise = true,
                _ => return None,
            }
        }
        Some(ops)
    }

    pub fn name(&self) -> String {
        let parts: Vec<&str> = [(self.rotate, "R"), (self.scale, "S"), (self.noise, "G")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

impl Serialize for AugmentOps {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for AugmentOps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        AugmentOps::parse(&text).ok_or_else(|| de::Error::custom(format_args!("unknown augmentation `{text}`")))
    }
}

/// Applies a random draw of `ops` to one sample.
pub fn augment(sample: &[f64], shape: SampleShape, ops: AugmentOps, rng: &mut Rng) -> Result<Vec<f64>> {
    let mut out = sample.to_vec();
    match shape {
        SampleShape::Grid { height, width } => {
            if ops.rotate {
                let angle = rng::uniform(rng, 0.0, TAU);
                out = rotate(&out, height, width, angle);
            }
            if ops.scale {
                let factor = rng::uniform(rng, SCALE_RANGE.0, SCALE_RANGE.1);
                out = rescale(&out, height, width, factor);
            }
        }
        SampleShape::Vector { .. } => {
            if ops.rotate || ops.scale {
                return Err(Error::InvalidConfig(
                    "rotation and scale augmentation need grid samples".into(),
                ));
            }
        }
    }
    if ops.noise {
        out = add_noise(&out, NOISE_SIGMA, rng);
    }
    Ok(out)
}

/// Bilinear sample with zero fill outside the grid.
fn bilinear(grid: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let x0 = libm::floor(x);
    let y0 = libm::floor(y);
    let (fx, fy) = (x - x0, y - y0);
    let pixel = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            grid[yi as usize * w + xi as usize]
        }
    };
    let mut acc = 0.0;
    for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            let weight = wx * wy;
            if weight != 0.0 {
                acc += weight * pixel(x0 + dx, y0 + dy);
            }
        }
    }
    acc
}

/// Rotates about the grid center by `angle` radians (counter-clockwise as
/// displayed with rows running downward), with bilinear resampling.
pub fn rotate(grid: &[f64], h: usize, w: usize, angle: f64) -> Vec<f64> {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    let mut out = alloc::vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = cx + c * dx + s * dy;
            let sy = cy - s * dx + c * dy;
            out[y * w + x] = bilinear(grid, h, w, sx, sy);
        }
    }
    out
}

/// Scales about the grid center by `factor`, cropping or zero-padding to
/// the original size.
pub fn rescale(grid: &[f64], h: usize, w: usize, factor: f64) -> Vec<f64> {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut out = alloc::vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let sx = cx + (x as f64 - cx) / factor;
            let sy = cy + (y as f64 - cy) / factor;
            out[y * w + x] = bilinear(grid, h, w, sx, sy);
        }
    }
    out
}

/// Adds `N(0, sigma²)` noise and clamps to `[0, 1]`.
pub fn add_noise(grid: &[f64], sigma: f64, rng: &mut Rng) -> Vec<f64> {
    grid.iter()
        .map(|&v| (v + sigma * rng::normal(rng)).clamp(0.0, 1.0))
        .collect()
}
