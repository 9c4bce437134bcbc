//! Datasets, stratified splitting, augmentation and synthetic generators.

mod augment;
mod dataset;
mod split;
mod synth;

pub use augment::{add_noise, augment, rescale, rotate, AugmentOps, NOISE_SIGMA, SCALE_RANGE};
pub use dataset::{Dataset, SampleShape};
pub use split::{split, Split, SplitSpec};
pub use synth::{gen_blobs, gen_glyphs, render_glyph, GlyphJitter, MAX_GLYPH_CLASSES, MIN_GLYPH_SIZE};
