//! Tile-mask map editing: blending, brush-mask inpainting generators, losses and
//! metrics, template-guided coherence, and seam-free multi-chunk generation.

pub mod coherence;
pub mod convert;
pub mod dataset;
pub mod eval;
pub mod generators;
pub mod losses;
pub mod map;
pub mod nn;
pub mod rng;
pub mod stitching;
pub mod synth;
