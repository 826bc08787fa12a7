//! Pieces shared by the training loops: samples, mask curriculum, and helpers.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{GeneratorError, MaskedChunkInput};
use crate::coherence::{context_for_chunk, ContextStack};
use crate::dataset::{generate_random_mask, MaskMode};
use crate::map::{BrushMask, GameMap, TileStack, TILES_PER_CHUNK};
use crate::rng::{mix, seeded};
use crate::synth::striped_stack;

/// One ground-truth chunk and its conditioning.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub target: TileStack,
    pub context: ContextStack,
}

impl TrainingSample {
    pub fn masked(&self, brush: &BrushMask) -> Result<MaskedChunkInput, GeneratorError> {
        MaskedChunkInput::new(&self.target, brush, self.context.clone())
    }
}

/// Mask difficulty by training progress: Medium only, then Medium and Hard,
/// then all three modes at 50/30/20.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    /// Fraction of the epochs after which Hard masks are mixed in.
    pub hard_from: f64,
    /// Fraction of the epochs after which Complete masks are mixed in.
    pub complete_from: f64,
}

impl Default for Curriculum {
    fn default() -> Self {
        Self {
            hard_from: 1.0 / 3.0,
            complete_from: 2.0 / 3.0,
        }
    }
}

impl Curriculum {
    /// Relative mode weights (Medium, Hard, Complete) at `epoch` of `total`.
    pub fn weights(&self, epoch: usize, total: usize) -> [f64; 3] {
        let progress = if total == 0 {
            0.0
        } else {
            epoch as f64 / total as f64
        };
        if progress >= self.complete_from {
            [0.5, 0.3, 0.2]
        } else if progress >= self.hard_from {
            [0.5, 0.3, 0.0]
        } else {
            [1.0, 0.0, 0.0]
        }
    }

    pub fn sample_mode(&self, epoch: usize, total: usize, seed: u64) -> MaskMode {
        let w = self.weights(epoch, total);
        let u: f64 = seeded(seed).random_range(0.0..w.iter().sum::<f64>());
        if u < w[0] {
            MaskMode::Medium
        } else if u < w[0] + w[1] {
            MaskMode::Hard
        } else {
            MaskMode::Complete
        }
    }

    pub fn sample_mask(
        &self,
        epoch: usize,
        total: usize,
        side: usize,
        seed: u64,
    ) -> Result<BrushMask, GeneratorError> {
        let mode = self.sample_mode(epoch, total, mix(seed, 1));
        generate_random_mask(mode, mix(seed, 2), side)
            .map_err(|e| GeneratorError::Shape(e.to_string()))
    }
}

/// Toy corpus of striped weight stacks with varied period and phase.
pub fn striped_dataset(
    count: usize,
    side: usize,
    context_objects: &[&str],
    seed: u64,
) -> Vec<TrainingSample> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let period = rng.random_range(3..=side.max(4) / 2);
            let phase = rng.random_range(0..period);
            TrainingSample {
                target: striped_stack(side, period, phase),
                context: ContextStack::blank(side, context_objects),
            }
        })
        .collect()
}

/// Every chunk of `maps` with its context, resampled to `side`.
pub fn map_dataset(maps: &[GameMap], side: usize) -> Result<Vec<TrainingSample>, GeneratorError> {
    let mut out = Vec::new();
    for map in maps {
        for (coord, chunk) in &map.chunks {
            let context = context_for_chunk(map, *coord)
                .map_err(|e| GeneratorError::Shape(e.to_string()))?
                .resized(side);
            let stack = chunk.stack();
            let target = if stack.side == side {
                stack
            } else {
                let mut t = TileStack::zeros(side);
                for k in 0..TILES_PER_CHUNK {
                    let p = stack.channel(k).resize(side, side);
                    t.channel_slice_mut(k).copy_from_slice(p.data());
                }
                t
            };
            out.push(TrainingSample { target, context });
        }
    }
    Ok(out)
}

pub(crate) fn check_finite(
    value: f64,
    phase: &str,
    step: usize,
    detail: impl FnOnce() -> String,
) -> Result<(), GeneratorError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(GeneratorError::NonFinite {
            phase: phase.to_string(),
            step,
            detail: detail(),
        })
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
