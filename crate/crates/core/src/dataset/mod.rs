//! Brush-mask synthesis, mask-mode classification, and train/test split selection.

mod masks;
mod split;

pub use masks::{classify_mask_mode, generate_random_mask, MaskMode};
pub use split::{
    chunk_features, material_intersection, pairwise_scores, propose_split, select_split,
    split_score, MapFeatures, SelectedPair, SplitReport, SplitScore, UNCATEGORIZED,
};

use crate::losses::LossError;
use crate::map::MapError;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("mask side must be at least 8, got {0}")]
    MaskSide(usize),
    #[error("no {mode} mask within coverage range after {attempts} attempts")]
    MaskAttempts { mode: MaskMode, attempts: u64 },
    #[error("both material sets are empty")]
    EmptyMaterials,
    #[error("category `{category}` has {count} maps; at least 2 are required")]
    TooFewMaps { category: String, count: usize },
    #[error("category `{category}` has only {available} disjoint pairs, {requested} requested")]
    NotEnoughPairs {
        category: String,
        available: usize,
        requested: usize,
    },
    #[error("map `{0}` needs at least 2 chunks for a feature distribution")]
    TooFewChunks(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Map(#[from] MapError),
}
