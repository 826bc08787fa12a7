//! Training losses and image-quality metrics. Images are `[C, H, W]` tensors.

mod features;
mod frechet;
mod frequency;
mod ssim;
mod style;

use serde::{Deserialize, Serialize};

pub use features::{FeatureExtractor, FeatureLayer};
pub use frechet::{frechet_distance, frechet_from_stats, gaussian_fit};
pub use frequency::{dft2, focal_frequency_loss, focal_frequency_loss_grad, FocalFrequencyOp};
pub use ssim::{ssim, ssim_with, SsimConfig};
pub use style::{
    gram_matrix, perceptual_loss, perceptual_loss_graph, style_loss, style_loss_graph,
};

use crate::nn::{Graph, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("shape mismatch: {a:?} vs {b:?}")]
    Shape { a: Vec<usize>, b: Vec<usize> },
    #[error("image {height}×{width} is smaller than the {window}×{window} window")]
    TooSmall {
        window: usize,
        height: usize,
        width: usize,
    },
    #[error("need at least 2 samples per set, got {0}")]
    TooFewSamples(usize),
    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("covariance product is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },
    #[error("spectrum weight exponent must be non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("all loss weights are zero or some weight is negative")]
    InvalidWeights,
}

pub(crate) fn check_same(a: &Tensor, b: &Tensor) -> Result<(), LossError> {
    if a.shape() != b.shape() || a.shape().len() != 3 {
        return Err(LossError::Shape {
            a: a.shape().to_vec(),
            b: b.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64, LossError> {
    check_same(a, b)?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.len() as f64)
}

/// λ₁..λ₄ for the MSE, perceptual, focal-frequency and style terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mse: f64,
    pub perceptual: f64,
    pub focal_frequency: f64,
    pub style: f64,
    /// Spectrum weight exponent of the focal frequency term.
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mse: 1.0,
            perceptual: 0.1,
            focal_frequency: 0.1,
            style: 0.05,
            alpha: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(mse: f64, perceptual: f64, focal_frequency: f64, style: f64) -> Self {
        Self {
            mse,
            perceptual,
            focal_frequency,
            style,
            alpha: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let l = [self.mse, self.perceptual, self.focal_frequency, self.style];
        if l.iter().any(|v| *v < 0.0 || !v.is_finite()) || l.iter().all(|v| *v == 0.0) {
            return Err(LossError::InvalidWeights);
        }
        if self.alpha < 0.0 {
            return Err(LossError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse: f64,
    pub perceptual: f64,
    pub focal_frequency: f64,
    pub style: f64,
    pub total: f64,
}

/// `λ₁L_mse + λ₂L_perc + λ₃L_ffl + λ₄L_style` with each term reported.
pub fn total_loss(
    gen: &Tensor,
    gt: &Tensor,
    weights: &LossWeights,
    extractor: &FeatureExtractor,
) -> Result<LossBreakdown, LossError> {
    weights.validate()?;
    let mse = mse(gen, gt)?;
    let perceptual = perceptual_loss(gen, gt, extractor)?;
    let focal_frequency = focal_frequency_loss(gt, gen, weights.alpha)?;
    let style = style_loss(gen, gt, extractor)?;
    let total = weights.mse * mse
        + weights.perceptual * perceptual
        + weights.focal_frequency * focal_frequency
        + weights.style * style;
    Ok(LossBreakdown {
        mse,
        perceptual,
        focal_frequency,
        style,
        total,
    })
}

/// Graph form of [`total_loss`]; terms with a zero weight are skipped.
pub fn total_loss_graph(
    g: &mut Graph,
    gen: Var,
    gt: &Tensor,
    weights: &LossWeights,
    extractor: &FeatureExtractor,
) -> Var {
    let mut terms = Vec::new();
    if weights.mse > 0.0 {
        let t = g.constant(gt.clone());
        let m = g.mse(gen, t);
        terms.push(g.scale(m, weights.mse));
    }
    if weights.perceptual > 0.0 {
        let p = perceptual_loss_graph(g, gen, gt, extractor);
        terms.push(g.scale(p, weights.perceptual));
    }
    if weights.focal_frequency > 0.0 {
        let f = g.custom(
            gen,
            Box::new(FocalFrequencyOp {
                target: gt.clone(),
                alpha: weights.alpha,
            }),
        );
        terms.push(g.scale(f, weights.focal_frequency));
    }
    if weights.style > 0.0 {
        let s = style_loss_graph(g, gen, gt, extractor);
        terms.push(g.scale(s, weights.style));
    }
    style::sum_vars(g, &terms)
}
