//! Mask-mode evaluation: FID and SSIM between generated and ground-truth
//! renders, tabulated as one row per model and one column per mask mode.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coherence::context_for_chunk;
use crate::convert::rgb_to_tensor;
use crate::dataset::{generate_random_mask, MaskMode};
use crate::generators::{ChunkGenerator, MaskedChunkInput};
use crate::losses::{frechet_distance, ssim_with, FeatureExtractor, LossError, SsimConfig};
use crate::map::{blend_chunk, Coord, GameMap, RgbImage};
use crate::rng::mix;
use crate::stitching::StitchError;

/// Seed of the default random-weight FID feature extractor.
pub const FID_FEATURE_SEED: u64 = 0xF1D;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction and ground-truth sets differ in size: {pred} vs {gt}")]
    CountMismatch { pred: usize, gt: usize },
    #[error("image {index} differs in size: {pred:?} vs {gt:?}")]
    SizeMismatch {
        index: usize,
        pred: (usize, usize),
        gt: (usize, usize),
    },
    #[error("unknown metric `{0}` (expected fid or ssim)")]
    UnknownMetric(String),
    #[error("no samples to evaluate")]
    Empty,
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Stitch(#[from] StitchError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub fid: bool,
    pub ssim: bool,
}

impl Default for Metrics {
    fn default() -> Self {
        Self { fid: true, ssim: true }
    }
}

impl std::str::FromStr for Metrics {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut m = Metrics { fid: false, ssim: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "fid" => m.fid = true,
                "ssim" => m.ssim = true,
                other => return Err(EvalError::UnknownMetric(other.to_string())),
            }
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeScores {
    /// Lower is better.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fid: Option<f64>,
    /// Higher is better.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    pub samples: usize,
}

/// One model's scores across mask modes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub modes: BTreeMap<MaskMode, ModeScores>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub columns: Vec<MaskMode>,
    pub metrics: Vec<String>,
    pub feature_extractor: String,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(metrics: Metrics) -> Self {
        let mut names = Vec::new();
        if metrics.fid {
            names.push("fid".to_string());
        }
        if metrics.ssim {
            names.push("ssim".to_string());
        }
        Self {
            columns: MaskMode::ALL.to_vec(),
            metrics: names,
            feature_extractor: format!("random-conv seed {FID_FEATURE_SEED:#x}"),
            rows: Vec::new(),
        }
    }

    /// Sets one cell, creating the model row if needed.
    pub fn insert(&mut self, model: &str, mode: MaskMode, scores: ModeScores) {
        match self.rows.iter_mut().find(|r| r.model == model) {
            Some(r) => {
                r.modes.insert(mode, scores);
            }
            None => self.rows.push(EvalRow {
                model: model.to_string(),
                modes: BTreeMap::from([(mode, scores)]),
            }),
        }
    }

    pub fn get(&self, model: &str, mode: MaskMode) -> Option<&ModeScores> {
        self.rows.iter().find(|r| r.model == model)?.modes.get(&mode)
    }

    /// Plain-text table: one row per model, FID and SSIM per mode.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12}", "model");
        for m in &self.columns {
            out.push_str(&format!("{:>15}{:>15}", format!("{m} fid"), format!("{m} ssim")));
        }
        out.push('\n');
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        for r in &self.rows {
            out.push_str(&format!("{:<12}", r.model));
            for m in &self.columns {
                let s = r.modes.get(m).copied().unwrap_or_default();
                out.push_str(&format!("{:>15}{:>15}", cell(s.fid), cell(s.ssim)));
            }
            out.push('\n');
        }
        out
    }
}

fn ssim_config(side: usize) -> SsimConfig {
    let d = SsimConfig::default();
    if side >= d.window {
        d
    } else {
        let w = if side.is_multiple_of(2) { side - 1 } else { side };
        d.with_window(w.max(1))
    }
}

/// FID over feature embeddings and mean SSIM over aligned image pairs.
pub fn score_images(pred: &[RgbImage], gt: &[RgbImage], metrics: Metrics) -> Result<ModeScores, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::CountMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.dims() != g.dims() {
            return Err(EvalError::SizeMismatch {
                index: i,
                pred: p.dims(),
                gt: g.dims(),
            });
        }
    }
    let mut scores = ModeScores {
        samples: pred.len(),
        ..ModeScores::default()
    };
    if metrics.fid {
        let ex = FeatureExtractor::random(3, FID_FEATURE_SEED);
        let fp: Vec<Vec<f64>> = pred.iter().map(|i| ex.embed(&rgb_to_tensor(i))).collect();
        let fg: Vec<Vec<f64>> = gt.iter().map(|i| ex.embed(&rgb_to_tensor(i))).collect();
        scores.fid = Some(frechet_distance(&fp, &fg)?);
    }
    if metrics.ssim {
        let mut acc = 0.0;
        for (p, g) in pred.iter().zip(gt) {
            let cfg = ssim_config(p.width().min(p.height()));
            acc += ssim_with(&rgb_to_tensor(p), &rgb_to_tensor(g), &cfg)?;
        }
        scores.ssim = Some(acc / pred.len() as f64);
    }
    Ok(scores)
}

/// Generated and ground-truth renders for each chunk under random masks of `mode`.
pub fn render_mode(
    corpus: &[(&GameMap, Coord)],
    generator: &dyn ChunkGenerator,
    mode: MaskMode,
    seed: u64,
) -> Result<(Vec<RgbImage>, Vec<RgbImage>), EvalError> {
    let mut pred = Vec::with_capacity(corpus.len());
    let mut gt = Vec::with_capacity(corpus.len());
    for (i, (map, coord)) in corpus.iter().enumerate() {
        let chunk = map.chunk(*coord).map_err(StitchError::from)?;
        let s = mix(mix(seed, mode as u64), i as u64);
        let brush = generate_random_mask(mode, s, chunk.side())
            .map_err(|e| StitchError::Generator(crate::generators::GeneratorError::Shape(e.to_string())))?;
        let context = context_for_chunk(map, *coord).map_err(StitchError::from)?;
        let input = MaskedChunkInput::new(&chunk.stack(), &brush, context).map_err(StitchError::from)?;
        let out = generator.generate(&input, s).map_err(StitchError::from)?;
        let generated = chunk.with_stack(&out).map_err(StitchError::from)?;
        pred.push(blend_chunk(&generated, &map.materials).map_err(StitchError::from)?);
        gt.push(blend_chunk(chunk, &map.materials).map_err(StitchError::from)?);
    }
    Ok((pred, gt))
}

/// Fills one report row with every requested mode.
pub fn evaluate_generator(
    report: &mut EvalReport,
    model: &str,
    corpus: &[(&GameMap, Coord)],
    generator: &dyn ChunkGenerator,
    modes: &[MaskMode],
    metrics: Metrics,
    seed: u64,
) -> Result<(), EvalError> {
    for &mode in modes {
        let (pred, gt) = render_mode(corpus, generator, mode, seed)?;
        report.insert(model, mode, score_images(&pred, &gt, metrics)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets() {
        let imgs: Vec<RgbImage> = (0..4)
            .map(|k| RgbImage::from_fn(16, 16, |x, y| [((x + k) % 5) as f64 / 5.0, (y % 3) as f64 / 3.0, 0.5]))
            .collect();
        let s = score_images(&imgs, &imgs, Metrics::default()).unwrap();
        assert!(s.fid.unwrap().abs() < 1e-6);
        assert_eq!(s.ssim, Some(1.0));
        assert!(score_images(&imgs[..2], &imgs, Metrics::default()).is_err());
    }

    #[test]
    fn metrics_parse() {
        assert_eq!("fid".parse::<Metrics>().unwrap(), Metrics { fid: true, ssim: false });
        assert!("lpips".parse::<Metrics>().is_err());
    }

    #[test]
    fn report_round_trip() {
        let mut r = EvalReport::new(Metrics::default());
        r.insert("baseline", MaskMode::Hard, ModeScores { fid: Some(1.0), ssim: Some(0.5), samples: 3 });
        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_table().contains("baseline"));
    }
}
