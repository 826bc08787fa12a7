//! The chunk generator contract and its implementations: a deterministic
//! exemplar baseline, a toy two-stage gated GAN, and a toy latent diffusion model.

mod baseline;
pub mod brushgan;
pub mod checkpoint;
pub mod cldm;
pub mod diffusion;
pub mod train;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_inpaint, Baseline, BaselineConfig};
pub use brushgan::{BrushGan, BrushGanConfig};
pub use cldm::{BrushCldm, CldmConfig};
pub use diffusion::{diffusion_forward, diffusion_reverse_step, NoiseSchedule};

use crate::coherence::{top_decile_mean, CoherenceError, ContextStack};
use crate::map::{BrushMask, Plane, TileStack, TILES_PER_CHUNK};
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model expects {expected} context planes, got {actual}")]
    ContextChannels { expected: usize, actual: usize },
    #[error("diffusion step {t} outside 1..={steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error("invalid noise schedule: {0}")]
    Schedule(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss in {phase} at step {step}: {detail}")]
    NonFinite {
        phase: String,
        step: usize,
        detail: String,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Coherence(#[from] CoherenceError),
}

/// Everything a generator sees for one chunk: weights with brushed pixels
/// zeroed, the brush itself, and the conditioning planes.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedChunkInput {
    pub tiles: TileStack,
    pub brush: BrushMask,
    pub context: ContextStack,
}

impl MaskedChunkInput {
    /// Zeroes `tiles` under the brush and checks that all planes agree in size.
    pub fn new(
        tiles: &TileStack,
        brush: &BrushMask,
        context: ContextStack,
    ) -> Result<Self, GeneratorError> {
        let side = tiles.side;
        if brush.side() != side
            || context.side != side
            || tiles.data.len() != TILES_PER_CHUNK * side * side
        {
            return Err(GeneratorError::Shape(format!(
                "tiles {side}, brush {}, context {}",
                brush.side(),
                context.side
            )));
        }
        context.validate()?;
        let mut masked = tiles.clone();
        for k in 0..TILES_PER_CHUNK {
            for (v, &b) in masked.channel_slice_mut(k).iter_mut().zip(brush.data()) {
                if b {
                    *v = 0.0;
                }
            }
        }
        Ok(Self {
            tiles: masked,
            brush: brush.clone(),
            context,
        })
    }

    pub fn side(&self) -> usize {
        self.tiles.side
    }

    /// Tile index whose template score plane has the highest top-decile mean; ties to the lowest index.
    pub fn dominant_tile(&self) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, p) in self.context.templates.iter().enumerate() {
            let s = top_decile_mean(p);
            if s > best.1 {
                best = (k, s);
            }
        }
        best.0
    }

    /// Input resampled to `side`. Brush pixels are set where the resampled coverage is at least one half.
    pub fn resized(&self, side: usize) -> Self {
        if side == self.side() {
            return self.clone();
        }
        let mut tiles = TileStack::zeros(side);
        for k in 0..TILES_PER_CHUNK {
            let p = self.tiles.channel(k).resize(side, side);
            tiles.channel_slice_mut(k).copy_from_slice(p.data());
        }
        let brush = BrushMask::from_plane(&area_resize(&self.brush.to_plane(), side))
            .expect("square plane");
        let mut out = Self {
            tiles,
            brush,
            context: self.context.resized(side),
        };
        let brushed = out.brush.data().to_vec();
        for k in 0..TILES_PER_CHUNK {
            for (v, &b) in out.tiles.channel_slice_mut(k).iter_mut().zip(&brushed) {
                if b {
                    *v = 0.0;
                }
            }
        }
        out
    }
}

/// Box-filter downsampling or bilinear upsampling of a square plane.
fn area_resize(p: &Plane, side: usize) -> Plane {
    let src = p.width();
    if side < src && src.is_multiple_of(side) {
        let f = src / side;
        Plane::from_fn(side, side, |x, y| {
            let mut s = 0.0;
            for dy in 0..f {
                for dx in 0..f {
                    s += p.get(x * f + dx, y * f + dy);
                }
            }
            s / (f * f) as f64
        })
    } else {
        p.resize(side, side)
    }
}

/// `output = brush ? generated : input`, copying input values bit-exactly.
pub fn composite(generated: &TileStack, input: &MaskedChunkInput) -> TileStack {
    let mut out = input.tiles.clone();
    for k in 0..TILES_PER_CHUNK {
        let g = generated.channel_slice(k);
        for ((o, &b), &v) in out
            .channel_slice_mut(k)
            .iter_mut()
            .zip(input.brush.data())
            .zip(g)
        {
            if b {
                *o = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// A pluggable chunk inpainter. Outputs must equal the input wherever the brush is unset.
pub trait ChunkGenerator: Send + Sync {
    fn name(&self) -> &'static str;
    fn generate(&self, input: &MaskedChunkInput, seed: u64) -> Result<TileStack, GeneratorError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Baseline,
    BrushGan,
    BrushCldm,
}

impl std::str::FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Self::Baseline),
            "brushgan" => Ok(Self::BrushGan),
            "brushcldm" => Ok(Self::BrushCldm),
            other => Err(format!("unknown generator `{other}`")),
        }
    }
}

/// Any of the three generator backends.
#[derive(Clone, Debug)]
pub enum GeneratorModel {
    Baseline(Baseline),
    BrushGan(BrushGan),
    BrushCldm(BrushCldm),
}

impl GeneratorModel {
    pub fn kind(&self) -> GeneratorKind {
        match self {
            GeneratorModel::Baseline(_) => GeneratorKind::Baseline,
            GeneratorModel::BrushGan(_) => GeneratorKind::BrushGan,
            GeneratorModel::BrushCldm(_) => GeneratorKind::BrushCldm,
        }
    }

    pub fn baseline() -> Self {
        GeneratorModel::Baseline(Baseline::default())
    }

    /// Neural models run at their configured side; other input sizes are resampled
    /// in and out, and the result is composited at the original resolution.
    fn run_resampled(
        &self,
        input: &MaskedChunkInput,
        model_side: usize,
        f: impl Fn(&MaskedChunkInput) -> Result<TileStack, GeneratorError>,
    ) -> Result<TileStack, GeneratorError> {
        if input.brush.is_empty() {
            return Ok(input.tiles.clone());
        }
        if input.side() == model_side {
            return f(input);
        }
        let small = f(&input.resized(model_side))?;
        let mut up = TileStack::zeros(input.side());
        for k in 0..TILES_PER_CHUNK {
            let p = small.channel(k).resize(input.side(), input.side());
            up.channel_slice_mut(k).copy_from_slice(p.data());
        }
        Ok(composite(&up, input))
    }
}

impl ChunkGenerator for GeneratorModel {
    fn name(&self) -> &'static str {
        match self {
            GeneratorModel::Baseline(_) => "baseline",
            GeneratorModel::BrushGan(_) => "brushgan",
            GeneratorModel::BrushCldm(_) => "brushcldm",
        }
    }

    fn generate(&self, input: &MaskedChunkInput, seed: u64) -> Result<TileStack, GeneratorError> {
        match self {
            GeneratorModel::Baseline(b) => b.generate(input, seed),
            GeneratorModel::BrushGan(m) => {
                self.run_resampled(input, m.config.side, |i| m.inpaint(i))
            }
            GeneratorModel::BrushCldm(m) => {
                self.run_resampled(input, m.config.side, |i| m.generate(i, seed))
            }
        }
    }
}
