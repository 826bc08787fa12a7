use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::map::BrushMask;
use crate::rng::{mix, seeded, Rng};

/// Inpainting difficulty by brushed-area fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// coverage < 30%
    Medium,
    /// 30% ≤ coverage < 100%
    Hard,
    /// coverage = 100%
    Complete,
}

impl MaskMode {
    pub const ALL: [MaskMode; 3] = [MaskMode::Medium, MaskMode::Hard, MaskMode::Complete];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::Medium => "medium",
            MaskMode::Hard => "hard",
            MaskMode::Complete => "complete",
        }
    }
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MaskMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "medium" => Ok(MaskMode::Medium),
            "hard" => Ok(MaskMode::Hard),
            "complete" => Ok(MaskMode::Complete),
            other => Err(format!("unknown mask mode `{other}`")),
        }
    }
}

/// Classifies by exact integer comparison, so a coverage of exactly 30% is `Hard`.
pub fn classify_mask_mode(brush: &BrushMask) -> MaskMode {
    let total = brush.data().len();
    let set = brush.count();
    if set == total {
        MaskMode::Complete
    } else if set * 10 < total * 3 {
        MaskMode::Medium
    } else {
        MaskMode::Hard
    }
}

const MAX_ATTEMPTS: u64 = 1000;

/// Draws a free-form stroke mask whose coverage falls inside `mode`'s range.
///
/// Strokes are random walks of stamped disks; radii span 8–48 px at a
/// 128 px side and scale linearly with `side`. Candidates that miss the
/// range are redrawn from a derived seed.
pub fn generate_random_mask(
    mode: MaskMode,
    seed: u64,
    side: usize,
) -> Result<BrushMask, DatasetError> {
    if side < 8 {
        return Err(DatasetError::MaskSide(side));
    }
    if mode == MaskMode::Complete {
        return Ok(BrushMask::full(side));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seeded(mix(seed, attempt));
        let mask = draw_strokes(&mut rng, mode, side);
        let ok = match mode {
            MaskMode::Medium => !mask.is_empty() && classify_mask_mode(&mask) == MaskMode::Medium,
            _ => classify_mask_mode(&mask) == mode,
        };
        if ok {
            return Ok(mask);
        }
    }
    Err(DatasetError::MaskAttempts {
        mode,
        attempts: MAX_ATTEMPTS,
    })
}

fn draw_strokes(rng: &mut Rng, mode: MaskMode, side: usize) -> BrushMask {
    let scale = side as f64 / 128.0;
    let (r_min, r_max) = ((8.0 * scale).max(1.0), (48.0 * scale).max(2.0));
    let strokes = match mode {
        MaskMode::Medium => rng.random_range(1..=3),
        _ => rng.random_range(3..=8),
    };
    let mut mask = BrushMask::empty(side);
    for _ in 0..strokes {
        let vertices = rng.random_range(4..=12);
        let mut x = rng.random_range(0.0..side as f64);
        let mut y = rng.random_range(0.0..side as f64);
        let mut angle = rng.random_range(0.0..2.0 * PI);
        let mut radius = rng.random_range(r_min..=r_max);
        if mode == MaskMode::Medium {
            radius = (radius * 0.5).max(1.0);
        }
        for _ in 0..vertices {
            angle += rng.random_range(-PI..PI);
            let len = rng.random_range(radius..=3.0 * radius);
            let nx = (x + len * angle.cos()).clamp(0.0, side as f64 - 1.0);
            let ny = (y + len * angle.sin()).clamp(0.0, side as f64 - 1.0);
            let next_radius = (radius * rng.random_range(0.7..1.3)).clamp(1.0, r_max);
            stamp_capsule(&mut mask, (x, y, radius), (nx, ny, next_radius));
            x = nx;
            y = ny;
            radius = next_radius;
        }
    }
    mask
}

/// Fills the swept disk between two centers (radius interpolated along the segment).
fn stamp_capsule(mask: &mut BrushMask, a: (f64, f64, f64), b: (f64, f64, f64)) {
    let side = mask.side() as f64;
    let r = a.2.max(b.2);
    let x0 = (a.0.min(b.0) - r).floor().max(0.0) as usize;
    let x1 = (a.0.max(b.0) + r).ceil().min(side - 1.0) as usize;
    let y0 = (a.1.min(b.1) - r).floor().max(0.0) as usize;
    let y1 = (a.1.max(b.1) + r).ceil().min(side - 1.0) as usize;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for py in y0..=y1 {
        for px in x0..=x1 {
            let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((cx - a.0) * dx + (cy - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
            let rad = a.2 + t * (b.2 - a.2);
            if (cx - qx).powi(2) + (cy - qy).powi(2) <= rad * rad {
                mask.set(px, py, true);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with_count(side: usize, count: usize) -> BrushMask {
        let mut i = 0;
        BrushMask::from_fn(side, |_, _| {
            i += 1;
            i <= count
        })
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify_mask_mode(&mask_with_count(10, 25)),
            MaskMode::Medium
        );
        assert_eq!(
            classify_mask_mode(&mask_with_count(10, 100)),
            MaskMode::Complete
        );
        let boundary = mask_with_count(10, 30);
        assert_eq!(boundary.coverage(), 0.30);
        assert_eq!(classify_mask_mode(&boundary), MaskMode::Hard);
        assert_eq!(
            classify_mask_mode(&mask_with_count(10, 29)),
            MaskMode::Medium
        );
        assert_eq!(classify_mask_mode(&mask_with_count(10, 99)), MaskMode::Hard);
    }

    #[test]
    fn complete_is_all_ones() {
        let m = generate_random_mask(MaskMode::Complete, 123, 32).unwrap();
        assert_eq!(m, BrushMask::full(32));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_random_mask(MaskMode::Medium, 7, 64).unwrap();
        let b = generate_random_mask(MaskMode::Medium, 7, 64).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_random_mask(MaskMode::Medium, 8, 64).unwrap());
    }

    #[test]
    fn hard_closes_the_loop() {
        let m = generate_random_mask(MaskMode::Hard, 3, 64).unwrap();
        assert_eq!(classify_mask_mode(&m), MaskMode::Hard);
    }

    #[test]
    fn small_side_rejected() {
        assert!(matches!(
            generate_random_mask(MaskMode::Hard, 0, 7),
            Err(DatasetError::MaskSide(7))
        ));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Hard".parse::<MaskMode>().unwrap(), MaskMode::Hard);
        assert!("soft".parse::<MaskMode>().is_err());
    }
}
