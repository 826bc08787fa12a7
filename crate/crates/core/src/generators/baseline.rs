use serde::{Deserialize, Serialize};

use super::{composite, ChunkGenerator, GeneratorError, MaskedChunkInput};
use crate::map::{TileStack, TILES_PER_CHUNK};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Odd patch side used for matching.
    pub patch: usize,
    /// Upper bound on source patches examined per pixel.
    pub max_candidates: usize,
    /// Patch-voting passes run after the raster fill.
    pub vote_passes: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            patch: 7,
            max_candidates: 160,
            vote_passes: 2,
        }
    }
}

/// Deterministic exemplar inpainter; needs no training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Baseline {
    pub config: BaselineConfig,
}

impl ChunkGenerator for Baseline {
    fn name(&self) -> &'static str {
        "baseline"
    }

    fn generate(&self, input: &MaskedChunkInput, _seed: u64) -> Result<TileStack, GeneratorError> {
        Ok(baseline_inpaint_with(input, &self.config))
    }
}

pub fn baseline_inpaint(input: &MaskedChunkInput) -> TileStack {
    baseline_inpaint_with(input, &BaselineConfig::default())
}

/// Raster-scan nearest-patch fill over all 8 channels jointly, followed by patch voting.
///
/// With no unbrushed pixel to copy from, the chunk is filled with its dominant
/// material as ranked by the context's template scores.
pub fn baseline_inpaint_with(input: &MaskedChunkInput, cfg: &BaselineConfig) -> TileStack {
    let side = input.side();
    let brush = input.brush.data();
    if !brush.iter().any(|&b| b) {
        return input.tiles.clone();
    }
    if brush.iter().all(|&b| b) {
        let mut out = TileStack::zeros(side);
        out.channel_slice_mut(input.dominant_tile()).fill(1.0);
        return out;
    }

    let r = (cfg.patch / 2) as isize;
    let n = side * side;
    let known: Vec<bool> = brush.iter().map(|&b| !b).collect();
    let candidates = select_candidates(&known, side, r, cfg.max_candidates);

    // Pixel-major copy for cache-friendly 8-channel comparisons.
    let mut img = vec![[0.0f64; TILES_PER_CHUNK]; n];
    for k in 0..TILES_PER_CHUNK {
        for (i, v) in input.tiles.channel_slice(k).iter().enumerate() {
            img[i][k] = *v;
        }
    }
    let mut valid = known.clone();
    let mut source = vec![usize::MAX; n];
    let s = side as isize;

    for p in 0..n {
        if known[p] {
            continue;
        }
        let (px, py) = ((p % side) as isize, (p / side) as isize);
        let mut offsets = Vec::with_capacity(cfg.patch * cfg.patch);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (px + dx, py + dy);
                if x >= 0 && y >= 0 && x < s && y < s && valid[(y * s + x) as usize] {
                    offsets.push((dx, dy, img[(y * s + x) as usize]));
                }
            }
        }
        let best = if offsets.is_empty() {
            nearest_candidate(&candidates, side, px, py)
        } else {
            best_match(&candidates, &offsets, &img, &known, side)
        };
        img[p] = img[best];
        source[p] = best;
        valid[p] = true;
    }

    for _ in 0..cfg.vote_passes {
        img = vote(&img, &source, &known, side, r);
    }

    let mut out = TileStack::zeros(side);
    for k in 0..TILES_PER_CHUNK {
        for (i, v) in out.channel_slice_mut(k).iter_mut().enumerate() {
            *v = img[i][k];
        }
    }
    composite(&out, input)
}

/// Centers of fully-known patches, or of every known pixel when none exist,
/// thinned deterministically to at most `max`.
fn select_candidates(known: &[bool], side: usize, r: isize, max: usize) -> Vec<usize> {
    let s = side as isize;
    let full: Vec<usize> = (0..known.len())
        .filter(|&p| {
            let (px, py) = ((p % side) as isize, (p / side) as isize);
            if px < r || py < r || px >= s - r || py >= s - r {
                return false;
            }
            (-r..=r).all(|dy| (-r..=r).all(|dx| known[((py + dy) * s + px + dx) as usize]))
        })
        .collect();
    let pool = if full.is_empty() {
        (0..known.len()).filter(|&p| known[p]).collect()
    } else {
        full
    };
    if pool.len() <= max {
        return pool;
    }
    (0..max).map(|i| pool[i * pool.len() / max]).collect()
}

fn nearest_candidate(candidates: &[usize], side: usize, px: isize, py: isize) -> usize {
    *candidates
        .iter()
        .min_by_key(|&&c| {
            let (cx, cy) = ((c % side) as isize, (c / side) as isize);
            (cx - px).pow(2) + (cy - py).pow(2)
        })
        .expect("at least one known pixel")
}

/// Candidate minimizing mean SSD over the valid target offsets; ties go to the earliest candidate.
fn best_match(
    candidates: &[usize],
    offsets: &[(isize, isize, [f64; TILES_PER_CHUNK])],
    img: &[[f64; TILES_PER_CHUNK]],
    known: &[bool],
    side: usize,
) -> usize {
    let s = side as isize;
    let mut best = (candidates[0], f64::INFINITY);
    for &c in candidates {
        let (cx, cy) = ((c % side) as isize, (c / side) as isize);
        let mut ssd = 0.0;
        let mut count = 0usize;
        let mut pruned = false;
        for &(dx, dy, ref tv) in offsets {
            let (x, y) = (cx + dx, cy + dy);
            if x < 0 || y < 0 || x >= s || y >= s {
                continue;
            }
            let q = (y * s + x) as usize;
            if !known[q] {
                continue;
            }
            let cv = &img[q];
            for k in 0..TILES_PER_CHUNK {
                let d = tv[k] - cv[k];
                ssd += d * d;
            }
            count += 1;
            if ssd > best.1 * offsets.len() as f64 {
                pruned = true;
                break;
            }
        }
        if pruned || count == 0 {
            continue;
        }
        let score = ssd / count as f64;
        if score < best.1 {
            best = (c, score);
        }
    }
    best.0
}

/// Each filled pixel becomes the mean of the values its filled neighbours' sources propose for it.
fn vote(
    img: &[[f64; TILES_PER_CHUNK]],
    source: &[usize],
    known: &[bool],
    side: usize,
    r: isize,
) -> Vec<[f64; TILES_PER_CHUNK]> {
    let s = side as isize;
    let mut out = img.to_vec();
    for p in 0..img.len() {
        if known[p] {
            continue;
        }
        let (px, py) = ((p % side) as isize, (p / side) as isize);
        let mut acc = [0.0; TILES_PER_CHUNK];
        let mut votes = 0usize;
        for dy in -r..=r {
            for dx in -r..=r {
                let (qx, qy) = (px + dx, py + dy);
                if qx < 0 || qy < 0 || qx >= s || qy >= s {
                    continue;
                }
                let q = (qy * s + qx) as usize;
                if known[q] {
                    continue;
                }
                let src = source[q];
                let (sx, sy) = ((src % side) as isize - dx, (src / side) as isize - dy);
                if sx < 0 || sy < 0 || sx >= s || sy >= s {
                    continue;
                }
                let v = &img[(sy * s + sx) as usize];
                for k in 0..TILES_PER_CHUNK {
                    acc[k] += v[k];
                }
                votes += 1;
            }
        }
        if votes > 0 {
            for k in 0..TILES_PER_CHUNK {
                out[p][k] = acc[k] / votes as f64;
            }
        }
    }
    out
}
