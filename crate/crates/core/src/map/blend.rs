use serde::{Deserialize, Serialize};

use super::{BrushMask, Chunk, Coord, GameMap, MapError, MaterialSet, RgbImage, TileMask};

/// Renders a chunk as `Σᵢ Tᵢ(x,y)·Mᵢ(x,y)`, clamped to `[0, 1]`.
///
/// Tiles are accumulated in order, so the result is reproducible bit for bit.
pub fn blend_chunk(chunk: &Chunk, materials: &MaterialSet) -> Result<RgbImage, MapError> {
    let side = chunk.side();
    let textures = chunk
        .tiles
        .iter()
        .map(|t| {
            let m = materials.resolve(&t.material_id)?;
            if m.texture.dims() != (side, side) {
                return Err(MapError::DimensionMismatch {
                    expected: (side, side),
                    actual: m.texture.dims(),
                });
            }
            Ok(&m.texture)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = RgbImage::filled(side, side, [0.0; 3]);
    for (i, px) in out.pixels_mut().iter_mut().enumerate() {
        let mut acc = [0.0f64; 3];
        for (tile, tex) in chunk.tiles.iter().zip(&textures) {
            let w = tile.pixels.data()[i];
            let m = tex.pixels()[i];
            for c in 0..3 {
                acc[c] += w * m[c];
            }
        }
        *px = acc.map(|v| v.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Renders the inclusive chunk rectangle `from..=to`. Missing chunks render black.
pub fn blend_region(map: &GameMap, from: Coord, to: Coord) -> Result<RgbImage, MapError> {
    let (x0, x1) = (from.x.min(to.x), from.x.max(to.x));
    let (y0, y1) = (from.y.min(to.y), from.y.max(to.y));
    for c in [Coord::new(x0, y0), Coord::new(x1, y1)] {
        if !map.contains(c) {
            return Err(MapError::OutOfBounds(c));
        }
    }
    let side = map.tile_size;
    let w = (x1 - x0 + 1) as usize * side;
    let h = (y1 - y0 + 1) as usize * side;
    let mut out = RgbImage::filled(w, h, [0.0; 3]);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if let Some(chunk) = map.chunks.get(&Coord::new(x, y)) {
                let img = blend_chunk(chunk, &map.materials)?;
                out.paste(&img, (x - x0) as usize * side, (y - y0) as usize * side);
            }
        }
    }
    Ok(out)
}

/// Rescales weights so they sum to one per pixel.
///
/// Pixels whose weights sum to zero get full weight on tile `dominant`.
pub fn normalize_weights(chunk: &Chunk, dominant: usize) -> Chunk {
    let n = chunk.side() * chunk.side();
    let mut tiles: Vec<TileMask> = chunk.tiles.clone();
    for i in 0..n {
        let sum: f64 = chunk
            .tiles
            .iter()
            .map(|t| t.pixels.data()[i].max(0.0))
            .sum();
        for (k, t) in tiles.iter_mut().enumerate() {
            let v = chunk.tiles[k].pixels.data()[i].max(0.0);
            t.pixels.data_mut()[i] = if sum > 0.0 {
                v / sum
            } else if k == dominant {
                1.0
            } else {
                0.0
            };
        }
    }
    Chunk {
        coord: chunk.coord,
        tiles,
    }
}

/// Per-pixel weight-sum statistics; authored data is not guaranteed to be normalized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSumStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub zero_pixels: usize,
}

pub fn weight_sum_stats(chunk: &Chunk) -> WeightSumStats {
    let n = chunk.side() * chunk.side();
    let mut stats = WeightSumStats {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        mean: 0.0,
        zero_pixels: 0,
    };
    for i in 0..n {
        let s: f64 = chunk.tiles.iter().map(|t| t.pixels.data()[i]).sum();
        stats.min = stats.min.min(s);
        stats.max = stats.max.max(s);
        stats.mean += s;
        if s == 0.0 {
            stats.zero_pixels += 1;
        }
    }
    if n > 0 {
        stats.mean /= n as f64;
    }
    stats
}

/// Zeroes all eight tile masks under the brush. The input chunk is left untouched.
pub fn apply_brush(chunk: &Chunk, brush: &BrushMask) -> Result<Chunk, MapError> {
    let side = chunk.side();
    if brush.side() != side {
        return Err(MapError::DimensionMismatch {
            expected: (side, side),
            actual: (brush.side(), brush.side()),
        });
    }
    let mut out = chunk.clone();
    for t in &mut out.tiles {
        for (v, &b) in t.pixels.data_mut().iter_mut().zip(brush.data()) {
            if b {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}
