//! Template-guided color coherence: material ranking by normalized
//! cross-correlation against the global albedo map, and the conditioning
//! stack handed to generators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::convert::{plane_to_tensor, rgb_to_tensor};
use crate::map::{Chunk, Coord, GameMap, MapError, MaterialSet, Plane, RgbImage, TILES_PER_CHUNK};
use crate::nn::Tensor;

/// Largest swatch cut from a material texture for matching.
pub const SWATCH_SIDE: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum CoherenceError {
    #[error("template {template:?} is larger than region {region:?}")]
    TemplateTooLarge {
        template: (usize, usize),
        region: (usize, usize),
    },
    #[error("context planes are misaligned: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Normalized cross-correlation coefficient of `texture` at every offset inside `region`.
///
/// Both inputs are mean-subtracted per channel; the coefficient sums over
/// channels. Windows (or textures) with zero variance score 0.
pub fn template_match(texture: &RgbImage, region: &RgbImage) -> Result<Plane, CoherenceError> {
    let (tw, th) = texture.dims();
    let (rw, rh) = region.dims();
    if tw > rw || th > rh || tw == 0 || th == 0 {
        return Err(CoherenceError::TemplateTooLarge {
            template: (tw, th),
            region: (rw, rh),
        });
    }
    let (ow, oh) = (rw - tw + 1, rh - th + 1);
    let n = (tw * th) as f64;

    let mut centered = [vec![0.0; tw * th], vec![0.0; tw * th], vec![0.0; tw * th]];
    let mut t_energy = 0.0;
    for (c, plane) in centered.iter_mut().enumerate() {
        let mean = texture.pixels().iter().map(|p| p[c]).sum::<f64>() / n;
        for (dst, p) in plane.iter_mut().zip(texture.pixels()) {
            *dst = p[c] - mean;
            t_energy += *dst * *dst;
        }
    }

    let channels: Vec<Vec<f64>> = (0..3)
        .map(|c| region.pixels().iter().map(|p| p[c]).collect())
        .collect();
    let sums: Vec<Integral> = channels
        .iter()
        .map(|ch| Integral::new(ch, rw, rh, |v| v))
        .collect();
    let sq_sums: Vec<Integral> = channels
        .iter()
        .map(|ch| Integral::new(ch, rw, rh, |v| v * v))
        .collect();

    let row = |oy: usize| -> Vec<f64> {
        let mut out = vec![0.0; ow];
        for (ox, o) in out.iter_mut().enumerate() {
            let mut num = 0.0;
            let mut w_energy = 0.0;
            for c in 0..3 {
                let s = sums[c].rect(ox, oy, tw, th);
                let sq = sq_sums[c].rect(ox, oy, tw, th);
                w_energy += (sq - s * s / n).max(0.0);
                let reg = &channels[c];
                let tpl = &centered[c];
                for ty in 0..th {
                    let r = &reg[(oy + ty) * rw + ox..(oy + ty) * rw + ox + tw];
                    let t = &tpl[ty * tw..(ty + 1) * tw];
                    num += r.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let denom = (t_energy * w_energy).sqrt();
            *o = if denom > 1e-12 {
                (num / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
        out
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..oh).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..oh).map(row).collect();

    Ok(Plane::from_vec(ow, oh, rows.concat()).expect("score plane size"))
}

struct Integral {
    w: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(src: &[f64], w: usize, h: usize, f: impl Fn(f64) -> f64) -> Self {
        let iw = w + 1;
        let mut data = vec![0.0; iw * (h + 1)];
        for y in 0..h {
            let mut acc = 0.0;
            for x in 0..w {
                acc += f(src[y * w + x]);
                data[(y + 1) * iw + x + 1] = data[y * iw + x + 1] + acc;
            }
        }
        Self { w: iw, data }
    }

    fn rect(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        let iw = self.w;
        self.data[(y + h) * iw + x + w] - self.data[y * iw + x + w] - self.data[(y + h) * iw + x]
            + self.data[y * iw + x]
    }
}

/// Top-left swatch used as the matching template for a material texture.
pub fn swatch(texture: &RgbImage, region_side: usize) -> RgbImage {
    let (w, h) = texture.dims();
    let side = SWATCH_SIDE.min((region_side / 2).max(1)).min(w).min(h);
    texture.crop(0, 0, side, side)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedMaterial {
    pub material_id: String,
    pub score: f64,
}

/// Chunk materials sorted by descending match score, ties by id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaterialRanking {
    pub entries: Vec<RankedMaterial>,
}

impl MaterialRanking {
    pub fn dominant(&self) -> Option<&str> {
        self.entries.first().map(|e| e.material_id.as_str())
    }

    /// Tile index of the dominant material within `chunk`.
    pub fn dominant_tile(&self, chunk: &Chunk) -> Option<usize> {
        let id = self.dominant()?;
        chunk.material_ids().position(|m| m == id)
    }
}

/// Mean of the largest tenth of the values (at least one value).
pub fn top_decile_mean(plane: &Plane) -> f64 {
    let mut v = plane.data().to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = v.len().div_ceil(10).max(1);
    v[..k].iter().sum::<f64>() / k as f64
}

/// Raw match planes for each distinct material of `chunk`.
pub fn score_planes(
    chunk: &Chunk,
    materials: &MaterialSet,
    region: &RgbImage,
) -> Result<BTreeMap<String, Plane>, CoherenceError> {
    let mut out = BTreeMap::new();
    for id in chunk.material_ids() {
        if out.contains_key(id) {
            continue;
        }
        let m = materials.resolve(id)?;
        let tpl = swatch(&m.texture, region.width().min(region.height()));
        out.insert(id.to_string(), template_match(&tpl, region)?);
    }
    Ok(out)
}

fn ranking_from_planes(planes: &BTreeMap<String, Plane>) -> MaterialRanking {
    let mut entries: Vec<RankedMaterial> = planes
        .iter()
        .map(|(id, p)| RankedMaterial {
            material_id: id.clone(),
            score: top_decile_mean(p),
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.material_id.cmp(&b.material_id))
    });
    MaterialRanking { entries }
}

pub fn rank_materials(
    chunk: &Chunk,
    materials: &MaterialSet,
    region: &RgbImage,
) -> Result<MaterialRanking, CoherenceError> {
    Ok(ranking_from_planes(&score_planes(
        chunk, materials, region,
    )?))
}

/// Aligned conditioning planes for one chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextStack {
    pub side: usize,
    pub global_am: RgbImage,
    pub height: Plane,
    pub object_masks: BTreeMap<String, Plane>,
    /// One match-score plane per tile, in tile order.
    pub templates: Vec<Plane>,
    pub ranking: MaterialRanking,
}

impl ContextStack {
    /// A neutral stack: gray AM, flat height, empty objects, zero scores.
    pub fn blank(side: usize, object_names: &[&str]) -> Self {
        Self {
            side,
            global_am: RgbImage::filled(side, side, [0.5; 3]),
            height: Plane::zeros(side, side),
            object_masks: object_names
                .iter()
                .map(|n| (n.to_string(), Plane::zeros(side, side)))
                .collect(),
            templates: vec![Plane::zeros(side, side); TILES_PER_CHUNK],
            ranking: MaterialRanking::default(),
        }
    }

    pub fn plane_count(&self) -> usize {
        3 + 1 + self.object_masks.len() + self.templates.len()
    }

    pub fn validate(&self) -> Result<(), CoherenceError> {
        let d = (self.side, self.side);
        let mut bad = Vec::new();
        if self.global_am.dims() != d {
            bad.push(format!("global_am {:?}", self.global_am.dims()));
        }
        if self.height.dims() != d {
            bad.push(format!("height {:?}", self.height.dims()));
        }
        for (n, p) in &self.object_masks {
            if p.dims() != d {
                bad.push(format!("object `{n}` {:?}", p.dims()));
            }
        }
        for (k, p) in self.templates.iter().enumerate() {
            if p.dims() != d {
                bad.push(format!("template {k} {:?}", p.dims()));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CoherenceError::Misaligned(format!(
                "expected {d:?}: {}",
                bad.join(", ")
            )))
        }
    }

    /// Channels in order: AM (3), height, objects by name, templates by tile.
    pub fn to_tensor(&self) -> Tensor {
        let mut parts = vec![
            rgb_to_tensor(&self.global_am),
            plane_to_tensor(&self.height),
        ];
        parts.extend(self.object_masks.values().map(plane_to_tensor));
        parts.extend(self.templates.iter().map(plane_to_tensor));
        let refs: Vec<&Tensor> = parts.iter().collect();
        Tensor::concat_channels(&refs)
    }

    /// Every plane bilinearly resampled to `side`.
    pub fn resized(&self, side: usize) -> Self {
        Self {
            side,
            global_am: self.global_am.resize(side, side),
            height: self.height.resize(side, side),
            object_masks: self
                .object_masks
                .iter()
                .map(|(k, p)| (k.clone(), p.resize(side, side)))
                .collect(),
            templates: self
                .templates
                .iter()
                .map(|p| p.resize(side, side))
                .collect(),
            ranking: self.ranking.clone(),
        }
    }
}

fn chunk_region(map: &GameMap, coord: Coord) -> Result<(usize, usize), CoherenceError> {
    if !map.contains(coord) {
        return Err(MapError::OutOfBounds(coord).into());
    }
    Ok((
        coord.x as usize * map.tile_size,
        coord.y as usize * map.tile_size,
    ))
}

fn assemble(
    map: &GameMap,
    (x0, y0): (usize, usize),
    chunk: &Chunk,
    planes: &BTreeMap<String, Plane>,
    ranking: MaterialRanking,
) -> Result<ContextStack, CoherenceError> {
    let s = map.tile_size;
    let templates = chunk
        .material_ids()
        .map(|id| planes[id].resize(s, s))
        .collect();
    let ctx = ContextStack {
        side: s,
        global_am: map.global_am.crop(x0, y0, s, s),
        height: map.height_map.crop(x0, y0, s, s),
        object_masks: map
            .object_masks
            .iter()
            .map(|(k, p)| (k.clone(), p.crop(x0, y0, s, s)))
            .collect(),
        templates,
        ranking,
    };
    ctx.validate()?;
    Ok(ctx)
}

/// Crops the global planes to `coord` and attaches per-tile template score planes.
pub fn build_context(
    map: &GameMap,
    coord: Coord,
    ranking: MaterialRanking,
) -> Result<ContextStack, CoherenceError> {
    let (x0, y0) = chunk_region(map, coord)?;
    let chunk = map.chunk(coord)?;
    let region = map.global_am.crop(x0, y0, map.tile_size, map.tile_size);
    let planes = score_planes(chunk, &map.materials, &region)?;
    assemble(map, (x0, y0), chunk, &planes, ranking)
}

/// Ranks the chunk's materials and builds its context in one pass.
pub fn context_for_chunk(map: &GameMap, coord: Coord) -> Result<ContextStack, CoherenceError> {
    let origin = chunk_region(map, coord)?;
    context_at(map, map.chunk(coord)?, origin)
}

/// Context for a tile-sized window with top-left pixel `origin`, which need
/// not be chunk-aligned.
pub fn context_at(
    map: &GameMap,
    chunk: &Chunk,
    origin: (usize, usize),
) -> Result<ContextStack, CoherenceError> {
    let s = map.tile_size;
    let (w, h) = map.extent();
    if origin.0 + s > w || origin.1 + s > h {
        return Err(CoherenceError::Misaligned(format!(
            "window at {origin:?} exceeds map extent {w}x{h}"
        )));
    }
    let region = map.global_am.crop(origin.0, origin.1, s, s);
    let planes = score_planes(chunk, &map.materials, &region)?;
    let ranking = ranking_from_planes(&planes);
    assemble(map, origin, chunk, &planes, ranking)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_ncc(t: &RgbImage, r: &RgbImage, ox: usize, oy: usize) -> f64 {
        let (tw, th) = t.dims();
        let n = (tw * th) as f64;
        let (mut num, mut et, mut ew) = (0.0, 0.0, 0.0);
        for c in 0..3 {
            let mut mt = 0.0;
            let mut mw = 0.0;
            for y in 0..th {
                for x in 0..tw {
                    mt += t.get(x, y)[c];
                    mw += r.get(ox + x, oy + y)[c];
                }
            }
            mt /= n;
            mw /= n;
            for y in 0..th {
                for x in 0..tw {
                    let a = t.get(x, y)[c] - mt;
                    let b = r.get(ox + x, oy + y)[c] - mw;
                    num += a * b;
                    et += a * a;
                    ew += b * b;
                }
            }
        }
        if et * ew > 0.0 {
            num / (et * ew).sqrt()
        } else {
            0.0
        }
    }

    #[test]
    fn matches_brute_force() {
        let t = RgbImage::from_fn(3, 3, |x, y| {
            [
                (x * 3 + y) as f64 / 9.0,
                ((x + y) % 2) as f64,
                0.2 * x as f64,
            ]
        });
        let r = RgbImage::from_fn(5, 5, |x, y| {
            [
                ((x * 7 + y * 3) % 5) as f64 / 5.0,
                (x * y % 3) as f64 / 3.0,
                ((x + 2 * y) % 4) as f64 / 4.0,
            ]
        });
        let p = template_match(&t, &r).unwrap();
        assert_eq!(p.dims(), (3, 3));
        for oy in 0..3 {
            for ox in 0..3 {
                assert!((p.get(ox, oy) - brute_ncc(&t, &r, ox, oy)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiled_and_negated() {
        let t = RgbImage::from_fn(4, 4, |x, y| {
            [
                (x * 5 + y * 3) as f64 % 7.0 / 7.0,
                (x + y) as f64 / 8.0,
                0.3,
            ]
        });
        let tiled = RgbImage::from_fn(12, 12, |x, y| t.get(x % 4, y % 4));
        let p = template_match(&t, &tiled).unwrap();
        for (ox, oy) in [(0, 0), (4, 0), (4, 8), (8, 8)] {
            assert!((p.get(ox, oy) - 1.0).abs() < 1e-12);
        }
        let neg = RgbImage::from_fn(4, 4, |x, y| t.get(x, y).map(|v| 1.0 - v));
        assert!((template_match(&t, &neg).unwrap().get(0, 0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_window_scores_zero_and_oversize_errors() {
        let t = RgbImage::from_fn(2, 2, |x, _| [x as f64; 3]);
        let flat = RgbImage::filled(3, 3, [0.4; 3]);
        assert!(template_match(&t, &flat)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert!(template_match(&flat, &t).is_err());
    }

    #[test]
    fn decile_mean() {
        let p = Plane::from_vec(10, 1, (0..10).map(|v| v as f64).collect()).unwrap();
        assert_eq!(top_decile_mean(&p), 9.0);
    }
}
