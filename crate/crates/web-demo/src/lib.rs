//! In-browser editor over a synthetic map: paint a brush, regenerate the
//! brushed chunks with the baseline generator, inspect seams, undo.

use std::collections::BTreeMap;

use serde_json::json;
use smartbrush_core::coherence::rank_materials;
use smartbrush_core::generators::GeneratorModel;
use smartbrush_core::map::{blend_region, BrushMask, Chunk, Coord, GameMap, RgbImage};
use smartbrush_core::stitching::{generate_region, StitchConfig};
use smartbrush_core::synth::{synthetic_map, SyntheticMapSpec};
use wasm_bindgen::prelude::*;

/// Editor state, usable without a browser.
pub struct Editor {
    map: GameMap,
    brush: BTreeMap<Coord, BrushMask>,
    history: Vec<BTreeMap<Coord, Chunk>>,
    generator: GeneratorModel,
    seed: u64,
}

impl Editor {
    pub fn new(seed: u64, grid: u32, tile_size: usize) -> Result<Self, String> {
        if grid == 0 || tile_size < 8 {
            return Err("grid must be positive and tiles at least 8 px".into());
        }
        Ok(Self {
            map: synthetic_map(&SyntheticMapSpec::new("demo", grid, tile_size, seed)),
            brush: BTreeMap::new(),
            history: Vec::new(),
            generator: GeneratorModel::baseline(),
            seed,
        })
    }

    pub fn map(&self) -> &GameMap {
        &self.map
    }

    pub fn extent(&self) -> (usize, usize) {
        self.map.extent()
    }

    pub fn render(&self) -> RgbImage {
        let (w, h) = (self.map.grid_width, self.map.grid_height);
        blend_region(&self.map, Coord::new(0, 0), Coord::new(w - 1, h - 1)).expect("full extent is valid")
    }

    /// Marks a disc of map pixels; returns how many pixels were newly set.
    pub fn paint(&mut self, cx: f64, cy: f64, radius: f64) -> usize {
        let s = self.map.tile_size;
        let (w, h) = self.extent();
        let r = radius.max(0.5);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let y0 = (cy - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(w.saturating_sub(1));
        let y1 = ((cy + r).ceil() as usize).min(h.saturating_sub(1));
        let mut n = 0;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let c = Coord::new((x / s) as u32, (y / s) as u32);
                let m = self.brush.entry(c).or_insert_with(|| BrushMask::empty(s));
                if !m.get(x % s, y % s) {
                    m.set(x % s, y % s, true);
                    n += 1;
                }
            }
        }
        n
    }

    pub fn clear_brush(&mut self) {
        self.brush.clear();
    }

    pub fn brushed_pixels(&self) -> usize {
        self.brush.values().map(BrushMask::count).sum()
    }

    pub fn is_brushed(&self, x: usize, y: usize) -> bool {
        let s = self.map.tile_size;
        self.brush
            .get(&Coord::new((x / s) as u32, (y / s) as u32))
            .is_some_and(|m| m.get(x % s, y % s))
    }

    /// Regenerates every brushed chunk and returns the seam report as JSON.
    pub fn generate(&mut self, stitch: bool) -> Result<String, String> {
        self.brush.retain(|_, m| !m.is_empty());
        if self.brush.is_empty() {
            return Err("paint something first".into());
        }
        let config = StitchConfig { stitch, seed: self.seed, ..StitchConfig::default() };
        let outcome = generate_region(&self.map, &self.brush, &self.generator, &config).map_err(|e| e.to_string())?;
        let old = self.brush.keys().map(|c| (*c, self.map.chunks[c].clone())).collect();
        self.history.push(old);
        for c in self.brush.keys() {
            self.map.chunks.insert(*c, outcome.map.chunks[c].clone());
        }
        self.seed = self.seed.wrapping_add(1);
        let chunks: Vec<String> = self.brush.keys().map(Coord::to_string).collect();
        self.brush.clear();
        let pairs: Vec<_> = outcome
            .pairs
            .iter()
            .map(|p| {
                json!({
                    "a": p.pair.a.to_string(),
                    "b": p.pair.b.to_string(),
                    "seam_before": p.seam_before,
                    "seam_after": p.seam_after,
                    "stitched_pixels": p.stitched_pixels,
                })
            })
            .collect();
        Ok(json!({ "chunks": chunks, "pairs": pairs }).to_string())
    }

    pub fn undo(&mut self) -> bool {
        match self.history.pop() {
            Some(old) => {
                self.map.chunks.extend(old);
                true
            }
            None => false,
        }
    }

    /// Material ranking for the chunk under map pixel (x, y), as JSON.
    pub fn rank_at(&self, x: usize, y: usize) -> Result<String, String> {
        let s = self.map.tile_size;
        let c = Coord::new((x / s) as u32, (y / s) as u32);
        let chunk = self.map.chunk(c).map_err(|e| e.to_string())?;
        let region = self.map.global_am.crop(c.x as usize * s, c.y as usize * s, s, s);
        let ranking = rank_materials(chunk, &self.map.materials, &region).map_err(|e| e.to_string())?;
        let entries: Vec<_> =
            ranking.entries.iter().map(|e| json!({ "material": e.material_id, "score": e.score })).collect();
        Ok(json!({ "chunk": c.to_string(), "ranking": entries }).to_string())
    }
}

/// RGBA bytes for a canvas `ImageData`, brushed pixels tinted red.
pub fn to_rgba(img: &RgbImage, tint: impl Fn(usize, usize) -> bool) -> Vec<u8> {
    let w = img.width();
    let mut out = Vec::with_capacity(img.pixels().len() * 4);
    for (i, p) in img.pixels().iter().enumerate() {
        let mut px = p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round());
        if tint(i % w, i / w) {
            px = [0.5 * px[0] + 127.5, 0.5 * px[1], 0.5 * px[2]];
        }
        out.extend(px.map(|v| v as u8));
        out.push(255);
    }
    out
}

#[wasm_bindgen]
pub struct Demo(Editor);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, grid: u32, tile_size: u32) -> Result<Demo, JsError> {
        Editor::new(seed as u64, grid, tile_size as usize).map(Demo).map_err(|e| JsError::new(&e))
    }

    pub fn width(&self) -> u32 {
        self.0.extent().0 as u32
    }

    pub fn height(&self) -> u32 {
        self.0.extent().1 as u32
    }

    pub fn tile_size(&self) -> u32 {
        self.0.map().tile_size as u32
    }

    pub fn rgba(&self) -> Vec<u8> {
        to_rgba(&self.0.render(), |x, y| self.0.is_brushed(x, y))
    }

    pub fn paint(&mut self, x: f64, y: f64, radius: f64) -> u32 {
        self.0.paint(x, y, radius) as u32
    }

    pub fn clear_brush(&mut self) {
        self.0.clear_brush();
    }

    pub fn generate(&mut self, stitch: bool) -> Result<String, JsError> {
        self.0.generate(stitch).map_err(|e| JsError::new(&e))
    }

    pub fn undo(&mut self) -> bool {
        self.0.undo()
    }

    pub fn rank_at(&self, x: u32, y: u32) -> Result<String, JsError> {
        self.0.rank_at(x as usize, y as usize).map_err(|e| JsError::new(&e))
    }
}
