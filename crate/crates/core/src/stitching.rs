//! Multi-chunk generation: per-chunk inpainting, adjacency analysis,
//! elliptical transition stitching across shared borders, and Gaussian
//! fading of materials only one side of a border carries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coherence::{context_at, context_for_chunk, CoherenceError};
use crate::generators::{ChunkGenerator, GeneratorError, MaskedChunkInput};
use crate::map::{blend_chunk, BrushMask, Chunk, Coord, GameMap, MapError, TileMask, TileStack, TILES_PER_CHUNK};
use crate::rng::mix;

#[derive(Debug, thiserror::Error)]
pub enum StitchError {
    #[error("chunks {a} and {b} are not adjacent")]
    NotAdjacent { a: Coord, b: Coord },
    #[error("ellipse axes ({rx}, {ry}) must lie in (0, {side}]")]
    DegenerateAxes { rx: f64, ry: f64, side: usize },
    #[error("tile side {0} must be even to split chunks into halves")]
    OddTileSide(usize),
    #[error("brush for {coord} has side {actual}, tiles have side {expected}")]
    BrushSide { coord: Coord, expected: usize, actual: usize },
    #[error("chunk {coord} has no material `{id}`")]
    UnknownMaterial { coord: Coord, id: String },
    #[error("smoothing band {band} exceeds tile side {side}")]
    Band { band: usize, side: usize },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Coherence(#[from] CoherenceError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `b` is right of `a`.
    Horizontal,
    /// `b` is below `a`.
    Vertical,
}

/// Two edge-sharing chunks with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AdjacentPair {
    pub a: Coord,
    pub b: Coord,
    pub direction: Direction,
    pub intersecting: bool,
}

impl AdjacentPair {
    /// Orders the coordinates; `None` unless they share an edge.
    pub fn new(p: Coord, q: Coord) -> Option<Self> {
        let (a, b) = if p < q { (p, q) } else { (q, p) };
        let dx = a.x.abs_diff(b.x);
        let dy = a.y.abs_diff(b.y);
        let direction = match (dx, dy) {
            (1, 0) => Direction::Horizontal,
            (0, 1) => Direction::Vertical,
            _ => return None,
        };
        Some(Self {
            a,
            b,
            direction,
            intersecting: false,
        })
    }
}

/// Which chunk edge a band is measured from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

impl Side {
    /// Distance of `(x, y)` from this edge, 0 on the edge row or column.
    pub fn depth(self, x: usize, y: usize, side: usize) -> usize {
        match self {
            Side::Left => x,
            Side::Right => side - 1 - x,
            Side::Top => y,
            Side::Bottom => side - 1 - y,
        }
    }
}

impl Direction {
    /// The edges of `a` and `b` that touch.
    pub fn facing(self) -> (Side, Side) {
        match self {
            Direction::Horizontal => (Side::Right, Side::Left),
            Direction::Vertical => (Side::Bottom, Side::Top),
        }
    }
}

/// All edge-sharing pairs among `brushed`, in canonical order, with
/// `intersecting` computed over a `band`-pixel border strip.
pub fn find_adjacent_pairs(brushed: &BTreeMap<Coord, BrushMask>, band: usize) -> Vec<AdjacentPair> {
    let mut out = Vec::new();
    for (&c, ma) in brushed {
        let right = Coord::new(c.x + 1, c.y);
        let below = Coord::new(c.x, c.y + 1);
        for n in [right, below] {
            if let Some(mb) = brushed.get(&n) {
                let mut pair = AdjacentPair::new(c, n).expect("neighbor");
                pair.intersecting = mask_intersection(&pair, ma, mb, band);
                out.push(pair);
            }
        }
    }
    out.sort();
    out
}

/// True when some position along the shared edge has a brushed pixel within
/// `band` of the edge on both sides.
pub fn mask_intersection(pair: &AdjacentPair, mask_a: &BrushMask, mask_b: &BrushMask, band: usize) -> bool {
    let s = mask_a.side();
    if mask_b.side() != s || band == 0 {
        return false;
    }
    let (fa, fb) = pair.direction.facing();
    let band = band.min(s);
    (0..s).any(|t| {
        let hit = |m: &BrushMask, side: Side| {
            (0..band).any(|d| {
                let (x, y) = match side {
                    Side::Left => (d, t),
                    Side::Right => (s - 1 - d, t),
                    Side::Top => (t, d),
                    Side::Bottom => (t, s - 1 - d),
                };
                m.get(x, y)
            })
        };
        hit(mask_a, fa) && hit(mask_b, fb)
    })
}

/// Ellipse over the two-half composite, intersected with the aligned brushes.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMask {
    pub rx: f64,
    pub ry: f64,
    pub mask: BrushMask,
}

/// Maps a pixel of the composite built from the border-adjacent halves
/// (right half of `a` beside left half of `b`, or bottom half of `a` above top
/// half of `b`) back to `(is_a, x, y)` in its chunk.
fn from_composite(direction: Direction, cx: usize, cy: usize, side: usize) -> (bool, usize, usize) {
    let h = side / 2;
    match direction {
        Direction::Horizontal if cx < h => (true, cx + h, cy),
        Direction::Horizontal => (false, cx - h, cy),
        Direction::Vertical if cy < h => (true, cx, cy + h),
        Direction::Vertical => (false, cx, cy - h),
    }
}

/// Rasterizes the ellipse centered on the border midpoint, `rx` along the
/// border and `ry` across it, and keeps pixels brushed in either chunk.
pub fn make_transition_mask(
    direction: Direction,
    tile_side: usize,
    rx: f64,
    ry: f64,
    brush_a: &BrushMask,
    brush_b: &BrushMask,
) -> Result<TransitionMask, StitchError> {
    let s = tile_side;
    if !(rx > 0.0 && ry > 0.0 && rx <= s as f64 && ry <= s as f64) {
        return Err(StitchError::DegenerateAxes { rx, ry, side: s });
    }
    if !s.is_multiple_of(2) {
        return Err(StitchError::OddTileSide(s));
    }
    let c = s as f64 / 2.0;
    let mask = BrushMask::from_fn(s, |x, y| {
        let (along, across) = match direction {
            Direction::Horizontal => (y as f64 + 0.5 - c, x as f64 + 0.5 - c),
            Direction::Vertical => (x as f64 + 0.5 - c, y as f64 + 0.5 - c),
        };
        if (along / rx).powi(2) + (across / ry).powi(2) > 1.0 {
            return false;
        }
        let (first, bx, by) = from_composite(direction, x, y, s);
        if first {
            brush_a.get(bx, by)
        } else {
            brush_b.get(bx, by)
        }
    });
    Ok(TransitionMask { rx, ry, mask })
}

/// Defaults for the region pipeline. `None` fields derive from the tile side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StitchConfig {
    /// Border strip width for the intersection check.
    pub intersection_band: usize,
    /// Ellipse semi-axis along the border; tile_side/2.
    pub rx: Option<f64>,
    /// Ellipse semi-axis across the border; tile_side/4.
    pub ry: Option<f64>,
    /// Fade depth for border-exclusive materials; tile_side/4.
    pub smoothing_band: Option<usize>,
    /// Gaussian width of the fade; band/3.
    pub sigma: Option<f64>,
    /// Run the stitch and fade steps after per-chunk generation.
    pub stitch: bool,
    pub seed: u64,
}

impl Default for StitchConfig {
    fn default() -> Self {
        Self {
            intersection_band: 4,
            rx: None,
            ry: None,
            smoothing_band: None,
            sigma: None,
            stitch: true,
            seed: 0,
        }
    }
}

impl StitchConfig {
    pub fn axes(&self, side: usize) -> (f64, f64) {
        (
            self.rx.unwrap_or(side as f64 / 2.0),
            self.ry.unwrap_or(side as f64 / 4.0),
        )
    }

    pub fn smoothing(&self, side: usize) -> (usize, f64) {
        let band = self.smoothing_band.unwrap_or((side / 4).max(1));
        (band, self.sigma.unwrap_or(band as f64 / 3.0))
    }
}

fn chunk_seed(seed: u64, c: Coord) -> u64 {
    mix(seed, ((c.x as u64) << 32) | c.y as u64)
}

/// Shared material ids in `a`'s tile order.
pub fn shared_materials(a: &Chunk, b: &Chunk) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for id in a.material_ids() {
        if b.material_ids().any(|m| m == id) && !out.iter().any(|o| o == id) {
            out.push(id.to_string());
        }
    }
    out
}

/// Re-inpaints the transition region straddling the pair's border and writes
/// the shared materials back. Returns the number of pixels regenerated.
pub fn stitch_pair(
    map: &mut GameMap,
    pair: &AdjacentPair,
    brush_a: &BrushMask,
    brush_b: &BrushMask,
    generator: &dyn ChunkGenerator,
    config: &StitchConfig,
) -> Result<usize, StitchError> {
    if AdjacentPair::new(pair.a, pair.b).map(|p| p.direction) != Some(pair.direction) {
        return Err(StitchError::NotAdjacent { a: pair.a, b: pair.b });
    }
    let s = map.tile_size;
    let (rx, ry) = config.axes(s);
    let transition = make_transition_mask(pair.direction, s, rx, ry, brush_a, brush_b)?;
    let ca = map.chunk(pair.a)?.clone();
    let cb = map.chunk(pair.b)?.clone();
    let shared = shared_materials(&ca, &cb);
    if transition.mask.is_empty() || shared.is_empty() {
        return Ok(0);
    }

    // Composite in a's tile order; a's own materials keep their slots, with
    // non-shared channels left at zero.
    let mut tiles: Vec<TileMask> = Vec::with_capacity(TILES_PER_CHUNK);
    let mut sources: Vec<Option<(usize, usize)>> = Vec::with_capacity(TILES_PER_CHUNK);
    for (ka, t) in ca.tiles.iter().enumerate() {
        let kb = shared.contains(&t.material_id)
            .then(|| cb.material_ids().position(|m| m == t.material_id))
            .flatten();
        let mut plane = crate::map::Plane::zeros(s, s);
        if let Some(kb) = kb {
            for y in 0..s {
                for x in 0..s {
                    let (first, bx, by) = from_composite(pair.direction, x, y, s);
                    let v = if first { ca.tiles[ka].pixels.get(bx, by) } else { cb.tiles[kb].pixels.get(bx, by) };
                    plane.set(x, y, v);
                }
            }
        }
        tiles.push(TileMask::new(t.material_id.clone(), plane));
        sources.push(kb.map(|kb| (ka, kb)));
    }
    let composite = Chunk::new(pair.a, tiles)?;
    let origin = match pair.direction {
        Direction::Horizontal => (pair.a.x as usize * s + s / 2, pair.a.y as usize * s),
        Direction::Vertical => (pair.a.x as usize * s, pair.a.y as usize * s + s / 2),
    };
    let context = context_at(map, &composite, origin)?;
    let input = MaskedChunkInput::new(&composite.stack(), &transition.mask, context)?;
    let seed = mix(chunk_seed(config.seed, pair.a), chunk_seed(0x57_17c4, pair.b));
    let out = generator.generate(&input, seed)?;

    let mut na = ca.clone();
    let mut nb = cb.clone();
    for (k, src) in sources.iter().enumerate() {
        let Some((ka, kb)) = *src else { continue };
        for (i, &m) in transition.mask.data().iter().enumerate() {
            if !m {
                continue;
            }
            let (x, y) = (i % s, i / s);
            let v = out.get(k, x, y);
            let (first, bx, by) = from_composite(pair.direction, x, y, s);
            if first {
                na.tiles[ka].pixels.set(bx, by, v);
            } else {
                nb.tiles[kb].pixels.set(bx, by, v);
            }
        }
    }
    map.chunks.insert(pair.a, na);
    map.chunks.insert(pair.b, nb);
    Ok(transition.mask.count())
}

/// Fades the listed materials towards `border`: within `band` pixels, weights
/// are scaled by `1 − exp(−d²/2σ²)` at depth `d`; deeper pixels are untouched.
pub fn gaussian_material_smoothing(
    chunk: &Chunk,
    exclusive_ids: &[String],
    border: Side,
    sigma: f64,
    band: usize,
) -> Result<Chunk, StitchError> {
    let s = chunk.side();
    if band > s {
        return Err(StitchError::Band { band, side: s });
    }
    let mut out = chunk.clone();
    for id in exclusive_ids {
        let Some(k) = chunk.material_ids().position(|m| m == id) else {
            return Err(StitchError::UnknownMaterial {
                coord: chunk.coord,
                id: id.clone(),
            });
        };
        let plane = &mut out.tiles[k].pixels;
        for y in 0..s {
            for x in 0..s {
                let d = border.depth(x, y, s);
                if d < band {
                    let ramp = 1.0 - (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
                    plane.set(x, y, plane.get(x, y) * ramp);
                }
            }
        }
    }
    Ok(out)
}

/// Mean absolute RGB difference between the two pixel rows (or columns) that
/// meet at the pair's border.
pub fn seam_score(map: &GameMap, pair: &AdjacentPair) -> Result<f64, StitchError> {
    if AdjacentPair::new(pair.a, pair.b).is_none() {
        return Err(StitchError::NotAdjacent { a: pair.a, b: pair.b });
    }
    let ra = blend_chunk(map.chunk(pair.a)?, &map.materials)?;
    let rb = blend_chunk(map.chunk(pair.b)?, &map.materials)?;
    let s = map.tile_size;
    let mut acc = 0.0;
    for t in 0..s {
        let (pa, pb) = match pair.direction {
            Direction::Horizontal => (ra.get(s - 1, t), rb.get(0, t)),
            Direction::Vertical => (ra.get(t, s - 1), rb.get(t, 0)),
        };
        acc += (0..3).map(|c| (pa[c] - pb[c]).abs()).sum::<f64>();
    }
    Ok(acc / (3 * s) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pair: AdjacentPair,
    pub seam_before: f64,
    pub seam_after: f64,
    /// Pixels re-inpainted by the stitch step.
    pub stitched_pixels: usize,
}

#[derive(Clone, Debug)]
pub struct RegionOutcome {
    pub map: GameMap,
    pub pairs: Vec<PairReport>,
}

fn generate_one(
    map: &GameMap,
    coord: Coord,
    brush: &BrushMask,
    generator: &dyn ChunkGenerator,
    seed: u64,
) -> Result<Chunk, StitchError> {
    let chunk = map.chunk(coord)?;
    if brush.side() != chunk.side() {
        return Err(StitchError::BrushSide {
            coord,
            expected: chunk.side(),
            actual: brush.side(),
        });
    }
    if brush.is_empty() {
        return Ok(chunk.clone());
    }
    let context = context_for_chunk(map, coord)?;
    let input = MaskedChunkInput::new(&chunk.stack(), brush, context)?;
    let out: TileStack = generator.generate(&input, chunk_seed(seed, coord))?;
    Ok(chunk.with_stack(&out)?)
}

/// Generates every brushed chunk, then stitches and fades across each
/// intersecting border in canonical pair order.
pub fn generate_region(
    map: &GameMap,
    brushed: &BTreeMap<Coord, BrushMask>,
    generator: &dyn ChunkGenerator,
    config: &StitchConfig,
) -> Result<RegionOutcome, StitchError> {
    let entries: Vec<(&Coord, &BrushMask)> = brushed.iter().collect();
    #[cfg(feature = "parallel")]
    let generated: Vec<Result<Chunk, StitchError>> = {
        use rayon::prelude::*;
        entries
            .par_iter()
            .map(|(c, b)| generate_one(map, **c, b, generator, config.seed))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let generated: Vec<Result<Chunk, StitchError>> = entries
        .iter()
        .map(|(c, b)| generate_one(map, **c, b, generator, config.seed))
        .collect();

    let mut out = map.clone();
    for chunk in generated {
        let chunk = chunk?;
        out.chunks.insert(chunk.coord, chunk);
    }

    let pairs = find_adjacent_pairs(brushed, config.intersection_band);
    let mut before = Vec::with_capacity(pairs.len());
    for p in &pairs {
        before.push(seam_score(&out, p)?);
    }
    let mut stitched = vec![0; pairs.len()];
    if config.stitch && out.tile_size.is_multiple_of(2) {
        let s = out.tile_size;
        let (band, sigma) = config.smoothing(s);
        for (i, p) in pairs.iter().enumerate() {
            if !p.intersecting {
                continue;
            }
            stitched[i] = stitch_pair(&mut out, p, &brushed[&p.a], &brushed[&p.b], generator, config)?;
            let (fa, fb) = p.direction.facing();
            let ca = out.chunk(p.a)?.clone();
            let cb = out.chunk(p.b)?.clone();
            let only_a = exclusive(&ca, &cb);
            let only_b = exclusive(&cb, &ca);
            out.chunks.insert(p.a, gaussian_material_smoothing(&ca, &only_a, fa, sigma, band)?);
            out.chunks.insert(p.b, gaussian_material_smoothing(&cb, &only_b, fb, sigma, band)?);
        }
    }
    let mut reports = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.into_iter().enumerate() {
        reports.push(PairReport {
            seam_after: seam_score(&out, &p)?,
            seam_before: before[i],
            stitched_pixels: stitched[i],
            pair: p,
        });
    }
    Ok(RegionOutcome { map: out, pairs: reports })
}

fn exclusive(a: &Chunk, b: &Chunk) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for id in a.material_ids() {
        if !b.material_ids().any(|m| m == id) && !out.iter().any(|o| o == id) {
            out.push(id.to_string());
        }
    }
    out
}
