//! Map domain types: chunks of eight material tile masks, material textures,
//! the global conditioning planes, and brush masks.

mod blend;
pub mod bundle;
mod plane;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blend::{
    apply_brush, blend_chunk, blend_region, normalize_weights, weight_sum_stats, WeightSumStats,
};
pub use bundle::{load_map_bundle, save_map_bundle, Manifest, FORMAT_VERSION};
pub use plane::{to_u16, to_u8, Plane, RgbImage};

/// Number of tile masks (and materials) per chunk.
pub const TILES_PER_CHUNK: usize = 8;

/// Default tile side in pixels.
pub const DEFAULT_TILE_SIZE: usize = 128;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("unresolved material id `{0}`")]
    UnresolvedMaterial(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("chunk tile count: chunk {coord} has {count} tiles, expected {TILES_PER_CHUNK}")]
    ChunkTileCount { coord: Coord, count: usize },
    #[error("material id collision: `{0}`")]
    MaterialCollision(String),
    #[error("invalid material id `{0}`")]
    InvalidMaterialId(String),
    #[error("chunk {0} outside the map grid")]
    OutOfBounds(Coord),
    #[error("missing manifest at {0}")]
    MissingManifest(String),
    #[error("unsupported bundle format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unreadable image {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Integer chunk position. `(0, 0)` is the top-left chunk; ordering is
/// lexicographic on `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub x: u32,
    pub y: u32,
}

impl Coord {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl std::fmt::Display for Coord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

impl std::str::FromStr for Coord {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (x, y) = s
            .split_once([',', '_'])
            .ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|e| format!("bad coordinate `{v}`: {e}"))
        };
        Ok(Coord::new(parse(x)?, parse(y)?))
    }
}

/// One material's blend weights over a chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct TileMask {
    pub material_id: String,
    pub pixels: Plane,
}

impl TileMask {
    pub fn new(material_id: impl Into<String>, pixels: Plane) -> Self {
        Self {
            material_id: material_id.into(),
            pixels,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub id: String,
    pub texture: RgbImage,
}

impl Material {
    pub fn new(id: impl Into<String>, texture: RgbImage) -> Self {
        Self {
            id: id.into(),
            texture,
        }
    }
}

/// Materials keyed by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MaterialSet {
    materials: BTreeMap<String, Material>,
}

impl MaterialSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, material: Material) -> Result<(), MapError> {
        if !is_valid_id(&material.id) {
            return Err(MapError::InvalidMaterialId(material.id));
        }
        if self.materials.contains_key(&material.id) {
            return Err(MapError::MaterialCollision(material.id));
        }
        self.materials.insert(material.id.clone(), material);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Material> {
        self.materials.get(id)
    }

    pub fn resolve(&self, id: &str) -> Result<&Material, MapError> {
        self.get(id)
            .ok_or_else(|| MapError::UnresolvedMaterial(id.to_owned()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Material> {
        self.materials.values()
    }

    pub fn len(&self) -> usize {
        self.materials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.materials.is_empty()
    }
}

impl MaterialSet {
    pub fn from_materials(materials: impl IntoIterator<Item = Material>) -> Result<Self, MapError> {
        let mut set = MaterialSet::new();
        for m in materials {
            set.insert(m)?;
        }
        Ok(set)
    }
}

/// Ids double as file names inside a bundle.
fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.')
}

/// The unit of generation: exactly eight tile masks sharing one square size.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    pub coord: Coord,
    pub tiles: Vec<TileMask>,
}

impl Chunk {
    pub fn new(coord: Coord, tiles: Vec<TileMask>) -> Result<Self, MapError> {
        let chunk = Self { coord, tiles };
        chunk.validate()?;
        Ok(chunk)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.tiles.len() != TILES_PER_CHUNK {
            return Err(MapError::ChunkTileCount {
                coord: self.coord,
                count: self.tiles.len(),
            });
        }
        let side = self.tiles[0].pixels.width();
        for t in &self.tiles {
            if t.pixels.dims() != (side, side) {
                return Err(MapError::DimensionMismatch {
                    expected: (side, side),
                    actual: t.pixels.dims(),
                });
            }
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        self.tiles.first().map_or(0, |t| t.pixels.width())
    }

    pub fn material_ids(&self) -> impl Iterator<Item = &str> {
        self.tiles.iter().map(|t| t.material_id.as_str())
    }

    /// Index of the tile carrying the largest total weight; ties go to the lowest index.
    pub fn dominant_by_weight(&self) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, t) in self.tiles.iter().enumerate() {
            let s: f64 = t.pixels.data().iter().sum();
            if s > best.1 {
                best = (i, s);
            }
        }
        best.0
    }

    /// Weights as a channel-major `8 × side × side` stack.
    pub fn stack(&self) -> TileStack {
        let side = self.side();
        let mut data = Vec::with_capacity(TILES_PER_CHUNK * side * side);
        for t in &self.tiles {
            data.extend_from_slice(t.pixels.data());
        }
        TileStack { side, data }
    }

    /// Replaces all weights from `stack`, keeping material ids.
    pub fn with_stack(&self, stack: &TileStack) -> Result<Chunk, MapError> {
        if stack.side != self.side() {
            return Err(MapError::DimensionMismatch {
                expected: (self.side(), self.side()),
                actual: (stack.side, stack.side),
            });
        }
        let tiles = self
            .tiles
            .iter()
            .enumerate()
            .map(|(k, t)| TileMask::new(t.material_id.clone(), stack.channel(k)))
            .collect();
        Ok(Chunk {
            coord: self.coord,
            tiles,
        })
    }
}

/// Eight weight channels without material bindings; what generators consume and produce.
#[derive(Clone, Debug, PartialEq)]
pub struct TileStack {
    pub side: usize,
    pub data: Vec<f64>,
}

impl TileStack {
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            data: vec![0.0; TILES_PER_CHUNK * side * side],
        }
    }

    pub fn channel(&self, k: usize) -> Plane {
        let n = self.side * self.side;
        Plane::from_vec(self.side, self.side, self.data[k * n..(k + 1) * n].to_vec())
            .expect("channel length")
    }

    pub fn channel_slice(&self, k: usize) -> &[f64] {
        let n = self.side * self.side;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn channel_slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.side * self.side;
        &mut self.data[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn get(&self, k: usize, x: usize, y: usize) -> f64 {
        self.data[(k * self.side + y) * self.side + x]
    }

    #[inline]
    pub fn set(&mut self, k: usize, x: usize, y: usize, v: f64) {
        self.data[(k * self.side + y) * self.side + x] = v;
    }
}

/// Binary region to regenerate; `true` marks a brushed pixel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BrushMask {
    side: usize,
    data: Vec<bool>,
}

impl BrushMask {
    pub fn empty(side: usize) -> Self {
        Self {
            side,
            data: vec![false; side * side],
        }
    }

    pub fn full(side: usize) -> Self {
        Self {
            side,
            data: vec![true; side * side],
        }
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                data.push(f(x, y));
            }
        }
        Self { side, data }
    }

    pub fn from_vec(side: usize, data: Vec<bool>) -> Option<Self> {
        (data.len() == side * side).then_some(Self { side, data })
    }

    /// Thresholds a plane at 0.5.
    pub fn from_plane(plane: &Plane) -> Result<Self, MapError> {
        if !plane.is_square() {
            return Err(MapError::DimensionMismatch {
                expected: (plane.width(), plane.width()),
                actual: plane.dims(),
            });
        }
        Ok(Self {
            side: plane.width(),
            data: plane.data().iter().map(|&v| v >= 0.5).collect(),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.side + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.side + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Fraction of brushed pixels.
    pub fn coverage(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.data.len() as f64
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn to_plane(&self) -> Plane {
        Plane::from_vec(
            self.side,
            self.side,
            self.data
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
        .expect("square mask")
    }
}

/// A full map: chunk grid, materials, and the global conditioning planes.
///
/// Global planes are stored at tile resolution per chunk, i.e. they span
/// `grid_width * tile_size` by `grid_height * tile_size` pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct GameMap {
    pub name: String,
    pub category: Option<String>,
    pub grid_width: u32,
    pub grid_height: u32,
    pub tile_size: usize,
    pub chunks: BTreeMap<Coord, Chunk>,
    pub materials: MaterialSet,
    pub global_am: RgbImage,
    pub height_map: Plane,
    pub object_masks: BTreeMap<String, Plane>,
}

impl GameMap {
    pub fn contains(&self, coord: Coord) -> bool {
        coord.x < self.grid_width && coord.y < self.grid_height
    }

    pub fn chunk(&self, coord: Coord) -> Result<&Chunk, MapError> {
        if !self.contains(coord) {
            return Err(MapError::OutOfBounds(coord));
        }
        self.chunks.get(&coord).ok_or(MapError::OutOfBounds(coord))
    }

    pub fn extent(&self) -> (usize, usize) {
        (
            self.grid_width as usize * self.tile_size,
            self.grid_height as usize * self.tile_size,
        )
    }

    /// Material ids referenced anywhere in the map.
    pub fn material_ids(&self) -> impl Iterator<Item = &str> {
        self.materials.ids()
    }

    /// Checks the structural invariants tying chunks, materials and planes together.
    pub fn validate(&self) -> Result<(), MapError> {
        let extent = self.extent();
        for (coord, chunk) in &self.chunks {
            if !self.contains(*coord) || chunk.coord != *coord {
                return Err(MapError::OutOfBounds(*coord));
            }
            chunk.validate()?;
            if chunk.side() != self.tile_size {
                return Err(MapError::DimensionMismatch {
                    expected: (self.tile_size, self.tile_size),
                    actual: (chunk.side(), chunk.side()),
                });
            }
            for id in chunk.material_ids() {
                self.materials.resolve(id)?;
            }
        }
        for m in self.materials.iter() {
            if m.texture.dims() != (self.tile_size, self.tile_size) {
                return Err(MapError::DimensionMismatch {
                    expected: (self.tile_size, self.tile_size),
                    actual: m.texture.dims(),
                });
            }
        }
        let planes = std::iter::once(self.global_am.dims())
            .chain(std::iter::once(self.height_map.dims()))
            .chain(self.object_masks.values().map(Plane::dims));
        for dims in planes {
            if dims != extent {
                return Err(MapError::DimensionMismatch {
                    expected: extent,
                    actual: dims,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coord_parses_both_separators() {
        assert_eq!("3,4".parse::<Coord>().unwrap(), Coord::new(3, 4));
        assert_eq!("3_4".parse::<Coord>().unwrap(), Coord::new(3, 4));
        assert!("3".parse::<Coord>().is_err());
    }

    #[test]
    fn material_collision_rejected() {
        let mut set = MaterialSet::new();
        set.insert(Material::new("grass", RgbImage::filled(2, 2, [0.0; 3])))
            .unwrap();
        let err = set.insert(Material::new("grass", RgbImage::filled(2, 2, [1.0; 3])));
        assert!(matches!(err, Err(MapError::MaterialCollision(_))));
        assert!(matches!(
            set.insert(Material::new("../x", RgbImage::filled(2, 2, [0.0; 3]))),
            Err(MapError::InvalidMaterialId(_))
        ));
    }

    #[test]
    fn chunk_requires_eight_tiles() {
        let tiles = (0..7)
            .map(|k| TileMask::new(format!("m{k}"), Plane::zeros(4, 4)))
            .collect();
        let err = Chunk::new(Coord::new(0, 0), tiles).unwrap_err();
        assert!(err.to_string().contains("chunk tile count"));
    }

    #[test]
    fn stack_roundtrip() {
        let tiles = (0..8)
            .map(|k| TileMask::new(format!("m{k}"), Plane::filled(3, 3, k as f64 / 8.0)))
            .collect();
        let chunk = Chunk::new(Coord::new(1, 2), tiles).unwrap();
        let stack = chunk.stack();
        assert_eq!(stack.get(5, 2, 1), 5.0 / 8.0);
        assert_eq!(chunk.with_stack(&stack).unwrap(), chunk);
    }
}
