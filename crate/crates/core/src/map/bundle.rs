//! On-disk map bundle.
//!
//! ```text
//! manifest.json
//! chunks/<x>_<y>/tile_<k>.png   8-bit grayscale, k in 0..8
//! materials/<id>.png            8-bit RGB
//! global_am.png                 8-bit RGB
//! height.png                    16-bit grayscale
//! objects/<name>.png            8-bit binary (0 / 255)
//! ```

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::{
    to_u16, to_u8, BrushMask, Chunk, Coord, GameMap, MapError, Material, MaterialSet, Plane,
    RgbImage, TileMask, TILES_PER_CHUNK,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub grid: GridSize,
    pub tile_size: usize,
    pub materials: Vec<MaterialEntry>,
    pub chunks: Vec<ChunkEntry>,
    #[serde(default)]
    pub object_masks: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialEntry {
    pub id: String,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkEntry {
    pub x: u32,
    pub y: u32,
    /// Material id per tile index.
    pub materials: Vec<String>,
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> MapError + '_ {
    move |source| MapError::Image {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_gray_plane(path: &Path) -> Result<Plane, MapError> {
    let img = image::open(path).map_err(image_err(path))?.to_luma8();
    Ok(gray_to_plane(&img))
}

fn gray_to_plane(img: &GrayImage) -> Plane {
    let (w, h) = img.dimensions();
    Plane::from_vec(
        w as usize,
        h as usize,
        img.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
    )
    .expect("luma8 buffer length")
}

fn plane_to_gray(plane: &Plane) -> GrayImage {
    GrayImage::from_raw(
        plane.width() as u32,
        plane.height() as u32,
        plane.data().iter().map(|&v| to_u8(v)).collect(),
    )
    .expect("plane buffer length")
}

fn rgb_to_buffer(img: &RgbImage) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    let raw = img.pixels().iter().flat_map(|p| p.map(to_u8)).collect();
    ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("rgb buffer length")
}

pub fn read_rgb(path: &Path) -> Result<RgbImage, MapError> {
    let img = image::open(path).map_err(image_err(path))?.to_rgb8();
    Ok(buffer_to_rgb(&img))
}

fn buffer_to_rgb(img: &ImageBuffer<Rgb<u8>, Vec<u8>>) -> RgbImage {
    let (w, h) = img.dimensions();
    let px = img
        .pixels()
        .map(|p| p.0.map(|v| v as f64 / 255.0))
        .collect();
    RgbImage::from_vec(w as usize, h as usize, px).expect("rgb8 buffer length")
}

pub fn write_gray_plane(plane: &Plane, path: &Path) -> Result<(), MapError> {
    plane_to_gray(plane)
        .save_with_format(path, ImageFormat::Png)
        .map_err(image_err(path))
}

pub fn write_rgb(img: &RgbImage, path: &Path) -> Result<(), MapError> {
    rgb_to_buffer(img)
        .save_with_format(path, ImageFormat::Png)
        .map_err(image_err(path))
}

/// Reads a brush mask; any pixel ≥ 128 is brushed.
pub fn read_mask(path: &Path) -> Result<BrushMask, MapError> {
    BrushMask::from_plane(&read_gray_plane(path)?)
}

pub fn write_mask(mask: &BrushMask, path: &Path) -> Result<(), MapError> {
    write_gray_plane(&mask.to_plane(), path)
}

/// PNG-encodes an RGB image in memory.
pub fn encode_rgb_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    rgb_to_buffer(img)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn encode_gray_png(plane: &Plane) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    plane_to_gray(plane)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

/// Decodes an in-memory PNG as 8-bit grayscale.
pub fn decode_gray_png(bytes: &[u8]) -> Result<Plane, MapError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|source| {
        MapError::Image {
            path: "<memory>".into(),
            source,
        }
    })?;
    Ok(gray_to_plane(&img.to_luma8()))
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage, MapError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|source| {
        MapError::Image {
            path: "<memory>".into(),
            source,
        }
    })?;
    Ok(buffer_to_rgb(&img.to_rgb8()))
}

pub fn chunk_dir_name(coord: Coord) -> String {
    format!("{}_{}", coord.x, coord.y)
}

/// Reads the eight `tile_k.png` files of one chunk directory.
pub fn read_chunk_tiles(dir: &Path, coord: Coord) -> Result<Vec<Plane>, MapError> {
    let mut indices = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(k) = name
            .strip_prefix("tile_")
            .and_then(|s| s.strip_suffix(".png"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            indices.push(k);
        }
    }
    indices.sort_unstable();
    if indices != (0..TILES_PER_CHUNK).collect::<Vec<_>>() {
        return Err(MapError::ChunkTileCount {
            coord,
            count: indices.len(),
        });
    }
    indices
        .iter()
        .map(|k| read_gray_plane(&dir.join(format!("tile_{k}.png"))))
        .collect()
}

pub fn write_chunk_tiles(chunk: &Chunk, dir: &Path) -> Result<(), MapError> {
    std::fs::create_dir_all(dir)?;
    for (k, t) in chunk.tiles.iter().enumerate() {
        write_gray_plane(&t.pixels, &dir.join(format!("tile_{k}.png")))?;
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, MapError> {
    let path = dir.join("manifest.json");
    if !path.is_file() {
        return Err(MapError::MissingManifest(path.display().to_string()));
    }
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(&path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(MapError::UnsupportedVersion(manifest.format_version));
    }
    Ok(manifest)
}

pub fn load_map_bundle(dir: impl AsRef<Path>) -> Result<GameMap, MapError> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let side = manifest.tile_size;

    let mut materials = MaterialSet::new();
    for entry in &manifest.materials {
        let texture = read_rgb(&dir.join(&entry.file))?.resize(side, side);
        materials.insert(Material::new(entry.id.clone(), texture))?;
    }

    let mut chunks = BTreeMap::new();
    for entry in &manifest.chunks {
        let coord = Coord::new(entry.x, entry.y);
        if entry.materials.len() != TILES_PER_CHUNK {
            return Err(MapError::ChunkTileCount {
                coord,
                count: entry.materials.len(),
            });
        }
        let planes = read_chunk_tiles(&dir.join("chunks").join(chunk_dir_name(coord)), coord)?;
        let tiles = entry
            .materials
            .iter()
            .zip(planes)
            .map(|(id, p)| TileMask::new(id.clone(), p))
            .collect();
        chunks.insert(coord, Chunk::new(coord, tiles)?);
    }

    let global_am = read_rgb(&dir.join("global_am.png"))?;
    let height_path = dir.join("height.png");
    let height_img = image::open(&height_path).map_err(image_err(&height_path))?;
    let height_map = match height_img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => {
            let img = height_img.to_luma16();
            let (w, h) = img.dimensions();
            Plane::from_vec(
                w as usize,
                h as usize,
                img.as_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
            )
            .expect("luma16 buffer length")
        }
        other => gray_to_plane(&other.to_luma8()),
    };

    let mut object_masks = BTreeMap::new();
    for name in &manifest.object_masks {
        let plane = read_gray_plane(&dir.join("objects").join(format!("{name}.png")))?;
        object_masks.insert(
            name.clone(),
            plane.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }),
        );
    }

    let map = GameMap {
        name: manifest.name,
        category: manifest.category,
        grid_width: manifest.grid.width,
        grid_height: manifest.grid.height,
        tile_size: side,
        chunks,
        materials,
        global_am,
        height_map,
        object_masks,
    };
    map.validate()?;
    Ok(map)
}

pub fn manifest_for(map: &GameMap) -> Manifest {
    Manifest {
        format_version: FORMAT_VERSION,
        name: map.name.clone(),
        category: map.category.clone(),
        grid: GridSize {
            width: map.grid_width,
            height: map.grid_height,
        },
        tile_size: map.tile_size,
        materials: map
            .materials
            .ids()
            .map(|id| MaterialEntry {
                id: id.to_owned(),
                file: format!("materials/{id}.png"),
            })
            .collect(),
        chunks: map
            .chunks
            .values()
            .map(|c| ChunkEntry {
                x: c.coord.x,
                y: c.coord.y,
                materials: c.material_ids().map(str::to_owned).collect(),
            })
            .collect(),
        object_masks: map.object_masks.keys().cloned().collect(),
    }
}

pub fn save_map_bundle(map: &GameMap, dir: impl AsRef<Path>) -> Result<(), MapError> {
    let dir = dir.as_ref();
    map.validate()?;
    std::fs::create_dir_all(dir.join("materials"))?;
    std::fs::create_dir_all(dir.join("chunks"))?;
    let manifest = manifest_for(map);
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;

    for m in map.materials.iter() {
        write_rgb(
            &m.texture,
            &dir.join("materials").join(format!("{}.png", m.id)),
        )?;
    }
    for chunk in map.chunks.values() {
        write_chunk_tiles(chunk, &dir.join("chunks").join(chunk_dir_name(chunk.coord)))?;
    }
    write_rgb(&map.global_am, &dir.join("global_am.png"))?;

    let height_path = dir.join("height.png");
    let raw: Vec<u16> = map.height_map.data().iter().map(|&v| to_u16(v)).collect();
    ImageBuffer::<Luma<u16>, _>::from_raw(
        map.height_map.width() as u32,
        map.height_map.height() as u32,
        raw,
    )
    .expect("height buffer length")
    .save_with_format(&height_path, ImageFormat::Png)
    .map_err(image_err(&height_path))?;

    if !map.object_masks.is_empty() {
        std::fs::create_dir_all(dir.join("objects"))?;
    }
    for (name, plane) in &map.object_masks {
        write_gray_plane(plane, &dir.join("objects").join(format!("{name}.png")))?;
    }
    Ok(())
}
