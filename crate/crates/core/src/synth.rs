//! Procedural fixture maps. Used by tests, the CLI `synth` command, and the demo.

use std::collections::BTreeMap;

use rand::Rng as _;

use crate::map::{
    blend_region, Chunk, Coord, GameMap, Material, MaterialSet, Plane, RgbImage, TileMask,
    TileStack, TILES_PER_CHUNK,
};
use crate::rng::{mix, seeded};

pub const MATERIAL_POOL: [&str; 12] = [
    "grass", "soil", "stone", "sand", "snow", "mud", "gravel", "moss", "rock", "asphalt", "clay",
    "leaves",
];

pub const OBJECT_NAMES: [&str; 4] = ["buildings", "roads", "trees", "water"];

#[derive(Clone, Debug)]
pub struct SyntheticMapSpec {
    pub name: String,
    pub category: Option<String>,
    pub grid_width: u32,
    pub grid_height: u32,
    pub tile_size: usize,
    /// How many pool materials the map draws from (8..=12).
    pub palette: usize,
    pub seed: u64,
}

impl SyntheticMapSpec {
    pub fn new(name: impl Into<String>, grid: u32, tile_size: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            category: None,
            grid_width: grid,
            grid_height: grid,
            tile_size,
            palette: 10,
            seed,
        }
    }

    pub fn category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }
}

/// Low-amplitude, low-frequency texture around a base color.
pub fn material_texture(id: &str, side: usize, seed: u64) -> RgbImage {
    let salt = id
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    let mut rng = seeded(mix(seed, salt));
    let base = [
        rng.random_range(0.15..0.85),
        rng.random_range(0.15..0.85),
        rng.random_range(0.15..0.85),
    ];
    let fx = rng.random_range(1.0..3.0) * std::f64::consts::TAU / side as f64;
    let fy = rng.random_range(1.0..3.0) * std::f64::consts::TAU / side as f64;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    RgbImage::from_fn(side, side, |x, y| {
        let v = 0.05 * ((x as f64 * fx + phase).sin() + (y as f64 * fy).cos()) * 0.5;
        base.map(|b| (b + v).clamp(0.0, 1.0))
    })
}

/// A smooth scalar field over map pixels, built from a few random sinusoids.
struct Field {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Field {
    fn new(rng: &mut crate::rng::Rng, scale: f64) -> Self {
        let waves = (0..3)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let freq = rng.random_range(0.5..1.5) * std::f64::consts::TAU / scale;
                (
                    angle.cos() * freq,
                    angle.sin() * freq,
                    rng.random_range(0.0..std::f64::consts::TAU),
                    rng.random_range(0.5..1.0),
                )
            })
            .collect();
        Self { waves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(kx, ky, p, a)| a * (kx * x + ky * y + p).sin())
            .sum()
    }
}

pub fn synthetic_map(spec: &SyntheticMapSpec) -> GameMap {
    let side = spec.tile_size;
    let mut rng = seeded(spec.seed);
    let palette_size = spec.palette.clamp(TILES_PER_CHUNK, MATERIAL_POOL.len());

    let mut pool: Vec<&str> = MATERIAL_POOL.to_vec();
    for i in (1..pool.len()).rev() {
        pool.swap(i, rng.random_range(0..=i));
    }
    let mut palette: Vec<&str> = pool[..palette_size].to_vec();
    palette.sort_unstable();

    let materials = MaterialSet::from_materials(
        palette
            .iter()
            .map(|id| Material::new(*id, material_texture(id, side, spec.seed))),
    )
    .expect("pool ids are unique");

    let scale = 2.0 * side as f64;
    let fields: BTreeMap<&str, Field> = palette
        .iter()
        .map(|id| (*id, Field::new(&mut rng, scale)))
        .collect();

    let mut chunks = BTreeMap::new();
    for cy in 0..spec.grid_height {
        for cx in 0..spec.grid_width {
            let coord = Coord::new(cx, cy);
            let mut ids = palette.clone();
            for i in (1..ids.len()).rev() {
                ids.swap(i, rng.random_range(0..=i));
            }
            ids.truncate(TILES_PER_CHUNK);
            ids.sort_unstable();
            let raw: Vec<Plane> = ids
                .iter()
                .map(|id| {
                    let f = &fields[id];
                    Plane::from_fn(side, side, |x, y| {
                        let gx = (cx as usize * side + x) as f64;
                        let gy = (cy as usize * side + y) as f64;
                        (2.5 * f.at(gx, gy)).exp()
                    })
                })
                .collect();
            let tiles = normalized_tiles(&ids, &raw);
            chunks.insert(coord, Chunk::new(coord, tiles).expect("eight square tiles"));
        }
    }

    finish_map(spec, materials, chunks, &mut rng)
}

fn normalized_tiles(ids: &[&str], raw: &[Plane]) -> Vec<TileMask> {
    let side = raw[0].width();
    let mut planes: Vec<Plane> = raw.to_vec();
    for i in 0..side * side {
        let sum: f64 = raw.iter().map(|p| p.data()[i]).sum();
        for p in planes.iter_mut() {
            p.data_mut()[i] /= sum;
        }
    }
    // Snap to the 8-bit grid so bundle round-trips are exact.
    ids.iter()
        .zip(planes)
        .map(|(id, p)| TileMask::new(*id, p.map(|v| (v * 255.0).round() / 255.0)))
        .collect()
}

fn finish_map(
    spec: &SyntheticMapSpec,
    materials: MaterialSet,
    chunks: BTreeMap<Coord, Chunk>,
    rng: &mut crate::rng::Rng,
) -> GameMap {
    let side = spec.tile_size;
    let w = spec.grid_width as usize * side;
    let h = spec.grid_height as usize * side;
    let height_field = Field::new(rng, 3.0 * side as f64);
    let tree_field = Field::new(rng, side as f64);
    let road_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let snap = |v: f64| (v * 255.0).round() / 255.0;
    let height_map = Plane::from_fn(w, h, |x, y| {
        (0.5 + 0.2 * height_field.at(x as f64, y as f64)).clamp(0.0, 1.0)
    });
    let mut object_masks = BTreeMap::new();
    object_masks.insert(
        "water".to_owned(),
        height_map.map(|v| if v < 0.3 { 1.0 } else { 0.0 }),
    );
    object_masks.insert(
        "trees".to_owned(),
        Plane::from_fn(w, h, |x, y| {
            if tree_field.at(x as f64, y as f64) > 1.2 {
                1.0
            } else {
                0.0
            }
        }),
    );
    object_masks.insert(
        "roads".to_owned(),
        Plane::from_fn(w, h, |x, y| {
            let center = h as f64 / 2.0
                + 0.25
                    * h as f64
                    * (x as f64 / w as f64 * std::f64::consts::TAU + road_phase).sin();
            if (y as f64 - center).abs() < (side as f64 / 16.0).max(1.0) {
                1.0
            } else {
                0.0
            }
        }),
    );
    let cell = (side / 4).max(2);
    let building_seed = rng.random::<u64>();
    object_masks.insert(
        "buildings".to_owned(),
        Plane::from_fn(w, h, |x, y| {
            let cell_id = ((y / cell) * (w / cell + 1) + x / cell) as u64;
            let lit = mix(building_seed, cell_id).is_multiple_of(11);
            let inset = x % cell > 0 && y % cell > 0;
            if lit && inset {
                1.0
            } else {
                0.0
            }
        }),
    );

    let mut map = GameMap {
        name: spec.name.clone(),
        category: spec.category.clone(),
        grid_width: spec.grid_width,
        grid_height: spec.grid_height,
        tile_size: side,
        chunks,
        materials,
        global_am: RgbImage::filled(w, h, [0.0; 3]),
        height_map: height_map.map(|v| (v * 65535.0).round() / 65535.0),
        object_masks,
    };
    let render = blend_region(
        &map,
        Coord::new(0, 0),
        Coord::new(spec.grid_width - 1, spec.grid_height - 1),
    )
    .expect("synthetic map is consistent");
    map.global_am = RgbImage::from_fn(w, h, |x, y| render.get(x, y).map(snap));
    map
}

/// Two horizontally adjacent chunks sharing seven materials, each dominated by a
/// different shared material. Fixture for seam tests.
pub fn seam_pair_map(side: usize, seed: u64) -> GameMap {
    let mut rng = seeded(seed);
    let mut pool: Vec<&str> = MATERIAL_POOL[..9].to_vec();
    for i in (1..pool.len()).rev() {
        pool.swap(i, rng.random_range(0..=i));
    }
    let shared: Vec<&str> = pool[..7].to_vec();
    let only_a = pool[7];
    let only_b = pool[8];
    let dom_a = shared[0];
    let dom_b = shared[1];

    let mut ids: Vec<&str> = pool.clone();
    ids.sort_unstable();
    let materials = MaterialSet::from_materials(ids.iter().enumerate().map(|(k, id)| {
        // Spread the base colors so the two dominants contrast.
        let hue = k as f64 / ids.len() as f64;
        let base = [
            0.5 + 0.35 * (hue * std::f64::consts::TAU).cos(),
            0.5 + 0.35 * (hue * std::f64::consts::TAU + 2.1).cos(),
            0.5 + 0.35 * (hue * std::f64::consts::TAU + 4.2).cos(),
        ];
        let tex = material_texture(id, side, seed);
        let mean = mean_color(&tex);
        Material::new(
            *id,
            RgbImage::from_fn(side, side, |x, y| {
                let p = tex.get(x, y);
                [0, 1, 2].map(|c| (base[c] + 0.5 * (p[c] - mean[c])).clamp(0.0, 1.0))
            }),
        )
    }))
    .expect("distinct ids");

    let make = |coord: Coord, dom: &str, exclusive: &str, rng: &mut crate::rng::Rng| {
        let mut chunk_ids: Vec<&str> = shared.clone();
        chunk_ids.push(exclusive);
        chunk_ids.sort_unstable();
        let field = Field::new(rng, side as f64);
        let raw: Vec<Plane> = chunk_ids
            .iter()
            .enumerate()
            .map(|(k, id)| {
                Plane::from_fn(side, side, |x, y| {
                    if *id == dom {
                        4.0
                    } else {
                        0.1 + 0.05 * (1.0 + field.at(x as f64 + 7.0 * k as f64, y as f64))
                    }
                })
            })
            .collect();
        Chunk::new(coord, normalized_tiles(&chunk_ids, &raw)).expect("eight tiles")
    };
    let mut chunks = BTreeMap::new();
    let a = make(Coord::new(0, 0), dom_a, only_a, &mut rng);
    let b = make(Coord::new(1, 0), dom_b, only_b, &mut rng);
    chunks.insert(a.coord, a);
    chunks.insert(b.coord, b);

    let spec = SyntheticMapSpec {
        name: format!("seam-{seed}"),
        category: None,
        grid_width: 2,
        grid_height: 1,
        tile_size: side,
        palette: 9,
        seed,
    };
    finish_map(&spec, materials, chunks, &mut rng)
}

fn mean_color(img: &RgbImage) -> [f64; 3] {
    let n = img.pixels().len() as f64;
    let mut acc = [0.0; 3];
    for p in img.pixels() {
        for c in 0..3 {
            acc[c] += p[c];
        }
    }
    acc.map(|v| v / n)
}

/// Eight-channel diagonal stripe stack; channel `k` is phase-shifted by `k`.
pub fn striped_stack(side: usize, period: usize, phase: usize) -> TileStack {
    let mut stack = TileStack::zeros(side);
    for k in 0..TILES_PER_CHUNK {
        for y in 0..side {
            for x in 0..side {
                let t = ((x + y + phase + k) % period) as f64 / period as f64;
                stack.set(k, x, y, 0.5 + 0.5 * (t * std::f64::consts::TAU).sin());
            }
        }
    }
    stack
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_map_is_valid_and_deterministic() {
        let spec = SyntheticMapSpec::new("t", 2, 16, 5);
        let a = synthetic_map(&spec);
        a.validate().unwrap();
        assert_eq!(a.chunks.len(), 4);
        assert_eq!(a, synthetic_map(&spec));
        let chunk = a.chunks.values().next().unwrap();
        let sum: f64 = chunk.tiles.iter().map(|t| t.pixels.get(3, 3)).sum();
        assert!((sum - 1.0).abs() < 8.0 / 255.0);
    }

    #[test]
    fn seam_pair_dominants_differ() {
        let map = seam_pair_map(16, 3);
        map.validate().unwrap();
        let a = &map.chunks[&Coord::new(0, 0)];
        let b = &map.chunks[&Coord::new(1, 0)];
        let da = &a.tiles[a.dominant_by_weight()].material_id;
        let db = &b.tiles[b.dominant_by_weight()].material_id;
        assert_ne!(da, db);
        assert!(b.material_ids().any(|id| id == da));
    }
}
