mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;
use smartbrush_core::coherence::{context_for_chunk, rank_materials, template_match};
use smartbrush_core::dataset::{classify_mask_mode, generate_random_mask, material_intersection, propose_split, MaskMode};
use smartbrush_core::generators::brushgan::{BrushGan, BrushGanConfig};
use smartbrush_core::generators::cldm::{BrushCldm, CldmConfig};
use smartbrush_core::generators::diffusion::NoiseSchedule;
use smartbrush_core::generators::{ChunkGenerator, GeneratorModel, MaskedChunkInput};
use smartbrush_core::losses::{
    focal_frequency_loss, frechet_distance, gram_matrix, mse, perceptual_loss, ssim_with, style_loss, FeatureExtractor, SsimConfig,
};
use smartbrush_core::map::{
    apply_brush, blend_chunk, load_map_bundle, save_map_bundle, BrushMask, Chunk, Coord, Material, MaterialSet,
    Plane, RgbImage, TileMask,
};
use smartbrush_core::nn::Tensor;
use smartbrush_core::stitching::{find_adjacent_pairs, gaussian_material_smoothing, generate_region, Side, StitchConfig};
use smartbrush_core::synth::{synthetic_map, SyntheticMapSpec};
use support::*;

fn tensor(shape: &'static [usize]) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(0.0f64..1.0, n).prop_map(move |v| Tensor::from_vec(shape, v))
}

fn brush(side: usize) -> impl Strategy<Value = BrushMask> {
    prop::collection::vec(any::<bool>(), side * side).prop_map(move |v| BrushMask::from_vec(side, v).unwrap())
}

fn single_material_chunk(weight: f64, side: usize) -> (Chunk, MaterialSet) {
    let ids: Vec<String> = (0..8).map(|k| format!("m{k}")).collect();
    let mats = MaterialSet::from_materials(ids.iter().enumerate().map(|(k, id)| {
        Material::new(id.clone(), RgbImage::from_fn(side, side, |x, y| [(x + k) as f64 / 20.0, y as f64 / 20.0, 0.5]))
    }))
    .unwrap();
    let tiles = ids
        .iter()
        .enumerate()
        .map(|(k, id)| TileMask::new(id.clone(), Plane::filled(side, side, if k == 0 { weight } else { 0.0 })))
        .collect();
    (Chunk::new(Coord::new(0, 0), tiles).unwrap(), mats)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blend_is_linear_in_single_material_weight(alpha in 0.0f64..=1.0) {
        let (full, mats) = single_material_chunk(1.0, 6);
        let (scaled, _) = single_material_chunk(alpha, 6);
        let a = blend_chunk(&full, &mats).unwrap();
        let b = blend_chunk(&scaled, &mats).unwrap();
        for (p, q) in a.pixels().iter().zip(b.pixels()) {
            for c in 0..3 {
                prop_assert!((alpha * p[c] - q[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blend_stays_in_convex_hull(raw in prop::collection::vec(0.01f64..1.0, 8 * 16), seed in any::<u64>()) {
        let side = 4;
        let mut r = rng(seed);
        let mats = MaterialSet::from_materials((0..8).map(|k| {
            Material::new(format!("m{k}"), RgbImage::from_vec(side, side, (0..side * side).map(|_| {
                use rand::Rng as _;
                [r.random(), r.random(), r.random()]
            }).collect()).unwrap())
        })).unwrap();
        let tiles = (0..8).map(|k| {
            let v = (0..16).map(|i| {
                let total: f64 = (0..8).map(|j| raw[j * 16 + i]).sum();
                raw[k * 16 + i] / total
            }).collect();
            TileMask::new(format!("m{k}"), Plane::from_vec(side, side, v).unwrap())
        }).collect();
        let chunk = Chunk::new(Coord::new(0, 0), tiles).unwrap();
        let out = blend_chunk(&chunk, &mats).unwrap();
        for y in 0..side {
            for x in 0..side {
                for c in 0..3 {
                    let vals: Vec<f64> = mats.iter().map(|m| m.texture.get(x, y)[c]).collect();
                    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let v = out.get(x, y)[c];
                    prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn apply_brush_is_idempotent(seed in any::<u64>(), b in brush(8)) {
        let map = synthetic_map(&SyntheticMapSpec::new("p", 1, 8, seed % 1000));
        let c = map.chunk(Coord::new(0, 0)).unwrap();
        let once = apply_brush(c, &b).unwrap();
        prop_assert_eq!(apply_brush(&once, &b).unwrap(), once);
    }

    #[test]
    fn losses_nonnegative_and_vanish_on_identity(a in tensor(&[3, 8, 8]), b in tensor(&[3, 8, 8])) {
        let ex = FeatureExtractor::random(3, 1);
        for (l, z) in [
            (mse(&a, &b).unwrap(), mse(&a, &a).unwrap()),
            (focal_frequency_loss(&a, &b, 1.0).unwrap(), focal_frequency_loss(&a, &a, 1.0).unwrap()),
            (style_loss(&a, &b, &ex).unwrap(), style_loss(&a, &a, &ex).unwrap()),
            (perceptual_loss(&a, &b, &ex).unwrap(), perceptual_loss(&a, &a, &ex).unwrap()),
        ] {
            prop_assert!(l >= 0.0);
            prop_assert_eq!(z, 0.0);
        }
        let s = ssim_with(&a, &b, &SsimConfig::default().with_window(7)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn gram_is_psd(f in tensor(&[4, 3, 3])) {
        let g = gram_matrix(&f);
        let m = nalgebra::DMatrix::from_row_slice(4, 4, g.data());
        for e in m.symmetric_eigenvalues().iter() {
            prop_assert!(*e >= -1e-9);
        }
    }

    #[test]
    fn frechet_is_symmetric(a in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 12),
                            b in prop::collection::vec(prop::collection::vec(0.0f64..2.0, 3), 12)) {
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-8 * ab.abs().max(1.0));
    }

    #[test]
    fn template_match_ignores_offset_and_scale(seed in 0u64..500, offset in -0.5f64..0.5, scale in 0.1f64..5.0) {
        use rand::Rng as _;
        let mut r = rng(seed);
        let tex = RgbImage::from_vec(4, 4, (0..16).map(|_| [r.random(), r.random(), r.random()]).collect()).unwrap();
        let region = RgbImage::from_vec(9, 9, (0..81).map(|_| [r.random(), r.random(), r.random()]).collect()).unwrap();
        let base = template_match(&tex, &region).unwrap();
        let remap = |img: &RgbImage, f: &dyn Fn(f64) -> f64| {
            let mut out = img.clone();
            out.pixels_mut().iter_mut().for_each(|p| *p = p.map(f));
            out
        };
        let shifted = template_match(&remap(&tex, &|v| v + offset), &remap(&region, &|v| v + offset)).unwrap();
        let scaled = template_match(&remap(&tex, &|v| v * scale), &region).unwrap();
        for ((a, b), c) in base.data().iter().zip(shifted.data()).zip(scaled.data()) {
            prop_assert!((a - b).abs() < 1e-9 && (a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn adjacency_symmetric_and_irreflexive(coords in prop::collection::btree_set((0u32..5, 0u32..5), 1..12)) {
        let coords: Vec<Coord> = coords.into_iter().map(|(x, y)| Coord::new(x, y)).collect();
        let pairs = find_adjacent_pairs(&full_brushes(&coords, 8), 4);
        for p in &pairs {
            prop_assert!(p.a != p.b);
            prop_assert!(p.a < p.b);
            let dx = p.a.x.abs_diff(p.b.x);
            let dy = p.a.y.abs_diff(p.b.y);
            prop_assert_eq!(dx + dy, 1);
        }
        let mut rev = coords.clone();
        rev.reverse();
        let again: BTreeMap<Coord, BrushMask> = rev.iter().map(|c| (*c, BrushMask::full(8))).collect();
        prop_assert_eq!(find_adjacent_pairs(&again, 4), pairs);
    }
}

#[test]
fn random_masks_hit_their_mode_over_1000_seeds() {
    for mode in [MaskMode::Medium, MaskMode::Hard] {
        for seed in 0..1000 {
            let m = generate_random_mask(mode, seed, 32).unwrap();
            assert_eq!(classify_mask_mode(&m), mode, "{mode:?} seed {seed}");
            let cov = m.coverage();
            match mode {
                MaskMode::Medium => assert!(cov > 0.0 && cov < 0.3),
                _ => assert!((0.3..1.0).contains(&cov)),
            }
        }
    }
    assert_eq!(generate_random_mask(MaskMode::Complete, 3, 32).unwrap().coverage(), 1.0);
}

#[test]
fn material_intersection_symmetric_and_unit_on_equal_sets() {
    let maps: Vec<_> = (0..6).map(|i| synthetic_map(&SyntheticMapSpec::new(format!("m{i}"), 1, 8, i))).collect();
    for a in &maps {
        assert_eq!(material_intersection(a, a).unwrap(), 1.0);
        for b in &maps {
            let ab = material_intersection(a, b).unwrap();
            assert_eq!(ab, material_intersection(b, a).unwrap());
            let same = a.material_ids().collect::<Vec<_>>() == b.material_ids().collect::<Vec<_>>();
            assert_eq!(ab == 1.0, same);
        }
    }
}

#[test]
fn split_partitions_input() {
    let maps: Vec<_> = (0..8)
        .map(|i| synthetic_map(&SyntheticMapSpec::new(format!("map{i}"), 2, 8, i).category(["a", "b"][i as usize % 2])))
        .collect();
    let ex = FeatureExtractor::random(3, 1);
    let tx = FeatureExtractor::random(8, 2);
    let r = propose_split(&maps, 2, &ex, &tx).unwrap();
    let mut all: Vec<String> = r.train.iter().chain(&r.test).cloned().collect();
    all.sort();
    let mut names: Vec<String> = maps.iter().map(|m| m.name.clone()).collect();
    names.sort();
    assert_eq!(all, names);
    assert!(r.train.iter().all(|t| !r.test.contains(t)));
    assert_eq!(r.test.len(), 4);
}

#[test]
fn bundle_round_trip_is_lossless_for_8bit_weights() {
    let mut map = synthetic_map(&SyntheticMapSpec::new("rt", 2, 16, 5));
    for c in map.chunks.values_mut() {
        for t in &mut c.tiles {
            for v in t.pixels.data_mut() {
                *v = (*v * 255.0).round() / 255.0;
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    save_map_bundle(&map, dir.path()).unwrap();
    let back = load_map_bundle(dir.path()).unwrap();
    assert_eq!(back.chunks, map.chunks);
    let again = tempfile::tempdir().unwrap();
    save_map_bundle(&back, again.path()).unwrap();
    assert_eq!(load_map_bundle(again.path()).unwrap().chunks, back.chunks);
}

#[test]
fn schedules_are_monotone() {
    for t in [1, 2, 10, 50, 1000] {
        let s = NoiseSchedule::linear(t).unwrap();
        for i in 1..=t {
            assert!(s.beta(i) > 0.0 && s.beta(i) < 1.0);
            if i > 1 {
                assert!(s.beta(i) >= s.beta(i - 1));
            }
            assert!(s.alpha_bar(i) < s.alpha_bar(i - 1));
        }
    }
}

#[test]
fn single_material_render_ranks_its_material_first() {
    use rand::Rng as _;
    for seed in 0..20 {
        let mut r = rng(900 + seed);
        let side = 32;
        let ids: Vec<String> = (0..8).map(|k| format!("m{k}")).collect();
        let mats = MaterialSet::from_materials(ids.iter().map(|id| {
            let px = (0..side * side).map(|_| [r.random(), r.random(), r.random()]).collect();
            Material::new(id.clone(), RgbImage::from_vec(side, side, px).unwrap())
        }))
        .unwrap();
        let k = r.random_range(0..8);
        let tiles = ids
            .iter()
            .enumerate()
            .map(|(j, id)| TileMask::new(id.clone(), Plane::filled(side, side, if j == k { 1.0 } else { 0.0 })))
            .collect();
        let chunk = Chunk::new(Coord::new(0, 0), tiles).unwrap();
        let render = blend_chunk(&chunk, &mats).unwrap();
        let ranking = rank_materials(&chunk, &mats, &render).unwrap();
        assert_eq!(ranking.dominant(), Some(ids[k].as_str()), "seed {seed}");
        assert_eq!(ranking.entries.len(), 8);
    }
}

fn generators() -> Vec<GeneratorModel> {
    let cldm = CldmConfig {
        side: 16,
        steps: 5,
        ..CldmConfig::default()
    };
    vec![
        GeneratorModel::baseline(),
        GeneratorModel::BrushGan(BrushGan::new(BrushGanConfig::default(), 3).unwrap()),
        GeneratorModel::BrushCldm(BrushCldm::new(cldm, 4).unwrap()),
    ]
}

#[test]
fn generators_composite_and_are_deterministic() {
    let map = synthetic_map(&SyntheticMapSpec::new("comp", 2, 16, 9));
    for g in generators() {
        for (i, coord) in map.chunks.keys().enumerate() {
            let chunk = map.chunk(*coord).unwrap();
            let mode = MaskMode::ALL[i % 3];
            let b = generate_random_mask(mode, i as u64, 16).unwrap();
            let ctx = context_for_chunk(&map, *coord).unwrap();
            let input = MaskedChunkInput::new(&chunk.stack(), &b, ctx).unwrap();
            let out = g.generate(&input, 17).unwrap();
            let stack = chunk.stack();
            for k in 0..8 {
                for (j, &m) in b.data().iter().enumerate() {
                    if !m {
                        assert_eq!(out.channel_slice(k)[j].to_bits(), stack.channel_slice(k)[j].to_bits());
                    }
                }
            }
            assert_eq!(g.generate(&input, 17).unwrap(), out, "{}", g.name());
        }
    }
}

#[test]
fn smoothing_touches_only_the_band_of_listed_materials() {
    use rand::Rng as _;
    let mut r = rng(77);
    for trial in 0..50 {
        let map = synthetic_map(&SyntheticMapSpec::new("s", 1, 16, trial));
        let chunk = map.chunk(Coord::new(0, 0)).unwrap();
        let ids: Vec<String> = chunk.material_ids().map(String::from).collect();
        let k = r.random_range(0..8);
        let side = [Side::Left, Side::Right, Side::Top, Side::Bottom][trial as usize % 4];
        let band = r.random_range(1..=8);
        let out = gaussian_material_smoothing(chunk, &ids[k..=k], side, band as f64 / 3.0, band).unwrap();
        for (j, (t0, t1)) in chunk.tiles.iter().zip(&out.tiles).enumerate() {
            for y in 0..16 {
                for x in 0..16 {
                    let d = side.depth(x, y, 16);
                    let (a, b) = (t0.pixels.get(x, y), t1.pixels.get(x, y));
                    if j != k || d >= band {
                        assert_eq!(a.to_bits(), b.to_bits());
                    } else if d == 0 {
                        assert_eq!(b, 0.0);
                    } else {
                        assert!(b <= a);
                    }
                }
            }
        }
    }
}

#[test]
fn generate_region_is_deterministic() {
    let map = synthetic_map(&SyntheticMapSpec::new("det", 2, 16, 21));
    let brushed: BTreeMap<Coord, BrushMask> = map
        .chunks
        .keys()
        .enumerate()
        .map(|(i, c)| (*c, generate_random_mask(MaskMode::Hard, i as u64, 16).unwrap()))
        .collect();
    let g = GeneratorModel::baseline();
    let cfg = StitchConfig::default();
    let a = generate_region(&map, &brushed, &g, &cfg).unwrap();
    let b = generate_region(&map, &brushed, &g, &cfg).unwrap();
    assert_eq!(a.map.chunks, b.map.chunks);
    assert_eq!(a.pairs, b.pairs);
}
