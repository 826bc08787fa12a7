mod support;

use std::collections::BTreeMap;

use smartbrush_core::dataset::{generate_random_mask, pairwise_scores, propose_split, MaskMode};
use smartbrush_core::eval::{evaluate_generator, EvalReport, Metrics};
use smartbrush_core::generators::brushgan::{train_brushgan, BrushGan, BrushGanConfig, GanSchedule};
use smartbrush_core::generators::checkpoint::{load_checkpoint, save_checkpoint};
use smartbrush_core::generators::diffusion::{diffusion_forward, diffusion_reverse_step, oracle_noise, NoiseSchedule};
use smartbrush_core::generators::train::striped_dataset;
use smartbrush_core::generators::{ChunkGenerator, GeneratorModel};
use smartbrush_core::losses::FeatureExtractor;
use smartbrush_core::map::{BrushMask, Coord};
use smartbrush_core::rng::mix;
use smartbrush_core::stitching::{
    find_adjacent_pairs, generate_region, make_transition_mask, stitch_pair, AdjacentPair, StitchConfig,
};
use smartbrush_core::synth::{seam_pair_map, synthetic_map, SyntheticMapSpec, OBJECT_NAMES};
use support::*;

#[test]
fn diffusion_chain_inverts_with_oracle_noise() {
    for steps in [1, 10, 50] {
        let s = NoiseSchedule::linear(steps).unwrap();
        let x0 = random_tensor(&[2, 4, 4], &mut rng(steps as u64)).map(|v| 2.0 * v - 1.0);
        let (mut x, _) = diffusion_forward(&x0, steps, &s, 9).unwrap();
        for t in (1..=steps).rev() {
            let e = oracle_noise(&x, &x0, t, &s);
            x = diffusion_reverse_step(&x, t, &e, &s, mix(11, t as u64)).unwrap();
        }
        let err = x.data().iter().zip(x0.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
        assert!(err < 1e-6, "T={steps}: mse {err}");
    }
}

fn split_corpus() -> Vec<smartbrush_core::map::GameMap> {
    (0..12)
        .map(|i| {
            synthetic_map(&SyntheticMapSpec::new(format!("map{i:02}"), 2, 16, 40 + i).category(["desert", "snow", "temperate"][i as usize % 3]))
        })
        .collect()
}

#[test]
fn split_matches_exhaustive_search() {
    let maps = split_corpus();
    let am = FeatureExtractor::random(3, 1);
    let tiles = FeatureExtractor::random(8, 2);
    let scores = pairwise_scores(&maps, &am, &tiles).unwrap();
    let s: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|c| c.s).collect()).collect();
    let names: Vec<String> = maps.iter().map(|m| m.name.clone()).collect();
    let cats: Vec<String> = maps.iter().map(|m| m.category.clone().unwrap()).collect();
    for k in [1, 2] {
        let a = propose_split(&maps, k, &am, &tiles).unwrap();
        let b = propose_split(&maps, k, &am, &tiles).unwrap();
        assert_eq!(a, b);
        let mut test = a.test.clone();
        test.sort();
        assert_eq!(test, split_oracle(&names, &cats, &s, k), "per_category {k}");
    }
}

#[test]
fn stitch_writes_only_inside_the_transition_mask() {
    let side = 16;
    for seed in 0..10 {
        let map = seam_pair_map(side, seed);
        let pair = AdjacentPair::new(Coord::new(0, 0), Coord::new(1, 0)).unwrap();
        let full = BrushMask::full(side);
        let t = make_transition_mask(pair.direction, side, 8.0, 4.0, &full, &full).unwrap();
        let mut out = map.clone();
        let n = stitch_pair(&mut out, &pair, &full, &full, &GeneratorModel::baseline(), &StitchConfig::default()).unwrap();
        assert_eq!(n, t.mask.count());
        for (coord, right) in [(pair.a, false), (pair.b, true)] {
            let before = map.chunk(coord).unwrap();
            let after = out.chunk(coord).unwrap();
            for (t0, t1) in before.tiles.iter().zip(&after.tiles) {
                for y in 0..side {
                    for x in 0..side {
                        // composite = right half of a, then left half of b
                        let cx = if right { x + side / 2 } else { x.wrapping_sub(side / 2) };
                        if cx >= side || !t.mask.get(cx, y) {
                            assert_eq!(t0.pixels.get(x, y).to_bits(), t1.pixels.get(x, y).to_bits());
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn non_adjacent_chunks_are_generated_independently() {
    let map = synthetic_map(&SyntheticMapSpec::new("far", 3, 16, 2));
    let b = |s| generate_random_mask(MaskMode::Hard, s, 16).unwrap();
    let both: BTreeMap<Coord, BrushMask> = [(Coord::new(0, 0), b(1)), (Coord::new(2, 2), b(2))].into();
    let one: BTreeMap<Coord, BrushMask> = [(Coord::new(0, 0), b(1))].into();
    assert!(find_adjacent_pairs(&both, 4).is_empty());
    let g = GeneratorModel::baseline();
    let cfg = StitchConfig::default();
    let r_both = generate_region(&map, &both, &g, &cfg).unwrap();
    let r_one = generate_region(&map, &one, &g, &cfg).unwrap();
    assert!(r_both.pairs.is_empty());
    assert_eq!(r_both.map.chunks[&Coord::new(0, 0)], r_one.map.chunks[&Coord::new(0, 0)]);
}

#[test]
fn coarse_stage_is_frozen_during_refinement() {
    let config = BrushGanConfig {
        side: 16,
        width: 4,
        attn_dim: 4,
        disc_width: 4,
        ..BrushGanConfig::default()
    };
    let mut model = BrushGan::new(config, 1).unwrap();
    let data = striped_dataset(3, 16, &OBJECT_NAMES, 5);
    let phase1 = GanSchedule {
        coarse_epochs: 2,
        fine_epochs: 0,
        ..GanSchedule::default()
    };
    train_brushgan(&mut model, &data, &phase1).unwrap();
    let coarse = model.params.snapshot("coarse.");
    let fine = model.params.snapshot("fine.");
    let phase2 = GanSchedule {
        coarse_epochs: 0,
        fine_epochs: 2,
        ..GanSchedule::default()
    };
    let h = train_brushgan(&mut model, &data, &phase2).unwrap();
    assert_eq!(h.fine_loss.len(), 2);
    let after = model.params.snapshot("coarse.");
    assert!(coarse.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_ne!(model.params.snapshot("fine."), fine);
}

#[test]
fn checkpoint_file_round_trip_preserves_outputs() {
    let map = synthetic_map(&SyntheticMapSpec::new("ck", 1, 16, 3));
    let model = GeneratorModel::BrushGan(BrushGan::new(BrushGanConfig { side: 16, ..BrushGanConfig::default() }, 8).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gan.sbck");
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let brushed: BTreeMap<Coord, BrushMask> =
        [(Coord::new(0, 0), generate_random_mask(MaskMode::Hard, 4, 16).unwrap())].into();
    let cfg = StitchConfig::default();
    let a = generate_region(&map, &brushed, &model, &cfg).unwrap();
    let b = generate_region(&map, &brushed, &back, &cfg).unwrap();
    assert_eq!(a.map.chunks, b.map.chunks);
    assert_eq!(back.name(), "brushgan");
}

#[test]
fn eval_report_has_three_modes_and_two_metrics() {
    let maps: Vec<_> = (0..2).map(|i| synthetic_map(&SyntheticMapSpec::new(format!("e{i}"), 2, 16, i))).collect();
    let corpus: Vec<_> = maps.iter().flat_map(|m| m.chunks.keys().map(move |c| (m, *c))).collect();
    let mut report = EvalReport::new(Metrics::default());
    evaluate_generator(&mut report, "baseline", &corpus, &GeneratorModel::baseline(), &MaskMode::ALL, Metrics::default(), 0)
        .unwrap();
    for mode in MaskMode::ALL {
        let s = report.get("baseline", mode).unwrap();
        assert_eq!(s.samples, 8);
        assert!(s.fid.unwrap() >= -1e-9);
        assert!(s.ssim.unwrap() <= 1.0);
    }
    let table = report.to_table();
    assert_eq!(table.lines().count(), 2);
}
