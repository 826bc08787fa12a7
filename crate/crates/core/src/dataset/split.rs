use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::convert::{rgb_to_tensor, stack_to_tensor};
use crate::losses::{frechet_distance, FeatureExtractor};
use crate::map::GameMap;

pub const UNCATEGORIZED: &str = "uncategorized";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub fid_global_am: f64,
    pub fid_tiles: f64,
    pub p_material: f64,
    pub s: f64,
}

/// `S = (FID_global_am + FID_tiles + P_material) / 3`.
pub fn split_score(fid_global_am: f64, fid_tiles: f64, p_material: f64) -> SplitScore {
    SplitScore {
        fid_global_am,
        fid_tiles,
        p_material,
        s: (fid_global_am + fid_tiles + p_material) / 3.0,
    }
}

/// Jaccard similarity of the two maps' material id sets.
pub fn material_intersection(a: &GameMap, b: &GameMap) -> Result<f64, DatasetError> {
    let sa: BTreeSet<&str> = a.material_ids().collect();
    let sb: BTreeSet<&str> = b.material_ids().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return Err(DatasetError::EmptyMaterials);
    }
    Ok(sa.intersection(&sb).count() as f64 / union as f64)
}

/// Per-chunk embeddings of one map; each map is a distribution over its chunks.
#[derive(Clone, Debug)]
pub struct MapFeatures {
    pub am: Vec<Vec<f64>>,
    pub tiles: Vec<Vec<f64>>,
}

pub fn chunk_features(
    map: &GameMap,
    am_extractor: &FeatureExtractor,
    tile_extractor: &FeatureExtractor,
) -> Result<MapFeatures, DatasetError> {
    if map.chunks.len() < 2 {
        return Err(DatasetError::TooFewChunks(map.name.clone()));
    }
    let s = map.tile_size;
    let mut am = Vec::with_capacity(map.chunks.len());
    let mut tiles = Vec::with_capacity(map.chunks.len());
    for (coord, chunk) in &map.chunks {
        let crop = map
            .global_am
            .crop(coord.x as usize * s, coord.y as usize * s, s, s);
        am.push(am_extractor.embed(&rgb_to_tensor(&crop)));
        tiles.push(tile_extractor.embed(&stack_to_tensor(&chunk.stack())));
    }
    Ok(MapFeatures { am, tiles })
}

/// Symmetric matrix of split scores between every pair of maps.
pub fn pairwise_scores(
    maps: &[GameMap],
    am_extractor: &FeatureExtractor,
    tile_extractor: &FeatureExtractor,
) -> Result<Vec<Vec<SplitScore>>, DatasetError> {
    let feats = maps
        .iter()
        .map(|m| chunk_features(m, am_extractor, tile_extractor))
        .collect::<Result<Vec<_>, _>>()?;
    let n = maps.len();
    let mut out = vec![vec![split_score(0.0, 0.0, 1.0); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let fa = frechet_distance(&feats[i].am, &feats[j].am)?;
            let ft = frechet_distance(&feats[i].tiles, &feats[j].tiles)?;
            let p = material_intersection(&maps[i], &maps[j])?;
            let sc = split_score(fa, ft, p);
            out[i][j] = sc;
            out[j][i] = sc;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedPair {
    pub category: String,
    pub train: String,
    pub test: String,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub pairs: Vec<SelectedPair>,
    pub names: Vec<String>,
    pub scores: Vec<Vec<SplitScore>>,
}

/// Greedy selection of the `per_category` lowest-S disjoint pairs in each category.
///
/// Pairs are ordered by `(S, name_a, name_b)`. Within a chosen pair the
/// lexicographically larger name goes to test.
pub fn select_split(
    names: &[String],
    categories: &[String],
    scores: &[Vec<SplitScore>],
    per_category: usize,
) -> Result<SplitReport, DatasetError> {
    let mut by_cat: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in categories.iter().enumerate() {
        by_cat.entry(c.as_str()).or_default().push(i);
    }
    let mut test_idx = BTreeSet::new();
    let mut pairs = Vec::new();
    for (cat, members) in &by_cat {
        if members.len() < 2 {
            return Err(DatasetError::TooFewMaps {
                category: cat.to_string(),
                count: members.len(),
            });
        }
        let mut cand = Vec::new();
        for (a_pos, &a) in members.iter().enumerate() {
            for &b in &members[a_pos + 1..] {
                let (lo, hi) = if names[a] <= names[b] { (a, b) } else { (b, a) };
                cand.push((scores[a][b].s, lo, hi));
            }
        }
        cand.sort_by(|x, y| {
            x.0.total_cmp(&y.0)
                .then_with(|| names[x.1].cmp(&names[y.1]))
                .then_with(|| names[x.2].cmp(&names[y.2]))
        });
        let mut used = BTreeSet::new();
        let mut taken = 0;
        for (s, lo, hi) in cand {
            if taken == per_category {
                break;
            }
            if used.contains(&lo) || used.contains(&hi) {
                continue;
            }
            used.insert(lo);
            used.insert(hi);
            test_idx.insert(hi);
            pairs.push(SelectedPair {
                category: cat.to_string(),
                train: names[lo].clone(),
                test: names[hi].clone(),
                s,
            });
            taken += 1;
        }
        if taken < per_category {
            return Err(DatasetError::NotEnoughPairs {
                category: cat.to_string(),
                available: taken,
                requested: per_category,
            });
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, n) in names.iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(n.clone());
        } else {
            train.push(n.clone());
        }
    }
    Ok(SplitReport {
        train,
        test,
        pairs,
        names: names.to_vec(),
        scores: scores.to_vec(),
    })
}

/// Scores every map pair and selects the split. Maps without a category share [`UNCATEGORIZED`].
pub fn propose_split(
    maps: &[GameMap],
    per_category: usize,
    am_extractor: &FeatureExtractor,
    tile_extractor: &FeatureExtractor,
) -> Result<SplitReport, DatasetError> {
    let names: Vec<String> = maps.iter().map(|m| m.name.clone()).collect();
    let cats: Vec<String> = maps
        .iter()
        .map(|m| {
            m.category
                .clone()
                .unwrap_or_else(|| UNCATEGORIZED.to_string())
        })
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &cats {
        *counts.entry(c).or_default() += 1;
    }
    if let Some((c, &n)) = counts.iter().find(|(_, &n)| n < 2) {
        return Err(DatasetError::TooFewMaps {
            category: c.to_string(),
            count: n,
        });
    }
    let scores = pairwise_scores(maps, am_extractor, tile_extractor)?;
    select_split(&names, &cats, &scores, per_category)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> Vec<Vec<SplitScore>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| split_score(f(i.min(j), i.max(j)), 0.0, 0.0))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn score_arithmetic() {
        assert_eq!(split_score(0.0, 0.0, 0.0).s, 0.0);
        assert!((split_score(3.0, 6.0, 0.6).s - 3.2).abs() < 1e-12);
        assert!((split_score(1.47, 10.04, 0.5).s - 12.01 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lowest_pair_is_split() {
        let names: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let cats = vec!["x".to_string(); 4];
        let s = matrix(4, |i, j| match (i, j) {
            (0, 1) => 1.0,
            (0, 2) => 5.0,
            _ => 3.0 + (i + j) as f64,
        });
        let r = select_split(&names, &cats, &s, 1).unwrap();
        assert_eq!(r.test, vec!["B".to_string()]);
        assert_eq!(
            r.train,
            vec!["A".to_string(), "C".to_string(), "D".to_string()]
        );
    }

    #[test]
    fn singleton_category_rejected() {
        let names = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let cats = vec!["x".to_string(), "x".to_string(), "y".to_string()];
        let s = matrix(3, |_, _| 1.0);
        assert!(matches!(
            select_split(&names, &cats, &s, 1),
            Err(DatasetError::TooFewMaps { .. })
        ));
    }
}
