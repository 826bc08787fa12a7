//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use smartbrush_core::losses::FeatureExtractor;
use smartbrush_core::map::{BrushMask, Chunk, Coord, MaterialSet, RgbImage};
use smartbrush_core::nn::Tensor;
use smartbrush_core::rng::{seeded, Rng};

pub fn rng(seed: u64) -> Rng {
    seeded(seed)
}

/// Per-pixel `Σ T_i·M_i`, clamped, with no vectorization.
pub fn blend_oracle(chunk: &Chunk, materials: &MaterialSet) -> RgbImage {
    let s = chunk.side();
    RgbImage::from_fn(s, s, |x, y| {
        let mut px = [0.0; 3];
        for t in &chunk.tiles {
            let tex = &materials.get(&t.material_id).unwrap().texture;
            for c in 0..3 {
                px[c] += t.pixels.get(x, y) * tex.get(x, y)[c];
            }
        }
        px.map(|v: f64| v.clamp(0.0, 1.0))
    })
}

/// Unitary 2-D DFT by the defining double sum; returns `(re, im)` pairs.
pub fn naive_dft(plane: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let a = -2.0 * std::f64::consts::PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    re += plane[y * w + x] * a.cos();
                    im += plane[y * w + x] * a.sin();
                }
            }
            out.push((re * norm, im * norm));
        }
    }
    out
}

/// Spectrum weights per channel: `|ΔF|^α / max |ΔF|^α`.
pub fn ffl_weights(gt: &Tensor, gen: &Tensor, alpha: f64) -> Vec<Vec<f64>> {
    let (c, h, w) = gt.chw();
    (0..c)
        .map(|ch| {
            let r = ch * h * w..(ch + 1) * h * w;
            let fg = naive_dft(&gt.data()[r.clone()], h, w);
            let fp = naive_dft(&gen.data()[r], h, w);
            let mut wt: Vec<f64> = fg
                .iter()
                .zip(&fp)
                .map(|(a, b)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt().powf(alpha))
                .collect();
            let m = wt.iter().copied().fold(0.0, f64::max);
            if m > 0.0 {
                wt.iter_mut().for_each(|v| *v /= m);
            }
            wt
        })
        .collect()
}

/// Focal frequency loss with given per-channel weights.
pub fn ffl_with_weights(gt: &Tensor, gen: &Tensor, weights: &[Vec<f64>]) -> f64 {
    let (c, h, w) = gt.chw();
    let mut total = 0.0;
    for (ch, wt) in weights.iter().enumerate().take(c) {
        let r = ch * h * w..(ch + 1) * h * w;
        let fg = naive_dft(&gt.data()[r.clone()], h, w);
        let fp = naive_dft(&gen.data()[r], h, w);
        let s: f64 = fg
            .iter()
            .zip(&fp)
            .zip(wt)
            .map(|((a, b), wv)| wv * ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)))
            .sum();
        total += s / (h * w) as f64;
    }
    total / c as f64
}

pub fn ffl_oracle(gt: &Tensor, gen: &Tensor, alpha: f64) -> f64 {
    ffl_with_weights(gt, gen, &ffl_weights(gt, gen, alpha))
}

pub fn gram_oracle(f: &Tensor) -> Vec<Vec<f64>> {
    let (c, h, w) = f.chw();
    let mut g = vec![vec![0.0; c]; c];
    for i in 0..c {
        for j in 0..c {
            for y in 0..h {
                for x in 0..w {
                    g[i][j] += f.at3(i, y, x) * f.at3(j, y, x);
                }
            }
        }
    }
    g
}

/// Direct convolution followed by leaky ReLU(0.2), the extractor's layer form.
pub fn conv_leaky_oracle(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (ci, h, wd) = x.chw();
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[co, oh, ow]);
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b.data()[o];
                for c in 0..ci {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            acc += x.at3(c, iy as usize, ix as usize) * w.data()[((o * ci + c) * k + ky) * k + kx];
                        }
                    }
                }
                out.data_mut()[(o * oh + oy) * ow + ox] = if acc > 0.0 { acc } else { 0.2 * acc };
            }
        }
    }
    out
}

pub fn features_oracle(x: &Tensor, ex: &FeatureExtractor) -> Vec<Tensor> {
    if ex.layers.is_empty() {
        return vec![x.clone()];
    }
    let mut out = Vec::new();
    let mut cur = x.clone();
    for l in &ex.layers {
        cur = conv_leaky_oracle(&cur, &l.weight, &l.bias, l.stride, l.pad);
        out.push(cur.clone());
    }
    out
}

pub fn style_oracle(gen: &Tensor, gt: &Tensor, ex: &FeatureExtractor) -> f64 {
    let fa = features_oracle(gen, ex);
    let fb = features_oracle(gt, ex);
    let wl: Vec<f64> = if ex.layers.is_empty() { vec![1.0] } else { ex.layers.iter().map(|l| l.style_weight).collect() };
    let mut total = 0.0;
    for ((a, b), w) in fa.iter().zip(&fb).zip(wl) {
        let (c, h, wd) = a.chw();
        let ga = gram_oracle(a);
        let gb = gram_oracle(b);
        let mut sq = 0.0;
        for i in 0..c {
            for j in 0..c {
                sq += (ga[i][j] - gb[i][j]).powi(2);
            }
        }
        let (c, h, wd) = (c as f64, h as f64, wd as f64);
        total += w * sq / (4.0 * c * c * h * h * wd * wd);
    }
    total
}

pub fn perceptual_oracle(gen: &Tensor, gt: &Tensor, ex: &FeatureExtractor) -> f64 {
    features_oracle(gen, ex)
        .iter()
        .zip(&features_oracle(gt, ex))
        .map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
        .sum()
}

/// SSIM with a full 2-D Gaussian window evaluated at every valid position.
pub fn ssim_oracle(a: &Tensor, b: &Tensor, window: usize, sigma: f64) -> f64 {
    let (c, h, w) = a.chw();
    let center = (window as f64 - 1.0) / 2.0;
    let mut k = vec![0.0; window * window];
    for y in 0..window {
        for x in 0..window {
            k[y * window + x] = (-((x as f64 - center).powi(2) + (y as f64 - center).powi(2)) / (2.0 * sigma * sigma)).exp();
        }
    }
    let ks: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= ks);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        for oy in 0..=h - window {
            for ox in 0..=w - window {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for y in 0..window {
                    for x in 0..window {
                        let wt = k[y * window + x];
                        let (va, vb) = (a.at3(ch, oy + y, ox + x), b.at3(ch, oy + y, ox + x));
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

type Mat = Vec<Vec<f64>>;

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for k in 0..b.len() {
            for j in 0..m {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a.iter().enumerate().map(|(i, r)| {
        let mut row = r.clone();
        row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
        row
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let src = m[col].clone();
                m[r].iter_mut().zip(&src).for_each(|(v, s)| *v -= f * s);
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Principal square root by Denman–Beavers iteration.
fn sqrtm(a: &Mat) -> Mat {
    let n = a.len();
    let mut y = a.clone();
    let mut z: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..100 {
        let yi = inverse(&y);
        let zi = inverse(&z);
        let ny: Mat = (0..n).map(|i| (0..n).map(|j| 0.5 * (y[i][j] + zi[i][j])).collect()).collect();
        let nz: Mat = (0..n).map(|i| (0..n).map(|j| 0.5 * (z[i][j] + yi[i][j])).collect()).collect();
        y = ny;
        z = nz;
    }
    y
}

fn mean_cov(s: &[Vec<f64>]) -> (Vec<f64>, Mat) {
    let d = s[0].len();
    let n = s.len() as f64;
    let mu: Vec<f64> = (0..d).map(|k| s.iter().map(|v| v[k]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for v in s {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (v[i] - mu[i]) * (v[j] - mu[j]) / (n - 1.0);
            }
        }
    }
    (mu, cov)
}

/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^½)` with an iterative matrix square root.
/// Needs full-rank covariances.
pub fn frechet_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (m1, s1) = mean_cov(a);
    let (m2, s2) = mean_cov(b);
    let d = m1.len();
    let mean_term: f64 = m1.iter().zip(&m2).map(|(x, y)| (x - y).powi(2)).sum();
    let root = sqrtm(&matmul(&s1, &s2));
    let tr: f64 = (0..d).map(|i| s1[i][i] + s2[i][i] - 2.0 * root[i][i]).sum();
    mean_term + tr
}

/// Every pair of coordinates tested against the adjacency predicates.
pub fn adjacent_pairs_oracle(coords: &[Coord]) -> Vec<(Coord, Coord, bool)> {
    let mut out = Vec::new();
    for (i, p) in coords.iter().enumerate() {
        for q in &coords[i + 1..] {
            let dx = p.x.abs_diff(q.x);
            let dy = p.y.abs_diff(q.y);
            let horizontal = dx == 1 && dy == 0;
            let vertical = dx == 0 && dy == 1;
            if horizontal || vertical {
                let (a, b) = if p < q { (*p, *q) } else { (*q, *p) };
                out.push((a, b, horizontal));
            }
        }
    }
    out.sort();
    out
}

/// Scans every brushed pixel pair for one on each side of the edge, both
/// within `band` of it, at the same position along the edge.
pub fn mask_intersection_oracle(horizontal: bool, a: &BrushMask, b: &BrushMask, band: usize) -> bool {
    let s = a.side();
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    for y in 0..s {
        for x in 0..s {
            let (da, along_a) = if horizontal { (s - 1 - x, y) } else { (s - 1 - y, x) };
            let (db, along_b) = if horizontal { (x, y) } else { (y, x) };
            if a.get(x, y) && da < band {
                pa.push(along_a);
            }
            if b.get(x, y) && db < band {
                pb.push(along_b);
            }
        }
    }
    pa.iter().any(|p| pb.contains(p))
}

pub fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::uniform(shape, 0.0, 1.0, rng)
}

/// Central differences of `f` with respect to every element of `x`.
pub fn numeric_grad(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let v = probe.data()[i];
        probe.data_mut()[i] = v + h;
        let up = f(&probe);
        probe.data_mut()[i] = v - h;
        let down = f(&probe);
        probe.data_mut()[i] = v;
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// `‖a − n‖ / max(‖a‖, ‖n‖, 1e-12)`.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let d: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    d / na.max(nn).max(1e-12)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

/// Canonical adjacency list for `find_adjacent_pairs` comparison.
pub fn full_brushes(coords: &[Coord], side: usize) -> BTreeMap<Coord, BrushMask> {
    coords.iter().map(|c| (*c, BrushMask::full(side))).collect()
}

/// Test-set names chosen by exhaustive search: in each category, among every
/// set of `k` disjoint pairs, the one whose ascending `(S, lo, hi)` list is
/// lexicographically smallest. The larger name of each pair is the test map.
pub fn split_oracle(names: &[String], categories: &[String], s: &[Vec<f64>], k: usize) -> Vec<String> {
    type Key = (f64, String, String);
    fn cmp_keys(a: &[Key], b: &[Key]) -> std::cmp::Ordering {
        for (x, y) in a.iter().zip(b) {
            let o = x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)).then_with(|| x.2.cmp(&y.2));
            if o.is_ne() {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    }
    fn search(pairs: &[Key], start: usize, k: usize, chosen: &mut Vec<Key>, best: &mut Option<Vec<Key>>) {
        if chosen.len() == k {
            let mut sorted = chosen.clone();
            sorted.sort_by(|a, b| cmp_keys(std::slice::from_ref(a), std::slice::from_ref(b)));
            if best.as_ref().is_none_or(|b| cmp_keys(&sorted, b).is_lt()) {
                *best = Some(sorted);
            }
            return;
        }
        for i in start..pairs.len() {
            let p = &pairs[i];
            if chosen.iter().any(|c| c.1 == p.1 || c.1 == p.2 || c.2 == p.1 || c.2 == p.2) {
                continue;
            }
            chosen.push(p.clone());
            search(pairs, i + 1, k, chosen, best);
            chosen.pop();
        }
    }
    let mut cats: Vec<&String> = categories.iter().collect();
    cats.sort();
    cats.dedup();
    let mut test = Vec::new();
    for cat in cats {
        let idx: Vec<usize> = (0..names.len()).filter(|&i| &categories[i] == cat).collect();
        let mut pairs = Vec::new();
        for (p, &i) in idx.iter().enumerate() {
            for &j in &idx[p + 1..] {
                let (lo, hi) = if names[i] <= names[j] { (i, j) } else { (j, i) };
                pairs.push((s[i][j], names[lo].clone(), names[hi].clone()));
            }
        }
        let mut best = None;
        search(&pairs, 0, k, &mut Vec::new(), &mut best);
        test.extend(best.expect("enough disjoint pairs").into_iter().map(|p| p.2));
    }
    test.sort();
    test
}
