use super::{check_same, FeatureExtractor, LossError};
use crate::nn::{Graph, Tensor, Var};

/// `G_ij = Σ_{h,w} f_i(h,w)·f_j(h,w)` for a `[C, H, W]` feature tensor.
pub fn gram_matrix(features: &Tensor) -> Tensor {
    let (c, h, w) = features.chw();
    let n = h * w;
    let d = features.data();
    let mut g = Tensor::zeros(&[c, c]);
    for i in 0..c {
        for j in i..c {
            let v: f64 = d[i * n..(i + 1) * n]
                .iter()
                .zip(&d[j * n..(j + 1) * n])
                .map(|(a, b)| a * b)
                .sum();
            g.data_mut()[i * c + j] = v;
            g.data_mut()[j * c + i] = v;
        }
    }
    g
}

fn style_norm(shape: &[usize]) -> f64 {
    let (c, h, w) = (shape[0] as f64, shape[1] as f64, shape[2] as f64);
    1.0 / (4.0 * c * c * h * h * w * w)
}

/// `Σ_l w_l/(4C_l²H_l²W_l²) Σ_ij (G_gen − G_gt)²`.
pub fn style_loss(
    gen: &Tensor,
    gt: &Tensor,
    extractor: &FeatureExtractor,
) -> Result<f64, LossError> {
    check_same(gen, gt)?;
    let fg = extractor.features(gen);
    let ft = extractor.features(gt);
    let mut total = 0.0;
    for ((a, b), wl) in fg.iter().zip(&ft).zip(extractor.style_weights()) {
        let ga = gram_matrix(a);
        let gb = gram_matrix(b);
        let sq: f64 = ga
            .data()
            .iter()
            .zip(gb.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        total += wl * style_norm(a.shape()) * sq;
    }
    Ok(total)
}

/// `Σ_l mean((φ_l(gen) − φ_l(gt))²)`.
pub fn perceptual_loss(
    gen: &Tensor,
    gt: &Tensor,
    extractor: &FeatureExtractor,
) -> Result<f64, LossError> {
    check_same(gen, gt)?;
    let fg = extractor.features(gen);
    let ft = extractor.features(gt);
    Ok(fg
        .iter()
        .zip(&ft)
        .map(|(a, b)| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                / a.len() as f64
        })
        .sum())
}

fn gram_graph(g: &mut Graph, f: Var) -> Var {
    let s = g.shape(f).to_vec();
    let flat = g.reshape(f, &[s[0], s[1] * s[2]]);
    let t = g.transpose(flat);
    g.matmul(flat, t)
}

/// Style loss of a graph node against a fixed target image.
pub fn style_loss_graph(g: &mut Graph, gen: Var, gt: &Tensor, extractor: &FeatureExtractor) -> Var {
    let targets = extractor.features(gt);
    let feats = extractor.features_graph(g, gen);
    let mut terms = Vec::new();
    for ((f, t), wl) in feats
        .into_iter()
        .zip(&targets)
        .zip(extractor.style_weights())
    {
        let gm = gram_graph(g, f);
        let gt_gram = g.constant(gram_matrix(t));
        let d = g.sub(gm, gt_gram);
        let sq = g.square(d);
        let s = g.sum(sq);
        terms.push(g.scale(s, wl * style_norm(t.shape())));
    }
    sum_vars(g, &terms)
}

/// Perceptual loss of a graph node against a fixed target image.
pub fn perceptual_loss_graph(
    g: &mut Graph,
    gen: Var,
    gt: &Tensor,
    extractor: &FeatureExtractor,
) -> Var {
    let targets = extractor.features(gt);
    let feats = extractor.features_graph(g, gen);
    let mut terms = Vec::new();
    for (f, t) in feats.into_iter().zip(targets) {
        let tv = g.constant(t);
        terms.push(g.mse(f, tv));
    }
    sum_vars(g, &terms)
}

pub(crate) fn sum_vars(g: &mut Graph, terms: &[Var]) -> Var {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_of_ones() {
        let g = gram_matrix(&Tensor::filled(&[1, 2, 2], 1.0));
        assert_eq!(g.data(), &[4.0]);
    }

    #[test]
    fn orthogonal_channels() {
        let f = Tensor::from_vec(&[2, 1, 2], vec![1.0, 0.0, 0.0, 3.0]);
        let g = gram_matrix(&f);
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 9.0]);
    }

    #[test]
    fn spatial_permutation_has_no_style_difference() {
        let ex = FeatureExtractor::identity(2);
        let a = Tensor::from_vec(&[2, 2, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let b = Tensor::from_vec(&[2, 2, 2], vec![0.4, 0.3, 0.2, 0.1, 0.8, 0.7, 0.6, 0.5]);
        assert!(style_loss(&a, &b, &ex).unwrap().abs() < 1e-18);
        assert_eq!(style_loss(&a, &a, &ex).unwrap(), 0.0);
    }

    #[test]
    fn identity_perceptual_is_mse() {
        let ex = FeatureExtractor::identity(1);
        let a = Tensor::from_vec(&[1, 2, 2], vec![0.0, 1.0, 0.5, 0.5]);
        let b = Tensor::from_vec(&[1, 2, 2], vec![1.0, 1.0, 0.0, 0.5]);
        assert!((perceptual_loss(&a, &b, &ex).unwrap() - 1.25 / 4.0).abs() < 1e-15);
    }
}
