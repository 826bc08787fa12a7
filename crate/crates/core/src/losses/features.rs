use serde::{Deserialize, Serialize};

use crate::nn::{conv2d_forward, Graph, Tensor, Var};
use crate::rng::seeded;

const LEAK: f64 = 0.2;

/// One fixed convolution stage followed by a leaky ReLU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
    /// Contribution `w_l` of this layer to the style loss.
    pub style_weight: f64,
}

/// Frozen convolutional stack used by the perceptual and style losses and by FID.
///
/// With no layers the extractor is the identity: the single "layer" output is
/// the input itself, weighted 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub in_channels: usize,
    pub layers: Vec<FeatureLayer>,
}

impl FeatureExtractor {
    pub const WIDTHS: [usize; 3] = [8, 16, 32];

    /// Seeded random 3×3 stride-2 stack with widths 8/16/32.
    pub fn random(in_channels: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut layers = Vec::new();
        let mut c_in = in_channels;
        for &c_out in &Self::WIDTHS {
            let std = (2.0 / (c_in * 9) as f64).sqrt();
            layers.push(FeatureLayer {
                weight: Tensor::randn(&[c_out, c_in, 3, 3], std, &mut rng),
                bias: Tensor::zeros(&[c_out]),
                stride: 2,
                pad: 1,
                style_weight: 1.0,
            });
            c_in = c_out;
        }
        Self {
            in_channels,
            layers,
        }
    }

    pub fn identity(in_channels: usize) -> Self {
        Self {
            in_channels,
            layers: Vec::new(),
        }
    }

    pub fn from_layers(in_channels: usize, layers: Vec<FeatureLayer>) -> Self {
        Self {
            in_channels,
            layers,
        }
    }

    /// Per-layer style weights `w_l`.
    pub fn style_weights(&self) -> Vec<f64> {
        if self.layers.is_empty() {
            vec![1.0]
        } else {
            self.layers.iter().map(|l| l.style_weight).collect()
        }
    }

    /// Activations of every layer for a `[C, H, W]` image.
    pub fn features(&self, x: &Tensor) -> Vec<Tensor> {
        if self.layers.is_empty() {
            return vec![x.clone()];
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            cur = conv2d_forward(&cur, &l.weight, Some(&l.bias), l.stride, l.pad).map(|v| {
                if v > 0.0 {
                    v
                } else {
                    LEAK * v
                }
            });
            out.push(cur.clone());
        }
        out
    }

    /// Same as [`FeatureExtractor::features`], recorded on a graph with frozen weights.
    pub fn features_graph(&self, g: &mut Graph, x: Var) -> Vec<Var> {
        if self.layers.is_empty() {
            return vec![x];
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for l in &self.layers {
            let w = g.constant(l.weight.clone());
            let b = g.constant(l.bias.clone());
            let c = g.conv2d(cur, w, Some(b), l.stride, l.pad);
            cur = g.leaky_relu(c, LEAK);
            out.push(cur);
        }
        out
    }

    /// Fixed-length embedding: the spatial mean of every channel of every layer.
    pub fn embed(&self, x: &Tensor) -> Vec<f64> {
        let mut v = Vec::new();
        for f in self.features(x) {
            let (c, h, w) = f.chw();
            let n = (h * w) as f64;
            for ch in 0..c {
                v.push(f.data()[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / n);
            }
        }
        v
    }

    pub fn embedding_dim(&self) -> usize {
        if self.layers.is_empty() {
            self.in_channels
        } else {
            self.layers.iter().map(|l| l.weight.shape()[0]).sum()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let a = FeatureExtractor::random(3, 5);
        assert_eq!(a, FeatureExtractor::random(3, 5));
        let x = Tensor::filled(&[3, 16, 16], 0.5);
        let f = a.features(&x);
        let shapes: Vec<_> = f.iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![8, 8, 8], vec![16, 4, 4], vec![32, 2, 2]]);
        assert_eq!(a.embed(&x).len(), a.embedding_dim());
    }
}
