use serde::{Deserialize, Serialize};

use super::{check_same, LossError};
use crate::nn::Tensor;

/// Windowed SSIM parameters. Defaults: 11×11 Gaussian, σ = 1.5, K1 = 0.01, K2 = 0.03, L = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    /// Normalized separable Gaussian taps.
    pub fn kernel(&self) -> Vec<f64> {
        let c = (self.window as f64 - 1.0) / 2.0;
        let mut k: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        for v in &mut k {
            *v /= s;
        }
        k
    }
}

/// Mean SSIM over all valid windows and channels with the default configuration.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64, LossError> {
    ssim_with(a, b, &SsimConfig::default())
}

pub fn ssim_with(a: &Tensor, b: &Tensor, cfg: &SsimConfig) -> Result<f64, LossError> {
    check_same(a, b)?;
    let (c, h, w) = a.chw();
    let k = cfg.window;
    if k == 0 || h < k || w < k {
        return Err(LossError::TooSmall {
            window: k,
            height: h,
            width: w,
        });
    }
    let taps = cfg.kernel();
    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut total = 0.0;
    for ch in 0..c {
        let pa = &a.data()[ch * h * w..(ch + 1) * h * w];
        let pb = &b.data()[ch * h * w..(ch + 1) * h * w];
        let prods: [Vec<f64>; 5] = [
            pa.to_vec(),
            pb.to_vec(),
            pa.iter().map(|v| v * v).collect(),
            pb.iter().map(|v| v * v).collect(),
            pa.iter().zip(pb).map(|(x, y)| x * y).collect(),
        ];
        let filtered: Vec<Vec<f64>> = prods.iter().map(|p| filter_valid(p, h, w, &taps)).collect();
        for i in 0..oh * ow {
            let (mu_a, mu_b) = (filtered[0][i], filtered[1][i]);
            let var_a = filtered[2][i] - mu_a * mu_a;
            let var_b = filtered[3][i] - mu_b * mu_b;
            let cov = filtered[4][i] - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    }
    Ok(total / (c * oh * ow) as f64)
}

/// Separable valid-mode correlation with `taps` along both axes.
fn filter_valid(p: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * p[y * w + x + i])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}
