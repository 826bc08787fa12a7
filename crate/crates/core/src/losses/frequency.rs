use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{check_same, LossError};
use crate::nn::{Tensor, UnaryFn};

/// Unitary 2-D DFT of a row-major `h × w` complex grid.
pub fn dft2(data: &[Complex64], h: usize, w: usize, inverse: bool) -> Vec<Complex64> {
    let mut planner = FftPlanner::<f64>::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    let mut buf = data.to_vec();
    for r in buf.chunks_exact_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
    let norm = 1.0 / ((h * w) as f64).sqrt();
    for v in &mut buf {
        *v *= norm;
    }
    buf
}

fn real_dft2(plane: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let c: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft2(&c, h, w, false)
}

/// Spectrum weight `|ΔF|^alpha`, normalized to a maximum of 1 per channel.
fn spectrum_weight(diff: &[Complex64], alpha: f64) -> Vec<f64> {
    let mut w: Vec<f64> = diff.iter().map(|d| d.norm().powf(alpha)).collect();
    let max = w.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut w {
            *v /= max;
        }
    }
    w
}

struct ChannelTerms {
    loss: f64,
    grad: Vec<f64>,
}

fn channel_terms(
    gt: &[f64],
    gen: &[f64],
    h: usize,
    w: usize,
    alpha: f64,
    want_grad: bool,
) -> ChannelTerms {
    let fg = real_dft2(gt, h, w);
    let fp = real_dft2(gen, h, w);
    let diff: Vec<Complex64> = fg.iter().zip(&fp).map(|(a, b)| a - b).collect();
    let weight = spectrum_weight(&diff, alpha);
    let mn = (h * w) as f64;
    let loss = diff
        .iter()
        .zip(&weight)
        .map(|(d, wt)| wt * d.norm_sqr())
        .sum::<f64>()
        / mn;
    let grad = if want_grad {
        let weighted: Vec<Complex64> = diff.iter().zip(&weight).map(|(d, wt)| d * *wt).collect();
        dft2(&weighted, h, w, true)
            .iter()
            .map(|z| -2.0 * z.re / mn)
            .collect()
    } else {
        Vec::new()
    };
    ChannelTerms { loss, grad }
}

/// `(1/MN) Σ w(u,v)·|F_gt − F_gen|²` per channel, averaged over channels.
///
/// `gt` and `gen` are `[C, H, W]`. The weight is treated as a constant.
pub fn focal_frequency_loss(gt: &Tensor, gen: &Tensor, alpha: f64) -> Result<f64, LossError> {
    check_same(gt, gen)?;
    if alpha < 0.0 {
        return Err(LossError::InvalidAlpha(alpha));
    }
    let (c, h, w) = gt.chw();
    let n = h * w;
    let mut total = 0.0;
    for ch in 0..c {
        total += channel_terms(
            &gt.data()[ch * n..(ch + 1) * n],
            &gen.data()[ch * n..(ch + 1) * n],
            h,
            w,
            alpha,
            false,
        )
        .loss;
    }
    Ok(total / c as f64)
}

/// Loss value and its gradient w.r.t. `gen` with the spectrum weight held fixed.
pub fn focal_frequency_loss_grad(
    gt: &Tensor,
    gen: &Tensor,
    alpha: f64,
) -> Result<(f64, Tensor), LossError> {
    check_same(gt, gen)?;
    if alpha < 0.0 {
        return Err(LossError::InvalidAlpha(alpha));
    }
    let (c, h, w) = gt.chw();
    let n = h * w;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(c * n);
    for ch in 0..c {
        let t = channel_terms(
            &gt.data()[ch * n..(ch + 1) * n],
            &gen.data()[ch * n..(ch + 1) * n],
            h,
            w,
            alpha,
            true,
        );
        total += t.loss;
        grad.extend(t.grad.iter().map(|g| g / c as f64));
    }
    Ok((total / c as f64, Tensor::from_vec(gt.shape(), grad)))
}

/// Focal frequency loss against a fixed target, usable as a graph node.
pub struct FocalFrequencyOp {
    pub target: Tensor,
    pub alpha: f64,
}

impl UnaryFn for FocalFrequencyOp {
    fn forward(&self, x: &Tensor) -> Tensor {
        Tensor::scalar(
            focal_frequency_loss(&self.target, x, self.alpha).expect("focal frequency shapes"),
        )
    }

    fn backward(&self, x: &Tensor, _y: &Tensor, dy: &Tensor) -> Tensor {
        let (_, g) =
            focal_frequency_loss_grad(&self.target, x, self.alpha).expect("focal frequency shapes");
        g.map(|v| v * dy.item())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dft(x: &[f64], h: usize, w: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for xx in 0..w {
                        let ang =
                            -2.0 * PI * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                        acc += Complex64::from_polar(x[y * w + xx], ang);
                    }
                }
                out[u * w + v] = acc / ((h * w) as f64).sqrt();
            }
        }
        out
    }

    #[test]
    fn fft_matches_naive_dft() {
        let x: Vec<f64> = (0..24).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.2).collect();
        let a = real_dft2(&x, 4, 6);
        let b = naive_dft(&x, 4, 6);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let x: Vec<Complex64> = (0..20)
            .map(|i| Complex64::new(i as f64, -(i as f64) * 0.5))
            .collect();
        let y = dft2(&dft2(&x, 4, 5, false), 4, 5, true);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).norm() < 1e-10);
        }
    }

    #[test]
    fn constant_offset_alpha_zero() {
        let gt = Tensor::from_vec(&[1, 4, 4], (0..16).map(|i| i as f64 / 16.0).collect());
        let c = 0.3;
        let gen = gt.map(|v| v + c);
        let l = focal_frequency_loss(&gt, &gen, 0.0).unwrap();
        assert!((l - c * c).abs() < 1e-12);
        assert_eq!(focal_frequency_loss(&gt, &gt, 1.0).unwrap(), 0.0);
    }
}
