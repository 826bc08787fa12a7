use serde::{Deserialize, Serialize};

use super::GeneratorError;
use crate::nn::Tensor;
use crate::rng::seeded;

/// Variance schedule `β_1..β_T` with cumulative products `ᾱ_t = Π_{s≤t}(1 − β_s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self, GeneratorError> {
        if betas.is_empty() {
            return Err(GeneratorError::Schedule("no steps".into()));
        }
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(GeneratorError::Schedule("betas must lie in (0, 1)".into()));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(GeneratorError::Schedule(
                "betas must be non-decreasing".into(),
            ));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Linear schedule rescaled so that any `steps` spans the same noise range
    /// as the usual 1000-step 1e-4..0.02 schedule.
    pub fn linear(steps: usize) -> Result<Self, GeneratorError> {
        if steps == 0 {
            return Err(GeneratorError::Schedule("no steps".into()));
        }
        let scale = 1000.0 / steps as f64;
        let (lo, hi) = (1e-4 * scale, 0.02 * scale);
        let betas = (0..steps)
            .map(|i| {
                let f = if steps == 1 {
                    1.0
                } else {
                    i as f64 / (steps - 1) as f64
                };
                (lo + f * (hi - lo)).clamp(1e-8, 0.999)
            })
            .collect();
        Self::new(betas)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `β_t` for `1 ≤ t ≤ T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    fn check(&self, t: usize) -> Result<(), GeneratorError> {
        if t == 0 || t > self.steps() {
            return Err(GeneratorError::StepOutOfRange {
                t,
                steps: self.steps(),
            });
        }
        Ok(())
    }
}

/// `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε` with seeded standard normal `ε`; returns `(x_t, ε)`.
pub fn diffusion_forward(
    x0: &Tensor,
    t: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<(Tensor, Tensor), GeneratorError> {
    schedule.check(t)?;
    let ab = schedule.alpha_bar(t);
    let eps = Tensor::randn(x0.shape(), 1.0, &mut seeded(seed));
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let xt = x0.zip_map(&eps, |x, e| a * x + b * e);
    Ok((xt, eps))
}

/// Ancestral step `x_{t−1} = (x_t − β_t/√(1−ᾱ_t)·ε̂)/√(1−β_t) + σ_t·z`,
/// `σ_t² = β_t(1−ᾱ_{t−1})/(1−ᾱ_t)`, with `z = 0` at `t = 1`.
pub fn diffusion_reverse_step(
    x_t: &Tensor,
    t: usize,
    predicted_noise: &Tensor,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Tensor, GeneratorError> {
    schedule.check(t)?;
    if x_t.shape() != predicted_noise.shape() {
        return Err(GeneratorError::Shape(format!(
            "x_t {:?} vs noise {:?}",
            x_t.shape(),
            predicted_noise.shape()
        )));
    }
    let beta = schedule.beta(t);
    let ab = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t - 1);
    let coef = beta / (1.0 - ab).sqrt();
    let inv = 1.0 / (1.0 - beta).sqrt();
    let mean = x_t.zip_map(predicted_noise, |x, e| (x - coef * e) * inv);
    if t == 1 {
        return Ok(mean);
    }
    let sigma = (beta * (1.0 - ab_prev) / (1.0 - ab)).sqrt();
    let z = Tensor::randn(x_t.shape(), 1.0, &mut seeded(seed));
    Ok(mean.zip_map(&z, |m, z| m + sigma * z))
}

/// The noise that explains `x_t` given the true `x0`: `(x_t − √ᾱ_t·x0)/√(1−ᾱ_t)`.
pub fn oracle_noise(x_t: &Tensor, x0: &Tensor, t: usize, schedule: &NoiseSchedule) -> Tensor {
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x_t.zip_map(x0, |x, x0| (x - a * x0) / b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::mix;

    #[test]
    fn schedule_invariants() {
        for steps in [1, 10, 50, 1000] {
            let s = NoiseSchedule::linear(steps).unwrap();
            for t in 1..=steps {
                assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
        }
        assert!(NoiseSchedule::new(vec![0.2, 0.1]).is_err());
    }

    #[test]
    fn single_step_inversion_is_exact() {
        let s = NoiseSchedule::linear(1).unwrap();
        let x0 = Tensor::from_vec(&[1, 2, 2], vec![0.1, -0.4, 0.9, 0.3]);
        let (xt, eps) = diffusion_forward(&x0, 1, &s, 5).unwrap();
        let back = diffusion_reverse_step(&xt, 1, &eps, &s, 0).unwrap();
        for (a, b) in back.data().iter().zip(x0.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_with_oracle_noise() {
        let s = NoiseSchedule::linear(10).unwrap();
        let x0 = Tensor::from_vec(&[1, 2, 2], vec![0.5, 0.2, -0.1, 0.7]);
        let (mut x, _) = diffusion_forward(&x0, 10, &s, 1).unwrap();
        for t in (1..=10).rev() {
            let e = oracle_noise(&x, &x0, t, &s);
            x = diffusion_reverse_step(&x, t, &e, &s, mix(3, t as u64)).unwrap();
        }
        for (a, b) in x.data().iter().zip(x0.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(diffusion_forward(&x0, 11, &s, 0).is_err());
    }
}
