//! Toy conditioned latent diffusion inpainter.
//!
//! A deterministic convolutional autoencoder maps tiles to a half-resolution
//! latent. A small denoiser predicts noise from `[x_t, masked latent, latent
//! mask, t]`; a hint network reads the conditioning stack at full resolution,
//! strides down to the latent grid, and joins the denoiser through a
//! zero-initialized 1×1 projection.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::brushgan::{weights, LEAK, PERCEPTUAL_SEED};
use super::diffusion::{diffusion_forward, diffusion_reverse_step, NoiseSchedule};
use super::train::{check_finite, mean, Curriculum, TrainingSample};
use super::{composite, GeneratorError, MaskedChunkInput};
use crate::convert::{stack_to_tensor, tensor_to_stack};
use crate::losses::{total_loss_graph, FeatureExtractor, FocalFrequencyOp, LossWeights};
use crate::map::{BrushMask, TileStack, TILES_PER_CHUNK};
use crate::nn::layers::conv;
use crate::nn::optim::Adam;
use crate::nn::{Bound, Graph, Params, Tensor, Var};
use crate::rng::{mix, seeded};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CldmConfig {
    pub side: usize,
    pub latent_channels: usize,
    pub ae_width: usize,
    pub denoiser_width: usize,
    pub hint_width: usize,
    pub context_channels: usize,
    pub steps: usize,
}

impl Default for CldmConfig {
    fn default() -> Self {
        Self {
            side: 32,
            latent_channels: 4,
            ae_width: 16,
            denoiser_width: 32,
            hint_width: 16,
            context_channels: 16,
            steps: 50,
        }
    }
}

impl CldmConfig {
    pub fn latent_side(&self) -> usize {
        self.side / 2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrushCldm {
    pub config: CldmConfig,
    pub params: Params,
    pub schedule: NoiseSchedule,
}

/// Downsamples the brush by 2: a latent cell is masked if any of its pixels is.
pub fn latent_mask(brush: &BrushMask) -> Tensor {
    let s = brush.side() / 2;
    let mut t = Tensor::zeros(&[1, s, s]);
    for y in 0..s {
        for x in 0..s {
            let any = brush.get(2 * x, 2 * y)
                || brush.get(2 * x + 1, 2 * y)
                || brush.get(2 * x, 2 * y + 1)
                || brush.get(2 * x + 1, 2 * y + 1);
            t.data_mut()[y * s + x] = if any { 1.0 } else { 0.0 };
        }
    }
    t
}

fn leaky_conv(
    g: &mut Graph,
    b: &Bound,
    name: &str,
    x: Var,
    stride: usize,
) -> Result<Var, GeneratorError> {
    let c = conv(g, x, weights(b, name), stride, 1)?;
    Ok(g.leaky_relu(c, LEAK))
}

impl BrushCldm {
    pub fn new(config: CldmConfig, seed: u64) -> Result<Self, GeneratorError> {
        if config.side < 8 || !config.side.is_multiple_of(4) {
            return Err(GeneratorError::Shape(format!(
                "side {} must be a multiple of 4, at least 8",
                config.side
            )));
        }
        let schedule = NoiseSchedule::linear(config.steps)?;
        let mut rng = seeded(seed);
        let mut p = Params::new();
        let (lc, aw, dw, hw) = (
            config.latent_channels,
            config.ae_width,
            config.denoiser_width,
            config.hint_width,
        );
        p.push_conv("ae.enc1", aw, TILES_PER_CHUNK, 3, &mut rng)?;
        p.push_conv("ae.enc2", aw, aw, 3, &mut rng)?;
        p.push_conv("ae.enc3", lc, aw, 3, &mut rng)?;
        p.push_conv("ae.dec1", aw, lc, 3, &mut rng)?;
        p.push_conv("ae.dec2", aw, aw, 3, &mut rng)?;
        p.push_conv("ae.dec3", TILES_PER_CHUNK, aw, 3, &mut rng)?;
        p.push_conv("den.c1", dw, 2 * lc + 2, 3, &mut rng)?;
        p.push_conv("den.c2", dw, dw, 3, &mut rng)?;
        p.push_conv("den.c3", dw, dw, 3, &mut rng)?;
        p.push_conv("den.out", lc, dw, 3, &mut rng)?;
        p.push_conv("hint.c1", hw, config.context_channels, 3, &mut rng)?;
        p.push_conv("hint.c2", dw, hw, 3, &mut rng)?;
        p.push("hint.zero.w", Tensor::zeros(&[dw, dw, 1, 1]))?;
        p.push("hint.zero.b", Tensor::zeros(&[dw]))?;
        Ok(Self {
            config,
            params: p,
            schedule,
        })
    }

    pub fn from_params(config: CldmConfig, params: Params) -> Result<Self, GeneratorError> {
        let reference = Self::new(config.clone(), 0)?;
        if reference.params.slots() != params.slots() {
            return Err(GeneratorError::Checkpoint(
                "parameter table does not match the configuration".into(),
            ));
        }
        Ok(Self {
            schedule: reference.schedule,
            config,
            params,
        })
    }

    pub fn encode_graph(
        &self,
        g: &mut Graph,
        b: &Bound,
        tiles: Var,
    ) -> Result<Var, GeneratorError> {
        let h = leaky_conv(g, b, "ae.enc1", tiles, 1)?;
        let h = leaky_conv(g, b, "ae.enc2", h, 2)?;
        Ok(conv(g, h, weights(b, "ae.enc3"), 1, 1)?)
    }

    pub fn decode_graph(&self, g: &mut Graph, b: &Bound, z: Var) -> Result<Var, GeneratorError> {
        let u = g.upsample2x(z);
        let h = leaky_conv(g, b, "ae.dec1", u, 1)?;
        let h = leaky_conv(g, b, "ae.dec2", h, 1)?;
        let o = conv(g, h, weights(b, "ae.dec3"), 1, 1)?;
        Ok(g.sigmoid(o))
    }

    /// Hint features at latent resolution, before the zero projection.
    pub fn hint_graph(
        &self,
        g: &mut Graph,
        b: &Bound,
        context: Var,
    ) -> Result<Var, GeneratorError> {
        let h = leaky_conv(g, b, "hint.c1", context, 2)?;
        leaky_conv(g, b, "hint.c2", h, 1)
    }

    /// Predicted noise for `x_t` given `cond = [masked latent, latent mask]` and hint features.
    pub fn denoise_graph(
        &self,
        g: &mut Graph,
        b: &Bound,
        x_t: Var,
        cond: Var,
        hint: Var,
        t: usize,
    ) -> Result<Var, GeneratorError> {
        let s = g.shape(x_t)[1];
        let tplane = g.constant(Tensor::filled(
            &[1, s, s],
            t as f64 / self.config.steps as f64,
        ));
        let x = g.concat(&[x_t, cond, tplane]);
        let h1 = leaky_conv(g, b, "den.c1", x, 1)?;
        let zero = conv(g, hint, weights(b, "hint.zero"), 1, 0)?;
        let h1 = g.add(h1, zero);
        let h2 = leaky_conv(g, b, "den.c2", h1, 1)?;
        let h3 = leaky_conv(g, b, "den.c3", h2, 1)?;
        Ok(conv(g, h3, weights(b, "den.out"), 1, 1)?)
    }

    fn check_input(&self, input: &MaskedChunkInput) -> Result<Tensor, GeneratorError> {
        if input.side() != self.config.side {
            return Err(GeneratorError::Shape(format!(
                "model side {}, input side {}",
                self.config.side,
                input.side()
            )));
        }
        let ctx = input.context.to_tensor();
        if ctx.shape()[0] != self.config.context_channels {
            return Err(GeneratorError::ContextChannels {
                expected: self.config.context_channels,
                actual: ctx.shape()[0],
            });
        }
        Ok(ctx)
    }

    pub fn encode(&self, tiles: &TileStack) -> Result<Tensor, GeneratorError> {
        let mut g = Graph::new();
        let b = self.params.bind(&mut g, |_| false);
        let t = g.constant(stack_to_tensor(tiles));
        let z = self.encode_graph(&mut g, &b, t)?;
        Ok(g.value(z).clone())
    }

    pub fn decode(&self, z: &Tensor) -> Result<TileStack, GeneratorError> {
        let mut g = Graph::new();
        let b = self.params.bind(&mut g, |_| false);
        let zv = g.constant(z.clone());
        let out = self.decode_graph(&mut g, &b, zv)?;
        Ok(tensor_to_stack(g.value(out)))
    }

    /// `[E(masked tiles)·(1 − m), m]` and the hint features for one input.
    pub fn conditioning(
        &self,
        input: &MaskedChunkInput,
    ) -> Result<(Tensor, Tensor), GeneratorError> {
        let ctx = self.check_input(input)?;
        let m = latent_mask(&input.brush);
        let z = self.encode(&input.tiles)?;
        let (c, h, w) = z.chw();
        let mut zm = z.clone();
        for ch in 0..c {
            for i in 0..h * w {
                zm.data_mut()[ch * h * w + i] *= 1.0 - m.data()[i];
            }
        }
        let cond = Tensor::concat_channels(&[&zm, &m]);
        let mut g = Graph::new();
        let b = self.params.bind(&mut g, |_| false);
        let cv = g.constant(ctx);
        let hint = self.hint_graph(&mut g, &b, cv)?;
        Ok((cond, g.value(hint).clone()))
    }

    pub fn predict_noise(
        &self,
        x_t: &Tensor,
        cond: &Tensor,
        hint: &Tensor,
        t: usize,
    ) -> Result<Tensor, GeneratorError> {
        let mut g = Graph::new();
        let b = self.params.bind(&mut g, |_| false);
        let (x, c, h) = (
            g.constant(x_t.clone()),
            g.constant(cond.clone()),
            g.constant(hint.clone()),
        );
        let e = self.denoise_graph(&mut g, &b, x, c, h, t)?;
        Ok(g.value(e).clone())
    }

    /// Runs the full reverse chain from seeded noise, decodes, and composites.
    pub fn generate(
        &self,
        input: &MaskedChunkInput,
        seed: u64,
    ) -> Result<TileStack, GeneratorError> {
        if input.brush.is_empty() {
            return Ok(input.tiles.clone());
        }
        let (cond, hint) = self.conditioning(input)?;
        let ls = self.config.latent_side();
        let mut x = Tensor::randn(
            &[self.config.latent_channels, ls, ls],
            1.0,
            &mut seeded(mix(seed, 0)),
        );
        for t in (1..=self.config.steps).rev() {
            let eps = self.predict_noise(&x, &cond, &hint, t)?;
            x = diffusion_reverse_step(&x, t, &eps, &self.schedule, mix(seed, t as u64))?;
        }
        let out = self.decode(&x)?;
        Ok(composite(&out, input))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CldmSchedule {
    pub ae_epochs: usize,
    pub denoise_epochs: usize,
    pub finetune_epochs: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub curriculum: Curriculum,
    pub seed: u64,
}

impl Default for CldmSchedule {
    fn default() -> Self {
        Self {
            ae_epochs: 10,
            denoise_epochs: 10,
            finetune_epochs: 2,
            lr: 0.005,
            weights: LossWeights::default(),
            curriculum: Curriculum::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CldmHistory {
    pub ae_loss: Vec<f64>,
    pub denoise_loss: Vec<f64>,
    pub finetune_loss: Vec<f64>,
}

/// Three stages: autoencoder on MSE + focal frequency; denoiser and hint
/// network on noise MSE with the autoencoder frozen; decoder fine-tune on the
/// full weighted loss from one-step denoised latents.
pub fn train_cldm(
    model: &mut BrushCldm,
    data: &[TrainingSample],
    schedule: &CldmSchedule,
) -> Result<CldmHistory, GeneratorError> {
    if data.is_empty() {
        return Err(GeneratorError::EmptyDataset);
    }
    let mut history = CldmHistory::default();
    let extractor = FeatureExtractor::random(TILES_PER_CHUNK, PERCEPTUAL_SEED);
    let w = schedule.weights;
    let mut step = 0usize;
    let total = schedule.denoise_epochs.max(1);

    let mut opt = Adam::new(schedule.lr);
    for _ in 0..schedule.ae_epochs {
        let mut losses = Vec::new();
        for s in data {
            let mut g = Graph::new();
            let b = model.params.bind(&mut g, |n| n.starts_with("ae."));
            let t = g.constant(stack_to_tensor(&s.target));
            let z = model.encode_graph(&mut g, &b, t)?;
            let out = model.decode_graph(&mut g, &b, z)?;
            let m = g.mse(out, t);
            let mut loss = g.scale(m, w.mse);
            if w.focal_frequency > 0.0 {
                let f = g.custom(
                    out,
                    Box::new(FocalFrequencyOp {
                        target: stack_to_tensor(&s.target),
                        alpha: w.alpha,
                    }),
                );
                let f = g.scale(f, w.focal_frequency);
                loss = g.add(loss, f);
            }
            let lv = g.value(loss).item();
            check_finite(lv, "autoencoder", step, || format!("loss {lv}"))?;
            g.backward(loss);
            let grad = b.gradient(&g, &model.params);
            opt.step(&mut model.params, &grad);
            losses.push(lv);
            step += 1;
        }
        history.ae_loss.push(mean(&losses));
    }

    let mut opt = Adam::new(schedule.lr);
    for epoch in 0..schedule.denoise_epochs {
        let mut losses = Vec::new();
        for (i, s) in data.iter().enumerate() {
            let seed = mix(schedule.seed, (epoch * data.len() + i) as u64);
            let brush = schedule
                .curriculum
                .sample_mask(epoch, total, s.target.side, seed)?;
            let input = s.masked(&brush)?;
            let (cond_t, _) = model.conditioning(&input)?;
            let z0 = model.encode(&s.target)?;
            let t = seeded(mix(seed, 7)).random_range(1..=model.config.steps);
            let (xt, eps) = diffusion_forward(&z0, t, &model.schedule, mix(seed, 8))?;

            let mut g = Graph::new();
            let b = model
                .params
                .bind(&mut g, |n| n.starts_with("den.") || n.starts_with("hint."));
            let ctx = g.constant(input.context.to_tensor());
            let hint = model.hint_graph(&mut g, &b, ctx)?;
            let (xv, cv) = (g.constant(xt), g.constant(cond_t));
            let pred = model.denoise_graph(&mut g, &b, xv, cv, hint, t)?;
            let target = g.constant(eps);
            let loss = g.mse(pred, target);
            let lv = g.value(loss).item();
            check_finite(lv, "denoiser", step, || format!("noise mse {lv} at t={t}"))?;
            g.backward(loss);
            let grad = b.gradient(&g, &model.params);
            opt.step(&mut model.params, &grad);
            losses.push(lv);
            step += 1;
        }
        history.denoise_loss.push(mean(&losses));
    }

    let mut opt = Adam::new(schedule.lr * 0.2);
    for epoch in 0..schedule.finetune_epochs {
        let mut losses = Vec::new();
        for (i, s) in data.iter().enumerate() {
            let seed = mix(schedule.seed ^ 0xf1e, (epoch * data.len() + i) as u64);
            let brush = schedule
                .curriculum
                .sample_mask(total, total, s.target.side, seed)?;
            let input = s.masked(&brush)?;
            let (cond, hint) = model.conditioning(&input)?;
            let z0 = model.encode(&s.target)?;
            let t = seeded(mix(seed, 7)).random_range(1..=model.config.steps.div_ceil(5));
            let (xt, _) = diffusion_forward(&z0, t, &model.schedule, mix(seed, 8))?;
            let eps = model.predict_noise(&xt, &cond, &hint, t)?;
            let ab = model.schedule.alpha_bar(t);
            let x0_hat = xt.zip_map(&eps, |x, e| (x - (1.0 - ab).sqrt() * e) / ab.sqrt());

            let mut g = Graph::new();
            let b = model.params.bind(&mut g, |n| n.starts_with("ae.dec"));
            let zv = g.constant(x0_hat);
            let out = model.decode_graph(&mut g, &b, zv)?;
            let loss = total_loss_graph(&mut g, out, &stack_to_tensor(&s.target), &w, &extractor);
            let lv = g.value(loss).item();
            check_finite(lv, "decoder fine-tune", step, || format!("total {lv}"))?;
            g.backward(loss);
            let grad = b.gradient(&g, &model.params);
            opt.step(&mut model.params, &grad);
            losses.push(lv);
            step += 1;
        }
        history.finetune_loss.push(mean(&losses));
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::ContextStack;
    use crate::synth::{striped_stack, OBJECT_NAMES};

    fn tiny() -> BrushCldm {
        BrushCldm::new(
            CldmConfig {
                side: 16,
                latent_channels: 2,
                ae_width: 4,
                denoiser_width: 4,
                hint_width: 4,
                context_channels: 16,
                steps: 5,
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_projection_silences_hint() {
        let m = tiny();
        let tiles = striped_stack(16, 4, 1);
        let brush = BrushMask::from_fn(16, |x, y| x > 3 && y < 9);
        let a =
            MaskedChunkInput::new(&tiles, &brush, ContextStack::blank(16, &OBJECT_NAMES)).unwrap();
        let mut ctx = ContextStack::blank(16, &OBJECT_NAMES);
        ctx.height.data_mut().fill(0.9);
        ctx.templates[2].data_mut().fill(-0.5);
        let b = MaskedChunkInput::new(&tiles, &brush, ctx).unwrap();
        let (ca, ha) = m.conditioning(&a).unwrap();
        let (cb, hb) = m.conditioning(&b).unwrap();
        assert_ne!(ha, hb);
        let x = Tensor::filled(&[2, 8, 8], 0.3);
        assert_eq!(
            m.predict_noise(&x, &ca, &ha, 3).unwrap(),
            m.predict_noise(&x, &cb, &hb, 3).unwrap()
        );
    }

    #[test]
    fn deterministic_and_compositing() {
        let m = tiny();
        let tiles = striped_stack(16, 4, 1);
        let brush = BrushMask::from_fn(16, |x, _| x < 7);
        let i =
            MaskedChunkInput::new(&tiles, &brush, ContextStack::blank(16, &OBJECT_NAMES)).unwrap();
        let a = m.generate(&i, 11).unwrap();
        assert_eq!(a, m.generate(&i, 11).unwrap());
        for k in 0..TILES_PER_CHUNK {
            for (idx, &b) in brush.data().iter().enumerate() {
                if !b {
                    assert_eq!(
                        a.channel_slice(k)[idx].to_bits(),
                        i.tiles.channel_slice(k)[idx].to_bits()
                    );
                }
            }
        }
        let empty = MaskedChunkInput::new(
            &tiles,
            &BrushMask::empty(16),
            ContextStack::blank(16, &OBJECT_NAMES),
        )
        .unwrap();
        assert_eq!(m.generate(&empty, 1).unwrap(), tiles);
    }
}
