//! Toy two-stage gated inpainting GAN.
//!
//! The coarse autoencoder maps `[masked tiles, brush]` to a first estimate.
//! The fine autoencoder refines the composited estimate and mixes in the
//! conditioning stack through cross-attention at its bottleneck. A three-layer
//! patch discriminator scores `[tiles, brush]`.

use serde::{Deserialize, Serialize};

use super::train::{check_finite, mean, Curriculum, TrainingSample};
use super::{GeneratorError, MaskedChunkInput};
use crate::convert::{plane_to_tensor, stack_to_tensor, tensor_to_stack};
use crate::dataset::{generate_random_mask, MaskMode};
use crate::losses::{perceptual_loss_graph, FeatureExtractor, LossWeights};
use crate::map::{TileStack, TILES_PER_CHUNK};
use crate::nn::layers::{
    conv, cross_attention, from_tokens, gated_conv, to_tokens, Activation, ConvWeights,
};
use crate::nn::optim::Adam;
use crate::nn::{Bound, Graph, Params, Tensor, Var};
use crate::rng::{mix, seeded};

pub const LEAK: f64 = 0.2;
/// Seed of the frozen extractor used by the perceptual term.
pub const PERCEPTUAL_SEED: u64 = 0x5eed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrushGanConfig {
    pub side: usize,
    pub width: usize,
    pub context_channels: usize,
    pub attn_dim: usize,
    pub disc_width: usize,
}

impl Default for BrushGanConfig {
    fn default() -> Self {
        Self {
            side: 32,
            width: 16,
            context_channels: 16,
            attn_dim: 16,
            disc_width: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrushGan {
    pub config: BrushGanConfig,
    pub params: Params,
}

/// Graph nodes produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct GanNodes {
    pub coarse_raw: Var,
    pub coarse: Var,
    pub fine_raw: Var,
    pub fine: Var,
}

fn push_gated(
    p: &mut Params,
    name: &str,
    input: usize,
    out: usize,
    rng: &mut crate::rng::Rng,
) -> Result<(), GeneratorError> {
    p.push_conv(&format!("{name}.f"), out, input, 3, rng)?;
    p.push_conv(&format!("{name}.g"), out, input, 3, rng)?;
    Ok(())
}

fn push_autoencoder(
    p: &mut Params,
    prefix: &str,
    input: usize,
    w: usize,
    rng: &mut crate::rng::Rng,
) -> Result<(), GeneratorError> {
    push_gated(p, &format!("{prefix}.e1"), input, w, rng)?;
    push_gated(p, &format!("{prefix}.e2"), w, 2 * w, rng)?;
    push_gated(p, &format!("{prefix}.e3"), 2 * w, 2 * w, rng)?;
    push_gated(p, &format!("{prefix}.d1"), 4 * w, w, rng)?;
    push_gated(p, &format!("{prefix}.d2"), 2 * w, w, rng)?;
    p.push_conv(&format!("{prefix}.out"), TILES_PER_CHUNK, w, 3, rng)?;
    Ok(())
}

pub(crate) fn weights(b: &Bound, name: &str) -> ConvWeights {
    ConvWeights {
        w: b.var(&format!("{name}.w")),
        b: Some(b.var(&format!("{name}.b"))),
    }
}

fn gconv(
    g: &mut Graph,
    b: &Bound,
    name: &str,
    x: Var,
    stride: usize,
) -> Result<Var, GeneratorError> {
    Ok(gated_conv(
        g,
        x,
        weights(b, &format!("{name}.f")),
        weights(b, &format!("{name}.g")),
        stride,
        1,
        Activation::LeakyRelu(LEAK),
    )?)
}

/// Brush as a `[1, s, s]` tensor and as a per-element selector over 8 channels.
pub(crate) fn brush_inputs(input: &MaskedChunkInput) -> (Tensor, Vec<bool>) {
    let brush = plane_to_tensor(&input.brush.to_plane());
    let mut sel = Vec::with_capacity(TILES_PER_CHUNK * brush.len());
    for _ in 0..TILES_PER_CHUNK {
        sel.extend_from_slice(input.brush.data());
    }
    (brush, sel)
}

impl BrushGan {
    pub fn new(config: BrushGanConfig, seed: u64) -> Result<Self, GeneratorError> {
        if config.side < 8 || !config.side.is_multiple_of(8) {
            return Err(GeneratorError::Shape(format!(
                "side {} must be a positive multiple of 8",
                config.side
            )));
        }
        let mut rng = seeded(seed);
        let mut p = Params::new();
        let w = config.width;
        push_autoencoder(&mut p, "coarse", TILES_PER_CHUNK + 1, w, &mut rng)?;
        push_autoencoder(&mut p, "fine", TILES_PER_CHUNK + 1, w, &mut rng)?;
        p.push_conv("fine.ctx1", w, config.context_channels, 3, &mut rng)?;
        p.push_conv("fine.ctx2", 2 * w, w, 3, &mut rng)?;
        p.push_conv("fine.q", config.attn_dim, 2 * w, 1, &mut rng)?;
        p.push_conv("fine.k", config.attn_dim, 2 * w, 1, &mut rng)?;
        p.push_conv("fine.v", 2 * w, 2 * w, 1, &mut rng)?;
        p.push_conv("fine.o", 2 * w, 2 * w, 1, &mut rng)?;
        let dw = config.disc_width;
        p.push_conv("disc.c1", dw, TILES_PER_CHUNK + 1, 3, &mut rng)?;
        p.push_conv("disc.c2", 2 * dw, dw, 3, &mut rng)?;
        p.push_conv("disc.c3", 1, 2 * dw, 3, &mut rng)?;
        Ok(Self { config, params: p })
    }

    pub fn from_params(config: BrushGanConfig, params: Params) -> Result<Self, GeneratorError> {
        let reference = Self::new(config.clone(), 0)?;
        if reference.params.slots() != params.slots() {
            return Err(GeneratorError::Checkpoint(
                "parameter table does not match the configuration".into(),
            ));
        }
        Ok(Self { config, params })
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

    fn autoencoder(
        &self,
        g: &mut Graph,
        b: &Bound,
        prefix: &str,
        x: Var,
        context: Option<Var>,
    ) -> Result<Var, GeneratorError> {
        let e1 = gconv(g, b, &format!("{prefix}.e1"), x, 1)?;
        let e2 = gconv(g, b, &format!("{prefix}.e2"), e1, 2)?;
        let mut e3 = gconv(g, b, &format!("{prefix}.e3"), e2, 2)?;
        if let Some(ctx) = context {
            e3 = self.fuse_context(g, b, e3, ctx)?;
        }
        let u1 = g.upsample2x(e3);
        let u1 = g.concat(&[u1, e2]);
        let d1 = gconv(g, b, &format!("{prefix}.d1"), u1, 1)?;
        let u2 = g.upsample2x(d1);
        let u2 = g.concat(&[u2, e1]);
        let d2 = gconv(g, b, &format!("{prefix}.d2"), u2, 1)?;
        let out = conv(g, d2, weights(b, &format!("{prefix}.out")), 1, 1)?;
        Ok(g.sigmoid(out))
    }

    /// Bottleneck queries attend over context tokens; the result is added back residually.
    fn fuse_context(
        &self,
        g: &mut Graph,
        b: &Bound,
        bottleneck: Var,
        ctx: Var,
    ) -> Result<Var, GeneratorError> {
        let c1 = conv(g, ctx, weights(b, "fine.ctx1"), 2, 1)?;
        let c1 = g.leaky_relu(c1, LEAK);
        let c2 = conv(g, c1, weights(b, "fine.ctx2"), 2, 1)?;
        let c2 = g.leaky_relu(c2, LEAK);
        let (h, w) = (g.shape(bottleneck)[1], g.shape(bottleneck)[2]);
        let q = conv(g, bottleneck, weights(b, "fine.q"), 1, 0)?;
        let k = conv(g, c2, weights(b, "fine.k"), 1, 0)?;
        let v = conv(g, c2, weights(b, "fine.v"), 1, 0)?;
        let (qt, kt, vt) = (to_tokens(g, q), to_tokens(g, k), to_tokens(g, v));
        let att = cross_attention(g, qt, kt, vt)?;
        let att = from_tokens(g, att, h, w);
        let o = conv(g, att, weights(b, "fine.o"), 1, 0)?;
        Ok(g.add(bottleneck, o))
    }

    /// Records both stages on `g`.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        b: &Bound,
        input: &MaskedChunkInput,
    ) -> Result<GanNodes, GeneratorError> {
        let ctx_t = self.check_input(input)?;
        let (brush_t, sel) = brush_inputs(input);
        let tiles = g.constant(stack_to_tensor(&input.tiles));
        let brush = g.constant(brush_t);
        let ctx = g.constant(ctx_t);

        let x = g.concat(&[tiles, brush]);
        let coarse_raw = self.autoencoder(g, b, "coarse", x, None)?;
        let coarse = g.select(sel.clone(), coarse_raw, tiles);

        let x2 = g.concat(&[coarse, brush]);
        let fine_raw = self.autoencoder(g, b, "fine", x2, Some(ctx))?;
        let fine = g.select(sel, fine_raw, tiles);
        Ok(GanNodes {
            coarse_raw,
            coarse,
            fine_raw,
            fine,
        })
    }

    /// Raw coarse estimate and composited fine output.
    pub fn forward(
        &self,
        input: &MaskedChunkInput,
    ) -> Result<(TileStack, TileStack), GeneratorError> {
        let mut g = Graph::new();
        let b = self.params.bind(&mut g, |_| false);
        let n = self.forward_graph(&mut g, &b, input)?;
        Ok((
            tensor_to_stack(g.value(n.coarse_raw)),
            tensor_to_stack(g.value(n.fine)),
        ))
    }

    pub fn inpaint(&self, input: &MaskedChunkInput) -> Result<TileStack, GeneratorError> {
        if input.brush.is_empty() {
            return Ok(input.tiles.clone());
        }
        Ok(self.forward(input)?.1)
    }

    /// Patch score map for `[tiles, brush]` (both `[C, s, s]`).
    pub fn discriminator_graph(
        &self,
        g: &mut Graph,
        b: &Bound,
        tiles: Var,
        brush: Var,
    ) -> Result<Var, GeneratorError> {
        let x = g.concat(&[tiles, brush]);
        let h1 = conv(g, x, weights(b, "disc.c1"), 2, 1)?;
        let h1 = g.leaky_relu(h1, LEAK);
        let h2 = conv(g, h1, weights(b, "disc.c2"), 2, 1)?;
        let h2 = g.leaky_relu(h2, LEAK);
        Ok(conv(g, h2, weights(b, "disc.c3"), 2, 1)?)
    }

    pub fn patch_discriminator(
        &self,
        tiles: &TileStack,
        brush: &crate::map::BrushMask,
    ) -> Result<Tensor, GeneratorError> {
        if tiles.side != brush.side() {
            return Err(GeneratorError::Shape(format!(
                "tiles {} vs brush {}",
                tiles.side,
                brush.side()
            )));
        }
        let mut g = Graph::new();
        let b = self.params.bind(&mut g, |_| false);
        let t = g.constant(stack_to_tensor(tiles));
        let m = g.constant(plane_to_tensor(&brush.to_plane()));
        let out = self.discriminator_graph(&mut g, &b, t, m)?;
        Ok(g.value(out).clone())
    }

    /// Mean raw-coarse MSE over `data` with fixed Medium masks derived from `seed`.
    pub fn coarse_mse(&self, data: &[TrainingSample], seed: u64) -> Result<f64, GeneratorError> {
        let mut errs = Vec::with_capacity(data.len());
        for (i, s) in data.iter().enumerate() {
            let brush = generate_random_mask(MaskMode::Medium, mix(seed, i as u64), s.target.side)
                .map_err(|e| GeneratorError::Shape(e.to_string()))?;
            let (coarse, _) = self.forward(&s.masked(&brush)?)?;
            let e = coarse
                .data
                .iter()
                .zip(&s.target.data)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / coarse.data.len() as f64;
            errs.push(e);
        }
        Ok(mean(&errs))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanSchedule {
    pub coarse_epochs: usize,
    pub fine_epochs: usize,
    pub lr_coarse: f64,
    pub lr_fine: f64,
    pub lr_disc: f64,
    /// Only the MSE and perceptual weights are used in the fine phase.
    pub weights: LossWeights,
    pub adversarial_weight: f64,
    pub curriculum: Curriculum,
    pub seed: u64,
}

impl Default for GanSchedule {
    fn default() -> Self {
        Self {
            coarse_epochs: 10,
            fine_epochs: 10,
            lr_coarse: 0.01,
            lr_fine: 0.005,
            lr_disc: 0.002,
            weights: LossWeights::default(),
            adversarial_weight: 0.01,
            curriculum: Curriculum::default(),
            seed: 0,
        }
    }
}

/// Per-epoch means of each training signal.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GanHistory {
    pub coarse_mse: Vec<f64>,
    pub fine_loss: Vec<f64>,
    pub disc_loss: Vec<f64>,
}

fn hinge(g: &mut Graph, scores: Var, sign: f64) -> Var {
    // mean(relu(1 + sign·D))
    let s = g.scale(scores, sign);
    let s = g.add_scalar(s, 1.0);
    let r = g.relu(s);
    g.mean(r)
}

/// Phase 1 trains the coarse stage on MSE; phase 2 freezes it and trains the
/// fine stage on MSE + perceptual + adversarial terms against the discriminator.
pub fn train_brushgan(
    model: &mut BrushGan,
    data: &[TrainingSample],
    schedule: &GanSchedule,
) -> Result<GanHistory, GeneratorError> {
    if data.is_empty() {
        return Err(GeneratorError::EmptyDataset);
    }
    let total_epochs = schedule.coarse_epochs + schedule.fine_epochs;
    let extractor = FeatureExtractor::random(TILES_PER_CHUNK, PERCEPTUAL_SEED);
    let mut history = GanHistory::default();
    let mut step = 0usize;

    let mut opt = Adam::new(schedule.lr_coarse);
    for epoch in 0..schedule.coarse_epochs {
        let mut losses = Vec::with_capacity(data.len());
        for (i, s) in data.iter().enumerate() {
            let seed = mix(schedule.seed, (epoch * data.len() + i) as u64);
            let brush =
                schedule
                    .curriculum
                    .sample_mask(epoch, total_epochs, s.target.side, seed)?;
            let input = s.masked(&brush)?;
            let mut g = Graph::new();
            let b = model.params.bind(&mut g, |n| n.starts_with("coarse."));
            let nodes = model.forward_graph(&mut g, &b, &input)?;
            let target = g.constant(stack_to_tensor(&s.target));
            let loss = g.mse(nodes.coarse_raw, target);
            let lv = g.value(loss).item();
            check_finite(lv, "coarse", step, || format!("mse {lv}"))?;
            g.backward(loss);
            let grad = b.gradient(&g, &model.params);
            opt.step(&mut model.params, &grad);
            losses.push(lv);
            step += 1;
        }
        let m = mean(&losses);
        log::debug!("coarse epoch {epoch}: mse {m:.5}");
        history.coarse_mse.push(m);
    }

    let mut gen_opt = Adam::new(schedule.lr_fine);
    let mut disc_opt = Adam::new(schedule.lr_disc);
    for epoch in schedule.coarse_epochs..total_epochs {
        let mut g_losses = Vec::with_capacity(data.len());
        let mut d_losses = Vec::with_capacity(data.len());
        for (i, s) in data.iter().enumerate() {
            let seed = mix(schedule.seed, (epoch * data.len() + i) as u64);
            let brush =
                schedule
                    .curriculum
                    .sample_mask(epoch, total_epochs, s.target.side, seed)?;
            let input = s.masked(&brush)?;
            let (brush_t, _) = brush_inputs(&input);

            let mut g = Graph::new();
            let b = model.params.bind(&mut g, |n| n.starts_with("fine."));
            let nodes = model.forward_graph(&mut g, &b, &input)?;
            let target = g.constant(stack_to_tensor(&s.target));
            let mut terms = Vec::new();
            let m = g.mse(nodes.fine_raw, target);
            terms.push(g.scale(m, schedule.weights.mse));
            if schedule.weights.perceptual > 0.0 {
                let p = perceptual_loss_graph(
                    &mut g,
                    nodes.fine_raw,
                    &stack_to_tensor(&s.target),
                    &extractor,
                );
                terms.push(g.scale(p, schedule.weights.perceptual));
            }
            if schedule.adversarial_weight > 0.0 {
                let bv = g.constant(brush_t.clone());
                let d = model.discriminator_graph(&mut g, &b, nodes.fine, bv)?;
                let adv = g.mean(d);
                terms.push(g.scale(adv, -schedule.adversarial_weight));
            }
            let mut loss = terms[0];
            for &t in &terms[1..] {
                loss = g.add(loss, t);
            }
            let lv = g.value(loss).item();
            check_finite(lv, "fine", step, || format!("total {lv}"))?;
            g.backward(loss);
            let fake = g.value(nodes.fine).clone();
            let grad = b.gradient(&g, &model.params);
            gen_opt.step(&mut model.params, &grad);
            g_losses.push(lv);

            if schedule.adversarial_weight > 0.0 {
                let mut dg = Graph::new();
                let db = model.params.bind(&mut dg, |n| n.starts_with("disc."));
                let bv = dg.constant(brush_t);
                let real = dg.constant(stack_to_tensor(&s.target));
                let fake = dg.constant(fake);
                let dr = model.discriminator_graph(&mut dg, &db, real, bv)?;
                let df = model.discriminator_graph(&mut dg, &db, fake, bv)?;
                let lr = hinge(&mut dg, dr, -1.0);
                let lf = hinge(&mut dg, df, 1.0);
                let dl = dg.add(lr, lf);
                let dv = dg.value(dl).item();
                check_finite(dv, "discriminator", step, || format!("hinge {dv}"))?;
                dg.backward(dl);
                let grad = db.gradient(&dg, &model.params);
                disc_opt.step(&mut model.params, &grad);
                d_losses.push(dv);
            }
            step += 1;
        }
        log::debug!("fine epoch {epoch}: loss {:.5}", mean(&g_losses));
        history.fine_loss.push(mean(&g_losses));
        history.disc_loss.push(mean(&d_losses));
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::ContextStack;
    use crate::map::BrushMask;
    use crate::nn::conv2d_forward;
    use crate::synth::{striped_stack, OBJECT_NAMES};

    fn small() -> BrushGan {
        BrushGan::new(
            BrushGanConfig {
                side: 16,
                width: 4,
                context_channels: 16,
                attn_dim: 4,
                disc_width: 4,
            },
            1,
        )
        .unwrap()
    }

    fn input(side: usize, brush: &BrushMask) -> MaskedChunkInput {
        MaskedChunkInput::new(
            &striped_stack(side, 5, 1),
            brush,
            ContextStack::blank(side, &OBJECT_NAMES),
        )
        .unwrap()
    }

    #[test]
    fn empty_brush_identity_and_shape() {
        let m = small();
        let i = input(16, &BrushMask::empty(16));
        let (coarse, fine) = m.forward(&i).unwrap();
        assert_eq!(fine, i.tiles);
        assert_eq!(coarse.side, 16);
    }

    #[test]
    fn discriminator_stride_arithmetic() {
        let m = small();
        let s = m
            .patch_discriminator(&striped_stack(16, 4, 0), &BrushMask::empty(16))
            .unwrap();
        assert_eq!(s.shape(), &[1, 2, 2]);
    }

    #[test]
    fn zero_gates_halve_every_layer() {
        let mut m = small();
        for slot in m.params.slots().to_vec() {
            if slot.name.contains(".g.") {
                m.params.slice_mut(&slot.name).unwrap().fill(0.0);
            }
        }
        let brush = BrushMask::from_fn(16, |x, _| x < 6);
        let i = input(16, &brush);
        let (coarse, _) = m.forward(&i).unwrap();

        let p = |n: &str| m.params.tensor(n).unwrap();
        let layer = |x: &Tensor, name: &str, stride: usize| {
            conv2d_forward(
                x,
                &p(&format!("{name}.f.w")),
                Some(&p(&format!("{name}.f.b"))),
                stride,
                1,
            )
            .map(|v| 0.5 * if v > 0.0 { v } else { LEAK * v })
        };
        let up = |x: &Tensor| {
            let (c, h, w) = x.chw();
            let mut o = Tensor::zeros(&[c, 2 * h, 2 * w]);
            for ch in 0..c {
                for y in 0..2 * h {
                    for xx in 0..2 * w {
                        o.data_mut()[(ch * 2 * h + y) * 2 * w + xx] = x.at3(ch, y / 2, xx / 2);
                    }
                }
            }
            o
        };
        let x = Tensor::concat_channels(&[
            &stack_to_tensor(&i.tiles),
            &plane_to_tensor(&brush.to_plane()),
        ]);
        let e1 = layer(&x, "coarse.e1", 1);
        let e2 = layer(&e1, "coarse.e2", 2);
        let e3 = layer(&e2, "coarse.e3", 2);
        let d1 = layer(&Tensor::concat_channels(&[&up(&e3), &e2]), "coarse.d1", 1);
        let d2 = layer(&Tensor::concat_channels(&[&up(&d1), &e1]), "coarse.d2", 1);
        let out = conv2d_forward(&d2, &p("coarse.out.w"), Some(&p("coarse.out.b")), 1, 1)
            .map(crate::nn::sigmoid);
        for (a, b) in coarse.data.iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn context_channel_mismatch() {
        let m = small();
        let i = MaskedChunkInput::new(
            &striped_stack(16, 5, 1),
            &BrushMask::full(16),
            ContextStack::blank(16, &[]),
        )
        .unwrap();
        assert!(matches!(
            m.forward(&i),
            Err(GeneratorError::ContextChannels { .. })
        ));
    }
}
