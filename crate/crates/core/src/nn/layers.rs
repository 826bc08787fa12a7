use serde::{Deserialize, Serialize};

use super::{shape_err, Graph, NnError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu(s) => g.leaky_relu(x, s),
            Activation::Tanh => g.tanh(x),
        }
    }
}

/// Convolution weight `[O, C, K, K]` and optional bias `[O]`.
#[derive(Clone, Copy, Debug)]
pub struct ConvWeights {
    pub w: Var,
    pub b: Option<Var>,
}

fn check_conv(g: &Graph, x: Var, c: &ConvWeights, op: &'static str) -> Result<usize, NnError> {
    let xs = g.shape(x);
    let ws = g.shape(c.w);
    if xs.len() != 3 || ws.len() != 4 || ws[2] != ws[3] {
        return Err(shape_err(op, format!("input {xs:?}, weight {ws:?}")));
    }
    if ws[1] != xs[0] {
        return Err(shape_err(
            op,
            format!("weight expects {} channels, input has {}", ws[1], xs[0]),
        ));
    }
    if let Some(b) = c.b {
        if g.shape(b) != [ws[0]] {
            return Err(shape_err(
                op,
                format!("bias {:?} for {} outputs", g.shape(b), ws[0]),
            ));
        }
    }
    Ok(ws[0])
}

pub fn conv(
    g: &mut Graph,
    x: Var,
    c: ConvWeights,
    stride: usize,
    pad: usize,
) -> Result<Var, NnError> {
    check_conv(g, x, &c, "conv")?;
    Ok(g.conv2d(x, c.w, c.b, stride, pad))
}

/// `act(conv_f(x)) ⊙ sigmoid(conv_g(x))`.
pub fn gated_conv(
    g: &mut Graph,
    x: Var,
    feature: ConvWeights,
    gate: ConvWeights,
    stride: usize,
    pad: usize,
    act: Activation,
) -> Result<Var, NnError> {
    let fo = check_conv(g, x, &feature, "gated_conv feature")?;
    let go = check_conv(g, x, &gate, "gated_conv gate")?;
    if fo != go || g.shape(feature.w)[2] != g.shape(gate.w)[2] {
        return Err(shape_err(
            "gated_conv",
            format!(
                "feature {:?} and gate {:?} disagree",
                g.shape(feature.w),
                g.shape(gate.w)
            ),
        ));
    }
    let f = g.conv2d(x, feature.w, feature.b, stride, pad);
    let f = act.apply(g, f);
    let gl = g.conv2d(x, gate.w, gate.b, stride, pad);
    let s = g.sigmoid(gl);
    Ok(g.mul(f, s))
}

/// `softmax(Q Kᵀ / √d_k) V` for `Q: [nq, d_k]`, `K: [nk, d_k]`, `V: [nk, d_v]`.
pub fn cross_attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<Var, NnError> {
    let (qs, ks, vs) = (
        g.shape(q).to_vec(),
        g.shape(k).to_vec(),
        g.shape(v).to_vec(),
    );
    if qs.len() != 2 || ks.len() != 2 || vs.len() != 2 {
        return Err(shape_err(
            "cross_attention",
            format!("Q {qs:?}, K {ks:?}, V {vs:?} must be matrices"),
        ));
    }
    if qs[1] != ks[1] {
        return Err(shape_err(
            "cross_attention",
            format!("Q width {} vs K width {}", qs[1], ks[1]),
        ));
    }
    if ks[0] != vs[0] {
        return Err(shape_err(
            "cross_attention",
            format!("{} keys vs {} values", ks[0], vs[0]),
        ));
    }
    let kt = g.transpose(k);
    let scores = g.matmul(q, kt);
    let scores = g.scale(scores, 1.0 / (qs[1] as f64).sqrt());
    let attn = g.softmax_rows(scores);
    Ok(g.matmul(attn, v))
}

/// `[C, H, W]` → `[H·W, C]` token matrix.
pub fn to_tokens(g: &mut Graph, x: Var) -> Var {
    let s = g.shape(x).to_vec();
    let flat = g.reshape(x, &[s[0], s[1] * s[2]]);
    g.transpose(flat)
}

/// `[H·W, C]` token matrix → `[C, H, W]`.
pub fn from_tokens(g: &mut Graph, t: Var, h: usize, w: usize) -> Var {
    let c = g.shape(t)[1];
    let tt = g.transpose(t);
    g.reshape(tt, &[c, h, w])
}

/// 1×1 convolution expressed on tokens: `[C_in, H, W]` with weight `[C_out, C_in, 1, 1]`.
pub fn pointwise(g: &mut Graph, x: Var, c: ConvWeights) -> Result<Var, NnError> {
    conv(g, x, c, 1, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn gate_zero_halves() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(&[1, 2, 2], vec![1.0, -2.0, 3.0, 0.5]));
        let wf = g.constant(Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]));
        let wg = g.constant(Tensor::zeros(&[1, 1, 1, 1]));
        let y = gated_conv(
            &mut g,
            x,
            ConvWeights { w: wf, b: None },
            ConvWeights { w: wg, b: None },
            1,
            0,
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(g.value(y).data(), &[1.0, -2.0, 3.0, 0.5]);
    }

    #[test]
    fn single_key_returns_value() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::from_vec(
            &[3, 2],
            vec![1.0, 2.0, -1.0, 0.0, 5.0, 5.0],
        ));
        let k = g.constant(Tensor::from_vec(&[1, 2], vec![0.3, 0.7]));
        let v = g.constant(Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]));
        let out = cross_attention(&mut g, q, k, v).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((g.value(out).at2(r, c) - (c + 1) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_attention_rejected() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::zeros(&[2, 3]));
        let k = g.constant(Tensor::zeros(&[2, 2]));
        let v = g.constant(Tensor::zeros(&[2, 2]));
        assert!(cross_attention(&mut g, q, k, v).is_err());
    }
}
