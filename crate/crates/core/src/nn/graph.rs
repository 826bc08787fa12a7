//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as it is evaluated; [`Graph::backward`]
//! walks the record in reverse and accumulates gradients for every node that
//! depends on a parameter leaf.

use super::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A user-defined differentiable map with one input.
pub trait UnaryFn: Send {
    fn forward(&self, x: &Tensor) -> Tensor;
    /// Gradient w.r.t. `x` given the output `y` and upstream gradient `dy`.
    fn backward(&self, x: &Tensor, y: &Tensor, dy: &Tensor) -> Tensor;
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    Upsample2x(Var),
    Concat(Vec<Var>),
    Reshape(Var),
    Transpose(Var),
    MatMul(Var, Var),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    Select {
        mask: Vec<bool>,
        when_true: Var,
        when_false: Var,
    },
    Custom(Var, Box<dyn UnaryFn>),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// A leaf whose gradient is wanted.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` target w.r.t. `v`, if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Add(a, b), t)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Sub(a, b), t)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Mul(a, b), t)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let t = self.tracked(a);
        self.push(value, Op::Scale(a, s), t)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        let t = self.tracked(a);
        self.push(value, Op::AddScalar(a), t)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let t = self.tracked(a);
        self.push(value, Op::Sigmoid(a), t)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let t = self.tracked(a);
        self.push(value, Op::Tanh(a), t)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let t = self.tracked(a);
        self.push(value, Op::LeakyRelu(a, slope), t)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    /// 2-D convolution of `x: [C, H, W]` with `w: [O, C, K, K]` and optional `b: [O]`,
    /// zero padding `pad` on every side.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let value = conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        );
        let t = self.tracked(x) || self.tracked(w) || b.is_some_and(|b| self.tracked(b));
        self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            },
            t,
        )
    }

    /// Nearest-neighbour 2× upsampling of `[C, H, W]`.
    pub fn upsample2x(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (c, h, w) = src.chw();
        let mut out = Tensor::zeros(&[c, 2 * h, 2 * w]);
        {
            let o = out.data_mut();
            for ch in 0..c {
                for y in 0..2 * h {
                    for x in 0..2 * w {
                        o[(ch * 2 * h + y) * 2 * w + x] = src.at3(ch, y / 2, x / 2);
                    }
                }
            }
        }
        let t = self.tracked(a);
        self.push(out, Op::Upsample2x(a), t)
    }

    /// Channel concatenation of `[C_i, H, W]` tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_channels(&tensors);
        let t = parts.iter().any(|&p| self.tracked(p));
        self.push(value, Op::Concat(parts.to_vec()), t)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self.value(a).clone().reshape(shape);
        let t = self.tracked(a);
        self.push(value, Op::Reshape(a), t)
    }

    /// Transpose of a `[rows, cols]` matrix.
    pub fn transpose(&mut self, a: Var) -> Var {
        let value = transpose(self.value(a));
        let t = self.tracked(a);
        self.push(value, Op::Transpose(a), t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matmul(self.value(a), self.value(b));
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, Op::MatMul(a, b), t)
    }

    /// Row-wise softmax of a `[rows, cols]` matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (rows, cols) = (src.shape()[0], src.shape()[1]);
        let mut out = src.clone();
        for r in 0..rows {
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let t = self.tracked(a);
        self.push(out, Op::SoftmaxRows(a), t)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let t = self.tracked(a);
        self.push(value, Op::Sum(a), t)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).mean());
        let t = self.tracked(a);
        self.push(value, Op::Mean(a), t)
    }

    /// Elementwise `mask ? when_true : when_false`. Values are copied, not blended.
    pub fn select(&mut self, mask: Vec<bool>, when_true: Var, when_false: Var) -> Var {
        let a = self.value(when_true);
        let b = self.value(when_false);
        assert_eq!(a.shape(), b.shape(), "select shape mismatch");
        assert_eq!(mask.len(), a.len(), "select mask length mismatch");
        let data = mask
            .iter()
            .zip(a.data().iter().zip(b.data()))
            .map(|(&m, (&x, &y))| if m { x } else { y })
            .collect();
        let value = Tensor::from_vec(a.shape(), data);
        let t = self.tracked(when_true) || self.tracked(when_false);
        self.push(
            value,
            Op::Select {
                mask,
                when_true,
                when_false,
            },
            t,
        )
    }

    pub fn custom(&mut self, a: Var, f: Box<dyn UnaryFn>) -> Var {
        let value = f.forward(self.value(a));
        let t = self.tracked(a);
        self.push(value, Op::Custom(a, f), t)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.square(d);
        self.mean(sq)
    }

    /// Reverse sweep from the scalar `loss`. Gradients are then available via [`Graph::grad`].
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).len(), 1, "backward target must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut acc = |v: Var, g: Tensor| {
                if !self.nodes[v.0].tracked {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(*a, dy.clone());
                    acc(*b, dy.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, dy.clone());
                    acc(*b, dy.map(|g| -g));
                }
                Op::Mul(a, b) => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    acc(*a, dy.zip_map(vb, |g, y| g * y));
                    acc(*b, dy.zip_map(va, |g, x| g * x));
                }
                Op::Scale(a, s) => acc(*a, dy.map(|g| g * s)),
                Op::AddScalar(a) => acc(*a, dy.clone()),
                Op::Sigmoid(a) => acc(*a, dy.zip_map(&node.value, |g, y| g * y * (1.0 - y))),
                Op::Tanh(a) => acc(*a, dy.zip_map(&node.value, |g, y| g * (1.0 - y * y))),
                Op::LeakyRelu(a, slope) => {
                    let x = &self.nodes[a.0].value;
                    let s = *slope;
                    acc(*a, dy.zip_map(x, |g, x| if x > 0.0 { g } else { s * g }));
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                } => {
                    let (dx, dw, db) = conv2d_backward(
                        &self.nodes[x.0].value,
                        &self.nodes[w.0].value,
                        &dy,
                        *stride,
                        *pad,
                    );
                    acc(*x, dx);
                    acc(*w, dw);
                    if let Some(b) = b {
                        acc(*b, db);
                    }
                }
                Op::Upsample2x(a) => {
                    let (c, h, w) = self.nodes[a.0].value.chw();
                    let mut g = Tensor::zeros(&[c, h, w]);
                    let gd = g.data_mut();
                    for ch in 0..c {
                        for y in 0..2 * h {
                            for x in 0..2 * w {
                                gd[(ch * h + y / 2) * w + x / 2] += dy.at3(ch, y, x);
                            }
                        }
                    }
                    acc(*a, g);
                }
                Op::Concat(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let pc = self.nodes[p.0].value.shape()[0];
                        acc(*p, dy.channels(c0, c0 + pc));
                        c0 += pc;
                    }
                }
                Op::Reshape(a) => acc(*a, dy.clone().reshape(self.nodes[a.0].value.shape())),
                Op::Transpose(a) => acc(*a, transpose(&dy)),
                Op::MatMul(a, b) => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    acc(*a, matmul(&dy, &transpose(vb)));
                    acc(*b, matmul(&transpose(va), &dy));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let (rows, cols) = (y.shape()[0], y.shape()[1]);
                    let mut g = Tensor::zeros(y.shape());
                    for r in 0..rows {
                        let yr = &y.data()[r * cols..(r + 1) * cols];
                        let dr = &dy.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            g.data_mut()[r * cols + c] = yr[c] * (dr[c] - dot);
                        }
                    }
                    acc(*a, g);
                }
                Op::Sum(a) => {
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    acc(*a, Tensor::filled(&shape, dy.item()));
                }
                Op::Mean(a) => {
                    let src = &self.nodes[a.0].value;
                    acc(
                        *a,
                        Tensor::filled(src.shape(), dy.item() / src.len() as f64),
                    );
                }
                Op::Select {
                    mask,
                    when_true,
                    when_false,
                } => {
                    let shape = dy.shape().to_vec();
                    let t: Vec<f64> = mask
                        .iter()
                        .zip(dy.data())
                        .map(|(&m, &g)| if m { g } else { 0.0 })
                        .collect();
                    let f: Vec<f64> = mask
                        .iter()
                        .zip(dy.data())
                        .map(|(&m, &g)| if m { 0.0 } else { g })
                        .collect();
                    acc(*when_true, Tensor::from_vec(&shape, t));
                    acc(*when_false, Tensor::from_vec(&shape, f));
                }
                Op::Custom(a, f) => {
                    let g = f.backward(&self.nodes[a.0].value, &node.value, &dy);
                    acc(*a, g);
                }
            }
            grads[i] = Some(dy);
        }
        self.grads = grads;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn transpose(a: &Tensor) -> Tensor {
    let (r, c) = (a.shape()[0], a.shape()[1]);
    let mut out = Tensor::zeros(&[c, r]);
    let o = out.data_mut();
    for i in 0..r {
        for j in 0..c {
            o[j * r + i] = a.data()[i * c + j];
        }
    }
    out
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let (k2, m) = (b.shape()[0], b.shape()[1]);
    assert_eq!(k, k2, "matmul inner dimension mismatch");
    let mut out = Tensor::zeros(&[n, m]);
    let o = out.data_mut();
    let (ad, bd) = (a.data(), b.data());
    for i in 0..n {
        let orow = &mut o[i * m..(i + 1) * m];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (ov, bv) in orow.iter_mut().zip(brow) {
                *ov += av * bv;
            }
        }
    }
    out
}

/// Output extent of a convolution along one axis.
pub fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - k) / stride + 1
}

/// Range of output positions whose input index `o*stride + k - pad` lands in `[0, len)`.
#[inline]
fn valid_range(len: usize, out_len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let hi = if len + pad > k {
        ((len + pad - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Tensor {
    let (c, h, wd) = x.chw();
    let ws = w.shape();
    assert_eq!(ws.len(), 4, "conv weight must be [O, C, K, K]");
    let (o, wc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    assert_eq!(wc, c, "conv input channels {c} do not match weight {wc}");
    let oh = conv_out_len(h, kh, stride, pad);
    let ow = conv_out_len(wd, kw, stride, pad);
    let mut out = Tensor::zeros(&[o, oh, ow]);
    let od = out.data_mut();
    let (xd, wdata) = (x.data(), w.data());
    for oc in 0..o {
        let plane = &mut od[oc * oh * ow..(oc + 1) * oh * ow];
        if let Some(b) = b {
            plane.fill(b.data()[oc]);
        }
        for ic in 0..c {
            let xin = &xd[ic * h * wd..(ic + 1) * h * wd];
            for ky in 0..kh {
                let (y_lo, y_hi) = valid_range(h, oh, ky, stride, pad);
                for kx in 0..kw {
                    let wv = wdata[((oc * c + ic) * kh + ky) * kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x_lo, x_hi) = valid_range(wd, ow, kx, stride, pad);
                    for oy in y_lo..y_hi {
                        let iy = oy * stride + ky - pad;
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        let irow = &xin[iy * wd..(iy + 1) * wd];
                        if stride == 1 {
                            let ix0 = x_lo + kx - pad;
                            for (ov, iv) in orow[x_lo..x_hi]
                                .iter_mut()
                                .zip(&irow[ix0..ix0 + (x_hi - x_lo)])
                            {
                                *ov += wv * iv;
                            }
                        } else {
                            for ox in x_lo..x_hi {
                                orow[ox] += wv * irow[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (c, h, wd) = x.chw();
    let ws = w.shape();
    let (o, kh, kw) = (ws[0], ws[2], ws[3]);
    let (_, oh, ow) = dy.chw();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[o]);
    let (xd, wdata, dyd) = (x.data(), w.data(), dy.data());
    {
        let dxd = dx.data_mut();
        let dwd = dw.data_mut();
        let dbd = db.data_mut();
        for oc in 0..o {
            let gplane = &dyd[oc * oh * ow..(oc + 1) * oh * ow];
            dbd[oc] = gplane.iter().sum();
            for ic in 0..c {
                let xin = &xd[ic * h * wd..(ic + 1) * h * wd];
                let dxin = &mut dxd[ic * h * wd..(ic + 1) * h * wd];
                for ky in 0..kh {
                    let (y_lo, y_hi) = valid_range(h, oh, ky, stride, pad);
                    for kx in 0..kw {
                        let widx = ((oc * c + ic) * kh + ky) * kw + kx;
                        let wv = wdata[widx];
                        let (x_lo, x_hi) = valid_range(wd, ow, kx, stride, pad);
                        let mut gw = 0.0;
                        for oy in y_lo..y_hi {
                            let iy = oy * stride + ky - pad;
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            let irow = &xin[iy * wd..(iy + 1) * wd];
                            let drow = &mut dxin[iy * wd..(iy + 1) * wd];
                            for ox in x_lo..x_hi {
                                let ix = ox * stride + kx - pad;
                                let g = grow[ox];
                                gw += g * irow[ix];
                                drow[ix] += g * wv;
                            }
                        }
                        dwd[widx] += gw;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}
