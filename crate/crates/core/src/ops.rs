//! Forward and backward kernels on [`Tensor`].
//!
//! Conventions shared by every kernel:
//! - convolutions are correlations (no kernel flip) with zero same-padding;
//! - `maxpool2` drops a trailing odd row/column and breaks ties by the
//!   first index in row-major order;
//! - `channel_std` is the population standard deviation over H×W;
//! - all sums are accumulated in `f64`.
//!
//! The `*_backward` functions return vector-Jacobian products and are
//! driven by [`crate::tape`].

use crate::error::{Axis, Error, Result};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvMode {
    /// One k×k filter per input channel; weight shape (C, 1, k, k).
    Depthwise,
    /// 1×1 channel mixing; weight shape (C_out, C_in, 1, 1).
    Pointwise,
    /// Full k×k cross-channel filter; weight shape (C_out, C_in, k, k).
    Dense,
}

/// Convolution weights plus optional per-output-channel bias of shape
/// (1, C_out, 1, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct KernelWeights<T = f32> {
    pub mode: ConvMode,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Real> KernelWeights<T> {
    pub fn new(mode: ConvMode, weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        validate_weights(mode, weight.shape(), bias.as_ref().map(|b| b.shape()), None)?;
        Ok(KernelWeights { mode, weight, bias })
    }

    pub fn depthwise(weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        Self::new(ConvMode::Depthwise, weight, bias)
    }

    pub fn pointwise(weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        Self::new(ConvMode::Pointwise, weight, bias)
    }

    pub fn dense(weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        Self::new(ConvMode::Dense, weight, bias)
    }

    /// Pointwise weights from a row-major `out × in` matrix.
    pub fn from_matrix(rows: usize, cols: usize, matrix: &[f64], bias: Option<&[f64]>) -> Result<Self> {
        let weight = Tensor::from_f64_vec(Shape::new(rows, cols, 1, 1)?, matrix.to_vec())?;
        let bias = bias
            .map(|b| Tensor::from_f64_vec(Shape::new(1, rows, 1, 1)?, b.to_vec()))
            .transpose()?;
        Self::pointwise(weight, bias)
    }

    pub fn identity(channels: usize) -> Result<Self> {
        let mut m = vec![0.0; channels * channels];
        for i in 0..channels {
            m[i * channels + i] = 1.0;
        }
        Self::from_matrix(channels, channels, &m, None)
    }

    pub fn in_channels(&self) -> usize {
        match self.mode {
            ConvMode::Depthwise => self.weight.shape().batch,
            _ => self.weight.shape().channels,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().batch
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.shape().height
    }
}

fn validate_weights(
    mode: ConvMode,
    w: Shape,
    bias: Option<Shape>,
    input_channels: Option<usize>,
) -> Result<()> {
    const OP: &str = "conv2d";
    if w.height != w.width {
        return Err(Error::Axis {
            op: OP,
            axis: Axis::Width,
            expected: w.height,
            found: w.width,
        });
    }
    if w.height.is_multiple_of(2) {
        return Err(Error::Domain(format!("{OP}: kernel extent {} is not odd", w.height)));
    }
    match mode {
        ConvMode::Depthwise if w.channels != 1 => {
            return Err(Error::Axis {
                op: OP,
                axis: Axis::Channel,
                expected: 1,
                found: w.channels,
            })
        }
        ConvMode::Pointwise if w.height != 1 => {
            return Err(Error::Axis {
                op: OP,
                axis: Axis::Height,
                expected: 1,
                found: w.height,
            })
        }
        _ => {}
    }
    if let Some(c) = input_channels {
        let expected = match mode {
            ConvMode::Depthwise => w.batch,
            _ => w.channels,
        };
        if c != expected {
            return Err(Error::Axis {
                op: OP,
                axis: Axis::Channel,
                expected,
                found: c,
            });
        }
    }
    if let Some(b) = bias {
        if b.batch != 1 || b.height != 1 || b.width != 1 || b.channels != w.batch {
            return Err(Error::Axis {
                op: "conv2d bias",
                axis: Axis::Channel,
                expected: w.batch,
                found: b.channels,
            });
        }
    }
    Ok(())
}

/// Same-padded correlation.
pub fn conv2d<T: Real>(x: &Tensor<T>, w: &KernelWeights<T>) -> Result<Tensor<T>> {
    conv_forward(x, w.mode, &w.weight, w.bias.as_ref())
}

pub(crate) fn conv_forward<T: Real>(
    x: &Tensor<T>,
    mode: ConvMode,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ws = weight.shape();
    validate_weights(mode, ws, bias.map(|b| b.shape()), Some(xs.channels))?;
    let out_c = ws.batch;
    let out_shape = xs.with_channels(out_c);
    let k = ws.height;
    let r = (k / 2) as isize;
    let (h, w) = (xs.height as isize, xs.width as isize);
    let wd = weight.data();
    let xd = x.data();
    let mut out = Vec::with_capacity(out_shape.numel());
    let mut acc = vec![0.0f64; xs.plane()];
    for b in 0..xs.batch {
        for o in 0..out_c {
            let b0 = bias.map_or(0.0, |t| t.data()[o].to_f64());
            acc.iter_mut().for_each(|a| *a = b0);
            for (ci, wbase) in taps(mode, o, xs.channels, k) {
                let plane = &xd[xs.offset(b, ci, 0, 0)..][..xs.plane()];
                for dy in 0..k as isize {
                    for dx in 0..k as isize {
                        let wv = wd[wbase + (dy as usize) * k + dx as usize].to_f64();
                        if wv == 0.0 {
                            continue;
                        }
                        let (oy, ox) = (dy - r, dx - r);
                        for y in 0.max(-oy)..h.min(h - oy) {
                            let src = &plane[((y + oy) * w) as usize..][..w as usize];
                            let dst = &mut acc[(y * w) as usize..][..w as usize];
                            for xx in 0.max(-ox)..w.min(w - ox) {
                                dst[xx as usize] += wv * src[(xx + ox) as usize].to_f64();
                            }
                        }
                    }
                }
            }
            out.extend(acc.iter().map(|&v| T::from_f64(v)));
        }
    }
    Tensor::new(out_shape, out)
}

/// (input channel, flat weight offset) pairs feeding output channel `o`.
fn taps(mode: ConvMode, o: usize, in_c: usize, k: usize) -> Vec<(usize, usize)> {
    match mode {
        ConvMode::Depthwise => vec![(o, o * k * k)],
        _ => (0..in_c).map(|ci| (ci, (o * in_c + ci) * k * k)).collect(),
    }
}

pub(crate) struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn conv_backward<T: Real>(
    x: &Tensor<T>,
    mode: ConvMode,
    weight: &Tensor<T>,
    has_bias: bool,
    grad: &Tensor<T>,
) -> ConvGrads<T> {
    let xs = x.shape();
    let ws = weight.shape();
    let k = ws.height;
    let r = (k / 2) as isize;
    let (h, w) = (xs.height as isize, xs.width as isize);
    let (xd, wd, gd) = (x.data(), weight.data(), grad.data());
    let mut dx = vec![0.0f64; xs.numel()];
    let mut dw = vec![0.0f64; ws.numel()];
    let mut db = vec![0.0f64; ws.batch];
    let gs = grad.shape();
    for b in 0..xs.batch {
        for o in 0..ws.batch {
            let gplane = &gd[gs.offset(b, o, 0, 0)..][..gs.plane()];
            if has_bias {
                db[o] += gplane.iter().map(|v| v.to_f64()).sum::<f64>();
            }
            for (ci, wbase) in taps(mode, o, xs.channels, k) {
                let xoff = xs.offset(b, ci, 0, 0);
                for dy in 0..k as isize {
                    for ddx in 0..k as isize {
                        let widx = wbase + (dy as usize) * k + ddx as usize;
                        let wv = wd[widx].to_f64();
                        let (oy, ox) = (dy - r, ddx - r);
                        let mut wacc = 0.0;
                        for y in 0.max(-oy)..h.min(h - oy) {
                            for xx in 0.max(-ox)..w.min(w - ox) {
                                let g = gplane[(y * w + xx) as usize].to_f64();
                                let src = xoff + ((y + oy) * w + xx + ox) as usize;
                                wacc += g * xd[src].to_f64();
                                dx[src] += g * wv;
                            }
                        }
                        dw[widx] += wacc;
                    }
                }
            }
        }
    }
    ConvGrads {
        input: from_f64(xs, dx),
        weight: from_f64(ws, dw),
        bias: has_bias.then(|| from_f64(Shape { batch: 1, channels: ws.batch, height: 1, width: 1 }, db)),
    }
}

pub(crate) fn from_f64<T: Real>(shape: Shape, v: Vec<f64>) -> Tensor<T> {
    Tensor::from_f64_vec(shape, v).expect("kernel produced a buffer matching its shape")
}

/// 2×2 max pooling with stride 2.
pub fn maxpool2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    maxpool2_with_argmax(x).map(|(t, _)| t)
}

/// Pooled tensor plus, for each output entry, the flat input index it was
/// taken from.
pub(crate) fn maxpool2_with_argmax<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = x.shape();
    if s.height < 2 || s.width < 2 {
        return Err(Error::PoolUnderflow {
            height: s.height,
            width: s.width,
        });
    }
    let out_shape = s.with_spatial(s.height / 2, s.width / 2);
    let mut out = Vec::with_capacity(out_shape.numel());
    let mut arg = Vec::with_capacity(out_shape.numel());
    let d = x.data();
    for b in 0..s.batch {
        for c in 0..s.channels {
            for oy in 0..out_shape.height {
                for ox in 0..out_shape.width {
                    let mut best = s.offset(b, c, 2 * oy, 2 * ox);
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = s.offset(b, c, 2 * oy + dy, 2 * ox + dx);
                        if d[i] > d[best] {
                            best = i;
                        }
                    }
                    out.push(d[best]);
                    arg.push(best);
                }
            }
        }
    }
    Ok((Tensor::new(out_shape, out)?, arg))
}

pub(crate) fn scatter_backward<T: Real>(input: Shape, argmax: &[usize], grad: &Tensor<T>) -> Tensor<T> {
    let mut dx = vec![0.0f64; input.numel()];
    for (&i, g) in argmax.iter().zip(grad.data()) {
        dx[i] += g.to_f64();
    }
    from_f64(input, dx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReduceKind {
    /// Mean over H×W.
    GlobalAvg,
    /// Population standard deviation over H×W.
    ChannelStd,
}

/// Per-(batch, channel) spatial statistic, shape (B, C, 1, 1).
pub fn reduce<T: Real>(x: &Tensor<T>, kind: ReduceKind) -> Tensor<T> {
    let s = x.shape();
    let n = s.plane() as f64;
    let mut out = Vec::with_capacity(s.batch * s.channels);
    for b in 0..s.batch {
        for c in 0..s.channels {
            let p = x.plane(b, c);
            let mean = p.iter().map(|v| v.to_f64()).sum::<f64>() / n;
            out.push(match kind {
                ReduceKind::GlobalAvg => mean,
                ReduceKind::ChannelStd => {
                    let var = p.iter().map(|v| (v.to_f64() - mean).powi(2)).sum::<f64>() / n;
                    var.sqrt()
                }
            });
        }
    }
    from_f64(s.with_spatial(1, 1), out)
}

pub(crate) fn reduce_backward<T: Real>(
    x: &Tensor<T>,
    out: &Tensor<T>,
    kind: ReduceKind,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let s = x.shape();
    let n = s.plane() as f64;
    let mut dx = Vec::with_capacity(s.numel());
    for b in 0..s.batch {
        for c in 0..s.channels {
            let g = grad.data()[b * s.channels + c].to_f64();
            let p = x.plane(b, c);
            match kind {
                ReduceKind::GlobalAvg => dx.extend(std::iter::repeat_n(g / n, p.len())),
                ReduceKind::ChannelStd => {
                    let sd = out.data()[b * s.channels + c].to_f64();
                    let mean = p.iter().map(|v| v.to_f64()).sum::<f64>() / n;
                    // std is not differentiable at 0; take the zero subgradient.
                    let scale = if sd > 0.0 { g / (n * sd) } else { 0.0 };
                    dx.extend(p.iter().map(|v| scale * (v.to_f64() - mean)));
                }
            }
        }
    }
    from_f64(s, dx)
}

/// Pointwise maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Sigmoid,
    Relu,
    /// x·σ(x)
    Silu,
    Abs,
    /// exp(−x)
    ExpNeg,
    /// ln(1 + eˣ)
    Softplus,
    /// scale·x + shift
    Affine { scale: f64, shift: f64 },
    Square,
    Sqrt,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

impl Unary {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(x),
            Unary::Relu => x.max(0.0),
            Unary::Silu => x * sigmoid(x),
            Unary::Abs => x.abs(),
            Unary::ExpNeg => (-x).exp(),
            Unary::Softplus => softplus(x),
            Unary::Affine { scale, shift } => scale * x + shift,
            Unary::Square => x * x,
            Unary::Sqrt => x.sqrt(),
        }
    }

    /// dy/dx given input `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Silu => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::ExpNeg => -y,
            Unary::Softplus => sigmoid(x),
            Unary::Affine { scale, .. } => scale,
            Unary::Square => 2.0 * x,
            Unary::Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn elementwise<T: Real>(x: &Tensor<T>, kind: Unary) -> Tensor<T> {
    x.map(|v| kind.apply(v))
}

pub(crate) fn unary_backward<T: Real>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    kind: Unary,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let v = x
        .data()
        .iter()
        .zip(y.data())
        .zip(grad.data())
        .map(|((x, y), g)| g.to_f64() * kind.derivative(x.to_f64(), y.to_f64()))
        .collect();
    from_f64(x.shape(), v)
}

fn nearest_index(i: usize, src: usize, dst: usize) -> usize {
    i * src / dst
}

/// Nearest-neighbour upsampling: output (i, j) reads source
/// (⌊i·H/H'⌋, ⌊j·W/W'⌋).
pub fn upsample_nearest<T: Real>(x: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if height < s.height || width < s.width {
        return Err(Error::UpsampleTarget {
            height: s.height,
            width: s.width,
            target_height: height,
            target_width: width,
        });
    }
    let out = s.with_spatial(height, width);
    Ok(Tensor::from_fn(out, |b, c, y, xx| {
        x.at(b, c, nearest_index(y, s.height, height), nearest_index(xx, s.width, width))
            .to_f64()
    }))
}

pub(crate) fn upsample_backward<T: Real>(input: Shape, grad: &Tensor<T>) -> Tensor<T> {
    let gs = grad.shape();
    let mut dx = vec![0.0f64; input.numel()];
    for b in 0..gs.batch {
        for c in 0..gs.channels {
            for y in 0..gs.height {
                let sy = nearest_index(y, input.height, gs.height);
                for x in 0..gs.width {
                    let sx = nearest_index(x, input.width, gs.width);
                    dx[input.offset(b, c, sy, sx)] += grad.at(b, c, y, x).to_f64();
                }
            }
        }
    }
    from_f64(input, dx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        }
    }
}

/// Result shape when every axis is either equal or 1 on one side.
pub fn broadcast_shape(a: Shape, b: Shape, op: &'static str) -> Result<Shape> {
    let (da, db) = (a.dims(), b.dims());
    let mut out = [0; 4];
    for i in 0..4 {
        out[i] = match (da[i], db[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::Incompatible { op, left: a, right: b }),
        };
    }
    Shape::new(out[0], out[1], out[2], out[3])
}

/// Flat index into a possibly-broadcast operand.
#[inline]
fn bidx(s: Shape, b: usize, c: usize, y: usize, x: usize) -> usize {
    let b = if s.batch == 1 { 0 } else { b };
    let c = if s.channels == 1 { 0 } else { c };
    let y = if s.height == 1 { 0 } else { y };
    let x = if s.width == 1 { 0 } else { x };
    s.offset(b, c, y, x)
}

pub fn binary<T: Real>(a: &Tensor<T>, b: &Tensor<T>, kind: Binary) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    let out = broadcast_shape(sa, sb, kind.name())?;
    if sa == sb {
        let v = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| kind.apply(x.to_f64(), y.to_f64()))
            .collect();
        return Ok(from_f64(out, v));
    }
    Ok(Tensor::from_fn(out, |n, c, y, x| {
        kind.apply(
            a.data()[bidx(sa, n, c, y, x)].to_f64(),
            b.data()[bidx(sb, n, c, y, x)].to_f64(),
        )
    }))
}

pub(crate) fn binary_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    kind: Binary,
    grad: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let (sa, sb) = (a.shape(), b.shape());
    let gs = grad.shape();
    let mut da = vec![0.0f64; sa.numel()];
    let mut db = vec![0.0f64; sb.numel()];
    for n in 0..gs.batch {
        for c in 0..gs.channels {
            for y in 0..gs.height {
                for x in 0..gs.width {
                    let g = grad.data()[gs.offset(n, c, y, x)].to_f64();
                    let (ia, ib) = (bidx(sa, n, c, y, x), bidx(sb, n, c, y, x));
                    let (av, bv) = (a.data()[ia].to_f64(), b.data()[ib].to_f64());
                    let (ga, gb) = match kind {
                        Binary::Add => (g, g),
                        Binary::Sub => (g, -g),
                        Binary::Mul => (g * bv, g * av),
                        Binary::Div => (g / bv, -g * av / (bv * bv)),
                    };
                    da[ia] += ga;
                    db[ib] += gb;
                }
            }
        }
    }
    (from_f64(sa, da), from_f64(sb, db))
}

/// Channels `start .. start + len`.
pub fn slice_channels<T: Real>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if len == 0 || start + len > s.channels {
        return Err(Error::Axis {
            op: "slice_channels",
            axis: Axis::Channel,
            expected: start + len.max(1),
            found: s.channels,
        });
    }
    let out = s.with_channels(len);
    let mut v = Vec::with_capacity(out.numel());
    for b in 0..s.batch {
        for c in start..start + len {
            v.extend_from_slice(x.plane(b, c));
        }
    }
    Tensor::new(out, v)
}

pub(crate) fn slice_channels_backward<T: Real>(input: Shape, start: usize, grad: &Tensor<T>) -> Tensor<T> {
    let gs = grad.shape();
    let mut dx = vec![0.0f64; input.numel()];
    for b in 0..gs.batch {
        for c in 0..gs.channels {
            let dst = input.offset(b, start + c, 0, 0);
            for (i, g) in grad.plane(b, c).iter().enumerate() {
                dx[dst + i] = g.to_f64();
            }
        }
    }
    from_f64(input, dx)
}

/// Softmax across the channel axis at every (batch, y, x).
pub fn softmax_channels<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let mut v = vec![0.0f64; s.numel()];
    for b in 0..s.batch {
        for p in 0..s.plane() {
            let idx = |c: usize| (b * s.channels + c) * s.plane() + p;
            let m = (0..s.channels)
                .map(|c| x.data()[idx(c)].to_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..s.channels).map(|c| (x.data()[idx(c)].to_f64() - m).exp()).sum();
            for c in 0..s.channels {
                v[idx(c)] = (x.data()[idx(c)].to_f64() - m).exp() / z;
            }
        }
    }
    from_f64(s, v)
}

pub(crate) fn softmax_channels_backward<T: Real>(y: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let s = y.shape();
    let mut dx = vec![0.0f64; s.numel()];
    for b in 0..s.batch {
        for p in 0..s.plane() {
            let idx = |c: usize| (b * s.channels + c) * s.plane() + p;
            let dot: f64 = (0..s.channels)
                .map(|c| y.data()[idx(c)].to_f64() * grad.data()[idx(c)].to_f64())
                .sum();
            for c in 0..s.channels {
                let yc = y.data()[idx(c)].to_f64();
                dx[idx(c)] = yc * (grad.data()[idx(c)].to_f64() - dot);
            }
        }
    }
    from_f64(s, dx)
}

/// Per-image maximum over (C, H, W), shape (B, 1, 1, 1), with the flat
/// argmax (first occurrence) of each image.
pub(crate) fn max_per_image<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let s = x.shape();
    let per = s.channels * s.plane();
    let mut vals = Vec::with_capacity(s.batch);
    let mut arg = Vec::with_capacity(s.batch);
    for b in 0..s.batch {
        let base = b * per;
        let mut best = base;
        for i in base..base + per {
            if x.data()[i] > x.data()[best] {
                best = i;
            }
        }
        vals.push(x.data()[best]);
        arg.push(best);
    }
    (
        Tensor::new(Shape { batch: s.batch, channels: 1, height: 1, width: 1 }, vals)
            .expect("one value per image"),
        arg,
    )
}

/// Normalises each (batch, y, x) fibre across channels to zero mean and
/// unit variance, `(v − μ) / √(σ² + eps)`. A single channel has no spread
/// and maps to 0.
pub fn channel_norm<T: Real>(x: &Tensor<T>, eps: f64) -> Tensor<T> {
    let s = x.shape();
    let mut v = vec![0.0f64; s.numel()];
    if s.channels > 1 {
        let n = s.channels as f64;
        for b in 0..s.batch {
            for p in 0..s.plane() {
                let idx = |c: usize| (b * s.channels + c) * s.plane() + p;
                let mean = (0..s.channels).map(|c| x.data()[idx(c)].to_f64()).sum::<f64>() / n;
                let var = (0..s.channels)
                    .map(|c| (x.data()[idx(c)].to_f64() - mean).powi(2))
                    .sum::<f64>()
                    / n;
                let inv = 1.0 / (var + eps).sqrt();
                for c in 0..s.channels {
                    v[idx(c)] = (x.data()[idx(c)].to_f64() - mean) * inv;
                }
            }
        }
    }
    from_f64(s, v)
}

pub(crate) fn channel_norm_backward<T: Real>(x: &Tensor<T>, eps: f64, grad: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let mut dx = vec![0.0f64; s.numel()];
    if s.channels > 1 {
        let n = s.channels as f64;
        for b in 0..s.batch {
            for p in 0..s.plane() {
                let idx = |c: usize| (b * s.channels + c) * s.plane() + p;
                let mean = (0..s.channels).map(|c| x.data()[idx(c)].to_f64()).sum::<f64>() / n;
                let var = (0..s.channels)
                    .map(|c| (x.data()[idx(c)].to_f64() - mean).powi(2))
                    .sum::<f64>()
                    / n;
                let inv = 1.0 / (var + eps).sqrt();
                let xhat = |c: usize| (x.data()[idx(c)].to_f64() - mean) * inv;
                let g = |c: usize| grad.data()[idx(c)].to_f64();
                let gmean = (0..s.channels).map(g).sum::<f64>() / n;
                let gxmean = (0..s.channels).map(|c| g(c) * xhat(c)).sum::<f64>() / n;
                for c in 0..s.channels {
                    dx[idx(c)] = inv * (g(c) - gmean - xhat(c) * gxmean);
                }
            }
        }
    }
    from_f64(s, dx)
}
