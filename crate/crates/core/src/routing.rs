//! Content-adaptive routing across a three-level feature pyramid.
//!
//! An importance estimator turns the mid level into per-pixel, per-channel
//! scores; a pointwise head maps those scores to four single-channel path
//! weights that open or close three cross-scale paths and one self path.
//! Fusion and self modulation use the fixed constants [`BA`] and [`IDAS`].

use crate::error::{Axis, Error, Result};
use crate::ops::{ConvMode, KernelWeights, ReduceKind};
use crate::rng::Prng;
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Shape, Tensor};

/// Bias added to the modulation term.
pub const BA: f64 = 0.5;
/// Identity weight of the self path.
pub const IDAS: f64 = 1.0;
/// Guard in the std normaliser of the diversity branch.
pub const DIVERSITY_EPS: f64 = 1e-6;

/// Reduction width of the importance branches.
pub fn reduced_width(channels: usize) -> usize {
    (channels / 4).max(1)
}

fn cast_kw<T: Real, U: Real>(k: &KernelWeights<T>) -> KernelWeights<U> {
    KernelWeights { mode: k.mode, weight: k.weight.cast(), bias: k.bias.as_ref().map(|b| b.cast()) }
}

fn init_kw<T: Real>(rng: &mut Prng, mode: ConvMode, out: usize, inp: usize, k: usize) -> Result<KernelWeights<T>> {
    let wc = if mode == ConvMode::Depthwise { 1 } else { inp };
    let fan_in = wc * k * k;
    let w = rng.init_tensor(Shape::new(out, wc, k, k)?, fan_in);
    let b = rng.init_tensor(Shape::new(1, out, 1, 1)?, fan_in);
    KernelWeights::new(mode, w, Some(b))
}

fn zero_kw<T: Real>(mode: ConvMode, out: usize, inp: usize, k: usize) -> Result<KernelWeights<T>> {
    KernelWeights::new(mode, Tensor::zeros(Shape::new(out, inp, k, k)?), Some(Tensor::zeros(Shape::new(1, out, 1, 1)?)))
}

/// Tensors of a list of kernels in (weight, bias) order.
fn kw_params<T: Real>(prefix: &str, ks: &[(&str, &KernelWeights<T>)]) -> Vec<(String, Tensor<T>)> {
    let mut out = Vec::new();
    for (name, k) in ks {
        out.push((format!("{prefix}{name}.weight"), k.weight.clone()));
        out.push((format!("{prefix}{name}.bias"), k.bias.clone().expect("routing kernels carry a bias")));
    }
    out
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: Var,
    b: Var,
    mode: ConvMode,
}

impl Conv {
    fn apply<T: Real>(self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        tape.conv2d(x, self.w, Some(self.b), self.mode)
    }
}

fn bind_convs(leaves: &[Var], modes: &[ConvMode]) -> Vec<Conv> {
    modes.iter().enumerate().map(|(i, &mode)| Conv { w: leaves[2 * i], b: leaves[2 * i + 1], mode }).collect()
}

/// Three-branch importance estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceParams<T = f32> {
    pub global_reduce: KernelWeights<T>,
    pub global_expand: KernelWeights<T>,
    /// Dense 3×3, C → C_r.
    pub local_reduce: KernelWeights<T>,
    pub local_expand: KernelWeights<T>,
    pub diversity_reduce: KernelWeights<T>,
    pub diversity_expand: KernelWeights<T>,
    /// Branch logits (global, local, diversity); softmax gives the weights.
    pub fusion_logits: [f64; 3],
}

impl<T: Real> ImportanceParams<T> {
    pub fn init(channels: usize, rng: &mut Prng) -> Result<Self> {
        let (c, r) = (channels, reduced_width(channels));
        Ok(ImportanceParams {
            global_reduce: init_kw(rng, ConvMode::Pointwise, r, c, 1)?,
            global_expand: init_kw(rng, ConvMode::Pointwise, c, r, 1)?,
            local_reduce: init_kw(rng, ConvMode::Dense, r, c, 3)?,
            local_expand: init_kw(rng, ConvMode::Pointwise, c, r, 1)?,
            diversity_reduce: init_kw(rng, ConvMode::Pointwise, r, c, 1)?,
            diversity_expand: init_kw(rng, ConvMode::Pointwise, c, r, 1)?,
            fusion_logits: [0.0; 3],
        })
    }

    /// Every weight and bias zero, equal fusion logits.
    pub fn zeros(channels: usize) -> Result<Self> {
        let (c, r) = (channels, reduced_width(channels));
        Ok(ImportanceParams {
            global_reduce: zero_kw(ConvMode::Pointwise, r, c, 1)?,
            global_expand: zero_kw(ConvMode::Pointwise, c, r, 1)?,
            local_reduce: zero_kw(ConvMode::Dense, r, c, 3)?,
            local_expand: zero_kw(ConvMode::Pointwise, c, r, 1)?,
            diversity_reduce: zero_kw(ConvMode::Pointwise, r, c, 1)?,
            diversity_expand: zero_kw(ConvMode::Pointwise, c, r, 1)?,
            fusion_logits: [0.0; 3],
        })
    }

    pub fn channels(&self) -> usize {
        self.global_reduce.in_channels()
    }

    /// (w_g, w_l, w_d)
    pub fn fusion_weights(&self) -> [f64; 3] {
        softmax3(self.fusion_logits)
    }

    pub fn cast<U: Real>(&self) -> ImportanceParams<U> {
        ImportanceParams {
            global_reduce: cast_kw(&self.global_reduce),
            global_expand: cast_kw(&self.global_expand),
            local_reduce: cast_kw(&self.local_reduce),
            local_expand: cast_kw(&self.local_expand),
            diversity_reduce: cast_kw(&self.diversity_reduce),
            diversity_expand: cast_kw(&self.diversity_expand),
            fusion_logits: self.fusion_logits,
        }
    }

    fn kernels(&self) -> [(&'static str, &KernelWeights<T>); 6] {
        [
            ("global_reduce", &self.global_reduce),
            ("global_expand", &self.global_expand),
            ("local_reduce", &self.local_reduce),
            ("local_expand", &self.local_expand),
            ("diversity_reduce", &self.diversity_reduce),
            ("diversity_expand", &self.diversity_expand),
        ]
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = kw_params("importance.", &self.kernels());
        let l = self.fusion_logits;
        out.push((
            "importance.fusion_logits".into(),
            Tensor::from_f64_vec(Shape { batch: 1, channels: 3, height: 1, width: 1 }, l.to_vec()).expect("3 logits"),
        ));
        out
    }

    pub fn param_count(&self) -> usize {
        13
    }

    pub fn bind(&self, leaves: &[Var]) -> ImportanceVars {
        let modes: Vec<ConvMode> = self.kernels().iter().map(|(_, k)| k.mode).collect();
        let c = bind_convs(leaves, &modes);
        ImportanceVars { convs: [c[0], c[1], c[2], c[3], c[4], c[5]], logits: leaves[12] }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> Result<ImportanceVars> {
        let leaves: Vec<Var> = self.named_params().into_iter().map(|(_, t)| tape.leaf(t)).collect();
        Ok(self.bind(&leaves))
    }
}

pub fn softmax3(l: [f64; 3]) -> [f64; 3] {
    let m = l[0].max(l[1]).max(l[2]);
    let e = l.map(|v| (v - m).exp());
    let s = e[0] + e[1] + e[2];
    e.map(|v| v / s)
}

#[derive(Clone, Copy, Debug)]
pub struct ImportanceVars {
    convs: [Conv; 6],
    logits: Var,
}

fn branch<T: Real>(tape: &mut Tape<T>, x: Var, reduce: Conv, expand: Conv) -> Result<Var> {
    let h = reduce.apply(tape, x)?;
    let h = tape.relu(h)?;
    let h = expand.apply(tape, h)?;
    tape.sigmoid(h)
}

/// I = σ(w_g·G̃ + w_l·L + w_d·D), shape of `x`.
pub fn record_importance<T: Real>(tape: &mut Tape<T>, x: Var, v: &ImportanceVars) -> Result<Var> {
    let s = tape.shape(x);
    let [gr, ge, lr, le, dr, de] = v.convs;

    let pooled = tape.reduce(x, ReduceKind::GlobalAvg)?;
    let g = branch(tape, pooled, gr, ge)?;
    let g = tape.upsample(g, s.height, s.width)?;

    let l = branch(tape, x, lr, le)?;

    let d = branch(tape, x, dr, de)?;
    let std = tape.reduce(x, ReduceKind::ChannelStd)?;
    let max = tape.max_per_image(std)?;
    let den = tape.affine(max, 1.0, DIVERSITY_EPS)?;
    let s_norm = tape.div(std, den)?;
    let d = tape.mul(d, s_norm)?;

    let w = tape.softmax_channels(v.logits)?;
    let mut acc = None;
    for (i, branch) in [g, l, d].into_iter().enumerate() {
        let wi = tape.slice_channels(w, i, 1)?;
        let term = tape.mul(branch, wi)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    tape.sigmoid(acc.expect("three branches"))
}

fn check_channels(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Axis { op, axis: Axis::Channel, expected, found })
    }
}

pub fn importance_map<T: Real>(x: &Tensor<T>, p: &ImportanceParams<T>) -> Result<Tensor<T>> {
    check_channels("importance_map", p.channels(), x.shape().channels)?;
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let v = p.register(&mut tape)?;
    let out = record_importance(&mut tape, xv, &v)?;
    Ok(tape.value(out).clone())
}

/// Pointwise C → 4 head with bias.
#[derive(Clone, Debug, PartialEq)]
pub struct PathHead<T = f32> {
    pub proj: KernelWeights<T>,
}

impl<T: Real> PathHead<T> {
    pub fn init(channels: usize, rng: &mut Prng) -> Result<Self> {
        Ok(PathHead { proj: init_kw(rng, ConvMode::Pointwise, 4, channels, 1)? })
    }

    pub fn zeros(channels: usize) -> Result<Self> {
        Ok(PathHead { proj: zero_kw(ConvMode::Pointwise, 4, channels, 1)? })
    }

    /// Zero weights with every bias set to `bias`; ±large closes or opens all paths.
    pub fn constant(channels: usize, bias: f64) -> Result<Self> {
        let mut h = Self::zeros(channels)?;
        h.proj.bias = Some(Tensor::full(Shape::new(1, 4, 1, 1)?, bias));
        Ok(h)
    }

    pub fn cast<U: Real>(&self) -> PathHead<U> {
        PathHead { proj: cast_kw(&self.proj) }
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        kw_params("path_head.", &[("proj", &self.proj)])
    }

    fn bind(&self, leaves: &[Var]) -> PathHeadVars {
        PathHeadVars { w: leaves[0], b: leaves[1] }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PathHeadVars {
    w: Var,
    b: Var,
}

/// W₁…W₄, each (B, 1, H, W) in (0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct PathWeights<T = f32> {
    pub maps: [Tensor<T>; 4],
}

pub fn record_path_weights<T: Real>(tape: &mut Tape<T>, importance: Var, v: &PathHeadVars) -> Result<[Var; 4]> {
    let logits = tape.conv2d(importance, v.w, Some(v.b), ConvMode::Pointwise)?;
    let w = tape.sigmoid(logits)?;
    Ok([tape.slice_channels(w, 0, 1)?, tape.slice_channels(w, 1, 1)?, tape.slice_channels(w, 2, 1)?, tape.slice_channels(w, 3, 1)?])
}

pub fn path_weights<T: Real>(importance: &Tensor<T>, head: &PathHead<T>) -> Result<PathWeights<T>> {
    check_channels("path_weights", head.proj.in_channels(), importance.shape().channels)?;
    let mut tape = Tape::new();
    let iv = tape.leaf(importance.clone());
    let leaves: Vec<Var> = head.named_params().into_iter().map(|(_, t)| tape.leaf(t)).collect();
    let w = record_path_weights(&mut tape, iv, &head.bind(&leaves))?;
    Ok(PathWeights { maps: w.map(|v| tape.value(v).clone()) })
}

fn check_weight_map(op: &'static str, f: Shape, w: Shape) -> Result<()> {
    check_channels(op, 1, w.channels)?;
    for axis in [Axis::Batch, Axis::Height, Axis::Width] {
        if f.dim(axis) != w.dim(axis) {
            return Err(Error::Axis { op, axis, expected: f.dim(axis), found: w.dim(axis) });
        }
    }
    Ok(())
}

/// W ⊙ (BA + σ(std(F))), broadcast to the shape of `f`.
fn modulation<T: Real>(tape: &mut Tape<T>, f: Var, w: Var) -> Result<Var> {
    let std = tape.reduce(f, ReduceKind::ChannelStd)?;
    let s = tape.sigmoid(std)?;
    let m = tape.affine(s, 1.0, BA)?;
    tape.mul(w, m)
}

/// Y = F₁ + F₂ ⊙ (W ⊙ (BA + σ(std(F₂)))).
pub fn record_aimm_fuse<T: Real>(tape: &mut Tape<T>, f1: Var, f2: Var, w: Var) -> Result<Var> {
    tape.shape(f1).expect_eq(&tape.shape(f2), "aimm_fuse")?;
    check_weight_map("aimm_fuse", tape.shape(f1), tape.shape(w))?;
    let m = modulation(tape, f2, w)?;
    let t = tape.mul(f2, m)?;
    tape.add(f1, t)
}

/// Multiplicative factor IDAS + W ⊙ (BA + σ(std(F))).
pub fn record_aimm_self_factor<T: Real>(tape: &mut Tape<T>, f: Var, w: Var) -> Result<Var> {
    check_weight_map("aimm_self", tape.shape(f), tape.shape(w))?;
    let m = modulation(tape, f, w)?;
    tape.affine(m, 1.0, IDAS)
}

/// Y = F ⊙ (IDAS + W ⊙ (BA + σ(std(F)))).
pub fn record_aimm_self<T: Real>(tape: &mut Tape<T>, f: Var, w: Var) -> Result<Var> {
    let factor = record_aimm_self_factor(tape, f, w)?;
    tape.mul(f, factor)
}

fn eval<T: Real>(inputs: &[&Tensor<T>], f: impl FnOnce(&mut Tape<T>, &[Var]) -> Result<Var>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf((*t).clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).clone())
}

pub fn aimm_fuse<T: Real>(f1: &Tensor<T>, f2: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    eval(&[f1, f2, w], |t, v| record_aimm_fuse(t, v[0], v[1], v[2]))
}

pub fn aimm_self<T: Real>(f: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    eval(&[f, w], |t, v| record_aimm_self(t, v[0], v[1]))
}

/// The factor multiplying `f` in [`aimm_self`], shape of `f`.
pub fn aimm_self_factor<T: Real>(f: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    eval(&[f, w], |t, v| record_aimm_self_factor(t, v[0], v[1]))
}

/// (1 − W)·F_local + W·F_transport, with W broadcast over channels.
pub fn transport_blend<T: Real>(local: &Tensor<T>, transport: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    let s = local.shape();
    s.expect_eq(&transport.shape(), "transport_blend")?;
    check_weight_map("transport_blend", s, w.shape())?;
    let data = (0..s.numel())
        .map(|i| {
            let plane = s.plane();
            let (b, p) = (i / (s.channels * plane), i % plane);
            let wv = w.data()[b * plane + p].to_f64();
            let (a, t) = (local.data()[i].to_f64(), transport.data()[i].to_f64());
            // Rounding can push the blend an ulp past its endpoints.
            T::from_f64(((1.0 - wv) * a + wv * t).clamp(a.min(t), a.max(t)))
        })
        .collect();
    Tensor::new(s, data)
}

/// ‖v‖ ≈ W / Δt.
pub fn velocity_surrogate<T: Real>(w: &Tensor<T>, dt: f64) -> Result<Tensor<T>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step {dt} must be positive")));
    }
    Ok(w.map(|v| v / dt))
}

/// Residual refinement x + conv3(relu(conv3(x))).
#[derive(Clone, Debug, PartialEq)]
pub struct RefineBlock<T = f32> {
    pub first: KernelWeights<T>,
    pub second: KernelWeights<T>,
}

impl<T: Real> RefineBlock<T> {
    pub fn init(channels: usize, rng: &mut Prng) -> Result<Self> {
        Ok(RefineBlock {
            first: init_kw(rng, ConvMode::Dense, channels, channels, 3)?,
            second: init_kw(rng, ConvMode::Dense, channels, channels, 3)?,
        })
    }

    /// Zero convolutions: the block is the identity.
    pub fn identity(channels: usize) -> Result<Self> {
        Ok(RefineBlock {
            first: zero_kw(ConvMode::Dense, channels, channels, 3)?,
            second: zero_kw(ConvMode::Dense, channels, channels, 3)?,
        })
    }

    pub fn cast<U: Real>(&self) -> RefineBlock<U> {
        RefineBlock { first: cast_kw(&self.first), second: cast_kw(&self.second) }
    }
}

fn record_refine<T: Real>(tape: &mut Tape<T>, x: Var, convs: [Conv; 2]) -> Result<Var> {
    let h = convs[0].apply(tape, x)?;
    let h = tape.relu(h)?;
    let h = convs[1].apply(tape, h)?;
    tape.add(x, h)
}

pub fn refine<T: Real>(x: &Tensor<T>, block: &RefineBlock<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let leaves: Vec<Var> = kw_params("", &[("a", &block.first), ("b", &block.second)])
        .into_iter()
        .map(|(_, t)| tape.leaf(t))
        .collect();
    let c = bind_convs(&leaves, &[ConvMode::Dense, ConvMode::Dense]);
    let out = record_refine(&mut tape, xv, [c[0], c[1]])?;
    Ok(tape.value(out).clone())
}

/// Shallow P3 (2H × 2W), mid P4 (H × W), deep P5 (H/2 × W/2).
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid<T = f32> {
    pub p3: Tensor<T>,
    pub p4: Tensor<T>,
    pub p5: Tensor<T>,
}

impl<T: Real> FeaturePyramid<T> {
    pub fn validate(&self) -> Result<()> {
        let (s3, s4, s5) = (self.p3.shape(), self.p4.shape(), self.p5.shape());
        for (axis, op) in [(Axis::Batch, "feature pyramid"), (Axis::Channel, "feature pyramid")] {
            for s in [s3, s5] {
                if s.dim(axis) != s4.dim(axis) {
                    return Err(Error::Axis { op, axis, expected: s4.dim(axis), found: s.dim(axis) });
                }
            }
        }
        for axis in [Axis::Height, Axis::Width] {
            if s3.dim(axis) != 2 * s4.dim(axis) {
                return Err(Error::Axis { op: "feature pyramid (P3 must be twice P4)", axis, expected: 2 * s4.dim(axis), found: s3.dim(axis) });
            }
            if s4.dim(axis) != 2 * s5.dim(axis) {
                return Err(Error::Axis { op: "feature pyramid (P4 must be twice P5)", axis, expected: 2 * s5.dim(axis), found: s4.dim(axis) });
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> FeaturePyramid<U> {
        FeaturePyramid { p3: self.p3.cast(), p4: self.p4.cast(), p5: self.p5.cast() }
    }
}

/// Which of the four paths are active. A closed path behaves as W = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathFlags {
    /// P5 → P4
    pub high_to_mid: bool,
    /// P5 → P3
    pub high_to_low: bool,
    /// P3 → P4
    pub low_to_mid: bool,
    /// P4 self enhancement
    pub self_path: bool,
}

impl Default for PathFlags {
    fn default() -> Self {
        PathFlags { high_to_mid: true, high_to_low: true, low_to_mid: true, self_path: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CasrParams<T = f32> {
    pub importance: ImportanceParams<T>,
    pub head: PathHead<T>,
    pub refine_low: RefineBlock<T>,
    pub refine_mid: RefineBlock<T>,
    pub paths: PathFlags,
}

impl<T: Real> CasrParams<T> {
    pub fn init(channels: usize, rng: &mut Prng) -> Result<Self> {
        Ok(CasrParams {
            importance: ImportanceParams::init(channels, rng)?,
            head: PathHead::init(channels, rng)?,
            refine_low: RefineBlock::init(channels, rng)?,
            refine_mid: RefineBlock::init(channels, rng)?,
            paths: PathFlags::default(),
        })
    }

    pub fn cast<U: Real>(&self) -> CasrParams<U> {
        CasrParams {
            importance: self.importance.cast(),
            head: self.head.cast(),
            refine_low: self.refine_low.cast(),
            refine_mid: self.refine_mid.cast(),
            paths: self.paths,
        }
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = self.importance.named_params();
        out.extend(self.head.named_params());
        out.extend(kw_params(
            "refine.",
            &[
                ("low.first", &self.refine_low.first),
                ("low.second", &self.refine_low.second),
                ("mid.first", &self.refine_mid.first),
                ("mid.second", &self.refine_mid.second),
            ],
        ));
        out
    }

    /// Leading entries of [`CasrParams::named_params`] that belong to the
    /// importance estimator and path head.
    pub fn routing_param_count(&self) -> usize {
        self.importance.param_count() + 2
    }

    pub fn bind(&self, leaves: &[Var]) -> CasrVars {
        let n = self.importance.param_count();
        let r = bind_convs(&leaves[n + 2..], &[ConvMode::Dense; 4]);
        CasrVars {
            importance: self.importance.bind(&leaves[..n]),
            head: self.head.bind(&leaves[n..n + 2]),
            refine_low: [r[0], r[1]],
            refine_mid: [r[2], r[3]],
            paths: self.paths,
        }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> Result<CasrVars> {
        let leaves: Vec<Var> = self.named_params().into_iter().map(|(_, t)| tape.leaf(t)).collect();
        Ok(self.bind(&leaves))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CasrVars {
    importance: ImportanceVars,
    head: PathHeadVars,
    refine_low: [Conv; 2],
    refine_mid: [Conv; 2],
    paths: PathFlags,
}

#[derive(Clone, Copy, Debug)]
pub struct CasrTraceVars {
    pub importance: Var,
    pub weights: [Var; 4],
    pub p3: Var,
    pub p4: Var,
    pub p5: Var,
}

/// Records the routing neck. Paths update P4 in the order high-to-mid,
/// low-to-mid, self; the low-to-mid path reads the unrefined input P3.
pub fn record_casr_pan<T: Real>(tape: &mut Tape<T>, p3: Var, p4: Var, p5: Var, v: &CasrVars) -> Result<CasrTraceVars> {
    FeaturePyramid { p3: tape.value(p3).clone(), p4: tape.value(p4).clone(), p5: tape.value(p5).clone() }.validate()?;
    let (s3, s4) = (tape.shape(p3), tape.shape(p4));
    let importance = record_importance(tape, p4, &v.importance)?;
    let weights = record_path_weights(tape, importance, &v.head)?;
    let [w1, w2, w3, w4] = weights;

    let mut mid = p4;
    if v.paths.high_to_mid {
        let up = tape.upsample(p5, s4.height, s4.width)?;
        mid = record_aimm_fuse(tape, mid, up, w1)?;
    }
    let mut low = p3;
    if v.paths.high_to_low {
        let up = tape.upsample(p5, s3.height, s3.width)?;
        let w = tape.resize_to(w2, s3.height, s3.width)?;
        low = record_aimm_fuse(tape, low, up, w)?;
    }
    if v.paths.low_to_mid {
        let down = tape.maxpool2(p3)?;
        mid = record_aimm_fuse(tape, mid, down, w3)?;
    }
    if v.paths.self_path {
        mid = record_aimm_self(tape, mid, w4)?;
    }
    let out3 = record_refine(tape, low, v.refine_low)?;
    let out4 = record_refine(tape, mid, v.refine_mid)?;
    Ok(CasrTraceVars { importance, weights, p3: out3, p4: out4, p5 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CasrOutput<T = f32> {
    pub pyramid: FeaturePyramid<T>,
    pub importance: Tensor<T>,
    pub weights: PathWeights<T>,
}

pub fn casr_pan_forward<T: Real>(pyr: &FeaturePyramid<T>, p: &CasrParams<T>) -> Result<CasrOutput<T>> {
    pyr.validate()?;
    check_channels("casr_pan", p.importance.channels(), pyr.p4.shape().channels)?;
    let mut tape = Tape::new();
    let (a, b, c) = (tape.leaf(pyr.p3.clone()), tape.leaf(pyr.p4.clone()), tape.leaf(pyr.p5.clone()));
    let v = p.register(&mut tape)?;
    let t = record_casr_pan(&mut tape, a, b, c, &v)?;
    let get = |x: Var| tape.value(x).clone();
    Ok(CasrOutput {
        pyramid: FeaturePyramid { p3: get(t.p3), p4: get(t.p4), p5: get(t.p5) },
        importance: get(t.importance),
        weights: PathWeights { maps: t.weights.map(get) },
    })
}
