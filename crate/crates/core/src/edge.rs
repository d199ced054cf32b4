//! Edge priors: directional gradient magnitude, multi-scale phase
//! congruency, their learnable convex fusion, and the max-pooled edge
//! pyramid. Sobel and Laplacian magnitudes are provided as baselines.
//!
//! All filtering is zero-padded correlation applied independently to each
//! channel, evaluated in `f64` and rounded once into the storage type.

use crate::error::{Axis, Error, Result};
use crate::ops::{conv2d, maxpool2, sigmoid, ConvMode, KernelWeights};
use crate::rng::Prng;
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Shape, Tensor};

/// Guard added to normalisers and the phase-congruency denominator.
pub const EDGE_EPS: f64 = 1e-6;
pub const DEFAULT_FUSION_ALPHA: f64 = 0.7;
pub const DEFAULT_PYRAMID_LEVELS: usize = 3;
pub const DEFAULT_GABOR_SCALES: usize = 3;
pub const GABOR_EXTENT: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    D0,
    D45,
    D90,
    D135,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::D0, Direction::D45, Direction::D90, Direction::D135];

    pub fn degrees(self) -> u32 {
        match self {
            Direction::D0 => 0,
            Direction::D45 => 45,
            Direction::D90 => 90,
            Direction::D135 => 135,
        }
    }

    pub fn from_degrees(deg: u32) -> Result<Self> {
        Direction::ALL
            .into_iter()
            .find(|d| d.degrees() == deg)
            .ok_or_else(|| Error::Domain(format!("direction {deg} is not one of 0, 45, 90, 135")))
    }

    /// Row-major 3×3 stencil. 0° is Sobel-x, 90° is Sobel-y and the
    /// diagonals are the same stencil rotated by 45°.
    pub fn kernel(self) -> [f64; 9] {
        match self {
            Direction::D0 => [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
            Direction::D45 => [0.0, 1.0, 2.0, -1.0, 0.0, 1.0, -2.0, -1.0, 0.0],
            Direction::D90 => [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
            Direction::D135 => [-2.0, -1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 2.0],
        }
    }
}

/// Fixed, non-learnable set of orientations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectionalBank {
    directions: Vec<Direction>,
}

impl Default for DirectionalBank {
    fn default() -> Self {
        DirectionalBank { directions: Direction::ALL.to_vec() }
    }
}

impl DirectionalBank {
    pub fn new(mut directions: Vec<Direction>) -> Result<Self> {
        directions.sort();
        directions.dedup();
        if directions.is_empty() {
            return Err(Error::Domain("directional bank needs at least one orientation".into()));
        }
        Ok(DirectionalBank { directions })
    }

    pub fn from_degrees(degrees: &[u32]) -> Result<Self> {
        Self::new(degrees.iter().map(|&d| Direction::from_degrees(d)).collect::<Result<_>>()?)
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }
}

/// One even/odd quadrature pair, each `extent × extent`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GaborPair {
    pub wavelength: f64,
    pub even: Vec<f64>,
    pub odd: Vec<f64>,
}

/// Quadrature filters at log-spaced wavelengths 3·2^s. Each kernel has an
/// isotropic Gaussian envelope (σ = 0.56·λ), a carrier along the x axis,
/// zero mean and unit L2 norm.
#[derive(Clone, Debug, PartialEq)]
pub struct GaborBank {
    extent: usize,
    pairs: Vec<GaborPair>,
}

impl Default for GaborBank {
    fn default() -> Self {
        GaborBank::new(DEFAULT_GABOR_SCALES).expect("default scale count is valid")
    }
}

fn zero_mean_unit(mut k: Vec<f64>) -> Vec<f64> {
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

impl GaborBank {
    pub fn new(scales: usize) -> Result<Self> {
        if scales == 0 {
            return Err(Error::Domain("gabor bank needs at least one scale".into()));
        }
        let pairs = (0..scales).map(|s| Self::pair(3.0 * f64::powi(2.0, s as i32), GABOR_EXTENT)).collect();
        Ok(GaborBank { extent: GABOR_EXTENT, pairs })
    }

    /// Builds the quadrature pair for one wavelength.
    pub fn pair(wavelength: f64, extent: usize) -> GaborPair {
        let half = (extent / 2) as f64;
        let sigma = 0.56 * wavelength;
        let mut even = Vec::with_capacity(extent * extent);
        let mut odd = Vec::with_capacity(extent * extent);
        for i in 0..extent {
            for j in 0..extent {
                let (y, x) = (i as f64 - half, j as f64 - half);
                let env = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                let phase = 2.0 * std::f64::consts::PI * x / wavelength;
                even.push(env * phase.cos());
                odd.push(env * phase.sin());
            }
        }
        GaborPair { wavelength, even: zero_mean_unit(even), odd: zero_mean_unit(odd) }
    }

    /// Custom bank; every kernel must be `extent × extent` with odd extent.
    pub fn from_pairs(extent: usize, pairs: Vec<GaborPair>) -> Result<Self> {
        if extent.is_multiple_of(2) || pairs.is_empty() {
            return Err(Error::Domain("gabor bank needs an odd extent and at least one pair".into()));
        }
        if pairs.iter().any(|p| p.even.len() != extent * extent || p.odd.len() != extent * extent) {
            return Err(Error::Domain(format!("gabor kernels must have {} taps", extent * extent)));
        }
        Ok(GaborBank { extent, pairs })
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn pairs(&self) -> &[GaborPair] {
        &self.pairs
    }
}

/// Correlates every channel of `x` with one square kernel.
fn filter(x: &Tensor<f64>, kernel: &[f64], k: usize) -> Result<Tensor<f64>> {
    let c = x.shape().channels;
    let w = Tensor::from_fn(Shape::new(c, 1, k, k)?, |_, _, i, j| kernel[i * k + j]);
    conv2d(x, &KernelWeights::new(ConvMode::Depthwise, w, None)?)
}

/// Stores a ratio known to lie in [0, 1) without letting rounding reach 1.
fn unit_ratio<T: Real>(v: f64) -> T {
    let t = T::from_f64(v);
    if t >= T::from_f64(1.0) {
        T::BELOW_ONE
    } else {
        t
    }
}

fn zip_map<T: Real>(shape: Shape, planes: &[Tensor<f64>], f: impl Fn(&[f64]) -> f64) -> Tensor<T> {
    let mut buf = vec![0.0; planes.len()];
    let data = (0..shape.numel())
        .map(|i| {
            for (b, p) in buf.iter_mut().zip(planes) {
                *b = p.data()[i];
            }
            T::from_f64(f(&buf))
        })
        .collect();
    Tensor::new(shape, data).expect("shape preserved")
}

/// G = max over orientations of |K_θ * x|.
pub fn directional_gradient<T: Real>(x: &Tensor<T>, bank: &DirectionalBank) -> Result<Tensor<T>> {
    let xf = x.cast::<f64>();
    let responses = bank
        .directions
        .iter()
        .map(|d| filter(&xf, &d.kernel(), 3))
        .collect::<Result<Vec<_>>>()?;
    Ok(zip_map(x.shape(), &responses, |r| r.iter().fold(0.0, |m, v| m.max(v.abs()))))
}

/// P = |Σ_s r_s| / (Σ_s |r_s| + eps) with r_s = even_s * x + i·odd_s * x.
pub fn phase_congruency<T: Real>(x: &Tensor<T>, bank: &GaborBank, eps: f64) -> Result<Tensor<T>> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("phase congruency eps {eps} must be positive")));
    }
    let xf = x.cast::<f64>();
    let k = bank.extent;
    let mut responses = Vec::with_capacity(2 * bank.pairs.len());
    for p in &bank.pairs {
        responses.push(filter(&xf, &p.even, k)?);
        responses.push(filter(&xf, &p.odd, k)?);
    }
    let ratio: Tensor<f64> = zip_map(x.shape(), &responses, |r| {
        let (mut re, mut im, mut amp) = (0.0, 0.0, 0.0);
        for pair in r.chunks(2) {
            re += pair[0];
            im += pair[1];
            amp += pair[0].hypot(pair[1]);
        }
        re.hypot(im) / (amp + eps)
    });
    Ok(Tensor::new(x.shape(), ratio.data().iter().map(|&v| unit_ratio::<T>(v)).collect()).expect("shape preserved"))
}

/// √((K_0° * x)² + (K_90° * x)²)
pub fn sobel_edge<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let xf = x.cast::<f64>();
    let gx = filter(&xf, &Direction::D0.kernel(), 3)?;
    let gy = filter(&xf, &Direction::D90.kernel(), 3)?;
    Ok(zip_map(x.shape(), &[gx, gy], |r| r[0].hypot(r[1])))
}

/// |5-point Laplacian * x|
pub fn laplacian_edge<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let stencil = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];
    let lap = filter(&x.cast::<f64>(), &stencil, 3)?;
    Ok(zip_map(x.shape(), &[lap], |r| r[0].abs()))
}

/// Learnable fusion weight, stored as a logit so α = σ(logit) ∈ (0, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgpeoParams {
    pub alpha_logit: f64,
    pub eps: f64,
}

impl Default for AgpeoParams {
    fn default() -> Self {
        AgpeoParams::with_alpha(DEFAULT_FUSION_ALPHA).expect("default alpha is interior")
    }
}

impl AgpeoParams {
    /// `alpha` must lie strictly inside (0, 1).
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("fusion weight {alpha} must lie in (0, 1)")));
        }
        Ok(AgpeoParams { alpha_logit: (alpha / (1.0 - alpha)).ln(), eps: EDGE_EPS })
    }

    /// Fixed weight on the closed interval [0, 1]; the endpoints map to
    /// logits of ±∞ so the fusion selects one component exactly.
    pub fn fixed(alpha: f64) -> Result<Self> {
        let alpha_logit = match alpha {
            1.0 => f64::INFINITY,
            0.0 => f64::NEG_INFINITY,
            a => return Self::with_alpha(a),
        };
        Ok(AgpeoParams { alpha_logit, eps: EDGE_EPS })
    }

    pub fn alpha(&self) -> f64 {
        sigmoid(self.alpha_logit)
    }
}

/// Fixed filter banks used by the fused operator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeBanks {
    pub directional: DirectionalBank,
    pub gabor: GaborBank,
}

/// G / (per-image max of G + eps), in [0, 1).
pub fn normalized_gradient<T: Real>(x: &Tensor<T>, bank: &DirectionalBank, eps: f64) -> Result<Tensor<T>> {
    let g = directional_gradient(x, bank)?;
    let s = g.shape();
    let per = s.channels * s.plane();
    let mut out = Vec::with_capacity(s.numel());
    for b in 0..s.batch {
        let chunk = &g.data()[b * per..(b + 1) * per];
        let max = chunk.iter().fold(0.0f64, |m, v| m.max(v.to_f64()));
        let den = max + eps;
        out.extend(chunk.iter().map(|v| unit_ratio::<T>(v.to_f64() / den)));
    }
    Tensor::new(s, out)
}

/// Records E₀ = α·G_norm + (1 − α)·P, with α = σ(`alpha_logit`).
pub fn record_fusion<T: Real>(tape: &mut Tape<T>, g_norm: Var, pc: Var, alpha_logit: Var) -> Result<Var> {
    let alpha = tape.sigmoid(alpha_logit)?;
    let beta = tape.affine(alpha, -1.0, 1.0)?;
    let a = tape.mul(g_norm, alpha)?;
    let b = tape.mul(pc, beta)?;
    tape.add(a, b)
}

/// G_norm and P for `x`; the inputs of the fusion step.
pub fn edge_components<T: Real>(x: &Tensor<T>, p: &AgpeoParams, banks: &EdgeBanks) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((normalized_gradient(x, &banks.directional, p.eps)?, phase_congruency(x, &banks.gabor, p.eps)?))
}

/// Fused edge map E₀ ∈ [0, 1].
pub fn agpeo<T: Real>(x: &Tensor<T>, p: &AgpeoParams, banks: &EdgeBanks) -> Result<Tensor<T>> {
    let (g, pc) = edge_components(x, p, banks)?;
    fuse(&g, &pc, p.alpha_logit)
}

/// Fusion of precomputed components.
pub fn fuse<T: Real>(g_norm: &Tensor<T>, pc: &Tensor<T>, alpha_logit: f64) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let g = tape.leaf(g_norm.clone());
    let pv = tape.leaf(pc.clone());
    let a = tape.leaf(Tensor::scalar(alpha_logit));
    let e = record_fusion(&mut tape, g, pv, a)?;
    Ok(tape.value(e).clone())
}

/// One pointwise projection per pyramid level (level 0 included).
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidProjections<T = f32> {
    pub levels: Vec<KernelWeights<T>>,
}

impl<T: Real> PyramidProjections<T> {
    pub fn init(levels: usize, channels: usize, rng: &mut Prng) -> Result<Self> {
        let levels = (0..=levels)
            .map(|_| {
                let w = rng.init_tensor(Shape::new(channels, channels, 1, 1)?, channels);
                let b = rng.init_tensor(Shape::new(1, channels, 1, 1)?, channels);
                KernelWeights::pointwise(w, Some(b))
            })
            .collect::<Result<_>>()?;
        Ok(PyramidProjections { levels })
    }

    pub fn identity(levels: usize, channels: usize) -> Result<Self> {
        Ok(PyramidProjections { levels: (0..=levels).map(|_| KernelWeights::identity(channels)).collect::<Result<_>>()? })
    }

    pub fn depth(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn cast<U: Real>(&self) -> PyramidProjections<U> {
        PyramidProjections {
            levels: self
                .levels
                .iter()
                .map(|k| KernelWeights { mode: k.mode, weight: k.weight.cast(), bias: k.bias.as_ref().map(|b| b.cast()) })
                .collect(),
        }
    }
}

/// Pooled levels E₀…E_N and their projections Ê₀…Ê_N.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgePyramid<T = f32> {
    pub levels: Vec<Tensor<T>>,
    pub projected: Vec<Tensor<T>>,
}

fn check_pyramid_dims(s: Shape, levels: usize) -> Result<()> {
    let need = 1usize.checked_shl(levels as u32).unwrap_or(usize::MAX);
    for axis in [Axis::Height, Axis::Width] {
        if s.dim(axis) < need {
            return Err(Error::Axis { op: "edge pyramid: dims too small for level count", axis, expected: need, found: s.dim(axis) });
        }
    }
    Ok(())
}

/// E_i = maxpool2(E_{i−1}) for i = 1…N; Ê_i = projection_i(E_i).
pub fn build_pyramid<T: Real>(e0: &Tensor<T>, levels: usize, proj: &PyramidProjections<T>) -> Result<EdgePyramid<T>> {
    check_pyramid_dims(e0.shape(), levels)?;
    if proj.depth() != levels {
        return Err(Error::Domain(format!("pyramid has {levels} levels but {} projections", proj.levels.len())));
    }
    let mut pooled = vec![e0.clone()];
    for _ in 0..levels {
        let next = maxpool2(pooled.last().expect("non-empty"))?;
        pooled.push(next);
    }
    let projected = pooled.iter().zip(&proj.levels).map(|(e, k)| conv2d(e, k)).collect::<Result<_>>()?;
    Ok(EdgePyramid { levels: pooled, projected })
}

/// Records the pooled and projected levels; returns Ê₀…Ê_N.
pub fn record_pyramid<T: Real>(tape: &mut Tape<T>, e0: Var, levels: usize, weights: &[(Var, Option<Var>)]) -> Result<Vec<Var>> {
    check_pyramid_dims(tape.shape(e0), levels)?;
    if weights.len() != levels + 1 {
        return Err(Error::Domain(format!("pyramid has {levels} levels but {} projections", weights.len())));
    }
    let mut cur = e0;
    let mut out = Vec::with_capacity(levels + 1);
    for (i, &(w, b)) in weights.iter().enumerate() {
        if i > 0 {
            cur = tape.maxpool2(cur)?;
        }
        out.push(tape.conv2d(cur, w, b, ConvMode::Pointwise)?);
    }
    Ok(out)
}
