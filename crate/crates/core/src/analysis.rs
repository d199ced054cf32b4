//! Verification instruments: central-difference gradient checks and
//! gradient-based effective receptive field (ERF) maps.
//!
//! Everything here runs in `f64`. A gradient check perturbs tape leaves
//! with [`Tape::set_leaf`], re-evaluates the graph with [`Tape::replay`]
//! and compares against one reverse sweep of the loss ⟨r, output⟩ for a
//! seeded random cotangent r.

use std::fmt;

use crate::edge::{self, AgpeoParams, EdgeBanks, PyramidProjections};
use crate::error::{Error, Result};
use crate::gas_block::{record_gas_block, GasBlockParams, DEFAULT_ALPHA_DECAY};
use crate::ops::{ConvMode, KernelWeights};
use crate::report::{format_real, Report};
use crate::rng::Prng;
use crate::spectral::{check_cfl, fd_rollout, gaussian_bump, spectral_solve, Boundary, DiffusionParams};
use crate::routing::{record_casr_pan, record_importance, CasrParams, ImportanceParams};
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const MAX_COORDS_PER_PARAM: usize = 64;
pub const ERF_BATCH: usize = 8;

/// Central differences (f(θ + h·eᵢ) − f(θ − h·eᵢ)) / 2h for every coordinate.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step {h} must be positive")));
    }
    let mut t = theta.to_vec();
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let orig = t[i];
        t[i] = orig + h;
        let fp = f(&t);
        t[i] = orig - h;
        let fm = f(&t);
        t[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// |a − f| / max(|a|, |f|, 1e-8)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: DEFAULT_STEP, tolerance: DEFAULT_TOLERANCE, max_coords: MAX_COORDS_PER_PARAM, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    /// Flat coordinate within the parameter.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub target: String,
    pub step: f64,
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn merge(mut self, other: GradCheckReport) -> Self {
        self.entries.extend(other.entries);
        self
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.push("target", &self.target);
        r.push_real("step", self.step);
        r.push_real("tolerance", self.tolerance);
        r.push("coordinates", self.entries.len());
        r.push("failures", self.failures().count());
        r.push_real("max_rel_error", self.max_rel_error());
        for e in &self.entries {
            r.push(
                format!("{}[{}]", e.name, e.index),
                format!(
                    "analytic={} numeric={} rel_error={} {}",
                    format_real(e.analytic),
                    format_real(e.numeric),
                    format_real(e.rel_error),
                    if e.pass { "pass" } else { "FAIL" }
                ),
            );
        }
        r
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_report().fmt(f)
    }
}

/// Sorted sample of at most `k` distinct indices below `n`.
fn sample_indices(n: usize, k: usize, rng: &mut Prng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if n > k {
        for i in 0..k {
            let j = i + rng.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx.sort_unstable();
    }
    idx
}

fn loss(tape: &Tape<f64>, outputs: &[Var], cot: &[Tensor<f64>]) -> f64 {
    outputs
        .iter()
        .zip(cot)
        .map(|(&o, r)| tape.value(o).data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// Checks ∂⟨r, outputs⟩/∂θ for every named leaf against central differences.
pub fn grad_check(
    target: &str,
    tape: &mut Tape<f64>,
    outputs: &[Var],
    params: &[(String, Var)],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = Prng::new(cfg.seed);
    let cot: Vec<Tensor<f64>> = outputs.iter().map(|&o| rng.uniform_tensor(tape.shape(o), -1.0, 1.0)).collect();

    let mut analytic: Vec<Vec<f64>> = params.iter().map(|(_, v)| vec![0.0; tape.shape(*v).numel()]).collect();
    for (&o, r) in outputs.iter().zip(&cot) {
        let g = tape.backward(o, r.clone())?;
        for (acc, (_, v)) in analytic.iter_mut().zip(params) {
            for (a, b) in acc.iter_mut().zip(g.wrt(*v).data()) {
                *a += b;
            }
        }
    }

    let mut entries = Vec::new();
    for ((name, var), grad) in params.iter().zip(&analytic) {
        let base = tape.value(*var).clone();
        let coords = sample_indices(base.len(), cfg.max_coords, &mut rng);
        let mut eval = |value: f64, i: usize| -> Result<f64> {
            let mut d = base.data().to_vec();
            d[i] = value;
            tape.set_leaf(*var, Tensor::new(base.shape(), d)?)?;
            tape.replay()?;
            let l = loss(tape, outputs, &cot);
            if l.is_finite() {
                Ok(l)
            } else {
                Err(Error::NonFinite(format!("loss while perturbing {name}[{i}]")))
            }
        };
        for i in coords {
            let x = base.data()[i];
            let numeric = (eval(x + cfg.step, i)? - eval(x - cfg.step, i)?) / (2.0 * cfg.step);
            let rel = relative_error(grad[i], numeric);
            entries.push(GradCheckEntry {
                name: name.clone(),
                index: i,
                analytic: grad[i],
                numeric,
                rel_error: rel,
                pass: rel <= cfg.tolerance,
            });
        }
        tape.set_leaf(*var, base)?;
        tape.replay()?;
    }
    Ok(GradCheckReport { target: target.into(), step: cfg.step, tolerance: cfg.tolerance, entries })
}

/// Built-in gradient-check suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradTarget {
    GasBlock,
    Agpeo,
    Importance,
    Aimm,
}

impl GradTarget {
    pub const ALL: [GradTarget; 4] = [GradTarget::GasBlock, GradTarget::Agpeo, GradTarget::Importance, GradTarget::Aimm];

    pub fn name(self) -> &'static str {
        match self {
            GradTarget::GasBlock => "gasblock",
            GradTarget::Agpeo => "agpeo",
            GradTarget::Importance => "ie",
            GradTarget::Aimm => "aimm",
        }
    }

    pub fn parse(s: &str) -> Option<Vec<GradTarget>> {
        if s == "all" {
            return Some(Self::ALL.to_vec());
        }
        Self::ALL.into_iter().find(|t| t.name() == s).map(|t| vec![t])
    }
}

fn register(tape: &mut Tape<f64>, named: Vec<(String, Tensor<f64>)>) -> (Vec<Var>, Vec<(String, Var)>) {
    let mut leaves = Vec::new();
    let mut list = Vec::new();
    for (n, t) in named {
        let v = tape.leaf(t);
        leaves.push(v);
        list.push((n, v));
    }
    (leaves, list)
}

const CHECK_CHANNELS: usize = 2;
const CHECK_SIZE: usize = 8;

fn check_input(rng: &mut Prng, channels: usize, size: usize, lo: f64, hi: f64) -> Result<Tensor<f64>> {
    Ok(rng.uniform_tensor(Shape::new(1, channels, size, size)?, lo, hi))
}

/// Runs one suite on seeded 1×2×8×8 inputs (the routing suite adds the
/// 16×16 and 4×4 pyramid neighbours).
pub fn check_target(target: GradTarget, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = Prng::new(seed);
    let mut tape = Tape::<f64>::new();
    let (c, n) = (CHECK_CHANNELS, CHECK_SIZE);
    let cfg = GradCheckConfig { seed: rng.next_u64(), ..*cfg };
    match target {
        GradTarget::GasBlock => {
            let p = GasBlockParams::<f64>::init(c, 1, DEFAULT_ALPHA_DECAY, &mut rng)?;
            let x = tape.leaf(check_input(&mut rng, c, n, -1.0, 1.0)?);
            let e = tape.leaf(check_input(&mut rng, 1, n, 0.0, 1.0)?);
            let (leaves, list) = register(&mut tape, p.named_params());
            let out = record_gas_block(&mut tape, x, e, &p.bind(&leaves))?;
            grad_check(target.name(), &mut tape, &[out.y], &list, &cfg)
        }
        GradTarget::Agpeo => {
            let x = check_input(&mut rng, c, n, 0.0, 1.0)?;
            let ap = AgpeoParams::default();
            let (g, pc) = edge::edge_components(&x, &ap, &EdgeBanks::default())?;
            let levels = 3;
            let proj = PyramidProjections::<f64>::init(levels, c, &mut rng)?;
            let gv = tape.leaf(g);
            let pv = tape.leaf(pc);
            let mut named = vec![("alpha_logit".to_string(), Tensor::scalar(ap.alpha_logit))];
            for (i, k) in proj.levels.iter().enumerate() {
                named.push((format!("projection{i}.weight"), k.weight.clone()));
                named.push((format!("projection{i}.bias"), k.bias.clone().expect("init adds bias")));
            }
            let (leaves, list) = register(&mut tape, named);
            let e0 = edge::record_fusion(&mut tape, gv, pv, leaves[0])?;
            let w: Vec<(Var, Option<Var>)> = leaves[1..].chunks(2).map(|p| (p[0], Some(p[1]))).collect();
            let mut outs = vec![e0];
            outs.extend(edge::record_pyramid(&mut tape, e0, levels, &w)?);
            grad_check(target.name(), &mut tape, &outs, &list, &cfg)
        }
        GradTarget::Importance => {
            let mut p = ImportanceParams::<f64>::init(c, &mut rng)?;
            p.fusion_logits = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            let x = tape.leaf(check_input(&mut rng, c, n, -1.0, 1.0)?);
            let (leaves, list) = register(&mut tape, p.named_params());
            let out = record_importance(&mut tape, x, &p.bind(&leaves))?;
            grad_check(target.name(), &mut tape, &[out], &list, &cfg)
        }
        GradTarget::Aimm => {
            let p = CasrParams::<f64>::init(c, &mut rng)?;
            let p3 = tape.leaf(check_input(&mut rng, c, 2 * n, -1.0, 1.0)?);
            let p4 = tape.leaf(check_input(&mut rng, c, n, -1.0, 1.0)?);
            let p5 = tape.leaf(check_input(&mut rng, c, n / 2, -1.0, 1.0)?);
            let (leaves, mut list) = register(&mut tape, p.named_params());
            let t = record_casr_pan(&mut tape, p3, p4, p5, &p.bind(&leaves))?;
            // Routing parameters only; the refine blocks are plumbing.
            list.truncate(p.routing_param_count());
            grad_check(target.name(), &mut tape, &[t.p3, t.p4], &list, &cfg)
        }
    }
}

/// Runs several suites and concatenates their entries under one name.
pub fn check_targets(targets: &[GradTarget], seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let name = if targets == GradTarget::ALL { "all".to_string() } else { targets.iter().map(|t| t.name()).collect::<Vec<_>>().join(",") };
    let mut report = GradCheckReport { target: name, step: cfg.step, tolerance: cfg.tolerance, entries: Vec::new() };
    for &t in targets {
        let mut r = check_target(t, seed, cfg)?;
        for e in &mut r.entries {
            e.name = format!("{}.{}", t.name(), e.name);
        }
        report = report.merge(r);
    }
    Ok(report)
}

/// Networks with built-in ERF support.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErfNet {
    /// One depthwise 3×3 convolution.
    DwConv,
    /// Two depthwise 3×3 convolutions.
    Stacked,
    /// One diffusion–convection block with a zero edge prior.
    GasBlock,
}

impl ErfNet {
    pub fn name(self) -> &'static str {
        match self {
            ErfNet::DwConv => "dwconv",
            ErfNet::Stacked => "stacked",
            ErfNet::GasBlock => "gasblock",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [ErfNet::DwConv, ErfNet::Stacked, ErfNet::GasBlock].into_iter().find(|n| n.name() == s)
    }
}

/// Channel-summed |∂ centre / ∂ input|, batch-averaged, normalised to max 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ErfMap {
    pub network: String,
    pub input: Shape,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ErfMap {
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// (1, 1, H, W) tensor of the map.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_f64_vec(Shape { batch: 1, channels: 1, height: self.height, width: self.width }, self.values.clone())
            .expect("map matches its dims")
    }

    /// Bounding box (top, left, bottom, right) of the nonzero entries.
    pub fn support(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.at(y, x) > 0.0 {
                    bb = Some(match bb {
                        None => (y, x, y, x),
                        Some((t, l, b, r)) => (t.min(y), l.min(x), b.max(y), r.max(x)),
                    });
                }
            }
        }
        bb
    }
}

/// ERF of `net` with seeded random weights on `input` (batch × channels ×
/// H × W) seeded random inputs. The objective is the channel sum of the
/// output at (H/2, W/2).
pub fn erf_map(net: ErfNet, input: Shape, seed: u64) -> Result<ErfMap> {
    let mut rng = Prng::new(seed);
    let c = input.channels;
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(rng.uniform_tensor(input, -1.0, 1.0));
    let y = match net {
        ErfNet::DwConv | ErfNet::Stacked => {
            let layers = if net == ErfNet::DwConv { 1 } else { 2 };
            let mut cur = x;
            for _ in 0..layers {
                let k = KernelWeights::<f64>::depthwise(rng.init_tensor(Shape::new(c, 1, 3, 3)?, 9), None)?;
                let w = tape.leaf(k.weight);
                cur = tape.conv2d(cur, w, None, ConvMode::Depthwise)?;
            }
            cur
        }
        ErfNet::GasBlock => {
            let p = GasBlockParams::<f64>::init(c, 1, DEFAULT_ALPHA_DECAY, &mut rng)?;
            let e = tape.leaf(Tensor::zeros(input.with_channels(1)));
            let v = p.register(&mut tape)?;
            record_gas_block(&mut tape, x, e, &v)?.y
        }
    };
    let out = tape.shape(y);
    let (cy, cx) = (out.height / 2, out.width / 2);
    let cot = Tensor::from_fn(out, |_, _, yy, xx| if (yy, xx) == (cy, cx) { 1.0 } else { 0.0 });
    let g = tape.backward(y, cot)?.wrt(x);
    let (h, w) = (input.height, input.width);
    let mut values = vec![0.0; h * w];
    for b in 0..input.batch {
        for ch in 0..c {
            for (v, gv) in values.iter_mut().zip(g.plane(b, ch)) {
                *v += gv.abs();
            }
        }
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(ErfMap { network: net.name().into(), input, height: h, width: w, values })
}

/// Smallest fraction of pixels whose sorted-descending cumulative mass
/// reaches `t` of the total.
pub fn contribution_ratio(erf: &ErfMap, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("threshold {t} must lie in (0, 1)")));
    }
    let total: f64 = erf.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("contribution ratio of an all-zero map".into()));
    }
    let mut sorted = erf.values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let goal = t * total;
    let mut acc = 0.0;
    let mut count = sorted.len();
    for (i, v) in sorted.iter().enumerate() {
        acc += v;
        if acc >= goal {
            count = i + 1;
            break;
        }
    }
    Ok(count as f64 / sorted.len() as f64)
}

/// Report for an ERF run: header, support box and one ratio per threshold.
pub fn erf_report(erf: &ErfMap, thresholds: &[f64]) -> Result<Report> {
    let mut r = Report::new();
    r.push("network", &erf.network);
    r.push("weights", "seeded-random-untrained");
    r.push("input", erf.input);
    match erf.support() {
        Some((t, l, b, rr)) => r.push("support", format!("rows {t}..={b} cols {l}..={rr}")),
        None => r.push("support", "empty"),
    }
    r.push("nonzero_pixels", erf.values.iter().filter(|&&v| v > 0.0).count());
    for &t in thresholds {
        r.push_real(format!("ratio@{t}"), contribution_ratio(erf, t)?);
    }
    Ok(r)
}

/// Spectral solution against an explicit finite-difference rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleComparison {
    pub steps: usize,
    pub rel_l2: f64,
    pub max_abs: f64,
}

/// Evolves a centred Gaussian bump of width `sigma` on a `size`×`size`
/// periodic grid with both solvers. Fails on a CFL violation.
pub fn pde_oracle(size: usize, params: &DiffusionParams, dt: f64, sigma: f64) -> Result<OracleComparison> {
    check_cfl(params, dt)?;
    let u0 = gaussian_bump::<f64>(size, size, sigma)?;
    let exact = spectral_solve(&u0, params)?;
    let fd = fd_rollout(&u0, params, dt, Boundary::Periodic)?;
    let steps = (params.time / dt - 1e-9).ceil().max(0.0) as usize;
    Ok(OracleComparison { steps, rel_l2: fd.rel_l2(&exact), max_abs: fd.max_abs_diff(&exact) })
}
