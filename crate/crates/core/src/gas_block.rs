//! Diffusion–convection feature block.
//!
//! ```text
//! X_local      = DWConv3x3(X)
//! X_proj, Z    = split(Linear_{C→2C}(X_local))          first C channels → X_proj
//! X_global     = IDCT(DCT(X_proj) · exp(−α K²) · W_f)   α = softplus(α_raw)
//! X_global    ← X_global ⊙ σ(Conv1x1(E))
//! Y'           = OutLinear(OutNorm(X_local + X_global) ⊙ σ(Z))
//! Y            = SiLU(Y' + X)
//! ```
//!
//! OutNorm normalises each pixel across channels (ε = 1e-5 inside the
//! root) and then applies a per-channel gain and bias. With a single
//! channel the normalised value is 0.

use crate::error::{Axis, Error, Result};
use crate::ops::{softplus, softplus_inverse, ConvMode, KernelWeights, Unary};
use crate::rng::Prng;
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Shape, Tensor};

pub const OUT_NORM_EPS: f64 = 1e-5;
pub const DEFAULT_ALPHA_DECAY: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Per-pixel normalisation across channels, then gain/bias.
    Channel,
    /// Gain/bias only.
    PassThrough,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutNorm<T = f32> {
    pub mode: NormMode,
    /// (1, C, 1, 1)
    pub gain: Tensor<T>,
    /// (1, C, 1, 1)
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GasBlockParams<T = f32> {
    /// Depthwise 3×3, no bias.
    pub dw: KernelWeights<T>,
    /// Pointwise C → 2C with bias.
    pub in_proj: KernelWeights<T>,
    /// Unconstrained; the decay rate is softplus of this.
    pub alpha_decay_raw: f64,
    /// W_f, shape (1, C, 1, 1).
    pub channel_weights: Tensor<T>,
    /// Pointwise E → C with bias.
    pub gate: KernelWeights<T>,
    pub out_norm: OutNorm<T>,
    /// Pointwise C → C with bias.
    pub out_proj: KernelWeights<T>,
}

/// Every intermediate of one forward pass, each (B, C, H, W).
#[derive(Clone, Debug, PartialEq)]
pub struct GasBlockTrace<T = f32> {
    pub x_local: Tensor<T>,
    pub x_proj: Tensor<T>,
    pub z: Tensor<T>,
    pub x_global_pre_gate: Tensor<T>,
    pub gate: Tensor<T>,
    pub x_global: Tensor<T>,
    pub y_prime: Tensor<T>,
    pub y: Tensor<T>,
}

impl<T: Real> GasBlockTrace<T> {
    pub fn named(&self) -> [(&'static str, &Tensor<T>); 8] {
        [
            ("x_local", &self.x_local),
            ("x_proj", &self.x_proj),
            ("z", &self.z),
            ("x_global_pre_gate", &self.x_global_pre_gate),
            ("gate", &self.gate),
            ("x_global", &self.x_global),
            ("y_prime", &self.y_prime),
            ("y", &self.y),
        ]
    }
}

fn channel_vec<T: Real>(c: usize, v: f64) -> Tensor<T> {
    Tensor::full(Shape { batch: 1, channels: c, height: 1, width: 1 }, v)
}

impl<T: Real> GasBlockParams<T> {
    /// Seeded initialisation: weights uniform(±1/√fan_in), W_f = 1,
    /// OutNorm gain 1 / bias 0, decay rate `alpha_decay`.
    pub fn init(channels: usize, edge_channels: usize, alpha_decay: f64, rng: &mut Prng) -> Result<Self> {
        if !(alpha_decay > 0.0) {
            return Err(Error::Domain(format!("initial decay rate {alpha_decay} must be positive")));
        }
        let c = channels;
        let pw = |rng: &mut Prng, out: usize, inp: usize| -> Result<KernelWeights<T>> {
            let w = rng.init_tensor(Shape::new(out, inp, 1, 1)?, inp);
            let b = rng.init_tensor(Shape::new(1, out, 1, 1)?, inp);
            KernelWeights::pointwise(w, Some(b))
        };
        let dw = KernelWeights::depthwise(rng.init_tensor(Shape::new(c, 1, 3, 3)?, 9), None)?;
        let in_proj = pw(rng, 2 * c, c)?;
        let gate = pw(rng, c, edge_channels)?;
        let out_proj = pw(rng, c, c)?;
        Ok(GasBlockParams {
            dw,
            in_proj,
            alpha_decay_raw: softplus_inverse(alpha_decay),
            channel_weights: channel_vec(c, 1.0),
            gate,
            out_norm: OutNorm {
                mode: NormMode::Channel,
                gain: channel_vec(c, 1.0),
                bias: channel_vec(c, 0.0),
            },
            out_proj,
        })
    }

    pub fn channels(&self) -> usize {
        self.dw.out_channels()
    }

    pub fn edge_channels(&self) -> usize {
        self.gate.in_channels()
    }

    /// α = softplus(α_raw) ≥ 0.
    pub fn alpha_decay(&self) -> f64 {
        softplus(self.alpha_decay_raw)
    }

    pub fn set_alpha_decay(&mut self, alpha: f64) {
        self.alpha_decay_raw = if alpha <= 0.0 { -1e4 } else { softplus_inverse(alpha) };
    }

    /// Replaces the depthwise kernel with the 5-point Laplacian stencil.
    pub fn with_laplacian_kernel(mut self) -> Result<Self> {
        let c = self.channels();
        let stencil = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];
        let w = Tensor::from_fn(Shape::new(c, 1, 3, 3)?, |_, _, y, x| stencil[y * 3 + x]);
        self.dw = KernelWeights::depthwise(w, None)?;
        Ok(self)
    }

    pub fn cast<U: Real>(&self) -> GasBlockParams<U> {
        let kw = |k: &KernelWeights<T>| KernelWeights {
            mode: k.mode,
            weight: k.weight.cast(),
            bias: k.bias.as_ref().map(|b| b.cast()),
        };
        GasBlockParams {
            dw: kw(&self.dw),
            in_proj: kw(&self.in_proj),
            alpha_decay_raw: self.alpha_decay_raw,
            channel_weights: self.channel_weights.cast(),
            gate: kw(&self.gate),
            out_norm: OutNorm {
                mode: self.out_norm.mode,
                gain: self.out_norm.gain.cast(),
                bias: self.out_norm.bias.cast(),
            },
            out_proj: kw(&self.out_proj),
        }
    }

    fn validate(&self) -> Result<()> {
        let c = self.channels();
        let check = |what: &'static str, found: usize, expected: usize| {
            if found == expected {
                Ok(())
            } else {
                Err(Error::Axis { op: what, axis: Axis::Channel, expected, found })
            }
        };
        if self.dw.mode != ConvMode::Depthwise || self.dw.kernel_size() != 3 {
            return Err(Error::Domain("gas block: local branch must be a depthwise 3x3 kernel".into()));
        }
        for k in [&self.in_proj, &self.gate, &self.out_proj] {
            if k.mode != ConvMode::Pointwise || k.bias.is_none() {
                return Err(Error::Domain("gas block: projections must be pointwise with bias".into()));
            }
        }
        check("gas block in_proj", self.in_proj.in_channels(), c)?;
        check("gas block in_proj", self.in_proj.out_channels(), 2 * c)?;
        check("gas block W_f", self.channel_weights.len(), c)?;
        check("gas block gate", self.gate.out_channels(), c)?;
        check("gas block out_norm", self.out_norm.gain.len(), c)?;
        check("gas block out_norm", self.out_norm.bias.len(), c)?;
        check("gas block out_proj", self.out_proj.in_channels(), c)?;
        check("gas block out_proj", self.out_proj.out_channels(), c)
    }

    /// Parameter tensors in a fixed order; [`GasBlockParams::bind`] reads
    /// leaves back in the same order.
    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let bias = |k: &KernelWeights<T>| k.bias.clone().expect("validated");
        vec![
            ("dw.weight".into(), self.dw.weight.clone()),
            ("in_proj.weight".into(), self.in_proj.weight.clone()),
            ("in_proj.bias".into(), bias(&self.in_proj)),
            ("alpha_decay_raw".into(), Tensor::scalar(self.alpha_decay_raw)),
            ("channel_weights".into(), self.channel_weights.clone()),
            ("gate.weight".into(), self.gate.weight.clone()),
            ("gate.bias".into(), bias(&self.gate)),
            ("out_norm.gain".into(), self.out_norm.gain.clone()),
            ("out_norm.bias".into(), self.out_norm.bias.clone()),
            ("out_proj.weight".into(), self.out_proj.weight.clone()),
            ("out_proj.bias".into(), bias(&self.out_proj)),
        ]
    }

    pub fn bind(&self, leaves: &[Var]) -> GasBlockVars {
        GasBlockVars {
            dw: leaves[0],
            in_w: leaves[1],
            in_b: leaves[2],
            alpha_raw: leaves[3],
            channel_weights: leaves[4],
            gate_w: leaves[5],
            gate_b: leaves[6],
            norm_gain: leaves[7],
            norm_bias: leaves[8],
            out_w: leaves[9],
            out_b: leaves[10],
            norm_mode: self.out_norm.mode,
        }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> Result<GasBlockVars> {
        self.validate()?;
        let leaves: Vec<Var> = self.named_params().into_iter().map(|(_, t)| tape.leaf(t)).collect();
        Ok(self.bind(&leaves))
    }
}

/// Tape handles for every learnable field of [`GasBlockParams`].
#[derive(Clone, Copy, Debug)]
pub struct GasBlockVars {
    pub dw: Var,
    pub in_w: Var,
    pub in_b: Var,
    pub alpha_raw: Var,
    pub channel_weights: Var,
    pub gate_w: Var,
    pub gate_b: Var,
    pub norm_gain: Var,
    pub norm_bias: Var,
    pub out_w: Var,
    pub out_b: Var,
    pub norm_mode: NormMode,
}

#[derive(Clone, Copy, Debug)]
pub struct GasBlockTraceVars {
    pub x_local: Var,
    pub x_proj: Var,
    pub z: Var,
    pub x_global_pre_gate: Var,
    pub gate: Var,
    pub x_global: Var,
    pub y_prime: Var,
    pub y: Var,
}

pub fn record_local<T: Real>(tape: &mut Tape<T>, x: Var, v: &GasBlockVars) -> Result<Var> {
    tape.conv2d(x, v.dw, None, ConvMode::Depthwise)
}

pub fn record_project_split<T: Real>(tape: &mut Tape<T>, x_local: Var, v: &GasBlockVars) -> Result<(Var, Var)> {
    let c = tape.shape(x_local).channels;
    let proj = tape.conv2d(x_local, v.in_w, Some(v.in_b), ConvMode::Pointwise)?;
    Ok((tape.slice_channels(proj, 0, c)?, tape.slice_channels(proj, c, c)?))
}

pub fn record_global<T: Real>(tape: &mut Tape<T>, x_proj: Var, v: &GasBlockVars) -> Result<Var> {
    let coeffs = tape.dct2(x_proj)?;
    let alpha = tape.unary(v.alpha_raw, Unary::Softplus)?;
    let decayed = tape.spectral_decay(coeffs, alpha)?;
    let weighted = tape.mul(decayed, v.channel_weights)?;
    tape.idct2(weighted)
}

pub fn record_edge_gate<T: Real>(tape: &mut Tape<T>, edge: Var, v: &GasBlockVars) -> Result<Var> {
    let logits = tape.conv2d(edge, v.gate_w, Some(v.gate_b), ConvMode::Pointwise)?;
    tape.sigmoid(logits)
}

fn check_edge_dims(x: Shape, e: Shape) -> Result<()> {
    for axis in [Axis::Batch, Axis::Height, Axis::Width] {
        if x.dim(axis) != e.dim(axis) {
            return Err(Error::Axis {
                op: "gas block edge prior (spatial mismatch)",
                axis,
                expected: x.dim(axis),
                found: e.dim(axis),
            });
        }
    }
    Ok(())
}

/// Records the full block; `edge` must share batch and spatial dims with `x`.
pub fn record_gas_block<T: Real>(tape: &mut Tape<T>, x: Var, edge: Var, v: &GasBlockVars) -> Result<GasBlockTraceVars> {
    check_edge_dims(tape.shape(x), tape.shape(edge))?;
    let x_local = record_local(tape, x, v)?;
    let (x_proj, z) = record_project_split(tape, x_local, v)?;
    let x_global_pre_gate = record_global(tape, x_proj, v)?;
    let gate = record_edge_gate(tape, edge, v)?;
    let x_global = tape.mul(x_global_pre_gate, gate)?;
    let fused = tape.add(x_local, x_global)?;
    let normed = match v.norm_mode {
        NormMode::Channel => tape.channel_norm(fused, OUT_NORM_EPS)?,
        NormMode::PassThrough => fused,
    };
    let scaled = tape.mul(normed, v.norm_gain)?;
    let shifted = tape.add(scaled, v.norm_bias)?;
    let zgate = tape.sigmoid(z)?;
    let modulated = tape.mul(shifted, zgate)?;
    let y_prime = tape.conv2d(modulated, v.out_w, Some(v.out_b), ConvMode::Pointwise)?;
    let pre = tape.add(y_prime, x)?;
    let y = tape.unary(pre, Unary::Silu)?;
    Ok(GasBlockTraceVars { x_local, x_proj, z, x_global_pre_gate, gate, x_global, y_prime, y })
}

fn with_tape<T: Real, R>(p: &GasBlockParams<T>, f: impl FnOnce(&mut Tape<T>, &GasBlockVars) -> Result<R>) -> Result<R> {
    let mut tape = Tape::new();
    let v = p.register(&mut tape)?;
    f(&mut tape, &v)
}

/// X_local = depthwise 3×3 convolution of `x`.
pub fn local_branch<T: Real>(x: &Tensor<T>, p: &GasBlockParams<T>) -> Result<Tensor<T>> {
    with_tape(p, |tape, v| {
        let xv = tape.leaf(x.clone());
        let out = record_local(tape, xv, v)?;
        Ok(tape.value(out).clone())
    })
}

/// (X_proj, Z): first and second halves of the C → 2C projection.
pub fn project_split<T: Real>(x_local: &Tensor<T>, p: &GasBlockParams<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    with_tape(p, |tape, v| {
        let xv = tape.leaf(x_local.clone());
        let (a, b) = record_project_split(tape, xv, v)?;
        Ok((tape.value(a).clone(), tape.value(b).clone()))
    })
}

/// IDCT(DCT(X_proj)·exp(−αK²)·W_f).
pub fn global_branch<T: Real>(x_proj: &Tensor<T>, p: &GasBlockParams<T>) -> Result<Tensor<T>> {
    with_tape(p, |tape, v| {
        let xv = tape.leaf(x_proj.clone());
        let out = record_global(tape, xv, v)?;
        Ok(tape.value(out).clone())
    })
}

/// σ(Conv1x1(E)) ∈ (0, 1).
pub fn edge_gate<T: Real>(edge: &Tensor<T>, p: &GasBlockParams<T>) -> Result<Tensor<T>> {
    with_tape(p, |tape, v| {
        let ev = tape.leaf(edge.clone());
        let out = record_edge_gate(tape, ev, v)?;
        Ok(tape.value(out).clone())
    })
}

pub fn gas_block_forward<T: Real>(
    x: &Tensor<T>,
    edge: &Tensor<T>,
    p: &GasBlockParams<T>,
) -> Result<(Tensor<T>, GasBlockTrace<T>)> {
    with_tape(p, |tape, v| {
        let xv = tape.leaf(x.clone());
        let ev = tape.leaf(edge.clone());
        let t = record_gas_block(tape, xv, ev, v)?;
        let get = |var| tape.value(var).clone();
        let trace = GasBlockTrace {
            x_local: get(t.x_local),
            x_proj: get(t.x_proj),
            z: get(t.z),
            x_global_pre_gate: get(t.x_global_pre_gate),
            gate: get(t.gate),
            x_global: get(t.x_global),
            y_prime: get(t.y_prime),
            y: get(t.y),
        };
        Ok((trace.y.clone(), trace))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{conv2d, sigmoid};

    fn params(c: usize, e: usize, seed: u64) -> GasBlockParams<f64> {
        GasBlockParams::init(c, e, DEFAULT_ALPHA_DECAY, &mut Prng::new(seed)).unwrap()
    }

    fn random(shape: Shape, seed: u64) -> Tensor<f64> {
        Prng::new(seed).uniform_tensor(shape, -1.0, 1.0)
    }

    #[test]
    fn init_respects_constraints() {
        let p = params(3, 1, 1);
        assert!((p.alpha_decay() - 0.5).abs() < 1e-12);
        assert_eq!(p.in_proj.out_channels(), 6);
        assert!(p.validate().is_ok());
        let mut q = p.clone();
        q.set_alpha_decay(0.0);
        assert_eq!(q.alpha_decay(), 0.0);
    }

    #[test]
    fn laplacian_local_branch_on_constant() {
        let p = params(2, 1, 2).with_laplacian_kernel().unwrap();
        let x = Tensor::<f64>::full(Shape::new(1, 2, 5, 5).unwrap(), 1.5);
        let y = local_branch(&x, &p).unwrap();
        for c in 0..2 {
            for i in 1..4 {
                for j in 1..4 {
                    assert_eq!(y.at(0, c, i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn identity_center_kernel() {
        let mut p = params(2, 1, 3);
        p.dw = KernelWeights::depthwise(
            Tensor::from_fn(Shape::new(2, 1, 3, 3).unwrap(), |_, _, y, x| if (y, x) == (1, 1) { 1.0 } else { 0.0 }),
            None,
        )
        .unwrap();
        let x = random(Shape::new(1, 2, 4, 4).unwrap(), 9);
        assert_eq!(local_branch(&x, &p).unwrap(), x);
    }

    #[test]
    fn random_kernel_matches_direct_sum() {
        let p = params(1, 1, 4);
        let x = random(Shape::new(1, 1, 4, 4).unwrap(), 5);
        let y = local_branch(&x, &p).unwrap();
        let k = p.dw.weight.data();
        for i in 0..4i32 {
            for j in 0..4i32 {
                let mut acc = 0.0;
                for di in -1..=1i32 {
                    for dj in -1..=1i32 {
                        let (yy, xx) = (i + di, j + dj);
                        if (0..4).contains(&yy) && (0..4).contains(&xx) {
                            acc += k[((di + 1) * 3 + dj + 1) as usize] * x.at(0, 0, yy as usize, xx as usize);
                        }
                    }
                }
                assert!((y.at(0, 0, i as usize, j as usize) - acc).abs() < 1e-12);
            }
        }
    }

    fn stacked(c: usize, top: &[f64], bottom: &[f64]) -> KernelWeights<f64> {
        let mut m = vec![0.0; 2 * c * c];
        for i in 0..c {
            m[i * c + i] = top[i];
            m[(c + i) * c + i] = bottom[i];
        }
        KernelWeights::from_matrix(2 * c, c, &m, Some(&vec![0.0; 2 * c])).unwrap()
    }

    #[test]
    fn split_ordering() {
        let mut p = params(2, 1, 5);
        let x = random(Shape::new(1, 2, 3, 3).unwrap(), 6);
        p.in_proj = stacked(2, &[1.0, 1.0], &[0.0, 0.0]);
        let (a, z) = project_split(&x, &p).unwrap();
        assert_eq!(a, x);
        assert!(z.data().iter().all(|&v| v == 0.0));
        p.in_proj = stacked(2, &[0.0, 0.0], &[1.0, 1.0]);
        let (a, z) = project_split(&x, &p).unwrap();
        assert!(a.data().iter().all(|&v| v == 0.0));
        assert_eq!(z, x);
    }

    #[test]
    fn split_matches_matrix_multiply() {
        let p = params(3, 1, 7);
        let x = random(Shape::new(1, 3, 2, 2).unwrap(), 8);
        let (a, z) = project_split(&x, &p).unwrap();
        let w = p.in_proj.weight.data();
        let b = p.in_proj.bias.as_ref().unwrap().data();
        for o in 0..6 {
            for y in 0..2 {
                for xx in 0..2 {
                    let v: f64 = b[o] + (0..3).map(|i| w[o * 3 + i] * x.at(0, i, y, xx)).sum::<f64>();
                    let got = if o < 3 { a.at(0, o, y, xx) } else { z.at(0, o - 3, y, xx) };
                    assert!((v - got).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn global_branch_limits() {
        let mut p = params(2, 1, 9);
        let x = random(Shape::new(1, 2, 6, 6).unwrap(), 10);
        p.set_alpha_decay(0.0);
        assert!(global_branch(&x, &p).unwrap().max_abs_diff(&x) < 1e-12);
        p.set_alpha_decay(1e4);
        let g = global_branch(&x, &p).unwrap();
        for c in 0..2 {
            let mean = x.plane(0, c).iter().sum::<f64>() / 36.0;
            let var = g.plane(0, c).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 36.0;
            assert!(var < 1e-12);
        }
    }

    #[test]
    fn edge_gate_cases() {
        let mut p = params(2, 3, 11);
        let e = random(Shape::new(1, 3, 3, 3).unwrap(), 12);
        p.gate = KernelWeights::from_matrix(2, 3, &[0.0; 6], Some(&[0.0, 0.0])).unwrap();
        assert!(edge_gate(&e, &p).unwrap().data().iter().all(|&v| v == 0.5));
        p.gate = KernelWeights::from_matrix(2, 3, &[0.0; 6], Some(&[40.0, 40.0])).unwrap();
        assert!(edge_gate(&e, &p).unwrap().data().iter().all(|&v| v > 1.0 - 1e-15));
        let p = params(2, 3, 13);
        let g = edge_gate(&e, &p).unwrap();
        let aff = conv2d(&e, &p.gate).unwrap();
        for (a, b) in g.data().iter().zip(aff.data()) {
            assert!((a - sigmoid(*b)).abs() < 1e-15);
        }
    }

    #[test]
    fn edge_spatial_mismatch() {
        let p = params(2, 1, 14);
        let x = random(Shape::new(1, 2, 4, 4).unwrap(), 1);
        let e = random(Shape::new(1, 1, 4, 3).unwrap(), 2);
        let err = gas_block_forward(&x, &e, &p).unwrap_err().to_string();
        assert!(err.contains("width"), "{err}");
    }

    #[test]
    fn hand_checked_composition() {
        // C = 1, identity everywhere, α → 0, both gates saturated open,
        // OutNorm passed through: Y = silu(OutLinear(X_local + X_proj) + X).
        let mut p = params(1, 1, 15);
        p.dw = KernelWeights::depthwise(
            Tensor::from_fn(Shape::new(1, 1, 3, 3).unwrap(), |_, _, y, x| if (y, x) == (1, 1) { 1.0 } else { 0.0 }),
            None,
        )
        .unwrap();
        p.in_proj = KernelWeights::from_matrix(2, 1, &[1.0, 0.0], Some(&[0.0, 1e4])).unwrap();
        p.set_alpha_decay(0.0);
        p.gate = KernelWeights::from_matrix(1, 1, &[0.0], Some(&[1e4])).unwrap();
        p.out_norm.mode = NormMode::PassThrough;
        p.out_proj = KernelWeights::from_matrix(1, 1, &[1.0], Some(&[0.0])).unwrap();
        let x = Tensor::from_f64_vec(Shape::new(1, 1, 2, 2).unwrap(), vec![0.5, -1.0, 2.0, 0.0]).unwrap();
        let e = Tensor::zeros(Shape::new(1, 1, 2, 2).unwrap());
        let (y, _) = gas_block_forward(&x, &e, &p).unwrap();
        // X_local = X_proj = x, so Y = silu(x + x + x).
        let expect = [3.0 * 0.5, -3.0, 6.0, 0.0].map(|v: f64| v * sigmoid(v));
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn closed_gate_and_zero_projection_leave_silu_of_input() {
        let mut p = params(2, 1, 16);
        let m = p.in_proj.weight.data().to_vec();
        p.in_proj = KernelWeights::from_matrix(4, 2, &m, Some(&[0.0, 0.0, -1e4, -1e4])).unwrap();
        p.out_proj = KernelWeights::from_matrix(2, 2, &[0.3, -0.2, 0.1, 0.4], Some(&[0.0, 0.0])).unwrap();
        let x = random(Shape::new(1, 2, 4, 4).unwrap(), 17);
        let e = random(Shape::new(1, 1, 4, 4).unwrap(), 18);
        let (y, trace) = gas_block_forward(&x, &e, &p).unwrap();
        assert!(trace.y_prime.data().iter().all(|&v| v == 0.0));
        assert_eq!(y, x.map(|v| v * sigmoid(v)));

        let mut q = params(2, 1, 19);
        q.out_proj = KernelWeights::from_matrix(2, 2, &[0.0; 4], Some(&[0.0, 0.0])).unwrap();
        let (y, _) = gas_block_forward(&x, &e, &q).unwrap();
        assert_eq!(y, x.map(|v| v * sigmoid(v)));
    }

    #[test]
    fn trace_shapes() {
        let p = params(3, 2, 20);
        let x = random(Shape::new(2, 3, 5, 4).unwrap(), 21);
        let e = random(Shape::new(2, 2, 5, 4).unwrap(), 22);
        let (y, trace) = gas_block_forward(&x, &e, &p).unwrap();
        assert_eq!(y.shape(), x.shape());
        for (_, t) in trace.named() {
            assert_eq!(t.shape(), x.shape());
        }
        assert!(trace.gate.data().iter().all(|&g| g > 0.0 && g < 1.0));
    }
}
