//! Wengert tape: every forward kernel used by the feature operators is
//! recorded here so that reverse-mode gradients of any composition can be
//! taken with [`Tape::backward`].
//!
//! Leaves hold inputs and parameters. Interior nodes keep their output
//! value; backward rules recompute anything else they need from the input
//! values, which are already on the tape. [`Tape::replay`] re-executes all
//! interior nodes through the same forward path used while recording, so a
//! replay reproduces every recorded value bit for bit.

use crate::error::{Error, Result};
use crate::ops::{self, Binary, ConvMode, ReduceKind, Unary};
use crate::spectral;
use crate::tensor::{Real, Shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    /// inputs: x, weight, optional bias
    Conv2d(ConvMode),
    MaxPool2,
    Reduce(ReduceKind),
    Unary(Unary),
    Upsample { height: usize, width: usize },
    Binary(Binary),
    SliceChannels { start: usize, len: usize },
    SoftmaxChannels,
    /// Maximum over (C, H, W) per image.
    MaxPerImage,
    ChannelNorm { eps: f64 },
    Dct2,
    Idct2,
    /// inputs: DCT coefficients, decay rate α (1×1×1×1)
    SpectralDecay,
}

#[derive(Clone, Debug)]
pub struct TapeNode<T: Real = f32> {
    pub op: Op,
    pub inputs: Vec<Var>,
    value: Tensor<T>,
}

impl<T: Real> TapeNode<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<TapeNode<T>>,
    #[cfg(test)]
    fault: Option<(usize, f64)>,
}

/// Accumulated gradients from [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients<T: Real = f32> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Shape>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros when the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }
}

fn forward<T: Real>(op: &Op, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    Ok(match op {
        Op::Leaf => unreachable!("leaves are not recomputed"),
        Op::Conv2d(mode) => ops::conv_forward(inputs[0], *mode, inputs[1], inputs.get(2).copied())?,
        Op::MaxPool2 => ops::maxpool2(inputs[0])?,
        Op::Reduce(kind) => ops::reduce(inputs[0], *kind),
        Op::Unary(u) => ops::elementwise(inputs[0], *u),
        Op::Upsample { height, width } => ops::upsample_nearest(inputs[0], *height, *width)?,
        Op::Binary(b) => ops::binary(inputs[0], inputs[1], *b)?,
        Op::SliceChannels { start, len } => ops::slice_channels(inputs[0], *start, *len)?,
        Op::SoftmaxChannels => ops::softmax_channels(inputs[0]),
        Op::MaxPerImage => ops::max_per_image(inputs[0]).0,
        Op::ChannelNorm { eps } => ops::channel_norm(inputs[0], *eps),
        Op::Dct2 => spectral::dct2_tensor(inputs[0]),
        Op::Idct2 => spectral::idct2_tensor(inputs[0]),
        Op::SpectralDecay => {
            let alpha = scalar_of(inputs[1], "spectral decay rate")?;
            spectral::decay_tensor(inputs[0], alpha)
        }
    })
}

fn scalar_of<T: Real>(t: &Tensor<T>, what: &str) -> Result<f64> {
    if t.len() != 1 {
        return Err(Error::InvalidShape(format!("{what} must be a single value, got {}", t.shape())));
    }
    Ok(t.data()[0].to_f64())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            #[cfg(test)]
            fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &TapeNode<T> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(TapeNode {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
        });
        Var(self.nodes.len() - 1)
    }

    /// Overwrites a leaf value; call [`Tape::replay`] to refresh dependents.
    pub fn set_leaf(&mut self, v: Var, value: Tensor<T>) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if node.op != Op::Leaf {
            return Err(Error::Domain(format!("node {} is not a leaf", v.0)));
        }
        node.value.shape().expect_eq(&value.shape(), "set_leaf")?;
        node.value = value;
        Ok(())
    }

    pub fn record(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        let value = {
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            forward(&op, &vals)?
        };
        self.nodes.push(TapeNode {
            op,
            inputs: inputs.to_vec(),
            value,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Recomputes every interior node from current leaf values.
    pub fn replay(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if self.nodes[i].op == Op::Leaf {
                continue;
            }
            let value = {
                let node = &self.nodes[i];
                let vals: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                forward(&node.op, &vals)?
            };
            self.nodes[i].value = value;
        }
        Ok(())
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, mode: ConvMode) -> Result<Var> {
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        self.record(Op::Conv2d(mode), &inputs)
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        self.record(Op::MaxPool2, &[x])
    }

    pub fn reduce(&mut self, x: Var, kind: ReduceKind) -> Result<Var> {
        self.record(Op::Reduce(kind), &[x])
    }

    pub fn unary(&mut self, x: Var, kind: Unary) -> Result<Var> {
        self.record(Op::Unary(kind), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Relu)
    }

    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary(x, Unary::Affine { scale, shift })
    }

    pub fn upsample(&mut self, x: Var, height: usize, width: usize) -> Result<Var> {
        self.record(Op::Upsample { height, width }, &[x])
    }

    /// Upsamples only when the spatial dims differ.
    pub fn resize_to(&mut self, x: Var, height: usize, width: usize) -> Result<Var> {
        let s = self.shape(x);
        if (s.height, s.width) == (height, width) {
            Ok(x)
        } else {
            self.upsample(x, height, width)
        }
    }

    pub fn binary(&mut self, a: Var, b: Var, kind: Binary) -> Result<Var> {
        self.record(Op::Binary(kind), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Div)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.record(Op::SliceChannels { start, len }, &[x])
    }

    pub fn softmax_channels(&mut self, x: Var) -> Result<Var> {
        self.record(Op::SoftmaxChannels, &[x])
    }

    pub fn max_per_image(&mut self, x: Var) -> Result<Var> {
        self.record(Op::MaxPerImage, &[x])
    }

    pub fn channel_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        self.record(Op::ChannelNorm { eps }, &[x])
    }

    pub fn dct2(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Dct2, &[x])
    }

    pub fn idct2(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Idct2, &[x])
    }

    pub fn spectral_decay(&mut self, coeffs: Var, alpha: Var) -> Result<Var> {
        self.record(Op::SpectralDecay, &[coeffs, alpha])
    }

    /// Gradients of ⟨cotangent, node output⟩ with respect to each input of
    /// `node`, in input order.
    pub fn vjp(&self, node: Var, cotangent: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let n = &self.nodes[node.0];
        n.value.shape().expect_eq(&cotangent.shape(), "vjp cotangent")?;
        let x = |i: usize| &self.nodes[n.inputs[i].0].value;
        let g = cotangent;
        let grads = match &n.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d(mode) => {
                let r = ops::conv_backward(x(0), *mode, x(1), n.inputs.len() == 3, g);
                let mut v = vec![r.input, r.weight];
                v.extend(r.bias);
                v
            }
            Op::MaxPool2 => {
                let (_, arg) = ops::maxpool2_with_argmax(x(0))?;
                vec![ops::scatter_backward(x(0).shape(), &arg, g)]
            }
            Op::Reduce(kind) => vec![ops::reduce_backward(x(0), &n.value, *kind, g)],
            Op::Unary(u) => vec![ops::unary_backward(x(0), &n.value, *u, g)],
            Op::Upsample { .. } => vec![ops::upsample_backward(x(0).shape(), g)],
            Op::Binary(b) => {
                let (ga, gb) = ops::binary_backward(x(0), x(1), *b, g);
                vec![ga, gb]
            }
            Op::SliceChannels { start, .. } => vec![ops::slice_channels_backward(x(0).shape(), *start, g)],
            Op::SoftmaxChannels => vec![ops::softmax_channels_backward(&n.value, g)],
            Op::MaxPerImage => {
                let (_, arg) = ops::max_per_image(x(0));
                vec![ops::scatter_backward(x(0).shape(), &arg, g)]
            }
            Op::ChannelNorm { eps } => vec![ops::channel_norm_backward(x(0), *eps, g)],
            // Orthonormal transforms: the adjoint is the inverse.
            Op::Dct2 => vec![spectral::idct2_tensor(g)],
            Op::Idct2 => vec![spectral::dct2_tensor(g)],
            Op::SpectralDecay => {
                let alpha = scalar_of(x(1), "spectral decay rate")?;
                let (dc, da) = spectral::decay_backward(x(0), alpha, g);
                vec![dc, Tensor::from_f64_vec(x(1).shape(), vec![da])?]
            }
        };
        #[cfg(test)]
        if let Some((idx, scale)) = self.fault {
            if idx == node.0 {
                return Ok(grads.into_iter().map(|t| t.map(|v| v * scale)).collect());
            }
        }
        Ok(grads)
    }

    /// Reverse sweep from `output` seeded with `cotangent`.
    pub fn backward(&self, output: Var, cotangent: Tensor<T>) -> Result<Gradients<T>> {
        self.shape(output).expect_eq(&cotangent.shape(), "backward cotangent")?;
        let mut acc: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        acc[output.0] = Some(cotangent.to_f64_vec());
        for i in (0..=output.0).rev() {
            let Some(g) = acc[i].take() else { continue };
            let node = &self.nodes[i];
            let gt = Tensor::<T>::from_f64_vec(node.value.shape(), g.clone())?;
            if node.op != Op::Leaf {
                for (input, gi) in node.inputs.iter().zip(self.vjp(Var(i), &gt)?) {
                    let slot = acc[input.0].get_or_insert_with(|| vec![0.0; gi.len()]);
                    for (s, v) in slot.iter_mut().zip(gi.data()) {
                        *s += v.to_f64();
                    }
                }
            }
            acc[i] = Some(g);
        }
        let shapes: Vec<Shape> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let grads = acc
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| Tensor::from_f64_vec(shapes[i], g)).transpose())
            .collect::<Result<Vec<_>>>()?;
        let mut grads = grads;
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads, shapes })
    }

    /// Scales every gradient leaving `node` by `scale`; test fixture for
    /// negative controls.
    #[cfg(test)]
    pub(crate) fn inject_fault(&mut self, node: Var, scale: f64) {
        self.fault = Some((node.0, scale));
    }
}
