//! Independent reference implementations used by the integration tests.
//! Each one is written directly from the defining formula, with plain
//! nested loops over `f64` values and no calls into the library kernels.

#![allow(dead_code)]

use std::f64::consts::PI;

use plume_core::rng::Prng;
use plume_core::{Shape, Tensor};

pub fn shape(b: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape::new(b, c, h, w).unwrap()
}

pub fn random(s: Shape, seed: u64) -> Tensor<f64> {
    Prng::new(seed).uniform_tensor(s, -1.0, 1.0)
}

pub fn at(t: &Tensor<f64>, b: usize, c: usize, y: isize, x: isize) -> f64 {
    let s = t.shape();
    if y < 0 || x < 0 || y >= s.height as isize || x >= s.width as isize {
        0.0
    } else {
        t.at(b, c, y as usize, x as usize)
    }
}

/// Dense k×k correlation with zero same-padding:
/// out[o][y][x] = bias[o] + Σ_i Σ_dy Σ_dx w[o][i][dy][dx] · x[i][y+dy−r][x+dx−r].
pub fn dense_conv(x: &Tensor<f64>, w: &[Vec<Vec<Vec<f64>>>], bias: Option<&[f64]>) -> Tensor<f64> {
    let s = x.shape();
    let k = w[0][0].len();
    let r = (k / 2) as isize;
    let out = shape(s.batch, w.len(), s.height, s.width);
    Tensor::from_fn(out, |b, o, y, xx| {
        let mut acc = bias.map_or(0.0, |bb| bb[o]);
        for (i, wi) in w[o].iter().enumerate() {
            for (dy, row) in wi.iter().enumerate() {
                for (dx, &wv) in row.iter().enumerate() {
                    acc += wv * at(x, b, i, y as isize + dy as isize - r, xx as isize + dx as isize - r);
                }
            }
        }
        acc
    })
}

/// Weight tensor (out, in, k, k) as nested vectors.
pub fn nested(weight: &Tensor<f64>) -> Vec<Vec<Vec<Vec<f64>>>> {
    let s = weight.shape();
    (0..s.batch)
        .map(|o| {
            (0..s.channels)
                .map(|i| (0..s.height).map(|y| (0..s.width).map(|x| weight.at(o, i, y, x)).collect()).collect())
                .collect()
        })
        .collect()
}

/// Max of each 2×2 block; trailing odd row/column dropped.
pub fn block_max(x: &Tensor<f64>) -> Tensor<f64> {
    let s = x.shape();
    Tensor::from_fn(shape(s.batch, s.channels, s.height / 2, s.width / 2), |b, c, y, xx| {
        let mut m = f64::NEG_INFINITY;
        for dy in 0..2 {
            for dx in 0..2 {
                m = m.max(x.at(b, c, 2 * y + dy, 2 * xx + dx));
            }
        }
        m
    })
}

fn dct_scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Orthonormal type-II 2D DCT of one plane, straight quadruple loop.
pub fn naive_dct2(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for ky in 0..h {
        for kx in 0..w {
            let mut acc = 0.0;
            for y in 0..h {
                for x in 0..w {
                    acc += plane[y * w + x]
                        * (PI * (2 * y + 1) as f64 * ky as f64 / (2 * h) as f64).cos()
                        * (PI * (2 * x + 1) as f64 * kx as f64 / (2 * w) as f64).cos();
                }
            }
            out[ky * w + kx] = dct_scale(ky, h) * dct_scale(kx, w) * acc;
        }
    }
    out
}

/// Inverse of [`naive_dct2`] (type III), straight quadruple loop.
pub fn naive_idct2(coeffs: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..h {
                for kx in 0..w {
                    acc += dct_scale(ky, h)
                        * dct_scale(kx, w)
                        * coeffs[ky * w + kx]
                        * (PI * (2 * y + 1) as f64 * ky as f64 / (2 * h) as f64).cos()
                        * (PI * (2 * x + 1) as f64 * kx as f64 / (2 * w) as f64).cos();
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Relative L2 distance of `a` from `reference`.
pub fn rel_l2(a: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = reference.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Path to the bundled test data directory.
pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}
