//! Spectral transforms and convection–diffusion reference solvers.
//!
//! Two bases are used:
//! - an orthonormal type-II DCT, whose cosine modes are the eigenvectors
//!   of the reflecting-boundary Laplacian; frequencies ωx = π·kx/W,
//!   ωy = π·ky/H and K² = ωx² + ωy²;
//! - a unitary-scaled 2D DFT on a periodic grid with angular wavenumbers
//!   2π·m/N (folded to |m| ≤ N/2), used by [`spectral_solve`].
//!
//! [`fd_step`] is an explicit central-difference stepper that serves as an
//! independent oracle for both.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ops::from_f64;
use crate::tensor::{Real, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    Dct2,
    Dft2,
}

impl Basis {
    fn name(self) -> &'static str {
        match self {
            Basis::Dct2 => "dct2",
            Basis::Dft2 => "dft2",
        }
    }
}

/// Per-channel coefficient grid with the same dims as its source. DCT
/// fields are real (`imag` is `None`).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField<T = f32> {
    pub basis: Basis,
    pub coeffs: Tensor<T>,
    pub imag: Option<Tensor<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    pub height: usize,
    pub width: usize,
    pub omega_x: Vec<f64>,
    pub omega_y: Vec<f64>,
    /// Row-major `[ky][kx]`.
    pub k2: Vec<f64>,
}

impl FrequencyGrid {
    #[inline]
    pub fn at(&self, ky: usize, kx: usize) -> f64 {
        self.k2[ky * self.width + kx]
    }
}

pub fn freq_grid(height: usize, width: usize) -> Result<FrequencyGrid> {
    if height == 0 || width == 0 {
        return Err(Error::Domain(format!("frequency grid {height}x{width} is empty")));
    }
    let omega_x: Vec<f64> = (0..width).map(|k| PI * k as f64 / width as f64).collect();
    let omega_y: Vec<f64> = (0..height).map(|k| PI * k as f64 / height as f64).collect();
    let k2 = omega_y
        .iter()
        .flat_map(|wy| omega_x.iter().map(move |wx| wx * wx + wy * wy))
        .collect();
    Ok(FrequencyGrid {
        height,
        width,
        omega_x,
        omega_y,
        k2,
    })
}

/// Orthonormal DCT-II matrix, row k = frequency.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let s = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            m[k * n + i] = s * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos();
        }
    }
    m
}

/// Separable transform of every plane: `forward` applies M along both
/// axes, otherwise Mᵀ.
fn dct_planes<T: Real>(x: &Tensor<T>, forward: bool) -> Tensor<T> {
    let s = x.shape();
    let (h, w) = (s.height, s.width);
    let mw = dct_matrix(w);
    let mh = dct_matrix(h);
    let coef = |m: &[f64], n: usize, k: usize, i: usize| {
        if forward {
            m[k * n + i]
        } else {
            m[i * n + k]
        }
    };
    let mut out = Vec::with_capacity(s.numel());
    let mut rows = vec![0.0f64; h * w];
    for b in 0..s.batch {
        for c in 0..s.channels {
            let p = x.plane(b, c);
            for y in 0..h {
                for k in 0..w {
                    rows[y * w + k] = (0..w).map(|i| coef(&mw, w, k, i) * p[y * w + i].to_f64()).sum();
                }
            }
            for k in 0..h {
                for xx in 0..w {
                    let v: f64 = (0..h).map(|i| coef(&mh, h, k, i) * rows[i * w + xx]).sum();
                    out.push(T::from_f64(v));
                }
            }
        }
    }
    Tensor::new(s, out).expect("same shape")
}

pub(crate) fn dct2_tensor<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    dct_planes(x, true)
}

pub(crate) fn idct2_tensor<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    dct_planes(x, false)
}

/// Orthonormal 2D DCT-II of each (batch, channel) plane.
pub fn dct2<T: Real>(x: &Tensor<T>) -> SpectralField<T> {
    SpectralField {
        basis: Basis::Dct2,
        coeffs: dct2_tensor(x),
        imag: None,
    }
}

/// Inverse of [`dct2`] (orthonormal DCT-III).
pub fn idct2<T: Real>(f: &SpectralField<T>) -> Result<Tensor<T>> {
    expect_basis(f, Basis::Dct2)?;
    Ok(idct2_tensor(&f.coeffs))
}

fn expect_basis<T>(f: &SpectralField<T>, basis: Basis) -> Result<()> {
    if f.basis != basis {
        return Err(Error::Basis {
            expected: basis.name(),
            found: f.basis.name(),
        });
    }
    Ok(())
}

/// exp(−α·K²) multiplier on DCT coefficient tensors.
pub(crate) fn decay_tensor<T: Real>(coeffs: &Tensor<T>, alpha: f64) -> Tensor<T> {
    let s = coeffs.shape();
    let grid = freq_grid(s.height, s.width).expect("tensor dims are non-zero");
    let factors: Vec<f64> = grid.k2.iter().map(|k2| (-alpha * k2).exp()).collect();
    let v = coeffs
        .data()
        .iter()
        .enumerate()
        .map(|(i, c)| c.to_f64() * factors[i % s.plane()])
        .collect();
    from_f64(s, v)
}

/// d⟨g, decay(c, α)⟩/dc and /dα.
pub(crate) fn decay_backward<T: Real>(coeffs: &Tensor<T>, alpha: f64, grad: &Tensor<T>) -> (Tensor<T>, f64) {
    let s = coeffs.shape();
    let grid = freq_grid(s.height, s.width).expect("tensor dims are non-zero");
    let mut dc = Vec::with_capacity(s.numel());
    let mut dalpha = 0.0;
    for (i, (c, g)) in coeffs.data().iter().zip(grad.data()).enumerate() {
        let k2 = grid.k2[i % s.plane()];
        let f = (-alpha * k2).exp();
        let g = g.to_f64();
        dc.push(g * f);
        dalpha -= g * c.to_f64() * k2 * f;
    }
    (from_f64(s, dc), dalpha)
}

/// f'[c][ky][kx] = f[c][ky][kx]·exp(−α·K²[ky][kx])·W_f[c].
pub fn decay_apply<T: Real>(f: &SpectralField<T>, alpha: f64, channel_weights: &[f64]) -> Result<SpectralField<T>> {
    expect_basis(f, Basis::Dct2)?;
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("decay rate {alpha} must be non-negative")));
    }
    let s = f.coeffs.shape();
    if channel_weights.len() != s.channels {
        return Err(Error::Axis {
            op: "decay_apply",
            axis: crate::Axis::Channel,
            expected: s.channels,
            found: channel_weights.len(),
        });
    }
    let decayed = decay_tensor(&f.coeffs, alpha);
    let v = decayed
        .data()
        .iter()
        .enumerate()
        .map(|(i, c)| c.to_f64() * channel_weights[(i / s.plane()) % s.channels])
        .collect();
    Ok(SpectralField {
        basis: Basis::Dct2,
        coeffs: from_f64(s, v),
        imag: None,
    })
}

/// Diffusion coefficient, velocity and elapsed time; grid spacing is 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionParams {
    pub diffusion: f64,
    pub vx: f64,
    pub vy: f64,
    pub time: f64,
}

impl DiffusionParams {
    pub fn new(diffusion: f64, vx: f64, vy: f64, time: f64) -> Result<Self> {
        let p = DiffusionParams {
            diffusion,
            vx,
            vy,
            time,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion >= 0.0) {
            return Err(Error::Domain(format!("diffusion coefficient {} must be >= 0", self.diffusion)));
        }
        if !(self.time >= 0.0) {
            return Err(Error::Domain(format!("elapsed time {} must be >= 0", self.time)));
        }
        if !self.vx.is_finite() || !self.vy.is_finite() {
            return Err(Error::Domain("velocity must be finite".into()));
        }
        Ok(())
    }

    pub fn with_time(self, time: f64) -> Self {
        DiffusionParams { time, ..self }
    }
}

/// Angular wavenumber of DFT bin `m` on `n` points, folded to [−π, π].
fn wavenumber(m: usize, n: usize) -> f64 {
    let signed = if 2 * m > n { m as f64 - n as f64 } else { m as f64 };
    2.0 * PI * signed / n as f64
}

/// Complex 1D DFT along a strided line, in place. `sign` = −1 forward.
fn dft_line(re: &mut [f64], im: &mut [f64], idx: &[usize], sign: f64, tw: &[(f64, f64)]) {
    let n = idx.len();
    let (mut or, mut oi) = (vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for (j, &p) in idx.iter().enumerate() {
            let (c, s) = tw[(k * j) % n];
            let s = sign * s;
            sr += re[p] * c - im[p] * s;
            si += re[p] * s + im[p] * c;
        }
        or[k] = sr;
        oi[k] = si;
    }
    for (k, &p) in idx.iter().enumerate() {
        re[p] = or[k];
        im[p] = oi[k];
    }
}

fn dft_plane(re: &mut [f64], im: &mut [f64], h: usize, w: usize, inverse: bool) {
    let sign = if inverse { 1.0 } else { -1.0 };
    let tw_w: Vec<(f64, f64)> = (0..w).map(|k| { let a = 2.0 * PI * k as f64 / w as f64; (a.cos(), a.sin()) }).collect();
    let tw_h: Vec<(f64, f64)> = (0..h).map(|k| { let a = 2.0 * PI * k as f64 / h as f64; (a.cos(), a.sin()) }).collect();
    for y in 0..h {
        let idx: Vec<usize> = (0..w).map(|x| y * w + x).collect();
        dft_line(re, im, &idx, sign, &tw_w);
    }
    for x in 0..w {
        let idx: Vec<usize> = (0..h).map(|y| y * w + x).collect();
        dft_line(re, im, &idx, sign, &tw_h);
    }
    if inverse {
        let n = (h * w) as f64;
        re.iter_mut().for_each(|v| *v /= n);
        im.iter_mut().for_each(|v| *v /= n);
    }
}

/// Unnormalised forward DFT of each plane.
pub fn dft2<T: Real>(x: &Tensor<T>) -> SpectralField<T> {
    let s = x.shape();
    let (mut re_all, mut im_all) = (Vec::with_capacity(s.numel()), Vec::with_capacity(s.numel()));
    for b in 0..s.batch {
        for c in 0..s.channels {
            let mut re: Vec<f64> = x.plane(b, c).iter().map(|v| v.to_f64()).collect();
            let mut im = vec![0.0; re.len()];
            dft_plane(&mut re, &mut im, s.height, s.width, false);
            re_all.extend(re);
            im_all.extend(im);
        }
    }
    SpectralField {
        basis: Basis::Dft2,
        coeffs: from_f64(s, re_all),
        imag: Some(from_f64(s, im_all)),
    }
}

/// Inverse of [`dft2`]: the real part plus the largest imaginary residue.
pub fn idft2<T: Real>(f: &SpectralField<T>) -> Result<(Tensor<T>, f64)> {
    expect_basis(f, Basis::Dft2)?;
    let s = f.coeffs.shape();
    let zero = Tensor::<T>::zeros(s);
    let imag = f.imag.as_ref().unwrap_or(&zero);
    let mut out = Vec::with_capacity(s.numel());
    let mut residue = 0.0f64;
    for b in 0..s.batch {
        for c in 0..s.channels {
            let mut re: Vec<f64> = f.coeffs.plane(b, c).iter().map(|v| v.to_f64()).collect();
            let mut im: Vec<f64> = imag.plane(b, c).iter().map(|v| v.to_f64()).collect();
            dft_plane(&mut re, &mut im, s.height, s.width, true);
            residue = im.iter().fold(residue, |m, v| m.max(v.abs()));
            out.extend(re);
        }
    }
    Ok((from_f64(s, out), residue))
}

/// Multiplier for one axis: exp(−i·v·k·t), or its real part at the
/// Nyquist bin so real fields stay real.
fn axis_phase(m: usize, n: usize, v: f64, t: f64) -> (f64, f64) {
    let a = -v * wavenumber(m, n) * t;
    if 2 * m == n {
        (a.cos(), 0.0)
    } else {
        (a.cos(), a.sin())
    }
}

/// Periodic-domain solution of ∂u/∂t = D∇²u − v·∇u: every Fourier mode is
/// multiplied by exp(−D(kx²+ky²)t − i(vx·kx + vy·ky)t).
pub fn spectral_solve<T: Real>(u0: &Tensor<T>, p: &DiffusionParams) -> Result<Tensor<T>> {
    spectral_solve_with_residue(u0, p).map(|(u, _)| u)
}

/// As [`spectral_solve`], also returning the largest discarded imaginary
/// part.
pub fn spectral_solve_with_residue<T: Real>(u0: &Tensor<T>, p: &DiffusionParams) -> Result<(Tensor<T>, f64)> {
    p.validate()?;
    let s = u0.shape();
    let (h, w) = (s.height, s.width);
    let mut out = Vec::with_capacity(s.numel());
    let mut residue = 0.0f64;
    for b in 0..s.batch {
        for c in 0..s.channels {
            let mut re: Vec<f64> = u0.plane(b, c).iter().map(|v| v.to_f64()).collect();
            let mut im = vec![0.0; re.len()];
            dft_plane(&mut re, &mut im, h, w, false);
            for my in 0..h {
                let ky = wavenumber(my, h);
                let (py_r, py_i) = axis_phase(my, h, p.vy, p.time);
                for mx in 0..w {
                    let kx = wavenumber(mx, w);
                    let (px_r, px_i) = axis_phase(mx, w, p.vx, p.time);
                    let decay = (-p.diffusion * (kx * kx + ky * ky) * p.time).exp();
                    let (fr, fi) = (
                        decay * (px_r * py_r - px_i * py_i),
                        decay * (px_r * py_i + px_i * py_r),
                    );
                    let i = my * w + mx;
                    let (a, bb) = (re[i], im[i]);
                    re[i] = a * fr - bb * fi;
                    im[i] = a * fi + bb * fr;
                }
            }
            dft_plane(&mut re, &mut im, h, w, true);
            residue = im.iter().fold(residue, |m, v| m.max(v.abs()));
            out.extend(re);
        }
    }
    Ok((from_f64(s, out), residue))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Wrap-around.
    Periodic,
    /// Mirror about the half-sample point (u[−1] = u[0]), the boundary
    /// implied by the DCT-II basis.
    Reflecting,
}

/// Largest admissible values of D·Δt and |v|·Δt (grid spacing 1).
pub const CFL_DIFFUSION: f64 = 0.25;
pub const CFL_CONVECTION: f64 = 0.5;

pub fn check_cfl(p: &DiffusionParams, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step {dt} must be positive")));
    }
    let diff = p.diffusion * dt;
    if diff > CFL_DIFFUSION {
        return Err(Error::Cfl {
            bound: "D*dt/h^2",
            value: diff,
            limit: CFL_DIFFUSION,
        });
    }
    let conv = p.vx.abs().max(p.vy.abs()) * dt;
    if conv > CFL_CONVECTION {
        return Err(Error::Cfl {
            bound: "max(|vx|,|vy|)*dt/h",
            value: conv,
            limit: CFL_CONVECTION,
        });
    }
    Ok(())
}

fn neighbour(i: usize, delta: isize, n: usize, boundary: Boundary) -> usize {
    let j = i as isize + delta;
    if (0..n as isize).contains(&j) {
        return j as usize;
    }
    match boundary {
        Boundary::Periodic => j.rem_euclid(n as isize) as usize,
        Boundary::Reflecting => i,
    }
}

fn step_plane(u: &[f64], h: usize, w: usize, p: &DiffusionParams, dt: f64, boundary: Boundary) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for y in 0..h {
        let (yn, ys) = (neighbour(y, -1, h, boundary), neighbour(y, 1, h, boundary));
        for x in 0..w {
            let (xw, xe) = (neighbour(x, -1, w, boundary), neighbour(x, 1, w, boundary));
            let c = u[y * w + x];
            let (n, s, west, east) = (u[yn * w + x], u[ys * w + x], u[y * w + xw], u[y * w + xe]);
            let lap = n + s + west + east - 4.0 * c;
            let dudx = 0.5 * (east - west);
            let dudy = 0.5 * (s - n);
            out[y * w + x] = c + dt * (p.diffusion * lap - p.vx * dudx - p.vy * dudy);
        }
    }
    out
}

/// One explicit step u' = u + Δt·(D∇²u − v·∇u) with the 5-point Laplacian
/// and central first differences. `p.time` is ignored.
pub fn fd_step<T: Real>(u: &Tensor<T>, p: &DiffusionParams, dt: f64, boundary: Boundary) -> Result<Tensor<T>> {
    p.validate()?;
    check_cfl(p, dt)?;
    let s = u.shape();
    let mut out = Vec::with_capacity(s.numel());
    for b in 0..s.batch {
        for c in 0..s.channels {
            let plane: Vec<f64> = u.plane(b, c).iter().map(|v| v.to_f64()).collect();
            out.extend(step_plane(&plane, s.height, s.width, p, dt, boundary));
        }
    }
    Ok(from_f64(s, out))
}

/// Advances `u0` to `p.time` in ⌈t/Δt⌉ equal steps no longer than `dt`,
/// keeping the state in f64 between steps.
pub fn fd_rollout<T: Real>(u0: &Tensor<T>, p: &DiffusionParams, dt: f64, boundary: Boundary) -> Result<Tensor<T>> {
    p.validate()?;
    check_cfl(p, dt)?;
    let steps = (p.time / dt - 1e-9).ceil().max(0.0) as usize;
    if steps == 0 {
        return Ok(u0.clone());
    }
    let step = p.time / steps as f64;
    let s = u0.shape();
    let mut out = Vec::with_capacity(s.numel());
    for b in 0..s.batch {
        for c in 0..s.channels {
            let mut plane: Vec<f64> = u0.plane(b, c).iter().map(|v| v.to_f64()).collect();
            for _ in 0..steps {
                plane = step_plane(&plane, s.height, s.width, p, step, boundary);
            }
            out.extend(plane);
        }
    }
    Ok(from_f64(s, out))
}

/// Isotropic Gaussian centred at ((H−1)/2, (W−1)/2) with unit peak.
pub fn gaussian_bump<T: Real>(height: usize, width: usize, sigma: f64) -> Result<Tensor<T>> {
    let s = Shape::new(1, 1, height, width)?;
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    Ok(Tensor::from_fn(s, |_, _, y, x| {
        let r2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
        (-r2 / (2.0 * sigma * sigma)).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = freq_grid(1, 1).unwrap();
        assert_eq!(g.k2, vec![0.0]);
        let g = freq_grid(2, 2).unwrap();
        assert!((g.at(1, 1) - PI * PI / 2.0).abs() < 1e-12);
        let g = freq_grid(4, 8).unwrap();
        for ky in 0..4 {
            for kx in 0..8 {
                let expect = (PI * kx as f64 / 8.0).powi(2) + (PI * ky as f64 / 4.0).powi(2);
                assert!((g.at(ky, kx) - expect).abs() < 1e-12);
            }
        }
        assert!(g.k2.iter().all(|&k| k < 2.0 * PI * PI));
    }

    #[test]
    fn constant_field_has_single_dc_coefficient() {
        let x = Tensor::<f64>::full(Shape::new(1, 1, 4, 6).unwrap(), 3.0);
        let f = dct2(&x);
        assert!((f.coeffs.data()[0] - 3.0 * 24f64.sqrt()).abs() < 1e-12);
        assert!(f.coeffs.data()[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dc_impulse_inverts_to_ones() {
        let s = Shape::new(1, 1, 3, 5).unwrap();
        let mut c = Tensor::<f64>::zeros(s);
        c.data_mut()[0] = 15f64.sqrt();
        let f = SpectralField { basis: Basis::Dct2, coeffs: c, imag: None };
        let x = idct2(&f).unwrap();
        assert!(x.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn wrong_basis_rejected() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 1, 2, 2).unwrap());
        let f = dft2(&x);
        let err = idct2(&f).unwrap_err();
        assert!(matches!(err, Error::Basis { .. }));
        assert!(decay_apply(&f, 0.1, &[1.0]).is_err());
    }

    #[test]
    fn decay_identity_and_limit() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 2, 4, 4).unwrap(), |_, c, y, x| (c + y * x) as f64);
        let f = dct2(&x);
        assert_eq!(decay_apply(&f, 0.0, &[1.0, 1.0]).unwrap(), f);
        let g = decay_apply(&f, 1e6, &[1.0, 1.0]).unwrap();
        let back = idct2(&g).unwrap();
        for c in 0..2 {
            let mean = x.plane(0, c).iter().sum::<f64>() / 16.0;
            assert!(back.plane(0, c).iter().all(|v| (v - mean).abs() < 1e-12));
        }
        assert!(decay_apply(&f, 1.0, &[1.0]).is_err());
        assert!(decay_apply(&f, -1.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn dft_roundtrip() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 1, 5, 6).unwrap(), |_, _, y, x| ((3 * y + x) % 7) as f64);
        let (back, residue) = idft2(&dft2(&x)).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-12);
        assert!(residue < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let x = gaussian_bump::<f64>(8, 8, 2.0).unwrap();
        let p = DiffusionParams::new(0.0, 0.0, 0.0, 3.0).unwrap();
        assert!(spectral_solve(&x, &p).unwrap().max_abs_diff(&x) < 1e-12);
        let p = DiffusionParams::new(0.7, 1.3, -0.4, 0.0).unwrap();
        assert!(spectral_solve(&x, &p).unwrap().max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn non_integer_shift_stays_real() {
        let x = gaussian_bump::<f64>(8, 8, 1.5).unwrap();
        let p = DiffusionParams::new(0.1, 0.37, 1.21, 1.0).unwrap();
        let (_, residue) = spectral_solve_with_residue(&x, &p).unwrap();
        assert!(residue < 1e-12, "{residue}");
    }

    #[test]
    fn cfl_bounds_named() {
        let u = Tensor::<f64>::zeros(Shape::new(1, 1, 4, 4).unwrap());
        let p = DiffusionParams::new(0.5, 0.0, 0.0, 1.0).unwrap();
        let err = fd_step(&u, &p, 0.6, Boundary::Periodic).unwrap_err().to_string();
        assert!(err.contains("CFL") && err.contains("D*dt"), "{err}");
        let p = DiffusionParams::new(0.0, 2.0, 0.0, 1.0).unwrap();
        let err = fd_step(&u, &p, 0.3, Boundary::Periodic).unwrap_err().to_string();
        assert!(err.contains("|vx|"), "{err}");
        assert!(fd_step(&u, &p, 0.25, Boundary::Periodic).is_ok());
    }

    #[test]
    fn constant_field_is_stationary() {
        let u = Tensor::<f64>::full(Shape::new(1, 1, 5, 5).unwrap(), 2.0);
        let p = DiffusionParams::new(0.2, 0.5, -0.5, 1.0).unwrap();
        for b in [Boundary::Periodic, Boundary::Reflecting] {
            assert_eq!(fd_step(&u, &p, 0.5, b).unwrap(), u);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(DiffusionParams::new(-0.1, 0.0, 0.0, 1.0).is_err());
        assert!(DiffusionParams::new(0.1, 0.0, 0.0, -1.0).is_err());
    }
}
