//! C ABI over `plume-core`.
//!
//! Tensors cross the boundary as opaque `PlumeTensor` handles holding `f32`
//! data in (batch, channels, height, width) row-major order. Every entry
//! point returns a `PlumeStatus`; on failure the message is kept per thread
//! and can be copied out with `plume_last_error_message`. Handles returned
//! through out-pointers are owned by the caller and released with
//! `plume_tensor_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use plume_core::edge::{agpeo, AgpeoParams, EdgeBanks};
use plume_core::gas_block::{gas_block_forward, GasBlockParams};
use plume_core::rng::Prng;
use plume_core::spectral::{dct2, idct2, spectral_solve, Basis, DiffusionParams, SpectralField};
use plume_core::{Error, Shape, Tensor};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlumeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidShape = 2,
    ShapeMismatch = 3,
    Domain = 4,
    Numeric = 5,
    Panic = 6,
}

/// Opaque tensor handle.
pub struct PlumeTensor {
    inner: Tensor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PlumeStatus {
    match err {
        Error::InvalidShape(_) | Error::PoolUnderflow { .. } | Error::UpsampleTarget { .. } => PlumeStatus::InvalidShape,
        Error::Axis { .. } | Error::Incompatible { .. } => PlumeStatus::ShapeMismatch,
        Error::NonFinite(_) => PlumeStatus::Numeric,
        _ => PlumeStatus::Domain,
    }
}

struct Failure(PlumeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PlumeStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PlumeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PlumeStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            PlumeStatus::Panic
        }
    }
}

unsafe fn tensor<'a>(t: *const PlumeTensor, what: &str) -> Result<&'a Tensor, Failure> {
    t.as_ref().map(|h| &h.inner).ok_or_else(|| null(what))
}

unsafe fn emit(out: *mut *mut PlumeTensor, t: Tensor) {
    *out = Box::into_raw(Box::new(PlumeTensor { inner: t }));
}

fn check_out(out: *mut *mut PlumeTensor) -> Result<(), Failure> {
    if out.is_null() {
        Err(null("output handle pointer"))
    } else {
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn plume_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated when `len > 0`). Returns the full message length excluding
/// the terminator, or 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn plume_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Allocates a zero tensor.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn plume_tensor_zeros(
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    out: *mut *mut PlumeTensor,
) -> PlumeStatus {
    guard(|| {
        check_out(out)?;
        let s = Shape::new(batch, channels, height, width)?;
        emit(out, Tensor::zeros(s));
        Ok(())
    })
}

/// Allocates a tensor initialised from `len` values at `data`.
///
/// # Safety
/// `data` must point to `len` readable floats; `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn plume_tensor_from_data(
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: *const f32,
    len: usize,
    out: *mut *mut PlumeTensor,
) -> PlumeStatus {
    guard(|| {
        check_out(out)?;
        if data.is_null() {
            return Err(null("data"));
        }
        let s = Shape::new(batch, channels, height, width)?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        emit(out, Tensor::new(s, values)?);
        Ok(())
    })
}

/// Releases a handle. Null is accepted and ignored.
///
/// # Safety
/// `t` must be null or a live handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn plume_tensor_free(t: *mut PlumeTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Writes (batch, channels, height, width) into `dims[0..4]`.
///
/// # Safety
/// `t` must be a live handle and `dims` point to 4 writable values.
#[no_mangle]
pub unsafe extern "C" fn plume_tensor_shape(t: *const PlumeTensor, dims: *mut usize) -> PlumeStatus {
    guard(|| {
        let t = tensor(t, "tensor")?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        for (i, d) in t.shape().dims().into_iter().enumerate() {
            *dims.add(i) = d;
        }
        Ok(())
    })
}

/// Number of elements, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn plume_tensor_len(t: *const PlumeTensor) -> usize {
    t.as_ref().map_or(0, |h| h.inner.len())
}

/// Copies all elements into `buf`, which must hold exactly `len` values.
///
/// # Safety
/// `t` must be a live handle and `buf` point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn plume_tensor_read(t: *const PlumeTensor, buf: *mut f32, len: usize) -> PlumeStatus {
    guard(|| {
        let t = tensor(t, "tensor")?;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len != t.len() {
            return Err(Failure(PlumeStatus::ShapeMismatch, format!("buffer holds {len} values, tensor has {}", t.len())));
        }
        ptr::copy_nonoverlapping(t.data().as_ptr(), buf, len);
        Ok(())
    })
}

/// Overwrites all elements from `buf`, which must hold exactly `len` values.
///
/// # Safety
/// `t` must be a live handle and `buf` point to `len` readable floats.
#[no_mangle]
pub unsafe extern "C" fn plume_tensor_write(t: *mut PlumeTensor, buf: *const f32, len: usize) -> PlumeStatus {
    guard(|| {
        let h = t.as_mut().ok_or_else(|| null("tensor"))?;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len != h.inner.len() {
            return Err(Failure(PlumeStatus::ShapeMismatch, format!("buffer holds {len} values, tensor has {}", h.inner.len())));
        }
        let values = std::slice::from_raw_parts(buf, len).to_vec();
        h.inner = Tensor::new(h.inner.shape(), values)?;
        Ok(())
    })
}

/// Orthonormal 2D DCT-II of every plane.
///
/// # Safety
/// `x` must be a live handle; `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn plume_dct2(x: *const PlumeTensor, out: *mut *mut PlumeTensor) -> PlumeStatus {
    guard(|| {
        check_out(out)?;
        let x = tensor(x, "input")?;
        emit(out, dct2(x).coeffs);
        Ok(())
    })
}

/// Inverse of [`plume_dct2`].
///
/// # Safety
/// `coeffs` must be a live handle; `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn plume_idct2(coeffs: *const PlumeTensor, out: *mut *mut PlumeTensor) -> PlumeStatus {
    guard(|| {
        check_out(out)?;
        let c = tensor(coeffs, "coefficients")?;
        let field = SpectralField { basis: Basis::Dct2, coeffs: c.clone(), imag: None };
        emit(out, idct2(&field)?);
        Ok(())
    })
}

/// Periodic convection-diffusion solution at time `t`.
///
/// # Safety
/// `u0` must be a live handle; `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn plume_spectral_solve(
    u0: *const PlumeTensor,
    diffusion: f64,
    vx: f64,
    vy: f64,
    t: f64,
    out: *mut *mut PlumeTensor,
) -> PlumeStatus {
    guard(|| {
        check_out(out)?;
        let u0 = tensor(u0, "initial field")?;
        let p = DiffusionParams::new(diffusion, vx, vy, t)?;
        emit(out, spectral_solve(u0, &p)?);
        Ok(())
    })
}

/// Fused edge map with fusion weight `alpha` in [0, 1]; 1 selects the
/// normalised gradient alone and 0 the phase congruency alone.
///
/// # Safety
/// `x` must be a live handle; `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn plume_edge_map(x: *const PlumeTensor, alpha: f64, out: *mut *mut PlumeTensor) -> PlumeStatus {
    guard(|| {
        check_out(out)?;
        let x = tensor(x, "input")?;
        let p = AgpeoParams::fixed(alpha)?;
        emit(out, agpeo(x, &p, &EdgeBanks::default())?);
        Ok(())
    })
}

/// Forward pass of a seeded gas block with initial decay rate `alpha_decay`.
/// `edge` supplies the gating prior and may have any channel count.
///
/// # Safety
/// `x` and `edge` must be live handles; `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn plume_gas_block_forward(
    x: *const PlumeTensor,
    edge: *const PlumeTensor,
    seed: u64,
    alpha_decay: f64,
    out: *mut *mut PlumeTensor,
) -> PlumeStatus {
    guard(|| {
        check_out(out)?;
        let x = tensor(x, "input")?;
        let e = tensor(edge, "edge")?;
        let p = GasBlockParams::init(x.shape().channels, e.shape().channels, alpha_decay, &mut Prng::new(seed))?;
        let (y, _) = gas_block_forward(x, e, &p)?;
        emit(out, y);
        Ok(())
    })
}
