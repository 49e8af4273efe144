//! C ABI over the `ntklab` core.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns an [`NtkStatus`];
//! on failure, [`ntk_last_error`] describes the error on the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ntklab::data::{population_metrics, xor_population, xor_sample, LabeledDataset, XorSpec};
use ntklab::margin::{solve_margin, tangent_features};
use ntklab::net::{forward, init_symmetric, NetworkConfig, NetworkParams};
use ntklab::objective::{empirical_risk, train, GradientScale, TrainConfig};
use ntklab::{checkpoint, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// How the per-sample loss gradients are combined in a training step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtkGradientScale {
    Mean = 0,
    Sum = 1,
}

/// Opaque network parameters.
pub struct NtkNetwork(NetworkParams);

/// Opaque labelled dataset.
pub struct NtkDataset(LabeledDataset);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NtkStatus {
    match e {
        Error::Io(_) | Error::Checkpoint(_) | Error::MissingArtifact(_) | Error::Json(_) => NtkStatus::Io,
        Error::NoConvergence { .. } | Error::NonFinite(_) | Error::Diverged { .. } | Error::NotSeparable => {
            NtkStatus::Numerical
        }
        _ => NtkStatus::InvalidArgument,
    }
}

fn guard<F: FnOnce() -> Result<(), (NtkStatus, String)>>(f: F) -> NtkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NtkStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            NtkStatus::Panic
        }
    }
}

fn lift<T>(r: ntklab::Result<T>) -> Result<T, (NtkStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (NtkStatus, String) {
    (NtkStatus::NullPointer, "null pointer argument".into())
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, (NtkStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, (NtkStatus, String)> {
    p.as_mut().ok_or_else(null)
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (NtkStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (NtkStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ntk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ntk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Symmetric initialisation. `width` must be even.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_init(
    depth: usize,
    width: usize,
    input_dim: usize,
    seed: u64,
    out_net: *mut *mut NtkNetwork,
) -> NtkStatus {
    guard(|| {
        let slot = out(out_net)?;
        let p = lift(init_symmetric(&NetworkConfig::new(depth, width, input_dim, seed)))?;
        *slot = Box::into_raw(Box::new(NtkNetwork(p)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntk_network_free(net: *mut NtkNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ntk_network_shape(
    net: *const NtkNetwork,
    depth: *mut usize,
    width: *mut usize,
    input_dim: *mut usize,
) -> NtkStatus {
    guard(|| {
        let n = &deref(net)?.0;
        *out(depth)? = n.depth();
        *out(width)? = n.width();
        *out(input_dim)? = n.input_dim();
        Ok(())
    })
}

/// `f_W(x)` for a unit vector `x` of length `len`.
#[no_mangle]
pub unsafe extern "C" fn ntk_forward(net: *const NtkNetwork, x: *const f64, len: usize, out_value: *mut f64) -> NtkStatus {
    guard(|| {
        let n = &deref(net)?.0;
        if x.is_null() {
            return Err(null());
        }
        let xs = std::slice::from_raw_parts(x, len);
        *out(out_value)? = lift(forward(n, xs))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntk_network_save(net: *const NtkNetwork, path: *const c_char, step: u64) -> NtkStatus {
    guard(|| {
        let n = &deref(net)?.0;
        lift(checkpoint::save(&path_arg(path)?, n, step))
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntk_network_load(path: *const c_char, out_net: *mut *mut NtkNetwork) -> NtkStatus {
    guard(|| {
        let slot = out(out_net)?;
        let (p, _) = lift(checkpoint::load(&path_arg(path)?))?;
        *slot = Box::into_raw(Box::new(NtkNetwork(p)));
        Ok(())
    })
}

/// Dataset from `n` row-major inputs of dimension `dim` and `n` labels in {-1, +1}.
#[no_mangle]
pub unsafe extern "C" fn ntk_dataset_new(
    inputs: *const f64,
    labels: *const f64,
    n: usize,
    dim: usize,
    out_data: *mut *mut NtkDataset,
) -> NtkStatus {
    guard(|| {
        let slot = out(out_data)?;
        if inputs.is_null() || labels.is_null() {
            return Err(null());
        }
        let flat = std::slice::from_raw_parts(inputs, n * dim);
        let xs: Vec<Vec<f64>> = flat.chunks(dim.max(1)).take(n).map(<[f64]>::to_vec).collect();
        let ys = std::slice::from_raw_parts(labels, n).to_vec();
        let d = lift(LabeledDataset::new(xs, ys, "ffi"))?;
        *slot = Box::into_raw(Box::new(NtkDataset(d)));
        Ok(())
    })
}

/// `n` noisy 2-XOR samples in dimension `dim >= 3`.
#[no_mangle]
pub unsafe extern "C" fn ntk_xor_sample(dim: usize, n: usize, seed: u64, out_data: *mut *mut NtkDataset) -> NtkStatus {
    guard(|| {
        let slot = out(out_data)?;
        let spec = lift(XorSpec::new(dim, seed))?;
        let d = lift(xor_sample(&spec, n))?;
        *slot = Box::into_raw(Box::new(NtkDataset(d)));
        Ok(())
    })
}

/// All `2^dim` support points of the 2-XOR distribution.
#[no_mangle]
pub unsafe extern "C" fn ntk_xor_population(dim: usize, out_data: *mut *mut NtkDataset) -> NtkStatus {
    guard(|| {
        let slot = out(out_data)?;
        let spec = lift(XorSpec::new(dim, 0))?;
        let d = lift(xor_population(&spec))?;
        *slot = Box::into_raw(Box::new(NtkDataset(d)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntk_dataset_free(data: *mut NtkDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ntk_dataset_len(data: *const NtkDataset, out_len: *mut usize) -> NtkStatus {
    guard(|| {
        *out(out_len)? = deref(data)?.0.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntk_empirical_risk(net: *const NtkNetwork, data: *const NtkDataset, out_risk: *mut f64) -> NtkStatus {
    guard(|| {
        let r = lift(empirical_risk(&deref(net)?.0, &deref(data)?.0))?;
        *out(out_risk)? = r.risk;
        Ok(())
    })
}

/// Full-batch gradient descent for `steps` steps; returns the final network as a new handle.
#[no_mangle]
pub unsafe extern "C" fn ntk_train(
    net: *const NtkNetwork,
    data: *const NtkDataset,
    eta: f64,
    steps: usize,
    scale: NtkGradientScale,
    out_net: *mut *mut NtkNetwork,
    out_final_risk: *mut f64,
) -> NtkStatus {
    guard(|| {
        let p = &deref(net)?.0;
        let d = &deref(data)?.0;
        let slot = out(out_net)?;
        let mut cfg = TrainConfig::new(eta, steps);
        cfg.snapshot_every = steps.max(1);
        cfg.step_size_guard = false;
        cfg.gradient_scale = match scale {
            NtkGradientScale::Mean => GradientScale::Mean,
            NtkGradientScale::Sum => GradientScale::Sum,
        };
        let traj = lift(train(p, d, &cfg).and_then(|t| t.into_result()))?;
        if let Some(r) = out_final_risk.as_mut() {
            *r = *traj.train_loss.last().unwrap_or(&f64::NAN);
        }
        *slot = Box::into_raw(Box::new(NtkNetwork(traj.final_params)));
        Ok(())
    })
}

/// Exact 0-1 error (ties count half) and logistic loss over an enumerated population.
#[no_mangle]
pub unsafe extern "C" fn ntk_population_metrics(
    net: *const NtkNetwork,
    population: *const NtkDataset,
    out_zero_one: *mut f64,
    out_logistic: *mut f64,
) -> NtkStatus {
    guard(|| {
        let m = lift(population_metrics(&deref(net)?.0, &deref(population)?.0))?;
        *out(out_zero_one)? = m.zero_one_error;
        *out(out_logistic)? = m.logistic_loss;
        Ok(())
    })
}

/// Hard margin of the tangent features at `init` (0 when not separable).
#[no_mangle]
pub unsafe extern "C" fn ntk_margin(
    init: *const NtkNetwork,
    data: *const NtkDataset,
    tol: f64,
    out_gamma: *mut f64,
    out_dual_gap: *mut f64,
) -> NtkStatus {
    guard(|| {
        let feats = lift(tangent_features(&deref(init)?.0, &deref(data)?.0))?;
        let cert = lift(solve_margin(&feats, tol, 100_000))?;
        *out(out_gamma)? = cert.gamma;
        if let Some(g) = out_dual_gap.as_mut() {
            *g = cert.dual_gap;
        }
        Ok(())
    })
}
