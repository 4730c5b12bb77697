//! C ABI over the plaquette crate. Complexes and configurations are opaque
//! handles owned by the caller and released with the matching `_free`.
//! Every fallible call returns a `PlqStatus` and writes results through out
//! pointers; panics are caught at the boundary.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use plaquette::algebra::null_homology_test;
use plaquette::duality::{v_gamma_dual_test, DualGraph};
use plaquette::lattice::{loop_boundary_chain, BoundaryCondition, Complex, LatticeBox, PercolationConfig};
use plaquette::plgt::anomaly_example;
use plaquette::prcm::{sample, PrcmParams, SampleSpec};
use plaquette::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlqStatus {
    Ok = 0,
    InvalidArgument = 1,
    DimensionMismatch = 2,
    Geometry = 3,
    NotACycle = 4,
    TooLarge = 5,
    Unsupported = 6,
    Precondition = 7,
    Config = 8,
    Io = 9,
    NullPointer = 10,
    Panic = 11,
}

impl From<&Error> for PlqStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => PlqStatus::InvalidArgument,
            Error::DimensionMismatch(_) => PlqStatus::DimensionMismatch,
            Error::Geometry(_) => PlqStatus::Geometry,
            Error::NotACycle => PlqStatus::NotACycle,
            Error::TooLarge(_) => PlqStatus::TooLarge,
            Error::Unsupported(_) => PlqStatus::Unsupported,
            Error::Precondition(_) => PlqStatus::Precondition,
            Error::Config(_) => PlqStatus::Config,
            Error::Io(_) => PlqStatus::Io,
        }
    }
}

/// Boundary conditions as passed across the ABI.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlqBoundary {
    Free = 0,
    Wired = 1,
    Closed = 2,
}

impl From<PlqBoundary> for BoundaryCondition {
    fn from(b: PlqBoundary) -> Self {
        match b {
            PlqBoundary::Free => BoundaryCondition::Free,
            PlqBoundary::Wired => BoundaryCondition::Wired,
            PlqBoundary::Closed => BoundaryCondition::Closed,
        }
    }
}

/// A box complex with its dual graph when the top dimension is d-1.
pub struct PlqComplex {
    cx: Complex,
    dual: Option<DualGraph>,
}

/// A plaquette configuration on some complex.
pub struct PlqConfig {
    config: PercolationConfig,
}

fn guard(f: impl FnOnce() -> Result<(), PlqStatus>) -> PlqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PlqStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => PlqStatus::Panic,
    }
}

fn lift<T>(r: plaquette::Result<T>) -> Result<T, PlqStatus> {
    r.map_err(|e| PlqStatus::from(&e))
}

unsafe fn get<'a, T>(p: *const T) -> Result<&'a T, PlqStatus> {
    p.as_ref().ok_or(PlqStatus::NullPointer)
}

unsafe fn get_mut<'a, T>(p: *mut T) -> Result<&'a mut T, PlqStatus> {
    p.as_mut().ok_or(PlqStatus::NullPointer)
}

unsafe fn ints<'a>(p: *const i64, n: usize) -> Result<&'a [i64], PlqStatus> {
    if p.is_null() {
        return Err(PlqStatus::NullPointer);
    }
    Ok(slice::from_raw_parts(p, n))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn plq_status_message(status: PlqStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        PlqStatus::Ok => b"ok\0",
        PlqStatus::InvalidArgument => b"invalid argument\0",
        PlqStatus::DimensionMismatch => b"dimension mismatch\0",
        PlqStatus::Geometry => b"geometry error\0",
        PlqStatus::NotACycle => b"chain is not a cycle\0",
        PlqStatus::TooLarge => b"state space too large\0",
        PlqStatus::Unsupported => b"unsupported\0",
        PlqStatus::Precondition => b"precondition violated\0",
        PlqStatus::Config => b"configuration error\0",
        PlqStatus::Io => b"i/o error\0",
        PlqStatus::NullPointer => b"null pointer\0",
        PlqStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

/// Builds the complex of all cells up to dimension `top` of [0,e_1] × … × [0,e_d].
///
/// # Safety
/// `extents` must point to `d` integers and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn plq_complex_new(extents: *const i64, d: usize, top: usize, out: *mut *mut PlqComplex) -> PlqStatus {
    guard(|| {
        let out = get_mut(out)?;
        *out = ptr::null_mut();
        let bx = lift(LatticeBox::from_extents(ints(extents, d)?))?;
        let cx = lift(Complex::new(&bx, top))?;
        let dual = if top + 1 == d { Some(lift(DualGraph::new(&cx))?) } else { None };
        *out = Box::into_raw(Box::new(PlqComplex { cx, dual }));
        Ok(())
    })
}

/// # Safety
/// `cx` must come from `plq_complex_new` and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn plq_complex_free(cx: *mut PlqComplex) {
    if !cx.is_null() {
        drop(Box::from_raw(cx));
    }
}

/// Number of k-cells of the complex.
///
/// # Safety
/// `cx` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plq_complex_cell_count(cx: *const PlqComplex, k: usize, out: *mut usize) -> PlqStatus {
    guard(|| {
        let cx = get(cx)?;
        if k > cx.cx.top() {
            return Err(PlqStatus::InvalidArgument);
        }
        *get_mut(out)? = cx.cx.count(k);
        Ok(())
    })
}

/// An empty configuration (no state variable occupied).
///
/// # Safety
/// `cx` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plq_config_new(cx: *const PlqComplex, bc: PlqBoundary, out: *mut *mut PlqConfig) -> PlqStatus {
    guard(|| {
        let out = get_mut(out)?;
        *out = ptr::null_mut();
        let cx = get(cx)?;
        *out = Box::into_raw(Box::new(PlqConfig { config: PercolationConfig::empty(&cx.cx, bc.into()) }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn plq_config_free(cfg: *mut PlqConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets one top cell; forced cells of the boundary condition are rejected.
///
/// # Safety
/// `cx` and `cfg` must be live handles, `cfg` built on `cx`.
#[no_mangle]
pub unsafe extern "C" fn plq_config_set(cx: *const PlqComplex, cfg: *mut PlqConfig, cell: usize, occupied: bool) -> PlqStatus {
    guard(|| {
        let cx = get(cx)?;
        let cfg = get_mut(cfg)?;
        if cell >= cx.cx.count(cx.cx.top()) || !cx.cx.variable_cells(cfg.config.bc).contains(&cell) {
            return Err(PlqStatus::InvalidArgument);
        }
        cfg.config.set(cell, occupied);
        Ok(())
    })
}

/// Whether a top cell counts as occupied (forced cells included).
///
/// # Safety
/// `cx` and `cfg` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plq_config_get(cx: *const PlqComplex, cfg: *const PlqConfig, cell: usize, out: *mut bool) -> PlqStatus {
    guard(|| {
        let cx = get(cx)?;
        let cfg = get(cfg)?;
        if cell >= cx.cx.count(cx.cx.top()) {
            return Err(PlqStatus::InvalidArgument);
        }
        *get_mut(out)? = cfg.config.is_effectively_occupied(&cx.cx, cell);
        Ok(())
    })
}

/// Final configuration of a PRCM chain with Z_q coefficients after `sweeps` sweeps.
///
/// # Safety
/// `cx` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn plq_sample(
    cx: *const PlqComplex,
    p: f64,
    q: u64,
    bc: PlqBoundary,
    sweeps: usize,
    seed: u64,
    out: *mut *mut PlqConfig,
) -> PlqStatus {
    guard(|| {
        let out = get_mut(out)?;
        *out = ptr::null_mut();
        let cx = get(cx)?;
        let params = lift(PrcmParams::cyclic(p, q, cx.cx.top(), cx.cx.ambient_dim(), bc.into()))?;
        let spec = SampleSpec::new(params, cx.cx.bx().clone(), sweeps, 0, seed);
        let run = lift(sample(&spec))?;
        *out = Box::into_raw(Box::new(PlqConfig { config: run.config }));
        Ok(())
    })
}

unsafe fn rect_loop(lo: *const i64, hi: *const i64, d: usize) -> Result<plaquette::lattice::Chain, PlqStatus> {
    let r = lift(LatticeBox::new(ints(lo, d)?, ints(hi, d)?))?;
    lift(loop_boundary_chain(&r, 0))
}

/// V_γ for γ = ∂r with Z_q coefficients (q = 0 for Z), by Smith normal form.
///
/// # Safety
/// Handles must be live; `lo` and `hi` must each point to d integers.
#[no_mangle]
pub unsafe extern "C" fn plq_null_homology(
    cx: *const PlqComplex,
    cfg: *const PlqConfig,
    lo: *const i64,
    hi: *const i64,
    q: u64,
    out: *mut bool,
) -> PlqStatus {
    guard(|| {
        let cx = get(cx)?;
        let cfg = get(cfg)?;
        let gamma = rect_loop(lo, hi, cx.cx.ambient_dim())?;
        *get_mut(out)? = lift(null_homology_test(&cx.cx, &cfg.config, &gamma, q))?;
        Ok(())
    })
}

/// The same event decided by linking numbers on the dual graph (top = d-1).
///
/// # Safety
/// Handles must be live; `lo` and `hi` must each point to d integers.
#[no_mangle]
pub unsafe extern "C" fn plq_v_gamma_dual(
    cx: *const PlqComplex,
    cfg: *const PlqConfig,
    lo: *const i64,
    hi: *const i64,
    q: u64,
    out: *mut bool,
) -> PlqStatus {
    guard(|| {
        let cx = get(cx)?;
        let cfg = get(cfg)?;
        let g = cx.dual.as_ref().ok_or(PlqStatus::Unsupported)?;
        let gamma = rect_loop(lo, hi, cx.cx.ambient_dim())?;
        *get_mut(out)? = lift(v_gamma_dual_test(g, &cx.cx, &cfg.config, &gamma, q))?;
        Ok(())
    })
}

/// Dual parameter p* = (1-p)q / ((1-p)q + p).
#[no_mangle]
pub extern "C" fn plq_p_star(p: f64, q: f64) -> f64 {
    plaquette::prcm::p_star(p, q)
}

/// V_γ over Z and over Z_q for the tube example with linking number k.
///
/// # Safety
/// `over_z` and `over_q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn plq_anomaly(k: i64, q: u64, over_z: *mut bool, over_q: *mut bool) -> PlqStatus {
    guard(|| {
        let (over_z, over_q) = (get_mut(over_z)?, get_mut(over_q)?);
        let ex = lift(anomaly_example(k))?;
        *over_z = lift(null_homology_test(&ex.complex, &ex.config, &ex.gamma, 0))?;
        *over_q = lift(null_homology_test(&ex.complex, &ex.config, &ex.gamma, q))?;
        Ok(())
    })
}
