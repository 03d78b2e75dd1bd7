//! C ABI over `otlab`.
//!
//! Functions return an [`OtlabStatus`]; on failure the message is available
//! from [`otlab_last_error_message`] on the same thread. Media and
//! Dirichlet-to-Neumann operators are opaque handles released with their
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use otlab::dnmap::{assemble_dn, star_norm, DNOperator, SobolevScale};
use otlab::gegenbauer::GegenbauerSpec;
use otlab::grid::GridDomain;
use otlab::medium::{k_admissible_ranges, AprioriData, OpticalMedium};
use otlab::stability::delta_h;
use otlab::{Error, C64};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Panic = 4,
}

/// Bounds and constants of the medium class.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtlabApriori {
    pub n: u32,
    pub p: f64,
    pub lambda: f64,
    pub sobolev_bound: f64,
    pub cal_e: f64,
    pub k: f64,
    pub r0: f64,
    pub lipschitz: f64,
    pub diam: f64,
    pub alpha: f64,
}

impl From<OtlabApriori> for AprioriData {
    fn from(a: OtlabApriori) -> Self {
        AprioriData {
            n: a.n,
            p: a.p,
            lambda: a.lambda,
            sobolev_bound: a.sobolev_bound,
            cal_e: a.cal_e,
            k: a.k,
            r0: a.r0,
            lipschitz: a.lipschitz,
            diam: a.diam,
            alpha: a.alpha,
        }
    }
}

/// Optical medium sampled on a cubic grid.
pub struct OtlabMedium(OpticalMedium);

/// Discrete Dirichlet-to-Neumann operator.
pub struct OtlabDnMap(DNOperator);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> OtlabStatus {
    if otlab::cli::exit_code(e) == otlab::cli::EXIT_VALIDATION || matches!(e, Error::Domain(_)) {
        OtlabStatus::InvalidArgument
    } else {
        OtlabStatus::Numerical
    }
}

enum Fail {
    Null,
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OtlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OtlabStatus::Ok
        }
        Ok(Err(Fail::Null)) => {
            set_error("null pointer argument");
            OtlabStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            OtlabStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null)
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn otlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn otlab_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!(),
    };
    V.as_ptr()
}

/// Admissible wave numbers are `0 < k <= k0` and `k >= k0_tilde`.
///
/// # Safety
/// `k0` and `k0_tilde` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_k_ranges(lambda: f64, cal_e: f64, n: u32, k0: *mut f64, k0_tilde: *mut f64) -> OtlabStatus {
    guard(|| {
        let (a, b) = (out(k0)?, out(k0_tilde)?);
        let r = k_admissible_ranges(lambda, cal_e, n)?;
        *a = r.k0;
        *b = r.k0_tilde;
        Ok(())
    })
}

/// Evaluate `C_m^{(n-2)/2}` at a complex point.
///
/// # Safety
/// `re_out` and `im_out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_gegenbauer_eval(
    degree: u32,
    dimension: u32,
    re: f64,
    im: f64,
    re_out: *mut f64,
    im_out: *mut f64,
) -> OtlabStatus {
    guard(|| {
        let (a, b) = (out(re_out)?, out(im_out)?);
        let v = GegenbauerSpec::new(degree, dimension)?.eval(C64::new(re, im));
        *a = v.re;
        *b = v.im;
        Ok(())
    })
}

/// Predicted stability exponent for derivatives of order `h`.
///
/// # Safety
/// `value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_delta_h(alpha: f64, h: u32, value: *mut f64) -> OtlabStatus {
    guard(|| {
        let v = out(value)?;
        *v = delta_h(alpha, h)?;
        Ok(())
    })
}

/// Build a medium on `[0, extent]^3` with `points` nodes per axis from nodal
/// `mu_a` and `mu_s` arrays of length `points^3` (x1 fastest) and `B = 0`.
///
/// # Safety
/// `apriori` must point to a valid struct, the arrays must hold `len` values
/// and `medium` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_medium_new(
    extent: f64,
    points: usize,
    apriori: *const OtlabApriori,
    mu_a: *const f64,
    mu_s: *const f64,
    len: usize,
    medium: *mut *mut OtlabMedium,
) -> OtlabStatus {
    guard(|| {
        let slot = out(medium)?;
        *slot = ptr::null_mut();
        let ap = *apriori.as_ref().ok_or(Fail::Null)?;
        let (a, s) = (slice(mu_a, len)?, slice(mu_s, len)?);
        let grid = GridDomain::new(extent, points)?;
        if len != grid.len() {
            return Err(Error::Shape(format!("expected {} nodal values, got {len}", grid.len())).into());
        }
        let m = OpticalMedium::new(grid, ap.into(), a.to_vec(), s.to_vec(), None)?;
        *slot = Box::into_raw(Box::new(OtlabMedium(m)));
        Ok(())
    })
}

/// Constant-coefficient medium.
///
/// # Safety
/// `apriori` must point to a valid struct and `medium` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_medium_homogeneous(
    extent: f64,
    points: usize,
    apriori: *const OtlabApriori,
    mu_a: f64,
    mu_s: f64,
    medium: *mut *mut OtlabMedium,
) -> OtlabStatus {
    guard(|| {
        let slot = out(medium)?;
        *slot = ptr::null_mut();
        let ap = *apriori.as_ref().ok_or(Fail::Null)?;
        let m = OpticalMedium::homogeneous(GridDomain::new(extent, points)?, ap.into(), mu_a, mu_s)?;
        *slot = Box::into_raw(Box::new(OtlabMedium(m)));
        Ok(())
    })
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `medium` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn otlab_medium_node_count(medium: *const OtlabMedium) -> usize {
    medium.as_ref().map_or(0, |m| m.0.grid.len())
}

/// # Safety
/// `medium` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn otlab_medium_free(medium: *mut OtlabMedium) {
    if !medium.is_null() {
        drop(Box::from_raw(medium));
    }
}

/// Assemble the Dirichlet-to-Neumann operator of a medium.
///
/// # Safety
/// `medium` must be a live handle and `dn` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_dn_assemble(medium: *const OtlabMedium, dn: *mut *mut OtlabDnMap) -> OtlabStatus {
    guard(|| {
        let slot = out(dn)?;
        *slot = ptr::null_mut();
        let m = medium.as_ref().ok_or(Fail::Null)?;
        *slot = Box::into_raw(Box::new(OtlabDnMap(assemble_dn(&m.0)?)));
        Ok(())
    })
}

/// `a - b` for operators on the same boundary grid.
///
/// # Safety
/// `a` and `b` must be live handles and `diff` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_dn_difference(
    a: *const OtlabDnMap,
    b: *const OtlabDnMap,
    diff: *mut *mut OtlabDnMap,
) -> OtlabStatus {
    guard(|| {
        let slot = out(diff)?;
        *slot = ptr::null_mut();
        let (a, b) = (a.as_ref().ok_or(Fail::Null)?, b.as_ref().ok_or(Fail::Null)?);
        *slot = Box::into_raw(Box::new(OtlabDnMap(a.0.difference(&b.0)?)));
        Ok(())
    })
}

/// Number of boundary nodes, or 0 for a null handle.
///
/// # Safety
/// `dn` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn otlab_dn_size(dn: *const OtlabDnMap) -> usize {
    dn.as_ref().map_or(0, |d| d.0.size())
}

/// Copy the matrix row-major into `buffer` as interleaved `(re, im)` pairs;
/// `len` counts doubles and must be `2 * size^2`.
///
/// # Safety
/// `dn` must be a live handle and `buffer` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_dn_entries(dn: *const OtlabDnMap, buffer: *mut f64, len: usize) -> OtlabStatus {
    guard(|| {
        let d = &dn.as_ref().ok_or(Fail::Null)?.0;
        if buffer.is_null() {
            return Err(Fail::Null);
        }
        let n = d.size();
        if len != 2 * n * n {
            return Err(Error::Shape(format!("buffer holds {len} doubles, need {}", 2 * n * n)).into());
        }
        let buf = std::slice::from_raw_parts_mut(buffer, len);
        for i in 0..n {
            for j in 0..n {
                let v = d.get(i, j);
                buf[2 * (i * n + j)] = v.re;
                buf[2 * (i * n + j) + 1] = v.im;
            }
        }
        Ok(())
    })
}

/// Grid node index of each boundary row, `size` entries.
///
/// # Safety
/// `dn` must be a live handle and `nodes` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_dn_boundary_nodes(dn: *const OtlabDnMap, nodes: *mut usize, len: usize) -> OtlabStatus {
    guard(|| {
        let d = &dn.as_ref().ok_or(Fail::Null)?.0;
        if nodes.is_null() {
            return Err(Fail::Null);
        }
        if len != d.size() {
            return Err(Error::Shape(format!("buffer holds {len} entries, need {}", d.size())).into());
        }
        std::slice::from_raw_parts_mut(nodes, len).copy_from_slice(&d.boundary);
        Ok(())
    })
}

/// Operator norm from `H^{1/2}` to `H^{-1/2}` of the boundary.
///
/// # Safety
/// `dn` must be a live handle and `value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn otlab_dn_star_norm(dn: *const OtlabDnMap, seed: u64, value: *mut f64) -> OtlabStatus {
    guard(|| {
        let v = out(value)?;
        let d = &dn.as_ref().ok_or(Fail::Null)?.0;
        let scale = SobolevScale::new(d.grid)?;
        *v = star_norm(d, &scale, seed)?.value;
        Ok(())
    })
}

/// # Safety
/// `dn` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn otlab_dn_free(dn: *mut OtlabDnMap) {
    if !dn.is_null() {
        drop(Box::from_raw(dn));
    }
}
