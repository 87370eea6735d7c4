//! C ABI for the nfuca toolkit.
//!
//! Every fallible function returns an [`NfucaStatus`]. On failure a
//! description is kept per thread and can be read with
//! [`nfuca_last_error_message`]. Handles are opaque and must be released
//! with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nfuca::analytical::{band_gains, design_analytical, AnalogBeamformer};
use nfuca::channel::DistanceModel;
use nfuca::config::parse_config;
use nfuca::geometry::{make_grid, make_uca_half_wavelength, ArrayGeometry, PolarPoint, Scenario, ScenarioParts};
use nfuca::jointopt::{optimize_joint, JointOptConfig};
use nfuca::specfun::{bessel_j, hyp1f2_gain, invert_gain_threshold, min_ttd_count};
use nfuca::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfucaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    OutOfRange = 4,
    DimensionMismatch = 5,
    Parse = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Validated scenario: array, subcarrier grid, users and hybrid settings.
pub struct NfucaScenario {
    inner: Scenario,
}

/// Analog TTD/PS beamformer together with the geometry it was designed for.
pub struct NfucaBeamformer {
    inner: AnalogBeamformer,
    geometry: ArrayGeometry,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: NfucaStatus, msg: impl Into<String>) -> NfucaStatus {
    set_last_error(msg.into());
    status
}

fn status_of(err: &Error) -> NfucaStatus {
    match err {
        Error::InvalidArgument(_) => NfucaStatus::InvalidArgument,
        Error::Validation { .. } => NfucaStatus::Validation,
        Error::OutOfRange(_) => NfucaStatus::OutOfRange,
        Error::DimensionMismatch(_) => NfucaStatus::DimensionMismatch,
        Error::Parse(_) => NfucaStatus::Parse,
        Error::Io(_) | Error::Json(_) => NfucaStatus::Io,
    }
}

/// Runs `f`, recording the error message and turning panics into
/// [`NfucaStatus::Panic`].
fn guard<F: FnOnce() -> Result<(), NfucaStatus>>(f: F) -> NfucaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NfucaStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(NfucaStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: nfuca::Result<T>) -> Result<T, NfucaStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), NfucaStatus> {
    if p.is_null() {
        Err(fail(NfucaStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nfuca_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nfuca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a UCA scenario without users. `radius_m <= 0` selects the
/// half-wavelength spacing radius `N·λc/(4π)`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn nfuca_scenario_new_uca(
    n_antennas: usize,
    radius_m: f64,
    fc_hz: f64,
    bandwidth_hz: f64,
    n_subcarriers: usize,
    n_ttd_per_chain: usize,
    tau_max_s: f64,
    snr_db: f64,
    out: *mut *mut NfucaScenario,
) -> NfucaStatus {
    guard(|| {
        non_null(out, "out")?;
        let geometry = if radius_m > 0.0 {
            lift(ArrayGeometry::uca(n_antennas, radius_m))?
        } else {
            lift(make_uca_half_wavelength(n_antennas, fc_hz))?
        };
        let grid = lift(make_grid(fc_hz, bandwidth_hz, n_subcarriers))?;
        let inner = lift(
            ScenarioParts {
                geometry,
                grid,
                users: Vec::new(),
                n_rf_chains: 1,
                n_ttd_per_chain,
                snr_db,
                tau_max_s,
                realizations: 1,
            }
            .build(),
        )?;
        *out = Box::into_raw(Box::new(NfucaScenario { inner }));
        Ok(())
    })
}

/// Builds a scenario from a TOML configuration document.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nfuca_scenario_from_toml(toml: *const c_char, out: *mut *mut NfucaScenario) -> NfucaStatus {
    guard(|| {
        non_null(toml, "toml")?;
        non_null(out, "out")?;
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| fail(NfucaStatus::Parse, "configuration is not valid UTF-8"))?;
        let cfg = lift(parse_config(text))?;
        *out = Box::into_raw(Box::new(NfucaScenario { inner: cfg.scenario }));
        Ok(())
    })
}

/// Replaces the users, one RF chain each. `r_m` and `phi_rad` hold `k`
/// entries.
///
/// # Safety
/// `scenario` must be a live handle; `r_m` and `phi_rad` must each point to
/// `k` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn nfuca_scenario_set_users(
    scenario: *mut NfucaScenario,
    r_m: *const f64,
    phi_rad: *const f64,
    k: usize,
) -> NfucaStatus {
    guard(|| {
        non_null(scenario, "scenario")?;
        non_null(r_m, "r_m")?;
        non_null(phi_rad, "phi_rad")?;
        if k == 0 {
            return Err(fail(NfucaStatus::InvalidArgument, "at least one user is required"));
        }
        let r = slice::from_raw_parts(r_m, k);
        let phi = slice::from_raw_parts(phi_rad, k);
        let users = r
            .iter()
            .zip(phi)
            .map(|(&r, &p)| PolarPoint::new(r, p))
            .collect::<nfuca::Result<Vec<_>>>();
        let s = &mut (*scenario).inner;
        let mut parts = s.to_parts();
        parts.users = lift(users)?;
        parts.n_rf_chains = k;
        *s = lift(parts.build())?;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nfuca_scenario_free(scenario: *mut NfucaScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Writes the antenna count, RF chain count, TTDs per chain and subcarrier
/// count. Any output pointer may be null.
///
/// # Safety
/// `scenario` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfuca_scenario_dims(
    scenario: *const NfucaScenario,
    n_antennas: *mut usize,
    n_rf_chains: *mut usize,
    n_ttd_per_chain: *mut usize,
    n_subcarriers: *mut usize,
) -> NfucaStatus {
    guard(|| {
        non_null(scenario, "scenario")?;
        let s = &(*scenario).inner;
        for (p, v) in [
            (n_antennas, s.geometry().n_antennas()),
            (n_rf_chains, s.n_rf_chains()),
            (n_ttd_per_chain, s.n_ttd_per_chain()),
            (n_subcarriers, s.grid().len()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

fn wrap(bf: AnalogBeamformer, s: &Scenario) -> *mut NfucaBeamformer {
    if bf.exceeds_tau_max {
        set_last_error(format!(
            "warning: delay span {:e} s exceeds tau_max {:e} s",
            bf.max_delay_s(),
            s.tau_max_s()
        ));
    }
    Box::into_raw(Box::new(NfucaBeamformer {
        inner: bf,
        geometry: s.geometry().clone(),
    }))
}

/// Closed-form TTD/PS design focused on the scenario's users.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nfuca_design_analytical(
    scenario: *const NfucaScenario,
    out: *mut *mut NfucaBeamformer,
) -> NfucaStatus {
    guard(|| {
        non_null(scenario, "scenario")?;
        non_null(out, "out")?;
        let s = &(*scenario).inner;
        let bf = lift(design_analytical(s, s.users()))?;
        *out = wrap(bf, s);
        Ok(())
    })
}

/// Alternating PS/TTD optimization under the delay budget. Zero for
/// `search_steps_x` or `max_iters` selects the default.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nfuca_design_joint(
    scenario: *const NfucaScenario,
    search_steps_x: usize,
    max_iters: usize,
    out: *mut *mut NfucaBeamformer,
) -> NfucaStatus {
    guard(|| {
        non_null(scenario, "scenario")?;
        non_null(out, "out")?;
        let s = &(*scenario).inner;
        let mut cfg = JointOptConfig::default();
        if search_steps_x > 0 {
            cfg.search_steps_x = search_steps_x;
        }
        if max_iters > 0 {
            cfg.max_iters = max_iters;
        }
        let (bf, _) = lift(optimize_joint(s, s.users(), &cfg))?;
        *out = wrap(bf, s);
        Ok(())
    })
}

/// # Safety
/// `bf` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nfuca_beamformer_free(bf: *mut NfucaBeamformer) {
    if !bf.is_null() {
        drop(Box::from_raw(bf));
    }
}

fn chain_of(bf: &AnalogBeamformer, chain: usize) -> Result<(), NfucaStatus> {
    if chain >= bf.n_rf_chains() {
        return Err(fail(
            NfucaStatus::InvalidArgument,
            format!("chain {chain} out of 0..{}", bf.n_rf_chains()),
        ));
    }
    Ok(())
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), NfucaStatus> {
    non_null(out, "out")?;
    if len < src.len() {
        return Err(fail(
            NfucaStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Normalized array gain of `chain` toward its own user on every subcarrier
/// (`len >= n_subcarriers`).
///
/// # Safety
/// `bf` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nfuca_beamformer_band_gains(
    bf: *const NfucaBeamformer,
    chain: usize,
    out: *mut f64,
    len: usize,
) -> NfucaStatus {
    guard(|| {
        non_null(bf, "bf")?;
        let b = &*bf;
        chain_of(&b.inner, chain)?;
        let g = band_gains(&b.inner, &b.geometry, &b.inner.targets[chain], chain, DistanceModel::Exact);
        copy_out(&g, out, len)
    })
}

/// Sub-array delays of `chain` in seconds (`len >= n_ttd_per_chain`).
///
/// # Safety
/// `bf` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nfuca_beamformer_delays(
    bf: *const NfucaBeamformer,
    chain: usize,
    out: *mut f64,
    len: usize,
) -> NfucaStatus {
    guard(|| {
        non_null(bf, "bf")?;
        let b = &(*bf).inner;
        chain_of(b, chain)?;
        copy_out(&b.delays_s[chain], out, len)
    })
}

/// Per-antenna phase shifts of `chain` in radians (`len >= n_antennas`).
///
/// # Safety
/// `bf` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nfuca_beamformer_phases(
    bf: *const NfucaBeamformer,
    chain: usize,
    out: *mut f64,
    len: usize,
) -> NfucaStatus {
    guard(|| {
        non_null(bf, "bf")?;
        let b = &(*bf).inner;
        chain_of(b, chain)?;
        copy_out(&b.ps_phases_rad[chain], out, len)
    })
}

/// Serializes the beamformer to JSON. Release the string with
/// [`nfuca_string_free`].
///
/// # Safety
/// `bf` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nfuca_beamformer_to_json(bf: *const NfucaBeamformer, out: *mut *mut c_char) -> NfucaStatus {
    guard(|| {
        non_null(bf, "bf")?;
        non_null(out, "out")?;
        let json = lift((*bf).inner.to_json())?;
        *out = CString::new(json)
            .map_err(|_| fail(NfucaStatus::Io, "serialized JSON contains NUL"))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nfuca_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Bessel function of the first kind, Jₙ(x).
#[no_mangle]
pub extern "C" fn nfuca_bessel_j(order: u32, x: f64) -> f64 {
    bessel_j(order, x)
}

/// Gain function `₁F₂(1/2; 1, 3/2; −ε²)`. `converged` may be null.
///
/// # Safety
/// `value` must be writable; `converged` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn nfuca_hyp1f2_gain(eps: f64, value: *mut f64, converged: *mut bool) -> NfucaStatus {
    guard(|| {
        non_null(value, "value")?;
        if !eps.is_finite() {
            return Err(fail(NfucaStatus::InvalidArgument, "eps must be finite"));
        }
        let r = hyp1f2_gain(eps);
        *value = r.value;
        if !converged.is_null() {
            *converged = r.converged;
        }
        Ok(())
    })
}

/// Smallest ε ≥ 0 at which the gain function falls to `1 − delta`.
///
/// # Safety
/// `eps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfuca_invert_gain_threshold(delta: f64, eps: *mut f64) -> NfucaStatus {
    guard(|| {
        non_null(eps, "eps")?;
        *eps = lift(invert_gain_threshold(delta))?;
        Ok(())
    })
}

/// Minimum TTD count per chain keeping the band gain at or above
/// `1 − delta` for a user at `distance_m`.
///
/// # Safety
/// `q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfuca_min_ttd_count(
    delta: f64,
    bandwidth_hz: f64,
    radius_m: f64,
    distance_m: f64,
    q: *mut usize,
) -> NfucaStatus {
    guard(|| {
        non_null(q, "q")?;
        *q = lift(min_ttd_count(delta, bandwidth_hz, radius_m, distance_m))?;
        Ok(())
    })
}
