//! C ABI over `diffusion_lab`.
//!
//! Systems are opaque handles created by `dl_system_*` and released with `dl_system_free`.
//! Every fallible call returns a [`DlStatus`]; the message of the last failure on the calling
//! thread is available through `dl_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use diffusion_lab::action::{broken_action, through_action, CornerActionInput};
use diffusion_lab::cli::{Scenario, DEFAULT_SCENARIO};
use diffusion_lab::dynamics::{hyperbolic_fixed_point, MechanicalSystem, TrigPoly2};
use diffusion_lab::weakkam::{weak_kam_solve, Discretization, Lagrangian, SolveOptions};
use diffusion_lab::Error;

/// Status codes. Module failures reuse the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Io = 3,
    InvalidUtf8 = 4,
    Panic = 5,
    Resonance = 10,
    Fourier = 11,
    NormalForm = 12,
    Inadmissible = 13,
    Symplectic = 14,
    Dynamics = 15,
    Melnikov = 16,
    Action = 17,
    WeakKam = 18,
}

impl From<&Error> for DlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => DlStatus::Config,
            Error::Io(_) => DlStatus::Io,
            Error::Resonance(_) => DlStatus::Resonance,
            Error::Fourier(_) => DlStatus::Fourier,
            Error::NormalForm(_) => DlStatus::NormalForm,
            Error::Inadmissible(_) => DlStatus::Inadmissible,
            Error::Symplectic(_) => DlStatus::Symplectic,
            Error::Dynamics(_) => DlStatus::Dynamics,
            Error::Melnikov(_) => DlStatus::Melnikov,
            Error::Action(_) => DlStatus::Action,
            Error::WeakKam(_) => DlStatus::WeakKam,
        }
    }
}

/// Opaque mechanical system.
pub struct DlSystem(MechanicalSystem);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), DlStatus>) -> DlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside diffusion_lab");
            DlStatus::Panic
        }
    }
}

fn fail(e: Error) -> DlStatus {
    set_error(&e.to_string());
    DlStatus::from(&e)
}

fn null() -> DlStatus {
    set_error("null pointer argument");
    DlStatus::NullPointer
}

/// Message of the last failure on this thread. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn dl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn boxed(sys: MechanicalSystem, out: *mut *mut DlSystem) {
    // SAFETY: callers check `out` for null before building the system.
    unsafe { *out = Box::into_raw(Box::new(DlSystem(sys))) };
}

/// Two uncoupled pendulums `c1(cos x1 - 1) + c2(cos x2 - 1)` with identity kinetic form.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dl_system_pendulums(c1: f64, c2: f64, out: *mut *mut DlSystem) -> DlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let sys = MechanicalSystem::pendulums(c1, c2, TrigPoly2::default(), 0.0).map_err(fail)?;
        boxed(sys, out);
        Ok(())
    })
}

/// System described by a scenario TOML string, or the bundled scenario when `toml` is null.
///
/// # Safety
/// `toml` must be null or a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dl_system_from_scenario(toml: *const c_char, out: *mut *mut DlSystem) -> DlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let text = if toml.is_null() {
            DEFAULT_SCENARIO
        } else {
            CStr::from_ptr(toml).to_str().map_err(|_| {
                set_error("scenario is not valid UTF-8");
                DlStatus::InvalidUtf8
            })?
        };
        let sys = Scenario::from_toml(text).and_then(|s| s.resolve()).and_then(|r| r.system()).map_err(fail)?;
        boxed(sys, out);
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sys` must come from a `dl_system_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_system_free(sys: *mut DlSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Lyapunov exponents `lambda1 >= lambda2` at the maximum of the potential.
///
/// # Safety
/// `sys` must be a live handle; the output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dl_hyperbolic_exponents(sys: *const DlSystem, lambda1: *mut f64, lambda2: *mut f64) -> DlStatus {
    guard(|| {
        if sys.is_null() || lambda1.is_null() || lambda2.is_null() {
            return Err(null());
        }
        let h = hyperbolic_fixed_point(&(*sys).0, 0.3).map_err(fail)?;
        *lambda1 = h.lambda1;
        *lambda2 = h.lambda2;
        Ok(())
    })
}

/// Corner actions of the linear saddle with exponents `lambda`, between `entry` and `exit`
/// in time `t`: the orbit through the saddle and the broken orbit through the origin.
///
/// # Safety
/// The array pointers must reference two doubles each; the outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dl_corner_actions(
    lambda: *const f64,
    entry: *const f64,
    exit: *const f64,
    t: f64,
    through: *mut f64,
    broken: *mut f64,
) -> DlStatus {
    guard(|| {
        if lambda.is_null() || entry.is_null() || exit.is_null() || through.is_null() || broken.is_null() {
            return Err(null());
        }
        let pair = |p: *const f64| [*p, *p.add(1)];
        let input = CornerActionInput { lambda: pair(lambda), entry: pair(entry), exit: pair(exit), t };
        *through = through_action(&input).map_err(fail)?;
        *broken = broken_action(&input);
        Ok(())
    })
}

/// Effective Hamiltonian `alpha(c)` from the discrete weak KAM solver on an `n x n` grid.
///
/// # Safety
/// `sys` must be a live handle and `alpha` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dl_weak_kam_alpha(sys: *const DlSystem, c1: f64, c2: f64, n: usize, t_step: f64, alpha: *mut f64) -> DlStatus {
    guard(|| {
        if sys.is_null() || alpha.is_null() {
            return Err(null());
        }
        let l = Lagrangian::from_system(&(*sys).0).map_err(fail)?;
        let res = weak_kam_solve(&l, [c1, c2], &Discretization::new(n, t_step), &SolveOptions::default()).map_err(fail)?;
        *alpha = res.alpha;
        Ok(())
    })
}
