//! C interface. Objects are opaque handles created by `si_*_new`-style
//! functions and released with the matching `si_*_free`. Every fallible call
//! returns an [`SiStatus`]; on failure `si_last_error` describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sparse_ising::circuit::{build_factorizer, build_sat, Circuit};
use sparse_ising::cnf::CnfFormula;
use sparse_ising::coloring::dsatur;
use sparse_ising::model::{Beta, IsingModel, SpinState};
use sparse_ising::rng::RngKind;
use sparse_ising::sampler::{Chain, UpdateMode};
use sparse_ising::sparsify::{sparsify_circuit, DEFAULT_COPY_WEIGHT};
use sparse_ising::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    TooLarge = 4,
    BufferTooSmall = 5,
    Internal = 6,
}

/// Sweep schedule of a chain.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiMode {
    Chromatic = 0,
    Sequential = 1,
    Parallel = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiRng {
    Counter = 0,
    Lfsr = 1,
}

/// Gate netlist.
pub struct SiCircuit(Circuit);

/// Compiled Ising model.
pub struct SiModel(IsingModel);

/// Markov chain over a model.
pub struct SiChain(Chain);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SiStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => SiStatus::Parse,
        Error::TooManyFreeNodes { .. } => SiStatus::TooLarge,
        _ => SiStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SiStatus, String)>) -> SiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SiStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SiStatus::Internal
        }
    }
}

fn lib<T>(r: sparse_ising::Result<T>) -> Result<T, (SiStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (SiStatus, String) {
    (SiStatus::NullPointer, "null pointer argument".into())
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, (SiStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn as_mut<'a, T>(p: *mut T) -> Result<&'a mut T, (SiStatus, String)> {
    p.as_mut().ok_or_else(null)
}

unsafe fn out<T>(slot: *mut *mut T, value: T) -> Result<(), (SiStatus, String)> {
    if slot.is_null() {
        return Err(null());
    }
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, (SiStatus, String)> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (SiStatus::InvalidArgument, "string is not UTF-8".into()))
}

unsafe fn spins<'a>(values: *const i8, len: usize) -> Result<&'a [i8], (SiStatus, String)> {
    if values.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(values, len))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn si_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn si_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Array-multiplier factorizer for `m`-bit factors.
///
/// # Safety
/// The output slot must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_factorizer(m: usize, out_circuit: *mut *mut SiCircuit) -> SiStatus {
    guard(|| out(out_circuit, SiCircuit(lib(build_factorizer(m))?)))
}

/// 3-SAT circuit from DIMACS text, output clamped true.
///
/// # Safety
/// `dimacs` must be a nul-terminated string and the output slot a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_sat(dimacs: *const c_char, out_circuit: *mut *mut SiCircuit) -> SiStatus {
    guard(|| {
        let cnf = lib(CnfFormula::parse_dimacs(text(dimacs)?))?;
        let mut c = lib(build_sat(&cnf))?;
        lib(c.clamp_output_true())?;
        out(out_circuit, SiCircuit(c))
    })
}

/// Circuit from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string and the output slot a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_from_json(json: *const c_char, out_circuit: *mut *mut SiCircuit) -> SiStatus {
    guard(|| out(out_circuit, SiCircuit(lib(Circuit::from_json(text(json)?))?)))
}

/// JSON form of a circuit; free with `si_string_free`.
///
/// # Safety
/// `circuit` must be a live handle and the output slot a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_to_json(circuit: *const SiCircuit, out_json: *mut *mut c_char) -> SiStatus {
    guard(|| {
        let c = as_ref(circuit)?;
        if out_json.is_null() {
            return Err(null());
        }
        let json = lib(c.0.to_json())?;
        *out_json = CString::new(json).map_err(|e| (SiStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Clamps a factorizer's outputs to the product `hi * 2^64 + lo`.
///
/// # Safety
/// `circuit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_clamp_product(circuit: *mut SiCircuit, lo: u64, hi: u64) -> SiStatus {
    guard(|| lib(as_mut(circuit)?.0.clamp_product((hi as u128) << 64 | lo as u128)))
}

/// Records known factors as the planted ground state.
///
/// # Safety
/// `circuit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_plant_factors(circuit: *mut SiCircuit, a: u64, b: u64) -> SiStatus {
    guard(|| lib(as_mut(circuit)?.0.plant_factors(a, b)))
}

/// Degree-bounded copy of a circuit. A `copy_weight` of 0 selects the default.
///
/// # Safety
/// `circuit` must be a live handle and the output slot a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_sparsify(
    circuit: *const SiCircuit,
    k: usize,
    copy_weight: i32,
    out_circuit: *mut *mut SiCircuit,
) -> SiStatus {
    guard(|| {
        let j_t = if copy_weight == 0 { DEFAULT_COPY_WEIGHT } else { copy_weight };
        let c = lib(sparsify_circuit(&as_ref(circuit)?.0, k, j_t))?;
        out(out_circuit, SiCircuit(c))
    })
}

/// Node count; 0 for a null handle.
///
/// # Safety
/// `circuit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_num_nodes(circuit: *const SiCircuit) -> usize {
    circuit.as_ref().map_or(0, |c| c.0.n)
}

/// Compiles the circuit into a model.
///
/// # Safety
/// `circuit` must be a live handle and the output slot a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_compose(circuit: *const SiCircuit, out_model: *mut *mut SiModel) -> SiStatus {
    guard(|| out(out_model, SiModel(lib(as_ref(circuit)?.0.compose())?)))
}

/// Reads the factors from a state of the (possibly sparsified) factorizer.
///
/// # Safety
/// `values` must hold `len` spins; `a` and `b` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_decode_factors(
    circuit: *const SiCircuit,
    values: *const i8,
    len: usize,
    a: *mut u64,
    b: *mut u64,
) -> SiStatus {
    guard(|| {
        let c = &as_ref(circuit)?.0;
        let v = spins(values, len)?;
        if len != c.n {
            return Err((SiStatus::InvalidArgument, format!("expected {} values, got {len}", c.n)));
        }
        let (x, y) = c
            .decode_factors(v)
            .ok_or((SiStatus::InvalidArgument, "not a factorizer circuit".to_string()))?;
        *as_mut(a)? = x;
        *as_mut(b)? = y;
        Ok(())
    })
}

/// Satisfied clause count of a SAT circuit state.
///
/// # Safety
/// `values` must hold `len` spins and `count` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_satisfied_clauses(
    circuit: *const SiCircuit,
    values: *const i8,
    len: usize,
    count: *mut usize,
) -> SiStatus {
    guard(|| {
        let c = &as_ref(circuit)?.0;
        let v = spins(values, len)?;
        if len != c.n {
            return Err((SiStatus::InvalidArgument, format!("expected {} values, got {len}", c.n)));
        }
        *as_mut(count)? = c
            .satisfied_clauses(v)
            .ok_or((SiStatus::InvalidArgument, "not a SAT circuit".to_string()))?;
        Ok(())
    })
}

/// # Safety
/// `circuit` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn si_circuit_free(circuit: *mut SiCircuit) {
    if !circuit.is_null() {
        drop(Box::from_raw(circuit));
    }
}

/// Model from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string and the output slot a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_model_from_json(json: *const c_char, out_model: *mut *mut SiModel) -> SiStatus {
    guard(|| out(out_model, SiModel(lib(IsingModel::from_json(text(json)?))?)))
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn si_model_num_nodes(model: *const SiModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.len())
}

/// Energy of a state given in the model's own representation.
///
/// # Safety
/// `values` must hold `len` entries and `energy` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_model_energy(
    model: *const SiModel,
    values: *const i8,
    len: usize,
    energy: *mut f64,
) -> SiStatus {
    guard(|| {
        let m = &as_ref(model)?.0;
        let state = lib(SpinState::from_values(m, spins(values, len)?.to_vec()))?;
        *as_mut(energy)? = lib(m.energy(&state))?;
        Ok(())
    })
}

/// Number of DSATUR colors of the model's free nodes.
///
/// # Safety
/// `model` must be a live handle and `colors` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_model_num_colors(model: *const SiModel, colors: *mut usize) -> SiStatus {
    guard(|| {
        *as_mut(colors)? = dsatur(&as_ref(model)?.0).num_colors();
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn si_model_free(model: *mut SiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Chain with a random start and a DSATUR coloring. The chain keeps its own
/// copy of the model.
///
/// # Safety
/// `model` must be a live handle and the output slot a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn si_chain_new(
    model: *const SiModel,
    rng: SiRng,
    seed: u64,
    out_chain: *mut *mut SiChain,
) -> SiStatus {
    guard(|| {
        let m = &as_ref(model)?.0;
        let kind = match rng {
            SiRng::Counter => RngKind::CounterBased,
            SiRng::Lfsr => RngKind::Lfsr32,
        };
        let chain = lib(Chain::new(m, Some(&dsatur(m)), kind, seed))?;
        out(out_chain, SiChain(chain))
    })
}

/// Runs `sweeps` sweeps at inverse temperature `beta`.
///
/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn si_chain_sweep(chain: *mut SiChain, mode: SiMode, beta: f64, sweeps: u64) -> SiStatus {
    guard(|| {
        let c = &mut as_mut(chain)?.0;
        let beta = lib(Beta::new(beta))?;
        let mode = match mode {
            SiMode::Chromatic => UpdateMode::Chromatic,
            SiMode::Sequential => UpdateMode::SequentialGibbs,
            SiMode::Parallel => UpdateMode::FullyParallel,
        };
        for _ in 0..sweeps {
            lib(c.sweep(mode, beta))?;
        }
        Ok(())
    })
}

/// Copies the bipolar state into `values`, which must have room for every node.
///
/// # Safety
/// `values` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn si_chain_state(chain: *const SiChain, values: *mut i8, len: usize) -> SiStatus {
    guard(|| {
        let c = &as_ref(chain)?.0;
        if values.is_null() {
            return Err(null());
        }
        let state = c.values();
        if len < state.len() {
            return Err((
                SiStatus::BufferTooSmall,
                format!("buffer holds {len} values, chain has {}", state.len()),
            ));
        }
        ptr::copy_nonoverlapping(state.as_ptr(), values, state.len());
        Ok(())
    })
}

/// Current energy; NaN for a null handle.
///
/// # Safety
/// `chain` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn si_chain_energy(chain: *const SiChain) -> f64 {
    chain.as_ref().map_or(f64::NAN, |c| c.0.energy())
}

/// Node updates performed so far; 0 for a null handle.
///
/// # Safety
/// `chain` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn si_chain_flips(chain: *const SiChain) -> u64 {
    chain.as_ref().map_or(0, |c| c.0.flips())
}

/// # Safety
/// `chain` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn si_chain_free(chain: *mut SiChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}
