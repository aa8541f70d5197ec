//! C ABI over `noisy-tomo`.
//!
//! Every fallible function returns an [`NtStatus`]; on failure the message is
//! available from [`nt_last_error_message`] on the same thread. Pure states are
//! passed as interleaved `re, im` pairs (`2 * dim` doubles). Objects are opaque
//! handles released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use noisy_tomo::channel::{fold_channel, tensor_channel, ChannelKind, ChannelSpec, QuantumChannel};
use noisy_tomo::estimation::{
    cell_probabilities, reconstruct, sample_counts, CountVector, ReconstructOptions, SamplingModel,
};
use noisy_tomo::information::{bloch_loss_map, information_matrix, loss_spectrum, GridSpec};
use noisy_tomo::linalg::{BlochVector, PureState};
use noisy_tomo::protocol::{measurement_operators, EffectiveMeasurement, Protocol, ProtocolKind, ResourceLimit};
use noisy_tomo::Error;
use num_complex::Complex64;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Rejected input: unknown names, bad parameters, malformed JSON.
    Config = 3,
    /// Incomplete protocol, degenerate information or another numerical failure.
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NtSampling {
    Multinomial = 0,
    Poisson = 1,
    Expected = 2,
}

impl From<NtSampling> for SamplingModel {
    fn from(s: NtSampling) -> Self {
        match s {
            NtSampling::Multinomial => SamplingModel::Multinomial,
            NtSampling::Poisson => SamplingModel::Poisson,
            NtSampling::Expected => SamplingModel::Expected,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct NtReconstructInfo {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub log_likelihood: f64,
    /// `sqrt(N/n)`; multiply the estimate by it to get the likelihood norm.
    pub norm_scale: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct NtBlochExtrema {
    pub l_min: f64,
    pub l_max: f64,
    pub argmin_theta: f64,
    pub argmin_phi: f64,
    pub argmax_theta: f64,
    pub argmax_phi: f64,
    /// Number of grid points written by [`nt_bloch_map`].
    pub points: usize,
}

pub struct NtProtocol(Protocol);
pub struct NtChannel(QuantumChannel);
pub struct NtMeasurement(EffectiveMeasurement);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(NtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_config_error() {
            NtStatus::Config
        } else {
            NtStatus::Numerical
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: NtStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NtStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure(NtStatus::Panic, msg))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NtStatus::Ok
        }
        Err(Failure(status, msg)) => {
            let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
            LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
            status
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .map_or_else(|| fail(NtStatus::NullPointer, format!("`{name}` is null")), Ok)
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(NtStatus::NullPointer, format!("`{name}` is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(NtStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(NtStatus::NullPointer, format!("`{name}` is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, need: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len < need {
        return fail(NtStatus::BufferTooSmall, format!("`{name}` holds {len}, need {need}"));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(NtStatus::NullPointer, format!("`{name}` is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(NtStatus::NullPointer, "output handle is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn state(amps: *const f64, dim: usize, expected: usize) -> Result<PureState, Failure> {
    if dim != expected {
        return fail(
            NtStatus::InvalidArgument,
            format!("state dimension {dim}, measurement dimension {expected}"),
        );
    }
    let raw = slice(amps, 2 * dim, "amplitudes")?;
    let c: Vec<Complex64> = raw.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    Ok(PureState::from_slice(&c)?)
}

/// Message of the last failure on this thread, or null. Release with [`nt_string_free`].
#[no_mangle]
pub extern "C" fn nt_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn nt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a named protocol (`tetrahedron`, `cube`, `octahedron`) with sample size `n`.
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_protocol_new(kind: *const c_char, n: f64, out: *mut *mut NtProtocol) -> NtStatus {
    guard(|| {
        let kind: ProtocolKind = text(kind, "kind")?.parse()?;
        put(out, NtProtocol(Protocol::build(kind, n)?))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_protocol_from_json(json: *const c_char, out: *mut *mut NtProtocol) -> NtStatus {
    guard(|| put(out, NtProtocol(Protocol::from_json(text(json, "json")?)?)))
}

/// Serializes a protocol; release the string with [`nt_string_free`].
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_protocol_to_json(p: *const NtProtocol, out: *mut *mut c_char) -> NtStatus {
    guard(|| {
        let json = deref(p, "protocol")?.0.to_json()?;
        if out.is_null() {
            return fail(NtStatus::NullPointer, "`out` is null");
        }
        *out = CString::new(json)
            .map_err(|e| Failure(NtStatus::Panic, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Rotates every measurement direction by `angle` about the unit axis `(ax, ay, az)` (right-hand rule).
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_protocol_rotate(
    p: *const NtProtocol,
    ax: f64,
    ay: f64,
    az: f64,
    angle: f64,
    out: *mut *mut NtProtocol,
) -> NtStatus {
    guard(|| {
        let rotated = deref(p, "protocol")?.0.rotate(&BlochVector::new(ax, ay, az), angle)?;
        put(out, NtProtocol(rotated))
    })
}

/// Product protocol on `qubits` copies.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_protocol_tensor_power(
    p: *const NtProtocol,
    qubits: usize,
    out: *mut *mut NtProtocol,
) -> NtStatus {
    guard(|| {
        let power = deref(p, "protocol")?.0.tensor_power(qubits, ResourceLimit::default())?;
        put(out, NtProtocol(power))
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nt_protocol_len(p: *const NtProtocol) -> usize {
    p.as_ref().map_or(0, |p| p.0.len())
}

/// Hilbert-space dimension, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nt_protocol_dim(p: *const NtProtocol) -> usize {
    p.as_ref().map_or(0, |p| p.0.dim())
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nt_protocol_free(p: *mut NtProtocol) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Parses a channel from the short text form (`identity`, `amplitude:t=1.5T1`,
/// `dephasing:t=0.8T2`, `bit_flip:p=0.1`, `phase_flip:p=0.1`) or, when the
/// string starts with `{`, from a JSON channel entry including Kraus lists.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nt_channel_parse(spec: *const c_char, out: *mut *mut NtChannel) -> NtStatus {
    guard(|| {
        let spec = text(spec, "spec")?.trim();
        let channel = if spec.starts_with('{') {
            serde_json::from_str::<ChannelSpec>(spec)
                .map_err(Error::from)?
                .build()?
        } else {
            ChannelSpec::Kind(spec.parse::<ChannelKind>()?).build()?
        };
        put(out, NtChannel(channel))
    })
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nt_channel_dim(c: *const NtChannel) -> usize {
    c.as_ref().map_or(0, |c| c.0.dim())
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nt_channel_free(c: *mut NtChannel) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Fuzzy measurement operators of `p` seen through `c`. A null channel gives the
/// ideal measurement; a single-qubit channel on a multi-qubit protocol acts on
/// every qubit independently.
///
/// # Safety
/// `p` must be a live handle; `c` null or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nt_measurement_new(
    p: *const NtProtocol,
    c: *const NtChannel,
    out: *mut *mut NtMeasurement,
) -> NtStatus {
    guard(|| {
        let clear = measurement_operators(&deref(p, "protocol")?.0);
        let Some(c) = c.as_ref() else {
            return put(out, NtMeasurement(clear));
        };
        let mut channel = c.0.clone();
        if channel.dim() == 2 && clear.dim() > 2 {
            let qubits = clear.dim().trailing_zeros() as usize;
            if 1usize << qubits != clear.dim() {
                return fail(
                    NtStatus::InvalidArgument,
                    format!("dimension {} is not a qubit register", clear.dim()),
                );
            }
            channel = tensor_channel(&vec![channel; qubits], ResourceLimit::default())?;
        }
        put(out, NtMeasurement(fold_channel(&clear, &channel)?))
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nt_measurement_len(m: *const NtMeasurement) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nt_measurement_dim(m: *const NtMeasurement) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nt_measurement_free(m: *mut NtMeasurement) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Cell probabilities `t_j <c|Λ_j|c> / n`, one per row.
///
/// # Safety
/// `amps` must hold `2 * dim` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nt_probabilities(
    m: *const NtMeasurement,
    amps: *const f64,
    dim: usize,
    out: *mut f64,
    out_len: usize,
) -> NtStatus {
    guard(|| {
        let m = &deref(m, "measurement")?.0;
        let probs = cell_probabilities(m, &state(amps, dim, m.dim())?)?;
        slice_mut(out, out_len, probs.len(), "out")?[..probs.len()].copy_from_slice(&probs);
        Ok(())
    })
}

/// Loss spectrum of the state: the `nu` variances `d_i` (descending) go to
/// `d_out`, the scaled loss `L = n Σ d_i` to `l_out`.
///
/// # Safety
/// `amps` must hold `2 * dim` doubles, `d_out` `d_cap` doubles; `nu_out` and
/// `l_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn nt_loss_spectrum(
    m: *const NtMeasurement,
    amps: *const f64,
    dim: usize,
    d_out: *mut f64,
    d_cap: usize,
    nu_out: *mut usize,
    l_out: *mut f64,
) -> NtStatus {
    guard(|| {
        let m = &deref(m, "measurement")?.0;
        let spectrum = loss_spectrum(&information_matrix(&state(amps, dim, m.dim())?, m)?)?;
        if let Some(nu) = nu_out.as_mut() {
            *nu = spectrum.nu();
        }
        if let Some(l) = l_out.as_mut() {
            *l = spectrum.scaled_loss();
        }
        slice_mut(d_out, d_cap, spectrum.d.len(), "d_out")?[..spectrum.d.len()].copy_from_slice(&spectrum.d);
        Ok(())
    })
}

/// Draws one count vector of total `n` (measurement sample size).
///
/// # Safety
/// `amps` must hold `2 * dim` doubles and `counts_out` `cap` integers.
#[no_mangle]
pub unsafe extern "C" fn nt_sample_counts(
    m: *const NtMeasurement,
    amps: *const f64,
    dim: usize,
    seed: u64,
    model: NtSampling,
    counts_out: *mut u64,
    cap: usize,
) -> NtStatus {
    guard(|| {
        let m = &deref(m, "measurement")?.0;
        let counts = sample_counts(m, &state(amps, dim, m.dim())?, seed, model.into())?;
        slice_mut(counts_out, cap, counts.len(), "counts_out")?[..counts.len()].copy_from_slice(&counts.counts);
        Ok(())
    })
}

/// Maximum-likelihood pure state for `counts` with default options. The unit-norm
/// estimate goes to `amps_out` as `2 * dim` doubles; `info` may be null.
///
/// # Safety
/// `counts` must hold `len` integers and `amps_out` `2 * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn nt_reconstruct(
    m: *const NtMeasurement,
    counts: *const u64,
    len: usize,
    amps_out: *mut f64,
    dim: usize,
    info: *mut NtReconstructInfo,
) -> NtStatus {
    guard(|| {
        let m = &deref(m, "measurement")?.0;
        if dim != m.dim() {
            return fail(
                NtStatus::InvalidArgument,
                format!("state dimension {dim}, measurement dimension {}", m.dim()),
            );
        }
        let counts = CountVector::new(slice(counts, len, "counts")?.to_vec(), m.weights().to_vec(), m.n())?;
        let r = reconstruct(&counts, m, &ReconstructOptions::default())?;
        let out = slice_mut(amps_out, 2 * dim, 2 * dim, "amps_out")?;
        for (pair, c) in out.chunks_exact_mut(2).zip(r.estimate.amplitudes().iter()) {
            pair[0] = c.re;
            pair[1] = c.im;
        }
        if let Some(info) = info.as_mut() {
            *info = NtReconstructInfo {
                iterations: r.iterations,
                converged: r.converged,
                final_residual: r.final_residual,
                log_likelihood: r.log_likelihood,
                norm_scale: r.norm_scale,
            };
        }
        Ok(())
    })
}

/// Scaled loss `L(θ, φ)` over a `theta × phi` grid (poles once each). When
/// `l_out` is non-null it receives `(theta - 2) * phi + 2` values as
/// `theta, phi, L` triples in grid order.
///
/// # Safety
/// `p`, `c` must be live single-qubit handles; `extrema` writable; `l_out`
/// null or holding `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn nt_bloch_map(
    p: *const NtProtocol,
    c: *const NtChannel,
    theta: usize,
    phi: usize,
    extrema: *mut NtBlochExtrema,
    l_out: *mut f64,
    cap: usize,
) -> NtStatus {
    guard(|| {
        let extrema = extrema
            .as_mut()
            .map_or_else(|| fail(NtStatus::NullPointer, "`extrema` is null"), Ok)?;
        let map = bloch_loss_map(
            &deref(p, "protocol")?.0,
            &deref(c, "channel")?.0,
            GridSpec { theta, phi },
        )?;
        if !l_out.is_null() {
            let out = slice_mut(l_out, cap, 3 * map.points.len(), "l_out")?;
            for (dst, pt) in out.chunks_exact_mut(3).zip(&map.points) {
                dst.copy_from_slice(&[pt.theta, pt.phi, pt.l]);
            }
        }
        *extrema = NtBlochExtrema {
            l_min: map.l_min,
            l_max: map.l_max,
            argmin_theta: map.argmin.0,
            argmin_phi: map.argmin.1,
            argmax_theta: map.argmax.0,
            argmax_phi: map.argmax.1,
            points: map.points.len(),
        };
        Ok(())
    })
}
