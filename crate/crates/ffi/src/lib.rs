//! C ABI over the elicitation engine.
//!
//! Objects are opaque handles created by `*_new`/constructor functions and
//! released with the matching `*_free`. Every function returns an
//! [`ElicitStatus`]; on failure `elicit_last_error_message` describes the
//! error for the calling thread. Outputs are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use elicit::belief::{
    differential_entropy_estimate, hit_and_run_sample, predictive_distribution, BeliefState, GaussianPrior,
    PosteriorSampleSet, Question,
};
use elicit::channel::{channel_equation, compute_capacity, DiscreteNoiseChannel, PredictiveDistribution};
use elicit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElicitStatus {
    Ok = 0,
    InvalidArgument = 1,
    Singular = 2,
    Convergence = 3,
    Unsupported = 4,
    Infeasible = 5,
    Initialization = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

/// A noise channel.
pub struct ElicitChannel(DiscreteNoiseChannel);
/// A prior, channel and answered questions.
pub struct ElicitBelief(BeliefState);
/// Posterior draws.
pub struct ElicitSamples(PosteriorSampleSet);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ElicitStatus {
    match e {
        Error::SingularEvaluation(_) | Error::SingularMatrix { .. } => ElicitStatus::Singular,
        Error::Convergence { .. } => ElicitStatus::Convergence,
        Error::UnsupportedChannel(_) => ElicitStatus::Unsupported,
        Error::InfeasibleTarget(_) | Error::Construction(_) => ElicitStatus::Infeasible,
        Error::Initialization(_) => ElicitStatus::Initialization,
        Error::Io { .. } => ElicitStatus::Io,
        _ => ElicitStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ElicitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ElicitStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            ElicitStatus::NullPointer
        }
        Ok(Err(Failure::Engine(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            ElicitStatus::Panic
        }
    }
}

unsafe fn reference<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn question_from(features: &[f64], m: usize, d: usize) -> Result<Question, Failure> {
    Ok(Question::from_features(features.chunks_exact(d).take(m).map(<[f64]>::to_vec).collect())?)
}

/// Message for the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn elicit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Symmetric channel `alpha I + (1 - alpha)/m ee'`.
///
/// # Safety
/// `out_channel` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn elicit_channel_symmetric(m: usize, alpha: f64, out_channel: *mut *mut ElicitChannel) -> ElicitStatus {
    guard(|| {
        let slot = out(out_channel, "out_channel")?;
        let ch = DiscreteNoiseChannel::symmetric(m, alpha)?;
        *slot = Box::into_raw(Box::new(ElicitChannel(ch)));
        Ok(())
    })
}

/// Channel from a row-major `m x m` row-stochastic matrix.
///
/// # Safety
/// `matrix` must point to `m * m` doubles and `out_channel` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn elicit_channel_from_matrix(
    m: usize,
    matrix: *const f64,
    out_channel: *mut *mut ElicitChannel,
) -> ElicitStatus {
    guard(|| {
        let slot = out(out_channel, "out_channel")?;
        let entries = slice(matrix, m.checked_mul(m).ok_or(Failure::Engine(Error::InvalidArgument("m too large".into())))?, "matrix")?;
        let ch = DiscreteNoiseChannel::from_rows(entries.chunks_exact(m.max(1)).map(<[f64]>::to_vec).collect())?;
        *slot = Box::into_raw(Box::new(ElicitChannel(ch)));
        Ok(())
    })
}

/// # Safety
/// `channel` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn elicit_channel_free(channel: *mut ElicitChannel) {
    if !channel.is_null() {
        drop(Box::from_raw(channel));
    }
}

/// # Safety
/// `channel` must be a live handle and `out_m` writable.
#[no_mangle]
pub unsafe extern "C" fn elicit_channel_m(channel: *const ElicitChannel, out_m: *mut usize) -> ElicitStatus {
    guard(|| {
        let ch = reference(channel, "channel")?;
        *out(out_m, "out_m")? = ch.0.m();
        Ok(())
    })
}

/// Capacity in bits and the capacity-achieving distribution.
///
/// # Safety
/// `out_u` must hold `m` doubles; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn elicit_channel_capacity(
    channel: *const ElicitChannel,
    tol: f64,
    out_capacity_bits: *mut f64,
    out_u: *mut f64,
) -> ElicitStatus {
    guard(|| {
        let ch = reference(channel, "channel")?;
        let cap = out(out_capacity_bits, "out_capacity_bits")?;
        if out_u.is_null() {
            return Err(Failure::Null("out_u"));
        }
        let analysis = compute_capacity(&ch.0, tol)?;
        *cap = analysis.capacity_bits;
        std::slice::from_raw_parts_mut(out_u, ch.0.m()).copy_from_slice(analysis.optimal_u.weights());
        Ok(())
    })
}

/// `phi(u; P)` in bits for a distribution `u` of length `m`.
///
/// # Safety
/// `u` must point to `m` doubles and `out_bits` must be writable.
#[no_mangle]
pub unsafe extern "C" fn elicit_channel_equation(
    channel: *const ElicitChannel,
    u: *const f64,
    out_bits: *mut f64,
) -> ElicitStatus {
    guard(|| {
        let ch = reference(channel, "channel")?;
        let u = slice(u, ch.0.m(), "u")?;
        let res = out(out_bits, "out_bits")?;
        *res = channel_equation(&PredictiveDistribution::new(u.to_vec())?, &ch.0)?;
        Ok(())
    })
}

/// Belief with an isotropic Gaussian prior `N(0, variance I_d)`; the channel
/// is copied.
///
/// # Safety
/// `channel` must be a live handle and `out_belief` writable.
#[no_mangle]
pub unsafe extern "C" fn elicit_belief_new_isotropic(
    d: usize,
    variance: f64,
    channel: *const ElicitChannel,
    out_belief: *mut *mut ElicitBelief,
) -> ElicitStatus {
    guard(|| {
        let ch = reference(channel, "channel")?;
        let slot = out(out_belief, "out_belief")?;
        let prior = GaussianPrior::isotropic(d, variance)?;
        *slot = Box::into_raw(Box::new(ElicitBelief(BeliefState::new(prior, ch.0.clone()))));
        Ok(())
    })
}

/// # Safety
/// `belief` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn elicit_belief_free(belief: *mut ElicitBelief) {
    if !belief.is_null() {
        drop(Box::from_raw(belief));
    }
}

/// Records signal `signal` (0-based) for the question whose `m` alternatives
/// are the rows of the row-major `m x d` array `features`. `predictive` is
/// the current estimate of the answer distribution, of length `m`, formed
/// from `sample_count` draws (0 if it is exact).
///
/// # Safety
/// `features` must hold `m * d` doubles and `predictive` `m` doubles, where
/// `d` is the belief dimension and `m` the channel size.
#[no_mangle]
pub unsafe extern "C" fn elicit_belief_update(
    belief: *mut ElicitBelief,
    features: *const f64,
    signal: usize,
    predictive: *const f64,
    sample_count: usize,
) -> ElicitStatus {
    guard(|| {
        let b = out(belief, "belief")?;
        let (m, d) = (b.0.channel().m(), b.0.dim());
        let q = question_from(slice(features, m * d, "features")?, m, d)?;
        let mut u = PredictiveDistribution::new(slice(predictive, m, "predictive")?.to_vec())?;
        if sample_count > 0 {
            u = u.with_sample_count(sample_count);
        }
        b.0 = b.0.update(&q, signal, &u)?;
        Ok(())
    })
}

/// # Safety
/// `belief` must be a live handle and `out_steps` writable.
#[no_mangle]
pub unsafe extern "C" fn elicit_belief_steps(belief: *const ElicitBelief, out_steps: *mut usize) -> ElicitStatus {
    guard(|| {
        *out(out_steps, "out_steps")? = reference(belief, "belief")?.0.history().len();
        Ok(())
    })
}

/// Draws `count` posterior samples by hit-and-run.
///
/// # Safety
/// `belief` must be a live handle and `out_samples` writable.
#[no_mangle]
pub unsafe extern "C" fn elicit_belief_sample(
    belief: *const ElicitBelief,
    count: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
    out_samples: *mut *mut ElicitSamples,
) -> ElicitStatus {
    guard(|| {
        let b = reference(belief, "belief")?;
        let slot = out(out_samples, "out_samples")?;
        let s = hit_and_run_sample(&b.0, count, burn_in, thinning, seed)?;
        *slot = Box::into_raw(Box::new(ElicitSamples(s)));
        Ok(())
    })
}

/// Entropy estimate of the belief in bits with its standard error.
///
/// # Safety
/// Handles must be live and outputs writable.
#[no_mangle]
pub unsafe extern "C" fn elicit_entropy_estimate(
    belief: *const ElicitBelief,
    samples: *const ElicitSamples,
    out_bits: *mut f64,
    out_se: *mut f64,
) -> ElicitStatus {
    guard(|| {
        let b = reference(belief, "belief")?;
        let s = reference(samples, "samples")?;
        let bits = out(out_bits, "out_bits")?;
        let se = out(out_se, "out_se")?;
        let e = differential_entropy_estimate(&b.0, &s.0)?;
        *bits = e.bits;
        *se = e.se;
        Ok(())
    })
}

/// # Safety
/// `samples` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn elicit_samples_free(samples: *mut ElicitSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}

/// Number of draws and their dimension.
///
/// # Safety
/// `samples` must be a live handle and outputs writable.
#[no_mangle]
pub unsafe extern "C" fn elicit_samples_shape(
    samples: *const ElicitSamples,
    out_count: *mut usize,
    out_dim: *mut usize,
) -> ElicitStatus {
    guard(|| {
        let s = reference(samples, "samples")?;
        *out(out_count, "out_count")? = s.0.len();
        *out(out_dim, "out_dim")? = s.0.dim();
        Ok(())
    })
}

/// Copies the draws row-major into `buffer`, which holds `capacity` doubles.
///
/// # Safety
/// `buffer` must be writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn elicit_samples_copy(
    samples: *const ElicitSamples,
    buffer: *mut f64,
    capacity: usize,
) -> ElicitStatus {
    guard(|| {
        let s = reference(samples, "samples")?;
        if buffer.is_null() {
            return Err(Failure::Null("buffer"));
        }
        let need = s.0.len() * s.0.dim();
        if capacity < need {
            return Err(Error::InvalidArgument(format!("buffer holds {capacity} values but {need} are needed")).into());
        }
        let dst = std::slice::from_raw_parts_mut(buffer, need);
        for (chunk, x) in dst.chunks_exact_mut(s.0.dim()).zip(s.0.iter()) {
            chunk.copy_from_slice(x);
        }
        Ok(())
    })
}

/// Fractions of draws choosing each of the `m` alternatives given as the
/// rows of the row-major `m x d` array `features`.
///
/// # Safety
/// `features` must hold `m * d` doubles with `d` the draw dimension, and
/// `out_u` must be writable for `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn elicit_predictive(
    samples: *const ElicitSamples,
    features: *const f64,
    m: usize,
    out_u: *mut f64,
) -> ElicitStatus {
    guard(|| {
        let s = reference(samples, "samples")?;
        let d = s.0.dim();
        let q = question_from(slice(features, m * d, "features")?, m, d)?;
        if out_u.is_null() {
            return Err(Failure::Null("out_u"));
        }
        let u = predictive_distribution(&s.0, &q)?;
        std::slice::from_raw_parts_mut(out_u, m).copy_from_slice(u.weights());
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn elicit_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
