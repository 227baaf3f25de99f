//! C ABI for dpodyn.
//!
//! Every fallible call returns a [`DpodynStatus`]; on failure the message is
//! available from [`dpodyn_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dpodyn::data::{
    apply_alignment_shift, flip_labels, generate_dataset, load_dataset, make_spec, save_dataset, Behavior, BehaviorDataset,
    CovDescriptor, Direction, Label,
};
use dpodyn::engine::{reduced_loss, train, HeadState, TrainConfig, TrainMode, TrainTrace};
use dpodyn::theory::{priority_levels, thm1_bound, Thm1Params};
use dpodyn::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpodynStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Domain = 5,
    Diverged = 6,
    Degenerate = 7,
    Panic = 8,
}

/// A preference dataset.
pub struct DpodynDataset(BehaviorDataset);

/// A training run: its recorded metrics and, unless it diverged, the final `ΔW`.
pub struct DpodynTrace {
    trace: TrainTrace,
    final_weights: Option<Vec<f64>>,
    diverged_at: usize,
}

/// One recorded step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DpodynRecord {
    pub step: usize,
    pub loss: f64,
    pub norm_dw: f64,
    pub norm_matrix: f64,
    pub acc_pooled: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DpodynStatus {
    match e {
        Error::Io(_) => DpodynStatus::Io,
        Error::Parse { .. } | Error::Schema(_) | Error::EmptyDataset => DpodynStatus::Parse,
        Error::Diverged { .. } => DpodynStatus::Diverged,
        Error::DegeneratePriority | Error::UndefinedCosine | Error::NotProportional(..) => DpodynStatus::Degenerate,
        Error::Domain(_) | Error::InvalidSpec(_) | Error::Shape { .. } | Error::Contract(_) => DpodynStatus::Domain,
        _ => DpodynStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (DpodynStatus, String)>) -> DpodynStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DpodynStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            DpodynStatus::Panic
        }
    }
}

type FfiResult<T> = Result<T, (DpodynStatus, String)>;

fn lift<T>(r: dpodyn::Result<T>) -> FfiResult<T> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (DpodynStatus, String) {
    (DpodynStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> FfiResult<String> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (DpodynStatus::InvalidArgument, "path is not UTF-8".into()))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn dpodyn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ------------------------------------------------------------------ datasets

/// Loads a `.jsonl` dataset, or a `.csv` one by extension.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_load(path: *const c_char, out: *mut *mut DpodynDataset) -> DpodynStatus {
    guard(|| {
        let p = path_arg(path)?;
        let ds = lift(load_dataset(p))?;
        put(out, DpodynDataset(ds))
    })
}

/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_save(ds: *const DpodynDataset, path: *const c_char) -> DpodynStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        let p = path_arg(path)?;
        lift(save_dataset(&ds.0, p))
    })
}

/// One behavior `b0` from `n` row-major vectors of length `d`; `labels[i]` is `+1` or `-1`.
///
/// # Safety
/// `data` must hold `n * d` values and `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_from_rows(
    d: usize,
    n: usize,
    data: *const f64,
    labels: *const i8,
    out: *mut *mut DpodynDataset,
) -> DpodynStatus {
    guard(|| {
        let values = slice_arg(data, n.checked_mul(d).ok_or((DpodynStatus::InvalidArgument, "n * d overflows".into()))?, "data")?;
        if n > 0 && labels.is_null() {
            return Err(null("labels"));
        }
        let labels = if n == 0 { &[][..] } else { std::slice::from_raw_parts(labels, n) };
        let labels = labels
            .iter()
            .map(|&l| match l {
                1 => Ok(Label::Positive),
                -1 => Ok(Label::Negative),
                other => Err((DpodynStatus::InvalidArgument, format!("label must be +1 or -1, got {other}"))),
            })
            .collect::<FfiResult<Vec<_>>>()?;
        let b = lift(Behavior::new("b0", d, values.to_vec(), labels))?;
        let ds = lift(BehaviorDataset::new(d, vec![b]))?;
        put(out, DpodynDataset(ds))
    })
}

/// Generates `count` behaviors `b0..`, behavior `i` with distinguishability `deltas[i]`
/// along axis `i`, isotropic variance `sigma2` and tail exponent `alpha`.
///
/// # Safety
/// `deltas` must hold `count` values.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_generate(
    d: usize,
    deltas: *const f64,
    count: usize,
    alpha: f64,
    sigma2: f64,
    n_per_behavior: usize,
    seed: u64,
    out: *mut *mut DpodynDataset,
) -> DpodynStatus {
    guard(|| {
        let deltas = slice_arg(deltas, count, "deltas")?;
        if count > d {
            return Err((DpodynStatus::InvalidArgument, format!("{count} behaviors need d >= {count}")));
        }
        let specs = deltas
            .iter()
            .enumerate()
            .map(|(i, &delta)| {
                let cov = CovDescriptor::Isotropic(sigma2);
                make_spec(d, delta, alpha, cov.clone(), cov, &Direction::Axis(i)).map(|s| (format!("b{i}"), s))
            })
            .collect::<dpodyn::Result<Vec<_>>>();
        let ds = lift(specs.and_then(|s| generate_dataset(&s, n_per_behavior, seed)))?;
        put(out, DpodynDataset(ds))
    })
}

/// Dimension of the embeddings, 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_dim(ds: *const DpodynDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.dim())
}

/// Number of samples, 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_len(ds: *const DpodynDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_behavior_count(ds: *const DpodynDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.behaviors().len())
}

/// New dataset with every label swapped.
///
/// # Safety
/// `ds` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_flip(ds: *const DpodynDataset, out: *mut *mut DpodynDataset) -> DpodynStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        put(out, DpodynDataset(flip_labels(&ds.0)))
    })
}

/// New dataset with class means pushed apart by `kappa_sep` and spread scaled by `kappa_var`.
///
/// # Safety
/// `ds` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_shift(
    ds: *const DpodynDataset,
    kappa_sep: f64,
    kappa_var: f64,
    out: *mut *mut DpodynDataset,
) -> DpodynStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        let shifted = lift(apply_alignment_shift(&ds.0, kappa_sep, kappa_var))?;
        put(out, DpodynDataset(shifted))
    })
}

/// # Safety
/// `ds` must be null or a handle from this library, not freed before.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_dataset_free(ds: *mut DpodynDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// ------------------------------------------------------------------ loss and training

/// Reduced DPO loss of the head `delta_w` (length `d`) with a zero initial boundary.
///
/// # Safety
/// `delta_w` must hold `d` values and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_reduced_loss(
    ds: *const DpodynDataset,
    delta_w: *const f64,
    d: usize,
    beta: f64,
    out: *mut f64,
) -> DpodynStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        let w = slice_arg(delta_w, d, "delta_w")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let head = HeadState { d, delta_w: w.to_vec(), w_b0: vec![0.0; d], step: 0 };
        *out = lift(reduced_loss(&head, &ds.0, beta))?.overall;
        Ok(())
    })
}

/// Trains from zero for `steps` steps; `batch_size` 0 means full batch.
/// On divergence the partial trace is still returned together with `DIVERGED`.
///
/// # Safety
/// `ds` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_train(
    ds: *const DpodynDataset,
    beta: f64,
    eta: f64,
    steps: usize,
    batch_size: usize,
    seed: u64,
    out: *mut *mut DpodynTrace,
) -> DpodynStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        if out.is_null() {
            return Err(null("output handle"));
        }
        let mut cfg = TrainConfig::full_batch(beta, eta, steps);
        cfg.seed = seed;
        if batch_size > 0 {
            cfg.mode = TrainMode::MinibatchSgd { batch_size };
        }
        match train(&ds.0, &cfg, None) {
            Ok(o) => put(out, DpodynTrace { trace: o.trace, final_weights: Some(o.head.delta_w), diverged_at: 0 }),
            Err(Error::Diverged { step, reason, trace }) => {
                put(out, DpodynTrace { trace: *trace, final_weights: None, diverged_at: step })?;
                Err((DpodynStatus::Diverged, format!("diverged at step {step}: {reason}")))
            }
            Err(e) => Err((status_of(&e), e.to_string())),
        }
    })
}

/// Number of recorded steps, 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_trace_len(t: *const DpodynTrace) -> usize {
    t.as_ref().map_or(0, |t| t.trace.records.len())
}

/// Step at which training diverged, 0 if it completed.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_trace_diverged_at(t: *const DpodynTrace) -> usize {
    t.as_ref().map_or(0, |t| t.diverged_at)
}

/// # Safety
/// `t` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_trace_record(t: *const DpodynTrace, index: usize, out: *mut DpodynRecord) -> DpodynStatus {
    guard(|| {
        let t = borrow(t, "trace")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = t.trace.records.get(index).ok_or_else(|| {
            (DpodynStatus::InvalidArgument, format!("record {index} out of range ({} records)", t.trace.records.len()))
        })?;
        *out = DpodynRecord {
            step: r.step,
            loss: r.loss,
            norm_dw: r.norm_dw,
            norm_matrix: r.norm_matrix,
            acc_pooled: r.acc_pooled,
        };
        Ok(())
    })
}

/// Copies the final `ΔW` into `buf`, which must hold the dataset dimension.
///
/// # Safety
/// `buf` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_trace_final_weights(t: *const DpodynTrace, buf: *mut f64, len: usize) -> DpodynStatus {
    guard(|| {
        let t = borrow(t, "trace")?;
        let w = t
            .final_weights
            .as_ref()
            .ok_or((DpodynStatus::Diverged, "no final weights: training diverged".to_string()))?;
        if len != w.len() {
            return Err((DpodynStatus::InvalidArgument, format!("buffer holds {len}, weights have {}", w.len())));
        }
        if buf.is_null() && len > 0 {
            return Err(null("buf"));
        }
        if len > 0 {
            std::slice::from_raw_parts_mut(buf, len).copy_from_slice(w);
        }
        Ok(())
    })
}

/// # Safety
/// `t` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_trace_write_csv(t: *const DpodynTrace, path: *const c_char) -> DpodynStatus {
    guard(|| {
        let t = borrow(t, "trace")?;
        let p = path_arg(path)?;
        let f = std::fs::File::create(p).map_err(|e| (DpodynStatus::Io, e.to_string()))?;
        lift(t.trace.write_csv(std::io::BufWriter::new(f)))
    })
}

/// # Safety
/// `t` must be null or a handle from this library, not freed before.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_trace_free(t: *mut DpodynTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

// ------------------------------------------------------------------ theory

/// Weight-change bound `6 β′ η t d^{Δ−1/2}`.
#[no_mangle]
pub extern "C" fn dpodyn_thm1_bound(beta_prime: f64, eta: f64, d: usize, delta: f64, t: usize) -> f64 {
    let p = Thm1Params { beta_prime, eta, d, delta, c_v: 0.0, c_n: 0.0, gamma: 0.0, alpha: 2.0, c_prime: 1.0 };
    thm1_bound(&p, t)
}

/// Writes one priority level per behavior into `levels` (capacity `cap`) and the count into `count`.
///
/// # Safety
/// `levels` must hold `cap` writable values and `count` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpodyn_priority_levels(
    ds: *const DpodynDataset,
    levels: *mut f64,
    cap: usize,
    count: *mut usize,
) -> DpodynStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        if count.is_null() {
            return Err(null("count"));
        }
        let r = lift(priority_levels(&ds.0))?;
        *count = r.levels.len();
        if cap < r.levels.len() {
            return Err((DpodynStatus::InvalidArgument, format!("need room for {} levels, got {cap}", r.levels.len())));
        }
        if levels.is_null() {
            return Err(null("levels"));
        }
        std::slice::from_raw_parts_mut(levels, r.levels.len()).copy_from_slice(&r.levels);
        Ok(())
    })
}
