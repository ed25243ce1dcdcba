//! C interface to the `prognos` toolkit.
//!
//! Every fallible function returns a [`PrognosStatus`]; on failure the
//! message is kept per thread and read with [`prognos_last_error_message`].
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `*_embed` functions and released by the matching `*_free`. Panics never
//! unwind into C; they surface as `PROGNOS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use prognos::dataset::{load_cmapss, Split, UnitSeries};
use prognos::eval::{MetricReport, Scored};
use prognos::jointmodel::Checkpoint;
use prognos::umap::{embed_matrix, UmapConfig};
use prognos::Error;

/// Result of a call. Values 3 to 13 mirror the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrognosStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Integrity = 4,
    Parameter = 5,
    Config = 6,
    Invariant = 7,
    Shape = 8,
    Numerical = 9,
    MissingStage = 10,
    Locked = 11,
    Io = 12,
    Format = 13,
    Panic = 99,
}

impl From<&Error> for PrognosStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } => Self::Parse,
            Error::Integrity(_) => Self::Integrity,
            Error::Parameter(_) => Self::Parameter,
            Error::Config(_) => Self::Config,
            Error::Invariant(_) => Self::Invariant,
            Error::Shape(_) => Self::Shape,
            Error::Numerical(_) => Self::Numerical,
            Error::MissingStage { .. } => Self::MissingStage,
            Error::Locked(_) => Self::Locked,
            Error::Io { .. } => Self::Io,
            Error::Csv(_) | Error::Json(_) => Self::Format,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PrognosStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PrognosStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PrognosStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PrognosStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PrognosStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            PrognosStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` writable values.
unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string.
unsafe fn path(ptr: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// # Safety
/// `out` must be null or writable.
unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn prognos_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn prognos_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// DTW distance between two row-major sequences with `dim` columns.
///
/// # Safety
/// `p` and `q` must hold `p_rows * dim` and `q_rows * dim` values; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn prognos_dtw(
    p: *const f64,
    p_rows: usize,
    q: *const f64,
    q_rows: usize,
    dim: usize,
    out: *mut f64,
) -> PrognosStatus {
    guard(|| {
        if dim == 0 || p_rows == 0 || q_rows == 0 {
            return Err(invalid("sequences must be non-empty with dim > 0"));
        }
        let p = slice(p, p_rows * dim, "p")?;
        let q = slice(q, q_rows * dim, "q")?;
        write_out(out, prognos::trajectory::dtw(p, q, dim), "out")
    })
}

// ---- sequences --------------------------------------------------------------

/// Run-to-failure or test units loaded from a C-MAPSS text file.
pub struct PrognosUnits(Vec<UnitSeries>);

/// Load units from `path`. `truth_path` may be null for run-to-failure
/// training files; when given, the file is read as a truncated test split.
///
/// # Safety
/// Paths must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prognos_units_load(
    path_ptr: *const c_char,
    truth_path: *const c_char,
    out: *mut *mut PrognosUnits,
) -> PrognosStatus {
    guard(|| {
        let p = path(path_ptr, "path")?;
        let units = if truth_path.is_null() {
            load_cmapss(&p, Split::Train, None)?
        } else {
            let t = path(truth_path, "truth_path")?;
            load_cmapss(&p, Split::Test, Some(&t))?
        };
        write_out(out, Box::into_raw(Box::new(PrognosUnits(units))), "out")
    })
}

/// Number of units.
///
/// # Safety
/// `units` must come from [`prognos_units_load`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prognos_units_count(units: *const PrognosUnits, out: *mut usize) -> PrognosStatus {
    guard(|| {
        let u = units.as_ref().ok_or_else(|| null("units"))?;
        write_out(out, u.0.len(), "out")
    })
}

/// Unit id, cycle count and sensor count of the unit at `index`.
///
/// # Safety
/// `units` must come from [`prognos_units_load`]; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn prognos_units_shape(
    units: *const PrognosUnits,
    index: usize,
    unit_id: *mut u32,
    n_cycles: *mut usize,
    n_sensors: *mut usize,
) -> PrognosStatus {
    guard(|| {
        let u = units.as_ref().ok_or_else(|| null("units"))?;
        let s =
            u.0.get(index)
                .ok_or_else(|| invalid(format!("unit index {index} out of range")))?;
        write_out(unit_id, s.unit_id, "unit_id")?;
        write_out(n_cycles, s.len(), "n_cycles")?;
        write_out(n_sensors, s.n_sensors(), "n_sensors")
    })
}

/// Copy the row-major `n_cycles * n_sensors` readings of unit `index`.
///
/// # Safety
/// `buf` must hold `buf_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn prognos_units_values(
    units: *const PrognosUnits,
    index: usize,
    buf: *mut f64,
    buf_len: usize,
) -> PrognosStatus {
    guard(|| {
        let u = units.as_ref().ok_or_else(|| null("units"))?;
        let s =
            u.0.get(index)
                .ok_or_else(|| invalid(format!("unit index {index} out of range")))?;
        if buf_len != s.values.len() {
            return Err(invalid(format!(
                "buffer holds {buf_len} values, unit has {}",
                s.values.len()
            )));
        }
        slice_mut(buf, buf_len, "buf")?.copy_from_slice(&s.values);
        Ok(())
    })
}

/// # Safety
/// `units` must be null or come from [`prognos_units_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn prognos_units_free(units: *mut PrognosUnits) {
    if !units.is_null() {
        drop(Box::from_raw(units));
    }
}

// ---- embedding --------------------------------------------------------------

/// Layout parameters; start from [`prognos_umap_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrognosUmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_components: usize,
    pub epochs: usize,
    pub seed: u64,
}

#[no_mangle]
pub extern "C" fn prognos_umap_params_default() -> PrognosUmapParams {
    let d = UmapConfig::default();
    PrognosUmapParams {
        n_neighbors: d.n_neighbors,
        min_dist: d.min_dist,
        n_components: d.n_components,
        epochs: d.epochs,
        seed: d.seed,
    }
}

pub struct PrognosEmbedding {
    points: Vec<f64>,
    dim: usize,
}

/// Embed `n_rows` row-major points with `n_features` columns.
///
/// # Safety
/// `points` must hold `n_rows * n_features` values; `params` and `out` must
/// be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn prognos_embed(
    points: *const f64,
    n_rows: usize,
    n_features: usize,
    params: *const PrognosUmapParams,
    out: *mut *mut PrognosEmbedding,
) -> PrognosStatus {
    guard(|| {
        if n_rows == 0 || n_features == 0 {
            return Err(invalid("empty input"));
        }
        let x = slice(points, n_rows * n_features, "points")?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let cfg = UmapConfig {
            n_neighbors: p.n_neighbors,
            min_dist: p.min_dist,
            n_components: p.n_components,
            epochs: p.epochs,
            seed: p.seed,
            ..Default::default()
        };
        let (y, _) = embed_matrix(x, n_features, &cfg)?;
        let e = PrognosEmbedding {
            points: y,
            dim: p.n_components,
        };
        write_out(out, Box::into_raw(Box::new(e)), "out")
    })
}

/// Rows and columns of an embedding.
///
/// # Safety
/// `e` must come from [`prognos_embed`]; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn prognos_embedding_shape(
    e: *const PrognosEmbedding,
    n_rows: *mut usize,
    dim: *mut usize,
) -> PrognosStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("embedding"))?;
        write_out(n_rows, e.points.len() / e.dim, "n_rows")?;
        write_out(dim, e.dim, "dim")
    })
}

/// Copy the row-major coordinates into `buf`, which must hold exactly
/// `n_rows * dim` values.
///
/// # Safety
/// `buf` must hold `buf_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn prognos_embedding_copy(
    e: *const PrognosEmbedding,
    buf: *mut f64,
    buf_len: usize,
) -> PrognosStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("embedding"))?;
        if buf_len != e.points.len() {
            return Err(invalid(format!(
                "buffer holds {buf_len} values, embedding has {}",
                e.points.len()
            )));
        }
        slice_mut(buf, buf_len, "buf")?.copy_from_slice(&e.points);
        Ok(())
    })
}

/// # Safety
/// `e` must be null or come from [`prognos_embed`], freed once.
#[no_mangle]
pub unsafe extern "C" fn prognos_embedding_free(e: *mut PrognosEmbedding) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

// ---- model ------------------------------------------------------------------

/// A trained joint model with its input scaler.
pub struct PrognosModel(Checkpoint);

/// # Safety
/// `path_ptr` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prognos_model_load(path_ptr: *const c_char, out: *mut *mut PrognosModel) -> PrognosStatus {
    guard(|| {
        let p = path(path_ptr, "path")?;
        let ck = Checkpoint::load(&p)?;
        write_out(out, Box::into_raw(Box::new(PrognosModel(ck))), "out")
    })
}

/// Window length, sensor count and mode count the model expects.
///
/// # Safety
/// `m` must come from [`prognos_model_load`]; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn prognos_model_shape(
    m: *const PrognosModel,
    ntw: *mut usize,
    n_sensors: *mut usize,
    n_modes: *mut usize,
) -> PrognosStatus {
    guard(|| {
        let a = m.as_ref().ok_or_else(|| null("model"))?.0.model.arch;
        write_out(ntw, a.ntw, "ntw")?;
        write_out(n_sensors, a.n_sensors, "n_sensors")?;
        write_out(n_modes, a.n_modes, "n_modes")
    })
}

/// Min-max scale a raw `ntw * n_sensors` window in place with the scaler
/// the model was trained with.
///
/// # Safety
/// `window` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn prognos_model_scale(m: *const PrognosModel, window: *mut f64, len: usize) -> PrognosStatus {
    guard(|| {
        let ck = &m.as_ref().ok_or_else(|| null("model"))?.0;
        let s = ck.model.arch.n_sensors;
        if len != ck.model.arch.input_len() {
            return Err(Failure(
                PrognosStatus::Shape,
                format!("window has {len} values, model takes {}", ck.model.arch.input_len()),
            ));
        }
        for (i, v) in slice_mut(window, len, "window")?.iter_mut().enumerate() {
            *v = ck.scaler.scale_value(i % s, *v);
        }
        Ok(())
    })
}

/// RUL estimate and mode probabilities for one scaled window.
/// `probs` may be null when `probs_len` is 0; otherwise it must hold
/// exactly `n_modes` values.
///
/// # Safety
/// `window` must hold `len` values, `rul` must be writable and `probs`
/// must hold `probs_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn prognos_model_predict(
    m: *const PrognosModel,
    window: *const f64,
    len: usize,
    rul: *mut f64,
    probs: *mut f64,
    probs_len: usize,
) -> PrognosStatus {
    guard(|| {
        let ck = &m.as_ref().ok_or_else(|| null("model"))?.0;
        let x = slice(window, len, "window")?;
        let p = ck.model.predict(x)?;
        if probs_len != 0 {
            if probs_len != p.probs.len() {
                return Err(invalid(format!(
                    "probs holds {probs_len} values, model has {} modes",
                    p.probs.len()
                )));
            }
            slice_mut(probs, probs_len, "probs")?.copy_from_slice(&p.probs);
        }
        write_out(rul, p.rul, "rul")
    })
}

/// # Safety
/// `m` must be null or come from [`prognos_model_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn prognos_model_free(m: *mut PrognosModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

// ---- metrics ----------------------------------------------------------------

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrognosMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub mr: f64,
    pub n_instances: usize,
    pub n_mape_instances: usize,
}

/// Score `n` predictions. Monotonicity is measured per unit in cycle order.
///
/// # Safety
/// All input arrays must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prognos_metrics(
    unit_ids: *const u32,
    cycles: *const u32,
    y_true: *const f64,
    y_pred: *const f64,
    n: usize,
    out: *mut PrognosMetrics,
) -> PrognosStatus {
    guard(|| {
        if n == 0 {
            return Err(invalid("no predictions"));
        }
        let ids = slice(unit_ids, n, "unit_ids")?;
        let cyc = slice(cycles, n, "cycles")?;
        let t = slice(y_true, n, "y_true")?;
        let p = slice(y_pred, n, "y_pred")?;
        let scored: Vec<Scored> = (0..n)
            .map(|i| Scored {
                unit_id: ids[i],
                cycle: cyc[i],
                y_true: t[i],
                y_pred: p[i],
            })
            .collect();
        let r = MetricReport::from_scored(&scored)?;
        write_out(
            out,
            PrognosMetrics {
                rmse: r.rmse,
                mae: r.mae,
                mape: r.mape,
                mr: r.mr,
                n_instances: r.n_instances,
                n_mape_instances: r.n_mape_instances,
            },
            "out",
        )
    })
}
