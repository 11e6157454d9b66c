//! C ABI over the augmentation toolkit.
//!
//! Every entry point returns a [`CaStatus`]. On anything other than
//! `CA_STATUS_OK` a message is kept per thread and can be read with
//! [`ca_last_error`]. Objects cross the boundary as opaque handles that the
//! caller releases with the matching `_free` function. A process point is
//! passed as [`CA_POINT_LEN`] doubles in dataset column order: vdd, temp,
//! corner code, c_load, slew_in, then w, l, tox, dvth, mu_scale for NMOS and
//! again for PMOS.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use libc::c_char;

use circuit_augmentor::dataio::{load_csv, Dataset};
use circuit_augmentor::gan::GanModel;
use circuit_augmentor::linalg::{svd, Matrix};
use circuit_augmentor::oracle::{
    critical_path_delay, generate_dataset, GateKind, Netlist, OracleConstants, OracleKind, ProcessPoint,
    SamplingRanges,
};
use circuit_augmentor::{rng, Error};

/// Number of doubles in a process point.
pub const CA_POINT_LEN: usize = 15;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Validation = 4,
    Dimension = 5,
    OperatingRegion = 6,
    Training = 7,
    Eval = 8,
    Parse = 9,
    Io = 10,
    Panic = 11,
}

/// Opaque tabular dataset.
pub struct CaDataset(Dataset);

/// Opaque trained generator checkpoint.
pub struct CaGan(GanModel);

/// Opaque gate-level netlist.
pub struct CaNetlist(Netlist);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CaStatus, msg: impl Into<String>) -> CaStatus {
    set_error(msg.into());
    status
}

fn status_of(err: &Error) -> CaStatus {
    match err {
        Error::Validation(_) => CaStatus::Validation,
        Error::Dimension { .. } => CaStatus::Dimension,
        Error::OperatingRegion(_) => CaStatus::OperatingRegion,
        Error::Training { .. } => CaStatus::Training,
        Error::Eval(_) => CaStatus::Eval,
        Error::Csv { .. } | Error::Parse { .. } | Error::Json(_) => CaStatus::Parse,
        Error::Io { .. } => CaStatus::Io,
    }
}

type Outcome = Result<(), CaStatus>;

fn lift(err: Error) -> CaStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

/// Runs `f` with panics contained and the error slot cleared on success.
fn guard(f: impl FnOnce() -> Outcome) -> CaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CaStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(CaStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, CaStatus> {
    if p.is_null() {
        return Err(fail(CaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CaStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn path(p: *const c_char, what: &str) -> Result<PathBuf, CaStatus> {
    text(p, what).map(PathBuf::from)
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, CaStatus> {
    p.as_ref().ok_or_else(|| fail(CaStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, CaStatus> {
    p.as_mut().ok_or_else(|| fail(CaStatus::NullPointer, format!("{what} is null")))
}

unsafe fn read_point(p: *const f64) -> Result<ProcessPoint, CaStatus> {
    if p.is_null() {
        return Err(fail(CaStatus::NullPointer, "point is null"));
    }
    ProcessPoint::from_gate_features(std::slice::from_raw_parts(p, CA_POINT_LEN)).map_err(lift)
}

unsafe fn write_slice(src: &[f64], out: *mut f64, cap: usize, written: *mut usize) -> Outcome {
    if !written.is_null() {
        *written = src.len();
    }
    if cap < src.len() {
        return Err(fail(
            CaStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(fail(CaStatus::NullPointer, "output buffer is null"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ca_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes the nominal process point into `out` (`CA_POINT_LEN` doubles).
///
/// # Safety
/// `out` must be null or point to `CA_POINT_LEN` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ca_point_nominal(out: *mut f64) -> CaStatus {
    guard(|| write_slice(&ProcessPoint::nominal().to_gate_features(), out, CA_POINT_LEN, ptr::null_mut()))
}

/// Per-pin delays in picoseconds of gate `kind` (for example "NAND2") at
/// `point`, as lh/hl pairs in pin order. `written` receives the number of
/// values needed even when `cap` is too small.
///
/// # Safety
/// `kind` must be a NUL-terminated string, `point` must hold `CA_POINT_LEN`
/// doubles and `out` must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ca_gate_delay(
    kind: *const c_char,
    point: *const f64,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> CaStatus {
    guard(|| {
        let kind: GateKind = text(kind, "kind")?.parse().map_err(lift)?;
        let p = read_point(point)?;
        let d = OracleConstants::default().gate_delay(kind, &p).map_err(lift)?;
        write_slice(&d.to_columns(), out, cap, written)
    })
}

/// Samples `rows` points from the default ranges and labels them with
/// `oracle` ("NAND2", "current_reference", ...).
///
/// # Safety
/// `oracle` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ca_dataset_generate(
    oracle: *const c_char,
    rows: usize,
    seed: u64,
    out: *mut *mut CaDataset,
) -> CaStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let kind: OracleKind = text(oracle, "oracle")?.parse().map_err(lift)?;
        let d = generate_dataset(kind, &SamplingRanges::default(), rows, seed, &OracleConstants::default())
            .map_err(lift)?;
        *slot = Box::into_raw(Box::new(CaDataset(d)));
        Ok(())
    })
}

/// Loads a dataset from a CSV file and its schema file.
///
/// # Safety
/// Both paths must be NUL-terminated strings and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ca_dataset_load(
    csv: *const c_char,
    schema: *const c_char,
    out: *mut *mut CaDataset,
) -> CaStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let d = load_csv(&path(csv, "csv")?, &path(schema, "schema")?).map_err(lift)?;
        *slot = Box::into_raw(Box::new(CaDataset(d)));
        Ok(())
    })
}

/// Writes `data` as CSV plus its schema.
///
/// # Safety
/// `data` must be a live handle and both paths NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ca_dataset_save(
    data: *const CaDataset,
    csv: *const c_char,
    schema: *const c_char,
) -> CaStatus {
    guard(|| {
        let d = &borrow(data, "data")?.0;
        d.save_csv(&path(csv, "csv")?).map_err(lift)?;
        d.schema().save(&path(schema, "schema")?).map_err(lift)
    })
}

/// Row and column counts of `data`.
///
/// # Safety
/// `data` must be a live handle; `rows` and `cols` writable.
#[no_mangle]
pub unsafe extern "C" fn ca_dataset_shape(data: *const CaDataset, rows: *mut usize, cols: *mut usize) -> CaStatus {
    guard(|| {
        let (r, c) = borrow(data, "data")?.0.rows().shape();
        *out_ptr(rows, "rows")? = r;
        *out_ptr(cols, "cols")? = c;
        Ok(())
    })
}

/// Copies every value of `data`, row-major, into `out`.
///
/// # Safety
/// `data` must be a live handle and `out` must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ca_dataset_values(
    data: *const CaDataset,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> CaStatus {
    guard(|| write_slice(borrow(data, "data")?.0.rows().data(), out, cap, written))
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_dataset_free(data: *mut CaDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Loads a generator checkpoint written by `train-gan`.
///
/// # Safety
/// `checkpoint` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ca_gan_load(checkpoint: *const c_char, out: *mut *mut CaGan) -> CaStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let m = GanModel::load(&path(checkpoint, "checkpoint")?).map_err(lift)?;
        *slot = Box::into_raw(Box::new(CaGan(m)));
        Ok(())
    })
}

/// Draws `rows` artificial rows in original units. Equal seeds give equal rows.
///
/// # Safety
/// `gan` must be a live handle and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ca_gan_sample(gan: *const CaGan, rows: usize, seed: u64, out: *mut *mut CaDataset) -> CaStatus {
    guard(|| {
        let m = &borrow(gan, "gan")?.0;
        let slot = out_ptr(out, "out")?;
        let d = m.sample(rows, &mut rng::stream(seed, "sample")).map_err(lift)?;
        *slot = Box::into_raw(Box::new(CaDataset(d)));
        Ok(())
    })
}

/// # Safety
/// `gan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_gan_free(gan: *mut CaGan) {
    if !gan.is_null() {
        drop(Box::from_raw(gan));
    }
}

/// Built-in netlist by name ("c17" or "rca4"), or a netlist TOML file when
/// `name` is not a built-in.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ca_netlist_open(name: *const c_char, out: *mut *mut CaNetlist) -> CaStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let name = text(name, "name")?;
        let net = match Netlist::builtin(name) {
            Some(n) => n,
            None => Netlist::load(name.as_ref()).map_err(lift)?,
        };
        *slot = Box::into_raw(Box::new(CaNetlist(net)));
        Ok(())
    })
}

/// Worst input-to-output delay of `net` at `point`, in picoseconds, with
/// gate delays from the analytic model.
///
/// # Safety
/// `net` must be a live handle, `point` must hold `CA_POINT_LEN` doubles and
/// `delay_ps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ca_critical_path_delay(
    net: *const CaNetlist,
    point: *const f64,
    delay_ps: *mut f64,
) -> CaStatus {
    guard(|| {
        let net = &borrow(net, "net")?.0;
        let p = read_point(point)?;
        let slot = out_ptr(delay_ps, "delay_ps")?;
        *slot = critical_path_delay(net, &p, &OracleConstants::default()).map_err(lift)?;
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_netlist_free(net: *mut CaNetlist) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Singular values, descending, of the row-major `rows` x `cols` matrix.
/// `written` receives min(rows, cols).
///
/// # Safety
/// `values` must hold `rows * cols` doubles and `out` must have room for
/// `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ca_singular_values(
    values: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> CaStatus {
    guard(|| {
        if values.is_null() {
            return Err(fail(CaStatus::NullPointer, "values is null"));
        }
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| fail(CaStatus::InvalidArgument, "rows * cols overflows"))?;
        let m = Matrix::new(rows, cols, std::slice::from_raw_parts(values, n).to_vec()).map_err(lift)?;
        write_slice(&svd(&m).map_err(lift)?.sigma, out, cap, written)
    })
}
