//! C ABI over `nucsel`.
//!
//! Every fallible call returns a [`NucselStatus`]; on failure the message is
//! kept per thread and can be fetched with [`nucsel_last_error_message`].
//! Objects are opaque handles released with their matching `_free` call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nucsel::mask::{load_mask, save_mask, InstanceMask};
use nucsel::masksynth::{
    build_nucleus_bank, synthesize_mask, BankTransforms, NucleusBank, SynthMaskConfig,
};
use nucsel::metrics::{aji_with, dice_masks, paired_ttest, Degenerate, MatchCriterion};
use nucsel::pipeline::{run, RunConfig};
use nucsel::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NucselStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Computation = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NucselMatch {
    Jaccard = 0,
    Intersection = 1,
}

/// Flag set when the paired differences carry no spread.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NucselDegenerate {
    None = 0,
    NoDifference = 1,
    ZeroVariance = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NucselTTest {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub degenerate: NucselDegenerate,
}

/// Opaque instance mask.
pub struct NucselMask(InstanceMask);

/// Opaque bank of nucleus shapes.
pub struct NucselBank(NucleusBank);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NucselStatus {
    match e {
        Error::Stage { source, .. } => status_of(source),
        Error::Io { .. } => NucselStatus::Io,
        Error::Image { .. }
        | Error::Json(_)
        | Error::MalformedMask(_)
        | Error::FeatureRow { .. }
        | Error::FeatureFile(_)
        | Error::MissingFeature(_) => NucselStatus::Format,
        Error::InvalidConfig(_)
        | Error::DuplicateImageId(_)
        | Error::DimensionMismatch { .. }
        | Error::Invalid(_) => NucselStatus::InvalidArgument,
        Error::EmptyCorpus
        | Error::IdOverflow(_)
        | Error::TooFewItems { .. }
        | Error::ClusterTooSmall { .. }
        | Error::NoInstances => NucselStatus::Computation,
    }
}

struct Fail(NucselStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NucselStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> NucselStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NucselStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            NucselStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
        Fail(
            NucselStatus::InvalidArgument,
            format!("{what} is not UTF-8"),
        )
    })
}

unsafe fn mask_ref<'a>(m: *const NucselMask, what: &str) -> Result<&'a InstanceMask, Fail> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nucsel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or NULL if the last
/// call succeeded. Release with `nucsel_string_free`.
#[no_mangle]
pub extern "C" fn nucsel_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn nucsel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Mask from `width * height` row-major labels; ids are kept as given.
///
/// # Safety
/// `labels` must point to `width * height` readable values.
#[no_mangle]
pub unsafe extern "C" fn nucsel_mask_new(
    width: u32,
    height: u32,
    labels: *const u16,
    out: *mut *mut NucselMask,
) -> NucselStatus {
    guard(|| {
        let n = width as usize * height as usize;
        let v = if n == 0 {
            Vec::new()
        } else if labels.is_null() {
            return Err(null("labels"));
        } else {
            std::slice::from_raw_parts(labels, n).to_vec()
        };
        put(out, NucselMask(InstanceMask::new(width, height, v)?))
    })
}

/// Load a 16-bit (or 8-bit) label PNG; ids are relabelled to `1..=N`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nucsel_mask_load(
    path: *const c_char,
    out: *mut *mut NucselMask,
) -> NucselStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        put(out, NucselMask(load_mask(&p)?.mask))
    })
}

/// Write a 16-bit label PNG plus its JSON sidecar.
///
/// # Safety
/// `mask` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nucsel_mask_save(
    mask: *const NucselMask,
    path: *const c_char,
) -> NucselStatus {
    guard(|| {
        let m = mask_ref(mask, "mask")?;
        let p = path_arg(path, "path")?;
        Ok(save_mask(m, &p, None, None)?)
    })
}

/// # Safety
/// `mask` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn nucsel_mask_free(mask: *mut NucselMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// `mask` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn nucsel_mask_width(mask: *const NucselMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.0.width())
}

/// # Safety
/// `mask` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn nucsel_mask_height(mask: *const NucselMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.0.height())
}

/// # Safety
/// `mask` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn nucsel_mask_instance_count(mask: *const NucselMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.instance_count())
}

/// Copy the labels into `buf`, which must hold `width * height` values.
///
/// # Safety
/// `buf` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn nucsel_mask_copy_labels(
    mask: *const NucselMask,
    buf: *mut u16,
    len: usize,
) -> NucselStatus {
    guard(|| {
        let m = mask_ref(mask, "mask")?;
        let labels = m.labels();
        if len != labels.len() {
            return Err(Fail(
                NucselStatus::InvalidArgument,
                format!("buffer holds {len} labels, mask has {}", labels.len()),
            ));
        }
        if len > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(labels.as_ptr(), buf, len);
        }
        Ok(())
    })
}

/// Aggregated Jaccard index of `pred` against `gt`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nucsel_aji(
    gt: *const NucselMask,
    pred: *const NucselMask,
    criterion: NucselMatch,
    out: *mut f64,
) -> NucselStatus {
    guard(|| {
        let (g, p) = (mask_ref(gt, "gt")?, mask_ref(pred, "pred")?);
        let c = match criterion {
            NucselMatch::Jaccard => MatchCriterion::Jaccard,
            NucselMatch::Intersection => MatchCriterion::Intersection,
        };
        let v = aji_with(g, p, c)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Foreground Dice coefficient.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nucsel_dice(
    gt: *const NucselMask,
    pred: *const NucselMask,
    out: *mut f64,
) -> NucselStatus {
    guard(|| {
        let v = dice_masks(mask_ref(gt, "gt")?, mask_ref(pred, "pred")?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Two-sided paired t-test on `n` pairs.
///
/// # Safety
/// `a` and `b` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nucsel_paired_ttest(
    a: *const f64,
    b: *const f64,
    n: usize,
    out: *mut NucselTTest,
) -> NucselStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("sample"));
        }
        let (xs, ys) = if n == 0 {
            (&[][..], &[][..])
        } else {
            (
                std::slice::from_raw_parts(a, n),
                std::slice::from_raw_parts(b, n),
            )
        };
        let r = paired_ttest(xs, ys)?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = NucselTTest {
            n: r.n,
            mean_diff: r.mean_diff,
            sd_diff: r.sd_diff,
            t: r.t,
            df: r.df,
            p: r.p,
            degenerate: match r.degenerate {
                None => NucselDegenerate::None,
                Some(Degenerate::NoDifference) => NucselDegenerate::NoDifference,
                Some(Degenerate::ZeroVariance) => NucselDegenerate::ZeroVariance,
            },
        };
        Ok(())
    })
}

/// Shape bank from an annotated mask. `random_crops` extra cropped copies
/// are drawn with `seed`.
///
/// # Safety
/// `mask` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nucsel_bank_build(
    mask: *const NucselMask,
    flips: bool,
    rotations: bool,
    random_crops: usize,
    seed: u64,
    out: *mut *mut NucselBank,
) -> NucselStatus {
    guard(|| {
        let t = BankTransforms {
            flips,
            rotations,
            random_crops,
            seed,
            ..BankTransforms::default()
        };
        put(
            out,
            NucselBank(build_nucleus_bank(mask_ref(mask, "mask")?, &t)?),
        )
    })
}

/// # Safety
/// `bank` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn nucsel_bank_len(bank: *const NucselBank) -> usize {
    bank.as_ref().map_or(0, |b| b.0.len())
}

/// # Safety
/// `bank` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn nucsel_bank_free(bank: *mut NucselBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Synthesize one `size`x`size` mask on a `canvas`x`canvas` canvas.
/// A negative `q` draws the nucleus count from the source density.
///
/// # Safety
/// `bank` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nucsel_synthesize(
    bank: *const NucselBank,
    q: i64,
    canvas: u32,
    size: u32,
    seed: u64,
    out: *mut *mut NucselMask,
) -> NucselStatus {
    guard(|| {
        let b = bank.as_ref().ok_or_else(|| null("bank"))?;
        let cfg = SynthMaskConfig {
            q: usize::try_from(q).ok(),
            canvas_width: canvas,
            canvas_height: canvas,
            width: size,
            height: size,
            seed,
            ..SynthMaskConfig::default()
        };
        put(out, NucselMask(synthesize_mask(&b.0, &cfg)?.mask))
    })
}

/// Run every configured stage from a JSON config file.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nucsel_run_pipeline(config_path: *const c_char) -> NucselStatus {
    guard(|| {
        let cfg = RunConfig::from_file(&path_arg(config_path, "config_path")?)?;
        run(&cfg)?;
        Ok(())
    })
}
