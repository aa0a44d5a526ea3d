//! C ABI over the specfuse toolkit.
//!
//! Every function returns an [`SfStatus`]; results travel through out
//! pointers to opaque handles that must be released with the matching
//! `*_free` call. On any non-OK status, [`sf_last_error_message`] returns a
//! thread-local description valid until the next failing call on the same
//! thread. All entry points catch panics and turn them into
//! `SF_STATUS_PANIC` instead of unwinding across the boundary.
//!
//! Callers must pass either null or valid, properly aligned pointers:
//! handles previously returned by this library and not yet freed, and
//! buffers at least as large as stated. The per-function docs carry no
//! separate safety sections beyond that shared contract.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use specfuse::aperture::{design_dual_apertures, ApertureDesign};
use specfuse::config::load_config;
use specfuse::cube::SpectralCube;
use specfuse::error::Error;
use specfuse::operators::{build_h_hs, build_h_ms, stack_projections, DifferenceOperator, WaveletOperator};
use specfuse::pipeline::run_pipeline;
use specfuse::sensing::{acquire_chsi, acquire_cmsi, add_gaussian_noise, add_poisson_noise};
use specfuse::solver::{fuse, FusionConfig};

/// Call outcome. Non-OK values leave a message for
/// [`sf_last_error_message`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    Error = 1,
    Config = 2,
    MissingInput = 3,
    Divergence = 4,
    Data = 5,
    NullArgument = 6,
    Panic = 7,
}

/// Measurement noise model selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfNoise {
    None = 0,
    Gaussian = 1,
    Poisson = 2,
}

/// Opaque spectral cube handle.
pub struct SfCube {
    inner: SpectralCube,
}

/// Opaque dual-arm aperture design handle.
pub struct SfDesign {
    inner: ApertureDesign,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn fail(err: &Error) -> SfStatus {
    set_error(&err.to_string());
    match err {
        Error::Config(_) | Error::Dimension(_) => SfStatus::Config,
        Error::MissingInput(_) => SfStatus::MissingInput,
        Error::Divergence { .. } => SfStatus::Divergence,
        Error::Data(_) => SfStatus::Data,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            SfStatus::MissingInput
        }
        Error::Io { .. } => SfStatus::Error,
    }
}

fn null_argument(name: &str) -> SfStatus {
    set_error(&format!("{name} must not be null"));
    SfStatus::NullArgument
}

fn guarded(body: impl FnOnce() -> SfStatus) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".into());
            set_error(&format!("internal panic: {msg}"));
            SfStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Builds a rows x cols x bands cube from `data`, which holds
/// rows*cols*bands values ordered band by band, each band column-major.
#[no_mangle]
pub unsafe extern "C" fn sf_cube_create(
    rows: usize,
    cols: usize,
    bands: usize,
    data: *const f64,
    out: *mut *mut SfCube,
) -> SfStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        if data.is_null() {
            return null_argument("data");
        }
        let len = rows * cols * bands;
        let values = unsafe { std::slice::from_raw_parts(data, len) }.to_vec();
        match SpectralCube::from_vec(rows, cols, bands, values) {
            Ok(cube) => {
                unsafe { *out = Box::into_raw(Box::new(SfCube { inner: cube })) };
                SfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Reads the cube's dimensions. Any of the three out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn sf_cube_dims(
    cube: *const SfCube,
    rows: *mut usize,
    cols: *mut usize,
    bands: *mut usize,
) -> SfStatus {
    guarded(|| {
        if cube.is_null() {
            return null_argument("cube");
        }
        let inner = unsafe { &(*cube).inner };
        unsafe {
            if !rows.is_null() {
                *rows = inner.rows();
            }
            if !cols.is_null() {
                *cols = inner.cols();
            }
            if !bands.is_null() {
                *bands = inner.bands();
            }
        }
        SfStatus::Ok
    })
}

/// Copies the cube's values into `out`, which must hold exactly `len`
/// doubles with len = rows*cols*bands.
#[no_mangle]
pub unsafe extern "C" fn sf_cube_copy_data(
    cube: *const SfCube,
    out: *mut f64,
    len: usize,
) -> SfStatus {
    guarded(|| {
        if cube.is_null() {
            return null_argument("cube");
        }
        if out.is_null() {
            return null_argument("out");
        }
        let data = unsafe { (*cube).inner.data() };
        if len != data.len() {
            set_error(&format!(
                "buffer holds {len} values but the cube has {}",
                data.len()
            ));
            return SfStatus::Config;
        }
        unsafe { std::slice::from_raw_parts_mut(out, len) }.copy_from_slice(data);
        SfStatus::Ok
    })
}

/// Releases a cube handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_cube_free(cube: *mut SfCube) {
    if !cube.is_null() {
        drop(unsafe { Box::from_raw(cube) });
    }
}

/// Designs dual-arm filter banks and coded apertures for a rows x cols x
/// bands scene with spectral factor `q` and spatial factor `p`.
#[no_mangle]
pub unsafe extern "C" fn sf_design_create(
    rows: usize,
    cols: usize,
    bands: usize,
    q: usize,
    p: usize,
    seed: u64,
    out: *mut *mut SfDesign,
) -> SfStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        match design_dual_apertures(rows, cols, bands, q, p, seed) {
            Ok(design) => {
                unsafe { *out = Box::into_raw(Box::new(SfDesign { inner: design })) };
                SfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Reads the design's feature band count and per-arm snapshot counts. Any
/// out pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn sf_design_dims(
    design: *const SfDesign,
    feature_bands: *mut usize,
    hs_snapshots: *mut usize,
    ms_snapshots: *mut usize,
) -> SfStatus {
    guarded(|| {
        if design.is_null() {
            return null_argument("design");
        }
        let inner = unsafe { &(*design).inner };
        unsafe {
            if !feature_bands.is_null() {
                *feature_bands = inner.feature_bands();
            }
            if !hs_snapshots.is_null() {
                *hs_snapshots = inner.hs_snapshots();
            }
            if !ms_snapshots.is_null() {
                *ms_snapshots = inner.ms_snapshots();
            }
        }
        SfStatus::Ok
    })
}

/// Releases a design handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_design_free(design: *mut SfDesign) {
    if !design.is_null() {
        drop(unsafe { Box::from_raw(design) });
    }
}

/// Measures `scene` through both arms of `design`. `snr_db` is ignored for
/// `SF_NOISE_NONE`. On success `y_ms` is a rows x cols x W cube and `y_hs`
/// a (rows/p) x (cols/p) x K cube.
#[no_mangle]
pub unsafe extern "C" fn sf_simulate(
    design: *const SfDesign,
    scene: *const SfCube,
    noise: SfNoise,
    snr_db: f64,
    seed: u64,
    y_ms: *mut *mut SfCube,
    y_hs: *mut *mut SfCube,
) -> SfStatus {
    guarded(|| {
        if design.is_null() {
            return null_argument("design");
        }
        if scene.is_null() {
            return null_argument("scene");
        }
        if y_ms.is_null() {
            return null_argument("y_ms");
        }
        if y_hs.is_null() {
            return null_argument("y_hs");
        }
        let d = unsafe { &(*design).inner };
        let s = unsafe { &(*scene).inner };
        let noisy = |clean: SpectralCube, stream: u64| match noise {
            SfNoise::None => Ok(clean),
            SfNoise::Gaussian => add_gaussian_noise(&clean, snr_db, stream),
            SfNoise::Poisson => add_poisson_noise(&clean, snr_db, stream),
        };
        let result = acquire_cmsi(s, &d.ms_bank, &d.ms_patterns)
            .and_then(|clean| noisy(clean, seed))
            .and_then(|ms| {
                acquire_chsi(s, &d.hs_bank, &d.hs_patterns, d.p)
                    .and_then(|clean| noisy(clean, seed.wrapping_add(1)))
                    .map(|hs| (ms, hs))
            });
        match result {
            Ok((ms, hs)) => {
                unsafe {
                    *y_ms = Box::into_raw(Box::new(SfCube { inner: ms }));
                    *y_hs = Box::into_raw(Box::new(SfCube { inner: hs }));
                }
                SfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Reconstructs the fused feature cube from dual-arm measurements. Pass a
/// negative or NaN `lambda1` to use the measurement-scaled default.
/// `iterations` may be null; on success it receives the iteration count.
#[no_mangle]
pub unsafe extern "C" fn sf_fuse(
    design: *const SfDesign,
    y_ms: *const SfCube,
    y_hs: *const SfCube,
    lambda1: f64,
    lambda2: f64,
    max_iters: usize,
    wavelet_levels: u32,
    features: *mut *mut SfCube,
    iterations: *mut usize,
) -> SfStatus {
    guarded(|| {
        if design.is_null() {
            return null_argument("design");
        }
        if y_ms.is_null() {
            return null_argument("y_ms");
        }
        if y_hs.is_null() {
            return null_argument("y_hs");
        }
        if features.is_null() {
            return null_argument("features");
        }
        let d = unsafe { &(*design).inner };
        let ms = unsafe { &(*y_ms).inner };
        let hs = unsafe { &(*y_hs).inner };
        let (rows, cols, k) = (d.scene_rows(), d.scene_cols(), d.feature_bands());
        if ms.rows() != rows || ms.cols() != cols || ms.bands() != d.ms_snapshots() {
            return fail(&Error::Dimension(format!(
                "ms measurements {}x{}x{} do not match the design",
                ms.rows(),
                ms.cols(),
                ms.bands()
            )));
        }
        if hs.rows() * d.p != rows || hs.cols() * d.p != cols || hs.bands() != d.hs_snapshots() {
            return fail(&Error::Dimension(format!(
                "hs measurements {}x{}x{} do not match the design",
                hs.rows(),
                hs.cols(),
                hs.bands()
            )));
        }

        let config = FusionConfig {
            lambda1: if lambda1.is_nan() || lambda1 < 0.0 {
                None
            } else {
                Some(lambda1)
            },
            lambda2,
            max_iters,
            ..FusionConfig::default()
        };
        let result = (|| {
            let h_ms = build_h_ms(&d.ms_patterns, k, d.q)?;
            let h_hs = build_h_hs(&d.hs_patterns, rows, cols, d.p)?;
            let h = stack_projections(&h_ms, &h_hs)?;
            let wavelet = WaveletOperator::new(rows, cols, k, wavelet_levels)?;
            let tv = DifferenceOperator::new(rows, cols, k);
            let mut y = ms.data().to_vec();
            y.extend_from_slice(hs.data());
            fuse(&y, &h, &wavelet, &tv, &config)
        })();
        match result {
            Ok((cube, report)) => {
                unsafe {
                    *features = Box::into_raw(Box::new(SfCube { inner: cube }));
                    if !iterations.is_null() {
                        *iterations = report.iterations;
                    }
                }
                SfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Runs the full design/simulate/fuse/classify pipeline from a TOML config
/// file. `out_dir` (optional, may be null) overrides the configured output
/// directory; `overall_accuracy` (optional) receives the held-out score.
#[no_mangle]
pub unsafe extern "C" fn sf_run_pipeline(
    config_path: *const c_char,
    out_dir: *const c_char,
    overall_accuracy: *mut f64,
) -> SfStatus {
    guarded(|| {
        if config_path.is_null() {
            return null_argument("config_path");
        }
        let path = match unsafe { CStr::from_ptr(config_path) }.to_str() {
            Ok(s) => PathBuf::from(s),
            Err(_) => {
                set_error("config_path is not valid UTF-8");
                return SfStatus::Config;
            }
        };
        let mut config = match load_config(&path) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        };
        if !out_dir.is_null() {
            match unsafe { CStr::from_ptr(out_dir) }.to_str() {
                Ok(s) => config.output.dir = PathBuf::from(s),
                Err(_) => {
                    set_error("out_dir is not valid UTF-8");
                    return SfStatus::Config;
                }
            }
        }
        match run_pipeline(&config) {
            Ok(summary) => {
                if !overall_accuracy.is_null() {
                    unsafe {
                        *overall_accuracy = summary.classify.record.overall_accuracy;
                    }
                }
                SfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
