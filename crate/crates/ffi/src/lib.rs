//! C ABI over the pixeldoc rendering, patch-grid, metric and model APIs.
//!
//! Every fallible function returns a [`PdStatus`]; on failure the message is
//! available from [`pd_last_error_message`] on the same thread. Objects are
//! opaque handles released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pixeldoc::inference::answer_question;
use pixeldoc::metrics::{anls, levenshtein, ANLS_THRESHOLD};
use pixeldoc::model::{load_checkpoint, Parameters};
use pixeldoc::patchify::{choose_grid, PatchGrid};
use pixeldoc::raster::{encode_ppm, render_table_image, render_text_document, RenderedDocument, StyleId, StylePreset};
use pixeldoc::tables::TableSpec;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    DataError = 4,
    NumericalFailure = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PdWordBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PdGrid {
    pub rows: usize,
    pub cols: usize,
}

/// A rendered document: RGB pixels, word boxes and the ground-truth text.
pub struct PdDocument {
    doc: RenderedDocument,
    rgb: Vec<u8>,
    text: CString,
    words: Vec<CString>,
}

/// A model loaded from a checkpoint.
pub struct PdModel {
    params: Parameters,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: PdStatus, msg: impl Into<String>) -> PdStatus {
    set_error(msg);
    status
}

fn status_of(e: &pixeldoc::Error) -> PdStatus {
    match e.exit_code() {
        2 => PdStatus::InvalidArgument,
        4 => PdStatus::NumericalFailure,
        _ => match e {
            pixeldoc::Error::Io { .. } => PdStatus::Io,
            _ => PdStatus::DataError,
        },
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (PdStatus, String)>) -> PdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PdStatus::Ok
        }
        Ok(Err((s, msg))) => fail(s, msg),
        Err(_) => fail(PdStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: impl Into<pixeldoc::Error>) -> (PdStatus, String) {
    let e = e.into();
    (status_of(&e), e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PdStatus, String)> {
    if p.is_null() {
        return Err((PdStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (PdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn null(what: &str) -> (PdStatus, String) {
    (PdStatus::NullPointer, format!("{what} is null"))
}

fn style(index: u32, font_scale: u32) -> Result<StylePreset, (PdStatus, String)> {
    let id = StyleId::from_index(index as usize)
        .ok_or_else(|| (PdStatus::InvalidArgument, format!("style index {index} out of range 0-4")))?;
    if !(1..=3).contains(&font_scale) {
        return Err((PdStatus::InvalidArgument, "font scale must be 1, 2 or 3".into()));
    }
    Ok(StylePreset::preset(id).with_font_scale(font_scale as usize))
}

fn document(doc: RenderedDocument) -> Result<Box<PdDocument>, (PdStatus, String)> {
    let c = |s: &str| CString::new(s).map_err(|_| (PdStatus::DataError, "text contains NUL".to_string()));
    Ok(Box::new(PdDocument {
        rgb: doc.image.to_rgb_bytes(),
        text: c(&doc.full_text)?,
        words: doc.words.iter().map(|w| c(&w.text)).collect::<Result<_, _>>()?,
        doc,
    }))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn pd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Renders NUL-terminated ASCII `text` wrapped at `max_width` pixels.
///
/// # Safety
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_render_text(
    text: *const c_char,
    style_index: u32,
    font_scale: u32,
    max_width: usize,
    seed: u64,
    out: *mut *mut PdDocument,
) -> PdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(text, "text")?;
        let doc = render_text_document(text, &style(style_index, font_scale)?, max_width, seed).map_err(lib_err)?;
        *out = Box::into_raw(document(doc)?);
        Ok(())
    })
}

/// Renders a table given as JSON `{"caption": .., "header": [..], "rows": [[..]]}`.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_render_table_json(
    json: *const c_char,
    style_index: u32,
    seed: u64,
    out: *mut *mut PdDocument,
) -> PdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let json = str_arg(json, "json")?;
        let table: TableSpec =
            serde_json::from_str(json).map_err(|e| (PdStatus::InvalidArgument, format!("table JSON: {e}")))?;
        table.validate().map_err(lib_err)?;
        let doc = render_table_image(&table, &style(style_index, 1)?, seed).map_err(lib_err)?;
        *out = Box::into_raw(document(doc)?);
        Ok(())
    })
}

/// # Safety
/// `doc` must come from a `pd_render_*` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pd_document_free(doc: *mut PdDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// # Safety
/// `doc` must be a live document handle or null.
#[no_mangle]
pub unsafe extern "C" fn pd_document_width(doc: *const PdDocument) -> usize {
    doc.as_ref().map_or(0, |d| d.doc.image.width())
}

/// # Safety
/// `doc` must be a live document handle or null.
#[no_mangle]
pub unsafe extern "C" fn pd_document_height(doc: *const PdDocument) -> usize {
    doc.as_ref().map_or(0, |d| d.doc.image.height())
}

/// Row-major RGB bytes (`width * height * 3`), owned by the document.
///
/// # Safety
/// `doc` must be a live document handle or null; `len` may be null.
#[no_mangle]
pub unsafe extern "C" fn pd_document_pixels(doc: *const PdDocument, len: *mut usize) -> *const u8 {
    let Some(d) = doc.as_ref() else {
        return ptr::null();
    };
    if let Some(len) = len.as_mut() {
        *len = d.rgb.len();
    }
    d.rgb.as_ptr()
}

/// Ground-truth text, owned by the document.
///
/// # Safety
/// `doc` must be a live document handle or null.
#[no_mangle]
pub unsafe extern "C" fn pd_document_text(doc: *const PdDocument) -> *const c_char {
    doc.as_ref().map_or(ptr::null(), |d| d.text.as_ptr())
}

/// # Safety
/// `doc` must be a live document handle or null.
#[no_mangle]
pub unsafe extern "C" fn pd_document_word_count(doc: *const PdDocument) -> usize {
    doc.as_ref().map_or(0, |d| d.words.len())
}

/// Box and text of word `index`. `text` may be null; otherwise it receives a
/// pointer owned by the document.
///
/// # Safety
/// `doc` must be a live document handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_document_word(
    doc: *const PdDocument,
    index: usize,
    out: *mut PdWordBox,
    text: *mut *const c_char,
) -> PdStatus {
    guard(|| {
        let d = doc.as_ref().ok_or_else(|| null("doc"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let w = d
            .doc
            .words
            .get(index)
            .ok_or_else(|| (PdStatus::InvalidArgument, format!("word {index} of {}", d.words.len())))?;
        *out = PdWordBox {
            x: w.x,
            y: w.y,
            w: w.w,
            h: w.h,
        };
        if let Some(t) = text.as_mut() {
            *t = d.words[index].as_ptr();
        }
        Ok(())
    })
}

/// Encodes the document image as binary PPM into a new buffer released with
/// [`pd_bytes_free`].
///
/// # Safety
/// `doc` must be a live document handle; `out` and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_encode_ppm(doc: *const PdDocument, out: *mut *mut u8, len: *mut usize) -> PdStatus {
    guard(|| {
        let d = doc.as_ref().ok_or_else(|| null("doc"))?;
        if out.is_null() || len.is_null() {
            return Err(null("out"));
        }
        let bytes = encode_ppm(&d.doc.image).into_boxed_slice();
        *len = bytes.len();
        *out = Box::into_raw(bytes) as *mut u8;
        Ok(())
    })
}

/// # Safety
/// `bytes`/`len` must come from [`pd_encode_ppm`].
#[no_mangle]
pub unsafe extern "C" fn pd_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes, len)));
    }
}

/// Variable-resolution patch grid for a `width × height` source.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_choose_grid(width: usize, height: usize, budget: usize, out: *mut PdGrid) -> PdStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let g: PatchGrid = choose_grid(width, height, budget).map_err(lib_err)?;
        *out = PdGrid {
            rows: g.rows,
            cols: g.cols,
        };
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must be valid C strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_levenshtein(a: *const c_char, b: *const c_char, out: *mut usize) -> PdStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = levenshtein(str_arg(a, "a")?, str_arg(b, "b")?);
        Ok(())
    })
}

/// ANLS of `prediction` against `n_golds` gold answers (threshold 0.5).
///
/// # Safety
/// `prediction` and each of the `n_golds` entries of `golds` must be valid C
/// strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_anls(
    prediction: *const c_char,
    golds: *const *const c_char,
    n_golds: usize,
    out: *mut f64,
) -> PdStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if n_golds == 0 {
            return Err((PdStatus::InvalidArgument, "at least one gold answer is required".into()));
        }
        if golds.is_null() {
            return Err(null("golds"));
        }
        let golds = std::slice::from_raw_parts(golds, n_golds)
            .iter()
            .map(|&g| str_arg(g, "gold").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        *out = anls(str_arg(prediction, "prediction")?, &golds, ANLS_THRESHOLD);
        Ok(())
    })
}

/// Loads a checkpoint written by `pixeldoc pretrain`.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_model_load(path: *const c_char, out: *mut *mut PdModel) -> PdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = load_checkpoint(Path::new(str_arg(path, "path")?)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PdModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`pd_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pd_model_free(model: *mut PdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Answers `question` about `doc` by greedy decoding on a `grid_rows ×
/// grid_cols` patch grid. The answer is released with [`pd_string_free`].
///
/// # Safety
/// Handles must be live, `question` a valid C string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pd_model_answer(
    model: *const PdModel,
    doc: *const PdDocument,
    question: *const c_char,
    grid_rows: usize,
    grid_cols: usize,
    out: *mut *mut c_char,
) -> PdStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let d = doc.as_ref().ok_or_else(|| null("doc"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = PatchGrid::new(grid_rows, grid_cols).map_err(lib_err)?;
        let answer = answer_question(&m.params, &d.doc, str_arg(question, "question")?, grid).map_err(lib_err)?;
        let answer = CString::new(answer.replace('\0', "")).expect("NULs removed");
        *out = answer.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`pd_model_answer`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
