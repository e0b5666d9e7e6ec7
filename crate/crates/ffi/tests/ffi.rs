use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use pixeldoc_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pd_last_error_message()) }.to_string_lossy().into_owned()
}

fn render(text: &str) -> *mut PdDocument {
    let mut doc = ptr::null_mut();
    let status = unsafe { pd_render_text(c(text).as_ptr(), 0, 1, 96, 3, &mut doc) };
    assert_eq!(status, PdStatus::Ok, "{}", last_error());
    doc
}

#[test]
fn render_and_inspect_document() {
    let doc = render("hello pixel world");
    unsafe {
        let (w, h) = (pd_document_width(doc), pd_document_height(doc));
        assert_eq!((w, h), (96, 16));
        let mut len = 0;
        let px = pd_document_pixels(doc, &mut len);
        assert_eq!(len, w * h * 3);
        assert!(!px.is_null());
        assert_eq!(CStr::from_ptr(pd_document_text(doc)).to_str().unwrap(), "hello pixel\nworld");
        assert_eq!(pd_document_word_count(doc), 3);
        let mut b = PdWordBox::default();
        let mut t = ptr::null();
        assert_eq!(pd_document_word(doc, 2, &mut b, &mut t), PdStatus::Ok);
        assert_eq!(b, PdWordBox { x: 0, y: 8, w: 40, h: 8 });
        assert_eq!(CStr::from_ptr(t).to_str().unwrap(), "world");
        pd_document_free(doc);
    }
}

#[test]
fn errors_are_reported() {
    let mut doc = ptr::null_mut();
    unsafe {
        assert_eq!(pd_render_text(ptr::null(), 0, 1, 96, 0, &mut doc), PdStatus::NullPointer);
        assert_eq!(pd_render_text(c("x").as_ptr(), 9, 1, 96, 0, &mut doc), PdStatus::InvalidArgument);
        assert!(last_error().contains("style"));
        assert_eq!(pd_render_text(c("caf\u{e9}").as_ptr(), 0, 1, 96, 0, &mut doc), PdStatus::DataError);
        assert!(doc.is_null());
        let bad = [0xffu8, 0];
        assert_eq!(pd_render_text(bad.as_ptr().cast(), 0, 1, 96, 0, &mut doc), PdStatus::InvalidUtf8);
        let mut g = PdGrid::default();
        assert_eq!(pd_choose_grid(10, 10, 0, &mut g), PdStatus::DataError);
        assert_eq!(pd_choose_grid(10, 10, 16, &mut g), PdStatus::Ok);
        assert!(last_error().is_empty());
    }
}

#[test]
fn table_render_and_ppm() {
    let json = c(r#"{"caption":null,"header":["Fruit","Count"],"rows":[["Mango","3"]]}"#);
    let mut doc = ptr::null_mut();
    unsafe {
        assert_eq!(pd_render_table_json(json.as_ptr(), 2, 0, &mut doc), PdStatus::Ok, "{}", last_error());
        assert_eq!(pd_document_word_count(doc), 4);
        let (mut buf, mut len) = (ptr::null_mut(), 0);
        assert_eq!(pd_encode_ppm(doc, &mut buf, &mut len), PdStatus::Ok);
        let bytes = std::slice::from_raw_parts(buf, len);
        let img = pixeldoc::raster::decode_ppm(bytes).unwrap();
        assert_eq!(img.width(), pd_document_width(doc));
        pd_bytes_free(buf, len);
        pd_document_free(doc);
        assert_eq!(pd_render_table_json(c("{").as_ptr(), 0, 0, &mut doc), PdStatus::InvalidArgument);
    }
}

#[test]
fn metrics_and_grid() {
    unsafe {
        let mut d = 0;
        assert_eq!(pd_levenshtein(c("red").as_ptr(), c("blue").as_ptr(), &mut d), PdStatus::Ok);
        assert_eq!(d, 4);
        let golds = [c("piano")];
        let ptrs: Vec<_> = golds.iter().map(|g| g.as_ptr()).collect();
        let mut s = 0.0;
        assert_eq!(pd_anls(c("pianos").as_ptr(), ptrs.as_ptr(), 1, &mut s), PdStatus::Ok);
        assert!((s - (1.0 - 1.0 / 6.0)).abs() < 1e-9);
        assert_eq!(pd_anls(c("x").as_ptr(), ptrs.as_ptr(), 0, &mut s), PdStatus::InvalidArgument);
        let mut g = PdGrid::default();
        assert_eq!(pd_choose_grid(896, 896, 4096, &mut g), PdStatus::Ok);
        assert_eq!(g, PdGrid { rows: 64, cols: 64 });
    }
}

#[test]
fn model_answers_question() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pdfg");
    let config = pixeldoc::model::ModelConfig::tiny();
    let params = pixeldoc::model::init_params(&config).unwrap();
    pixeldoc::model::save_checkpoint(&params, &path).unwrap();
    let doc = render("the cup is red");
    unsafe {
        let mut model = ptr::null_mut();
        let p = c(path.to_str().unwrap());
        assert_eq!(pd_model_load(p.as_ptr(), &mut model), PdStatus::Ok, "{}", last_error());
        let mut answer = ptr::null_mut();
        let q = c("What color is the cup?");
        assert_eq!(pd_model_answer(model, doc, q.as_ptr(), 4, 4, &mut answer), PdStatus::Ok, "{}", last_error());
        assert!(!answer.is_null());
        pd_string_free(answer);
        assert_eq!(pd_model_answer(model, doc, q.as_ptr(), 3, 4, &mut answer), PdStatus::DataError);
        pd_model_free(model);
        let missing = c("/nonexistent/model.pdfg");
        assert_eq!(pd_model_load(missing.as_ptr(), &mut model), PdStatus::DataError);
        pd_document_free(doc);
    }
}

/// Compiles `tests/c/smoke.c` against the generated header and static
/// library when a C compiler is available.
#[test]
fn c_program_links_against_header() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = crate_dir.join("include");
    assert!(header_dir.join("pixeldoc.h").exists());
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|cc| Command::new(cc).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    // The test binary lives in target/<profile>/deps; the static library one level up.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libpixeldoc_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(cc)
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
