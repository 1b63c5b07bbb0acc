use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use skymask::svm::LinearModel;
use skymask_ffi::*;
use tempfile::tempdir;

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = skymask_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn gradient(w: u32, h: u32) -> Vec<u8> {
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(&[(x * 255 / w) as u8, (y * 255 / h) as u8, 90]);
        }
    }
    data
}

unsafe fn new_image(w: u32, h: u32, data: &[u8]) -> *mut SkymaskImage {
    let mut img = ptr::null_mut();
    let st = skymask_image_new(w, h, data.as_ptr(), data.len(), &mut img);
    assert_eq!(st, SkymaskStatus::Ok);
    img
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(skymask_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn image_round_trip_through_png() {
    let dir = tempdir().unwrap();
    let path = cpath(&dir.path().join("img.png"));
    let data = gradient(20, 12);
    unsafe {
        let img = new_image(20, 12, &data);
        assert_eq!(skymask_image_save(img, path.as_ptr()), SkymaskStatus::Ok);
        assert!(skymask_last_error().is_null());
        let mut back = ptr::null_mut();
        assert_eq!(skymask_image_load(path.as_ptr(), &mut back), SkymaskStatus::Ok);
        assert_eq!((skymask_image_width(back), skymask_image_height(back)), (20, 12));
        let mut len = 0usize;
        let p = skymask_image_data(back, &mut len);
        assert_eq!(std::slice::from_raw_parts(p, len), &data[..]);
        skymask_image_free(img);
        skymask_image_free(back);
    }
}

#[test]
fn load_errors_map_to_status() {
    let dir = tempdir().unwrap();
    let missing = cpath(&dir.path().join("nope.png"));
    let text = dir.path().join("t.png");
    std::fs::write(&text, "hello").unwrap();
    let text = cpath(&text);
    unsafe {
        let mut img = ptr::null_mut();
        assert_eq!(
            skymask_image_load(missing.as_ptr(), &mut img),
            SkymaskStatus::NotFound
        );
        assert!(img.is_null());
        assert!(last_error().contains("not found"));
        assert_eq!(
            skymask_image_load(text.as_ptr(), &mut img),
            SkymaskStatus::UnsupportedFormat
        );
        assert_eq!(
            skymask_image_load(ptr::null(), &mut img),
            SkymaskStatus::NullPointer
        );
        assert_eq!(
            skymask_image_load(missing.as_ptr(), ptr::null_mut()),
            SkymaskStatus::NullPointer
        );
    }
}

#[test]
fn new_rejects_short_buffer() {
    let data = [0u8; 10];
    unsafe {
        let mut img = ptr::null_mut();
        let st = skymask_image_new(4, 4, data.as_ptr(), data.len(), &mut img);
        assert_eq!(st, SkymaskStatus::InvalidArgument);
        assert!(img.is_null());
    }
}

#[test]
fn segment_uniform_image() {
    let data: Vec<u8> = [128u8, 128, 128].repeat(100 * 100);
    unsafe {
        let img = new_image(100, 100, &data);
        let mut seg = ptr::null_mut();
        assert_eq!(skymask_segment(img, 4, 10.0, &mut seg), SkymaskStatus::Ok);
        assert_eq!(skymask_segmentation_count(seg), 4);
        let mut len = 0;
        let labels = std::slice::from_raw_parts(skymask_segmentation_labels(seg, &mut len), len);
        assert_eq!(len, 10_000);
        assert_eq!(labels[0], 0);
        assert!(labels.iter().all(|&l| l < 4));
        skymask_segmentation_free(seg);

        assert_eq!(
            skymask_segment(img, 20_000, 10.0, &mut seg),
            SkymaskStatus::Segmentation
        );
        assert!(seg.is_null());
        skymask_image_free(img);
    }
}

#[test]
fn augment_paints_boundaries() {
    let data: Vec<u8> = [10u8, 20, 30].repeat(100 * 100);
    unsafe {
        let img = new_image(100, 100, &data);
        let mut out = ptr::null_mut();
        assert_eq!(
            skymask_augment(img, 4, 255, 0, 255, 10.0, &mut out),
            SkymaskStatus::Ok
        );
        let mut len = 0;
        let px = std::slice::from_raw_parts(skymask_image_data(out, &mut len), len);
        for (i, c) in px.chunks(3).enumerate() {
            let (x, y) = (i % 100, i / 100);
            let expect: &[u8] = if x == 49 || y == 49 {
                &[255, 0, 255]
            } else {
                &[10, 20, 30]
            };
            assert_eq!(c, expect, "pixel ({x},{y})");
        }
        skymask_image_free(out);

        assert_eq!(
            skymask_augment(img, 0, 255, 0, 255, 10.0, &mut out),
            SkymaskStatus::Ok
        );
        let px = std::slice::from_raw_parts(skymask_image_data(out, &mut len), len);
        assert_eq!(px, &data[..]);
        skymask_image_free(out);
        skymask_image_free(img);
    }
}

#[test]
fn color_histogram_buffer_checks() {
    let data = gradient(16, 16);
    unsafe {
        let img = new_image(16, 16, &data);
        let mut small = [0.0f64; 7];
        assert_eq!(
            skymask_color_histogram(img, 2, small.as_mut_ptr(), small.len()),
            SkymaskStatus::BufferTooSmall
        );
        let mut hist = [0.0f64; 8];
        assert_eq!(
            skymask_color_histogram(img, 2, hist.as_mut_ptr(), 8),
            SkymaskStatus::Ok
        );
        assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(
            skymask_color_histogram(img, 1, hist.as_mut_ptr(), 8),
            SkymaskStatus::InvalidArgument
        );
        skymask_image_free(img);
    }
}

#[test]
fn average_precision_values() {
    let scores = [0.9, 0.8, 0.7];
    let labels = [1u8, 0, 1];
    let mut ap = 0.0;
    unsafe {
        assert_eq!(
            skymask_average_precision(scores.as_ptr(), labels.as_ptr(), 3, &mut ap),
            SkymaskStatus::Ok
        );
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let none = [0u8; 3];
        assert_eq!(
            skymask_average_precision(scores.as_ptr(), none.as_ptr(), 3, &mut ap),
            SkymaskStatus::Evaluation
        );
        assert!(last_error().contains("no positive"));
    }
}

#[test]
fn model_scoring() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("sunny.json");
    LinearModel {
        category: "sunny".into(),
        lambda: 1e-4,
        bias: 0.5,
        final_objective: 0.1,
        weights: vec![1.0, -2.0],
    }
    .save(&path)
    .unwrap();
    let path = cpath(&path);
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(skymask_model_load(path.as_ptr(), &mut m), SkymaskStatus::Ok);
        assert_eq!(skymask_model_dimension(m), 2);
        let x = [3.0, 1.0];
        let mut s = 0.0;
        assert_eq!(skymask_model_score(m, x.as_ptr(), 2, &mut s), SkymaskStatus::Ok);
        assert_eq!(s, 1.5);
        assert_eq!(
            skymask_model_score(m, x.as_ptr(), 1, &mut s),
            SkymaskStatus::InvalidArgument
        );
        skymask_model_free(m);

        let missing = cpath(&dir.path().join("none.json"));
        assert_eq!(
            skymask_model_load(missing.as_ptr(), &mut m),
            SkymaskStatus::NotFound
        );
    }
}

#[test]
fn free_accepts_null() {
    unsafe {
        skymask_image_free(ptr::null_mut());
        skymask_segmentation_free(ptr::null_mut());
        skymask_model_free(ptr::null_mut());
        assert_eq!(skymask_image_width(ptr::null()), 0);
        assert!(skymask_image_data(ptr::null(), ptr::null_mut()).is_null());
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"skymask.h\"\n\
         int use(const char *p) {\n\
           SkymaskImage *img = NULL;\n\
           SkymaskStatus st = skymask_image_load(p, &img);\n\
           if (st != SKYMASK_STATUS_OK) return (int)st;\n\
           skymask_image_free(img);\n\
           return 0;\n\
         }\n",
    )
    .unwrap();
    let status = match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        // no C toolchain on this machine
        Err(_) => return,
    };
    assert!(status.success());
}
