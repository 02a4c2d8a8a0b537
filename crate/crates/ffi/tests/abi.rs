use std::ffi::{CStr, CString};
use std::ptr;

use nucsel_ffi::*;

fn last_error() -> Option<String> {
    let p = nucsel_last_error_message();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { nucsel_string_free(p) };
    Some(s)
}

fn mask(w: u32, h: u32, labels: &[u16]) -> *mut NucselMask {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { nucsel_mask_new(w, h, labels.as_ptr(), &mut m) },
        NucselStatus::Ok
    );
    m
}

fn disks(size: u32, r: i32, spacing: u32) -> Vec<u16> {
    let mut v = vec![0u16; (size * size) as usize];
    let mut id = 0;
    for cy in (spacing / 2..size - r as u32).step_by(spacing as usize) {
        for cx in (spacing / 2..size - r as u32).step_by(spacing as usize) {
            id += 1;
            for y in 0..size as i32 {
                for x in 0..size as i32 {
                    if (x - cx as i32).pow(2) + (y - cy as i32).pow(2) <= r * r {
                        v[(y as u32 * size + x as u32) as usize] = id;
                    }
                }
            }
        }
    }
    v
}

#[test]
fn metrics_through_handles() {
    // gt: one 2x2 square; pred shifted one column right
    #[rustfmt::skip]
    let gt = [1, 1, 0,
              1, 1, 0];
    #[rustfmt::skip]
    let pred = [0, 1, 1,
                0, 1, 1];
    let (g, p) = (mask(3, 2, &gt), mask(3, 2, &pred));
    let mut v = 0.0;
    unsafe {
        assert_eq!(
            nucsel_aji(g, p, NucselMatch::Jaccard, &mut v),
            NucselStatus::Ok
        );
        assert!((v - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(nucsel_dice(g, p, &mut v), NucselStatus::Ok);
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(nucsel_mask_width(g), 3);
        assert_eq!(nucsel_mask_instance_count(p), 1);
        let mut buf = [9u16; 6];
        assert_eq!(
            nucsel_mask_copy_labels(p, buf.as_mut_ptr(), 6),
            NucselStatus::Ok
        );
        assert_eq!(buf, pred);
        assert_eq!(
            nucsel_mask_copy_labels(p, buf.as_mut_ptr(), 5),
            NucselStatus::InvalidArgument
        );
        assert!(last_error().unwrap().contains("5"));
        nucsel_mask_free(g);
        nucsel_mask_free(p);
    }
}

#[test]
fn ttest_and_degenerate_flags() {
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [2.0, 3.5, 3.5, 6.0];
    let mut r = NucselTTest {
        n: 0,
        mean_diff: 0.0,
        sd_diff: 0.0,
        t: 0.0,
        df: 0.0,
        p: 0.0,
        degenerate: NucselDegenerate::None,
    };
    unsafe {
        assert_eq!(
            nucsel_paired_ttest(a.as_ptr(), b.as_ptr(), 4, &mut r),
            NucselStatus::Ok
        );
        assert_eq!(r.n, 4);
        assert_eq!(r.df, 3.0);
        assert!(r.t < 0.0 && r.p > 0.0 && r.p < 1.0);
        assert_eq!(
            nucsel_paired_ttest(a.as_ptr(), a.as_ptr(), 4, &mut r),
            NucselStatus::Ok
        );
        assert_eq!(r.degenerate, NucselDegenerate::NoDifference);
        assert_eq!(r.p, 1.0);
        assert_eq!(
            nucsel_paired_ttest(a.as_ptr(), b.as_ptr(), 1, &mut r),
            NucselStatus::Computation
        );
        assert!(last_error().is_some());
    }
}

#[test]
fn null_and_bad_arguments_report_codes() {
    let mut m = ptr::null_mut();
    let mut v = 0.0;
    unsafe {
        assert_eq!(
            nucsel_mask_load(ptr::null(), &mut m),
            NucselStatus::NullPointer
        );
        let missing = CString::new("/no/such/mask.png").unwrap();
        assert_eq!(
            nucsel_mask_load(missing.as_ptr(), &mut m),
            NucselStatus::Format
        );
        assert!(last_error().unwrap().contains("/no/such/mask.png"));
        assert_eq!(
            nucsel_dice(ptr::null(), ptr::null(), &mut v),
            NucselStatus::NullPointer
        );
        let a = mask(2, 2, &[0, 0, 0, 0]);
        let b = mask(1, 1, &[0]);
        assert_eq!(
            nucsel_aji(a, b, NucselMatch::Jaccard, &mut v),
            NucselStatus::InvalidArgument
        );
        assert_eq!(nucsel_dice(a, a, &mut v), NucselStatus::Ok);
        assert!(last_error().is_none());
        nucsel_mask_free(a);
        nucsel_mask_free(b);
        nucsel_mask_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(nucsel_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn bank_synthesis_and_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let src = mask(64, 64, &disks(64, 5, 16));
    let mut bank = ptr::null_mut();
    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(
            nucsel_bank_build(src, true, true, 0, 0, &mut bank),
            NucselStatus::Ok
        );
        assert_eq!(nucsel_bank_len(bank), 16 * 6);
        assert_eq!(
            nucsel_synthesize(bank, 5, 96, 96, 3, &mut a),
            NucselStatus::Ok
        );
        assert_eq!(nucsel_mask_instance_count(a), 5);
        assert_eq!(
            nucsel_synthesize(bank, 5, 96, 96, 3, &mut b),
            NucselStatus::Ok
        );
        let mut v = 0.0;
        nucsel_aji(a, b, NucselMatch::Jaccard, &mut v);
        assert_eq!(v, 1.0);
        nucsel_mask_free(b);

        let path = CString::new(tmp.path().join("m.png").to_str().unwrap()).unwrap();
        assert_eq!(nucsel_mask_save(a, path.as_ptr()), NucselStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(nucsel_mask_load(path.as_ptr(), &mut back), NucselStatus::Ok);
        let n = (nucsel_mask_width(a) * nucsel_mask_height(a)) as usize;
        let (mut x, mut y) = (vec![0u16; n], vec![0u16; n]);
        nucsel_mask_copy_labels(a, x.as_mut_ptr(), n);
        nucsel_mask_copy_labels(back, y.as_mut_ptr(), n);
        assert_eq!(x, y);

        let mut none = ptr::null_mut();
        assert_eq!(
            nucsel_synthesize(bank, 1, 32, 64, 0, &mut none),
            NucselStatus::InvalidArgument
        );
        assert!(none.is_null());
        nucsel_mask_free(back);
        nucsel_mask_free(a);
        nucsel_bank_free(bank);
        nucsel_mask_free(src);
    }
}

#[test]
fn pipeline_errors_surface() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"corpus": "missing.json", "k1": 2, "output": "out"}"#,
    )
    .unwrap();
    let c = CString::new(cfg.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { nucsel_run_pipeline(c.as_ptr()) },
        NucselStatus::InvalidArgument
    );
    assert!(last_error().unwrap().contains("missing.json"));
}

#[test]
fn header_declares_every_export() {
    let h =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nucsel.h")).unwrap();
    for f in [
        "nucsel_mask_new",
        "nucsel_mask_load",
        "nucsel_mask_save",
        "nucsel_mask_free",
        "nucsel_aji",
        "nucsel_dice",
        "nucsel_paired_ttest",
        "nucsel_bank_build",
        "nucsel_synthesize",
        "nucsel_run_pipeline",
        "nucsel_last_error_message",
        "nucsel_string_free",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f}");
    }
}

#[test]
fn header_compiles_as_c() {
    let h = concat!(env!("CARGO_MANIFEST_DIR"), "/include/nucsel.h");
    match std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", h])
        .output()
    {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(_) => eprintln!("no C compiler; skipped"),
    }
}
