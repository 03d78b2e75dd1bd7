use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use otlab_ffi::*;

fn apriori() -> OtlabApriori {
    OtlabApriori {
        n: 3,
        p: 8.0,
        lambda: 1.5,
        sobolev_bound: 100.0,
        cal_e: 1.0,
        k: 0.15,
        r0: 0.5,
        lipschitz: 1.0,
        diam: 3f64.sqrt(),
        alpha: 0.5,
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(otlab_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_functions() {
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(otlab_k_ranges(1.0, 1.0, 3, &mut a, &mut b), OtlabStatus::Ok);
        assert!((a - (4.0 - 2.0 * 3f64.sqrt())).abs() < 1e-12 && (b - (4.0 + 2.0 * 3f64.sqrt())).abs() < 1e-12);
        assert_eq!(otlab_k_ranges(1.0, 1.0, 2, &mut a, &mut b), OtlabStatus::InvalidArgument);
        assert!(last_error().contains("dimension"));
        assert_eq!(otlab_k_ranges(1.0, 1.0, 3, ptr::null_mut(), &mut b), OtlabStatus::NullPointer);

        // C_2^{1/2}(t) = (3t^2 - 1) / 2
        assert_eq!(otlab_gegenbauer_eval(2, 3, 0.5, 0.0, &mut a, &mut b), OtlabStatus::Ok);
        assert!((a + 0.125).abs() < 1e-15 && b == 0.0);
        assert_eq!(last_error(), "");

        assert_eq!(otlab_delta_h(0.5, 1, &mut a), OtlabStatus::Ok);
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(otlab_delta_h(1.5, 1, &mut a), OtlabStatus::InvalidArgument);
    }
    let v = unsafe { CStr::from_ptr(otlab_version()) };
    assert_eq!(v.to_str().unwrap(), otlab::VERSION);
}

#[test]
fn medium_and_dn_handles() {
    let ap = apriori();
    unsafe {
        let mut m1 = ptr::null_mut();
        let mut m2 = ptr::null_mut();
        assert_eq!(otlab_medium_homogeneous(1.0, 9, &ap, 1.0, 1.0, &mut m1), OtlabStatus::Ok, "{}", last_error());
        let n = otlab_medium_node_count(m1);
        assert_eq!(n, 729);
        let mu_a = vec![1.2; n];
        let mu_s = vec![1.0; n];
        assert_eq!(otlab_medium_new(1.0, 9, &ap, mu_a.as_ptr(), mu_s.as_ptr(), n, &mut m2), OtlabStatus::Ok);
        let mut bad = ptr::null_mut();
        assert_eq!(otlab_medium_new(1.0, 9, &ap, mu_a.as_ptr(), mu_s.as_ptr(), n - 1, &mut bad), OtlabStatus::InvalidArgument);
        assert!(bad.is_null());
        let planar = OtlabApriori { n: 2, ..ap };
        assert_eq!(otlab_medium_homogeneous(1.0, 9, &planar, 1.0, 1.0, &mut bad), OtlabStatus::InvalidArgument);
        assert!(last_error().contains("three-dimensional"));

        let (mut d1, mut d2, mut diff) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(otlab_dn_assemble(m1, &mut d1), OtlabStatus::Ok);
        assert_eq!(otlab_dn_assemble(m2, &mut d2), OtlabStatus::Ok);
        assert_eq!(otlab_dn_difference(d1, d2, &mut diff), OtlabStatus::Ok);
        let size = otlab_dn_size(d1);
        assert_eq!(size, 729 - 343);
        let mut buf = vec![0.0; 2 * size * size];
        assert_eq!(otlab_dn_entries(d1, buf.as_mut_ptr(), buf.len()), OtlabStatus::Ok);
        for i in 0..size {
            for j in 0..size {
                let (a, b) = (2 * (i * size + j), 2 * (j * size + i));
                assert!((buf[a] - buf[b]).abs() < 1e-9 && (buf[a + 1] - buf[b + 1]).abs() < 1e-9);
            }
        }
        assert_eq!(otlab_dn_entries(d1, buf.as_mut_ptr(), 3), OtlabStatus::InvalidArgument);
        let mut nodes = vec![0usize; size];
        assert_eq!(otlab_dn_boundary_nodes(d1, nodes.as_mut_ptr(), size), OtlabStatus::Ok);
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));

        let (mut s, mut s2) = (0.0, 0.0);
        assert_eq!(otlab_dn_star_norm(diff, 3, &mut s), OtlabStatus::Ok);
        assert_eq!(otlab_dn_star_norm(diff, 3, &mut s2), OtlabStatus::Ok);
        assert!(s > 0.0 && s == s2);
        assert_eq!(otlab_dn_star_norm(ptr::null(), 3, &mut s), OtlabStatus::NullPointer);

        otlab_dn_free(diff);
        otlab_dn_free(d2);
        otlab_dn_free(d1);
        otlab_medium_free(m2);
        otlab_medium_free(m1);
        otlab_medium_free(ptr::null_mut());
    }
}

#[test]
fn generated_header_declares_the_api() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/otlab.h")).unwrap();
    for name in [
        "otlab_last_error_message",
        "otlab_k_ranges",
        "otlab_gegenbauer_eval",
        "otlab_dn_assemble",
        "otlab_dn_star_norm",
        "otlab_medium_free",
        "typedef struct OtlabMedium OtlabMedium",
        "OTLAB_STATUS_NULL_POINTER",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compile and run the C example against the static library when a C compiler is present.
#[test]
fn c_example_links_and_runs() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile.join("libotlab_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(dir.join("examples/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("k0 0.535898384"), "{text}");
}
