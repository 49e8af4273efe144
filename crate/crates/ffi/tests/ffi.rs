use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use ntklab_ffi::*;

fn last_error() -> String {
    let p = ntk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn init_forward_is_exactly_zero() {
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(ntk_network_init(2, 16, 3, 7, &mut net), NtkStatus::Ok);
        let (mut l, mut m, mut d) = (0, 0, 0);
        assert_eq!(ntk_network_shape(net, &mut l, &mut m, &mut d), NtkStatus::Ok);
        assert_eq!((l, m, d), (2, 16, 3));
        let x = [0.6, 0.0, 0.8];
        let mut f = f64::NAN;
        assert_eq!(ntk_forward(net, x.as_ptr(), 3, &mut f), NtkStatus::Ok);
        assert_eq!(f, 0.0);
        ntk_network_free(net);
    }
}

#[test]
fn odd_width_and_bad_input_report_errors() {
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(ntk_network_init(1, 5, 3, 0, &mut net), NtkStatus::InvalidArgument);
        assert!(net.is_null());
        assert!(last_error().contains("even"), "{}", last_error());

        assert_eq!(ntk_network_init(1, 4, 2, 0, &mut net), NtkStatus::Ok);
        let x = [1.0, 1.0];
        let mut f = 0.0;
        assert_eq!(ntk_forward(net, x.as_ptr(), 2, &mut f), NtkStatus::InvalidArgument);
        assert!(last_error().contains("unit sphere"));
        assert_eq!(ntk_forward(net, ptr::null(), 2, &mut f), NtkStatus::NullPointer);
        ntk_network_free(net);
        ntk_network_free(ptr::null_mut());
    }
}

#[test]
fn train_and_population_metrics() {
    unsafe {
        let mut net = ptr::null_mut();
        let mut data = ptr::null_mut();
        let mut pop = ptr::null_mut();
        assert_eq!(ntk_network_init(1, 128, 6, 0, &mut net), NtkStatus::Ok);
        assert_eq!(ntk_xor_sample(6, 20, 1, &mut data), NtkStatus::Ok);
        assert_eq!(ntk_xor_population(6, &mut pop), NtkStatus::Ok);
        let mut len = 0;
        assert_eq!(ntk_dataset_len(pop, &mut len), NtkStatus::Ok);
        assert_eq!(len, 64);

        let (mut e0, mut l0) = (0.0, 0.0);
        assert_eq!(ntk_population_metrics(net, pop, &mut e0, &mut l0), NtkStatus::Ok);
        assert_eq!(e0, 0.5);
        assert_eq!(l0, std::f64::consts::LN_2);

        let mut trained = ptr::null_mut();
        let mut risk = f64::NAN;
        assert_eq!(ntk_train(net, data, 0.1, 100, NtkGradientScale::Sum, &mut trained, &mut risk), NtkStatus::Ok);
        assert!(risk < std::f64::consts::LN_2);
        let mut r2 = 0.0;
        assert_eq!(ntk_empirical_risk(trained, data, &mut r2), NtkStatus::Ok);
        assert_eq!(risk, r2);

        let mut gamma = 0.0;
        let mut gap = f64::NAN;
        assert_eq!(ntk_margin(net, data, 1e-8, &mut gamma, &mut gap), NtkStatus::Ok);
        assert!(gamma > 0.0 && gap >= 0.0);

        ntk_network_free(trained);
        ntk_network_free(net);
        ntk_dataset_free(data);
        ntk_dataset_free(pop);
    }
}

#[test]
fn checkpoint_round_trip_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("w.ckpt").to_str().unwrap()).unwrap();
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(ntk_network_init(2, 8, 4, 3, &mut net), NtkStatus::Ok);
        let inputs = [0.5, 0.5, 0.5, 0.5, 1.0, 0.0, 0.0, 0.0];
        let labels = [1.0, -1.0];
        let mut data = ptr::null_mut();
        assert_eq!(ntk_dataset_new(inputs.as_ptr(), labels.as_ptr(), 2, 4, &mut data), NtkStatus::Ok);
        let mut trained = ptr::null_mut();
        assert_eq!(ntk_train(net, data, 0.5, 3, NtkGradientScale::Mean, &mut trained, ptr::null_mut()), NtkStatus::Ok);
        assert_eq!(ntk_network_save(trained, path.as_ptr(), 3), NtkStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(ntk_network_load(path.as_ptr(), &mut back), NtkStatus::Ok);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(ntk_forward(trained, inputs.as_ptr(), 4, &mut a), NtkStatus::Ok);
        assert_eq!(ntk_forward(back, inputs.as_ptr(), 4, &mut b), NtkStatus::Ok);
        assert_eq!(a.to_bits(), b.to_bits());

        let missing = CString::new("/nonexistent/dir/w.ckpt").unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(ntk_network_load(missing.as_ptr(), &mut none), NtkStatus::Io);

        for p in [net, trained, back] {
            ntk_network_free(p);
        }
        ntk_dataset_free(data);
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(ntk_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("ntklab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "ntk_last_error",
        "ntk_version",
        "ntk_network_init",
        "ntk_network_free",
        "ntk_forward",
        "ntk_train",
        "ntk_population_metrics",
        "ntk_margin",
        "ntk_network_save",
        "ntk_network_load",
        "typedef struct NtkNetwork NtkNetwork",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ntklab.h\"\nint main(void) { NtkNetwork *n = 0; return ntk_network_init(1, 2, 3, 0, &n) == NTK_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    match std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(s) => assert!(s.success(), "header does not compile as C"),
        Err(_) => eprintln!("no C compiler on PATH; skipped syntax check"),
    }
}
