use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use clairsim_ffi::*;

fn last_error() -> String {
    let p = clairsim_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn preset_simulation_round_trip() {
    unsafe {
        let preset = CString::new("mnist").unwrap();
        let policy = CString::new("nopfs").unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(clairsim_run_config_from_preset(preset.as_ptr(), policy.as_ptr(), 1, &mut cfg), ClairsimStatus::Ok);
        assert_eq!(clairsim_run_config_set_scale(cfg, 0.05), ClairsimStatus::Ok);
        assert_eq!(clairsim_run_config_set_epochs(cfg, 2), ClairsimStatus::Ok);

        let mut json = ptr::null_mut();
        assert_eq!(clairsim_run_config_to_json(cfg, &mut json), ClairsimStatus::Ok);
        let text = CStr::from_ptr(json).to_owned();
        clairsim_string_free(json);

        let mut res = ptr::null_mut();
        assert_eq!(clairsim_simulate(cfg, &mut res), ClairsimStatus::Ok);
        let total = clairsim_result_total_time_s(res);
        assert!(total > 0.0);
        assert!(clairsim_result_stall_time_s(res) >= 0.0);
        // drop_last trims a few samples per epoch.
        assert!((0.99..=1.0).contains(&clairsim_result_coverage(res)));
        assert!(!clairsim_result_order_modified(res));

        // The normalized document reproduces the run through the JSON entry point.
        let mut cfg2 = ptr::null_mut();
        assert_eq!(clairsim_run_config_from_json(text.as_ptr(), &mut cfg2), ClairsimStatus::Ok);
        let mut res2 = ptr::null_mut();
        assert_eq!(clairsim_simulate(cfg2, &mut res2), ClairsimStatus::Ok);
        assert_eq!(clairsim_result_total_time_s(res2), total);

        let mut summary = ptr::null_mut();
        assert_eq!(clairsim_result_to_json(res, &mut summary), ClairsimStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(summary).to_str().unwrap()).unwrap();
        assert_eq!(v["total_time_s"].as_f64(), Some(total));
        clairsim_string_free(summary);

        clairsim_result_free(res);
        clairsim_result_free(res2);
        clairsim_run_config_free(cfg);
        clairsim_run_config_free(cfg2);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let bad = CString::new("{").unwrap();
        assert_eq!(clairsim_run_config_from_json(bad.as_ptr(), &mut cfg), ClairsimStatus::Config);
        assert!(cfg.is_null());
        assert!(last_error().contains("invalid run config"));

        assert_eq!(clairsim_run_config_from_json(ptr::null(), &mut cfg), ClairsimStatus::NullPointer);
        assert!(last_error().contains("json"));

        let preset = CString::new("imagenet22k").unwrap();
        let policy = CString::new("lbann-dynamic").unwrap();
        assert_eq!(clairsim_run_config_from_preset(preset.as_ptr(), policy.as_ptr(), 0, &mut cfg), ClairsimStatus::Ok);
        let mut res = ptr::null_mut();
        assert_eq!(clairsim_simulate(cfg, &mut res), ClairsimStatus::Infeasible);
        assert!(res.is_null());
        assert!(last_error().contains("aggregate"));
        assert_eq!(clairsim_run_config_set_scale(cfg, -1.0), ClairsimStatus::Config);
        clairsim_run_config_free(cfg);

        let unknown = CString::new("cifar").unwrap();
        assert_eq!(clairsim_run_config_from_preset(unknown.as_ptr(), policy.as_ptr(), 0, &mut cfg), ClairsimStatus::Config);
        assert!(clairsim_result_total_time_s(ptr::null()).is_nan());
        clairsim_run_config_free(ptr::null_mut());
    }
}

#[test]
fn access_streams_match_the_library() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(clairsim_access_streams_new(42, 100, 4, 16, 3, true, &mut s), ClairsimStatus::Ok);
        let direct = clairsim::build_access_streams(
            clairsim::Seed(42),
            100,
            &clairsim::PartitionSpec { workers: 4, global_batch: 16, epochs: 3, drop_last: true },
        )
        .unwrap();
        for (w, d) in direct.iter().enumerate() {
            let mut len = 0;
            assert_eq!(clairsim_access_streams_len(s, w, &mut len), ClairsimStatus::Ok);
            assert_eq!(len, d.entries.len());
            let mut buf = vec![0u32; len + 3];
            let mut written = 0;
            assert_eq!(clairsim_access_streams_copy(s, w, buf.as_mut_ptr(), buf.len(), &mut written), ClairsimStatus::Ok);
            assert_eq!(&buf[..written], &d.entries[..]);
        }
        let mut len = 0;
        assert_eq!(clairsim_access_streams_len(s, 4, &mut len), ClairsimStatus::Config);
        clairsim_access_streams_free(s);
        assert_eq!(clairsim_access_streams_new(0, 3, 4, 4, 1, true, &mut s), ClairsimStatus::Config);
    }
}

#[test]
fn analysis_and_interp() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(clairsim_expected_hot_samples(16, 90, 1_281_167, 0.8, &mut v), ClairsimStatus::Ok);
        assert!((v - 31_634.685_810_763_3).abs() < 1e-6);
        // Two workers, two epochs: a sample is read twice by one worker with probability 1/4.
        assert_eq!(clairsim_prob_exceeds(2, 2, 1.0, &mut v), ClairsimStatus::Ok);
        assert!((v - 0.25).abs() < 1e-12);
        assert_eq!(clairsim_prob_exceeds(0, 2, 1.0, &mut v), ClairsimStatus::Config);

        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys = [330.0, 730.0, 1540.0, 2870.0];
        for (x, want) in [(0.5, 330.0), (3.0, 1135.0), (8.0, 2870.0), (16.0, 2870.0)] {
            assert_eq!(clairsim_interp(xs.as_ptr(), ys.as_ptr(), 4, x, &mut v), ClairsimStatus::Ok);
            assert!((v - want).abs() < 1e-9, "{x}: {v}");
        }
        assert_eq!(clairsim_interp(xs.as_ptr(), ys.as_ptr(), 0, 1.0, &mut v), ClairsimStatus::Config);
        assert_eq!(clairsim_interp(ptr::null(), ys.as_ptr(), 4, 1.0, &mut v), ClairsimStatus::NullPointer);
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/clairsim.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["clairsim_simulate", "clairsim_interp", "CLAIRSIM_STATUS_INFEASIBLE = 3", "typedef struct ClairsimRunConfig"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    for compiler in ["cc", "c++"] {
        let lang = if compiler == "cc" { "c" } else { "c++" };
        let Ok(status) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .status()
        else {
            eprintln!("{compiler} not available; skipping");
            continue;
        };
        assert!(status.success(), "{compiler} rejects the header");
    }
}
